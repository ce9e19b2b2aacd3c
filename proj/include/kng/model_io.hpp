#ifndef KNG_MODEL_IO_HPP
#define KNG_MODEL_IO_HPP

// KNGM model file, little-endian throughout:
//
//   "KNGM" | u32 version (=1)
//   config:    u32 k | u32 epochs | u32 age_max | f64 epsilon | u32 threshold_mode
//              | u32 dim | u64 seed | u32 batch_size
//   selection: u64 source_dim | u64 seed | u64 n | n x u64 index
//   neurons:   k x ( dim x f64 center | u64 count | f64 threshold
//                    | dim*(dim+1)/2 x f64 covariance lower triangle, row-major )
//   edges:     u64 n | n x ( u32 a | u32 b | u64 last_refresh ), a < b, ascending
//   u64 event_counter
//   rng:       4 x u64 xoshiro256** state
//   u32 CRC-32 (zlib polynomial) of every preceding byte

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <openssl/evp.h>
#include <zlib.h>

#include "kng/binary.hpp"
#include "kng/errors.hpp"
#include "kng/model.hpp"

namespace kng {

inline constexpr char kModelMagic[] = "KNGM";
inline constexpr std::uint32_t kModelVersion = 1;

inline std::uint32_t crc32_of(const std::uint8_t* data, std::size_t size) {
    uLong crc = crc32(0L, Z_NULL, 0);
    while (size > 0) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
        crc = crc32(crc, data, chunk);
        data += chunk;
        size -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

inline std::vector<std::uint8_t> serialize_model(const KngModel& model) {
    if (!model.initialized()) throw StateError("serialize_model: model is not initialized");
    const auto& cfg = model.config;
    const std::size_t d = cfg.dim;
    binary::Writer w;
    w.bytes(std::string_view(kModelMagic, 4));
    w.u32(kModelVersion);

    w.u32(cfg.k);
    w.u32(cfg.epochs);
    w.u32(cfg.age_max);
    w.f64(cfg.epsilon);
    w.u32(static_cast<std::uint32_t>(cfg.threshold_mode));
    w.u32(cfg.dim);
    w.u64(cfg.seed);
    w.u32(cfg.batch_size);

    w.u64(model.selection.source_dim);
    w.u64(model.selection.seed);
    w.u64(model.selection.indices.size());
    for (auto i : model.selection.indices) w.u64(i);

    if (model.neurons.size() != cfg.k) throw StateError("serialize_model: neuron count differs from config.k");
    for (const auto& n : model.neurons) {
        if (static_cast<std::size_t>(n.center.size()) != d || static_cast<std::size_t>(n.cov.rows()) != d)
            throw StateError("serialize_model: neuron dimension differs from config.dim");
        for (std::size_t j = 0; j < d; ++j) w.f64(n.center[static_cast<Eigen::Index>(j)]);
        w.u64(n.count);
        w.f64(n.threshold);
        for (Eigen::Index r = 0; r < static_cast<Eigen::Index>(d); ++r)
            for (Eigen::Index c = 0; c <= r; ++c) w.f64(n.cov(r, c));
    }

    w.u64(model.graph.edges().size());
    for (const auto& [e, refresh] : model.graph.edges()) {
        w.u32(e.first);
        w.u32(e.second);
        w.u64(refresh);
    }
    w.u64(model.graph.event_counter());
    for (auto word : model.rng_state) w.u64(word);

    auto& buf = w.buffer();
    const std::uint32_t crc = crc32_of(buf.data(), buf.size());
    w.u32(crc);
    return std::move(buf);
}

inline KngModel deserialize_model(const std::vector<std::uint8_t>& bytes, const std::string& context = "model") {
    if (bytes.size() < 8) throw FormatError(context + ": file too short");
    binary::Reader r(bytes.data(), bytes.size(), context);
    if (r.bytes(4) != std::string_view(kModelMagic, 4)) throw FormatError(context + ": bad magic");
    if (const auto v = r.u32(); v != kModelVersion)
        throw FormatError(context + ": unsupported model version " + std::to_string(v));
    {
        binary::Reader tail(bytes.data() + bytes.size() - 4, 4, context);
        if (tail.u32() != crc32_of(bytes.data(), bytes.size() - 4))
            throw FormatError(context + ": checksum mismatch");
    }

    KngModel model;
    auto& cfg = model.config;
    cfg.k = r.u32();
    cfg.epochs = r.u32();
    cfg.age_max = r.u32();
    cfg.epsilon = r.f64();
    const auto mode = r.u32();
    if (mode > 3) throw FormatError(context + ": bad threshold mode");
    cfg.threshold_mode = static_cast<ThresholdMode>(mode);
    cfg.dim = r.u32();
    cfg.seed = r.u64();
    cfg.batch_size = r.u32();
    try {
        cfg.validate();
    } catch (const ArgumentError& e) {
        throw FormatError(context + ": " + e.what());
    }

    model.selection.source_dim = r.u64();
    model.selection.seed = r.u64();
    const auto nsel = r.u64();
    if (nsel != cfg.dim) throw FormatError(context + ": selection length differs from dim");
    model.selection.indices.resize(nsel);
    for (auto& i : model.selection.indices) {
        i = r.u64();
        if (i >= model.selection.source_dim) throw FormatError(context + ": selection index out of range");
    }

    const auto d = static_cast<Eigen::Index>(cfg.dim);
    const std::size_t per_neuron = 8 * (static_cast<std::size_t>(d) + 2 + static_cast<std::size_t>(d * (d + 1) / 2));
    if (static_cast<std::uint64_t>(cfg.k) * per_neuron > r.remaining())
        throw FormatError(context + ": truncated neuron block");
    model.neurons.resize(cfg.k);
    for (auto& n : model.neurons) {
        n.center.resize(d);
        for (Eigen::Index j = 0; j < d; ++j) n.center[j] = r.f64();
        n.count = r.u64();
        n.threshold = r.f64();
        n.cov.resize(d, d);
        for (Eigen::Index row = 0; row < d; ++row)
            for (Eigen::Index c = 0; c <= row; ++c) n.cov(row, c) = n.cov(c, row) = r.f64();
    }

    const auto nedges = r.u64();
    if (nedges > r.remaining() / 16) throw FormatError(context + ": truncated edge list");
    std::map<TopologyGraph::Edge, std::uint64_t> edges;
    for (std::uint64_t e = 0; e < nedges; ++e) {
        const auto a = r.u32();
        const auto b = r.u32();
        const auto refresh = r.u64();
        if (a >= b || b >= cfg.k) throw FormatError(context + ": invalid edge");
        edges.emplace(TopologyGraph::Edge{a, b}, refresh);
    }
    const auto events = r.u64();
    try {
        model.graph = TopologyGraph::restore(std::move(edges), events);
    } catch (const ArgumentError& e) {
        throw FormatError(context + ": " + e.what());
    }
    for (auto& word : model.rng_state) word = r.u64();
    if (r.remaining() != 4) throw FormatError(context + ": unexpected trailing bytes");
    return model;
}

inline void save_model(const KngModel& model, const std::filesystem::path& path) {
    binary::write_file(path, serialize_model(model));
}

inline KngModel load_model(const std::filesystem::path& path) {
    return deserialize_model(binary::read_file(path), path.string());
}

/// Git-style blob hash (SHA-1 over "blob <size>\0" + bytes), hex encoded.
inline std::string content_hash(const std::vector<std::uint8_t>& bytes) {
    const std::string header = "blob " + std::to_string(bytes.size()) + '\0';
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), header.data(), header.size()) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), digest, &length) != 1)
        throw Error("content_hash: SHA-1 digest failed");
    std::string hex;
    hex.reserve(2 * length);
    for (unsigned int i = 0; i < length; ++i) {
        const unsigned char c = digest[i];
        char buf[3];
        std::snprintf(buf, sizeof buf, "%02x", c);
        hex += buf;
    }
    return hex;
}

inline std::string model_hash(const KngModel& model) { return content_hash(serialize_model(model)); }

} // namespace kng

#endif // KNG_MODEL_IO_HPP
