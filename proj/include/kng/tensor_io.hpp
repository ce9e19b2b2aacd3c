#ifndef KNG_TENSOR_IO_HPP
#define KNG_TENSOR_IO_HPP

// FTEN container:
//   "FTEN" | u32 version (=1) | u32 rank | rank x u64 dims | u8 dtype | payload
// dtype 1 = f32, 2 = u8. All integers and floats little-endian.
// Rank-3 f32 holds a FeatureTensor (H, W, D); rank-2 u8 a MaskTensor (H, W);
// rank-2 f32 an AnomalyMap (H, W).

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include "kng/binary.hpp"
#include "kng/errors.hpp"
#include "kng/rng.hpp"
#include "kng/tensor.hpp"

namespace kng {

inline constexpr char kFtenMagic[] = "FTEN";
inline constexpr std::uint32_t kFtenVersion = 1;

enum class DType : std::uint8_t { f32 = 1, u8 = 2 };

using AnyTensor = std::variant<FeatureTensor, MaskTensor, AnomalyMap>;

namespace detail {

inline void ften_header(binary::Writer& w, std::initializer_list<std::uint64_t> dims, DType dtype) {
    w.bytes(std::string_view(kFtenMagic, 4));
    w.u32(kFtenVersion);
    w.u32(static_cast<std::uint32_t>(dims.size()));
    for (auto d : dims) w.u64(d);
    w.u8(static_cast<std::uint8_t>(dtype));
}

} // namespace detail

inline std::vector<std::uint8_t> encode_tensor(const FeatureTensor& t) {
    validate(t);
    binary::Writer w;
    detail::ften_header(w, {t.height, t.width, t.dim}, DType::f32);
    for (float v : t.data) w.f32(v);
    return std::move(w.buffer());
}

inline std::vector<std::uint8_t> encode_tensor(const MaskTensor& m) {
    validate(m);
    binary::Writer w;
    detail::ften_header(w, {m.height, m.width}, DType::u8);
    for (auto v : m.data) w.u8(v);
    return std::move(w.buffer());
}

/// Scores are narrowed to f32 on disk.
inline std::vector<std::uint8_t> encode_tensor(const AnomalyMap& m) {
    validate(m);
    binary::Writer w;
    detail::ften_header(w, {m.height, m.width}, DType::f32);
    for (double v : m.scores) w.f32(static_cast<float>(v));
    return std::move(w.buffer());
}

inline AnyTensor decode_tensor(const std::vector<std::uint8_t>& bytes, const std::string& context) {
    binary::Reader r(bytes.data(), bytes.size(), context);
    if (r.bytes(4) != std::string_view(kFtenMagic, 4)) throw FormatError(context + ": bad magic");
    if (const auto version = r.u32(); version != kFtenVersion)
        throw FormatError(context + ": unsupported version " + std::to_string(version));
    const auto rank = r.u32();
    if (rank != 2 && rank != 3) throw FormatError(context + ": unsupported rank " + std::to_string(rank));
    std::vector<std::uint64_t> dims(rank);
    std::uint64_t count = 1;
    for (auto& d : dims) {
        d = r.u64();
        if (d != 0 && count > std::numeric_limits<std::uint64_t>::max() / d)
            throw FormatError(context + ": dimension product overflows");
        count *= d;
    }
    const auto dtype = r.u8();
    const std::size_t elem = dtype == static_cast<std::uint8_t>(DType::f32) ? 4 : 1;
    if (dtype != static_cast<std::uint8_t>(DType::f32) && dtype != static_cast<std::uint8_t>(DType::u8))
        throw FormatError(context + ": unknown dtype code " + std::to_string(dtype));
    if (count > r.remaining() / elem)
        throw FormatError(context + ": truncated payload (declares " + std::to_string(count) + " elements, has " +
                          std::to_string(r.remaining() / elem) + ")");
    if (r.remaining() != count * elem) throw FormatError(context + ": trailing bytes after payload");

    if (rank == 3) {
        if (dtype != static_cast<std::uint8_t>(DType::f32)) throw FormatError(context + ": rank-3 tensors must be f32");
        FeatureTensor t(dims[0], dims[1], dims[2]);
        for (auto& v : t.data) v = r.f32();
        validate(t);
        return t;
    }
    if (dtype == static_cast<std::uint8_t>(DType::u8)) {
        MaskTensor m(dims[0], dims[1]);
        for (auto& v : m.data) v = r.u8();
        validate(m);
        return m;
    }
    AnomalyMap m(dims[0], dims[1]);
    for (auto& v : m.scores) {
        const float f = r.f32();
        if (!std::isfinite(f)) throw ValidationError(context + ": non-finite score");
        v = f;
    }
    return m;
}

template <typename Tensor>
void write_tensor(const Tensor& t, const std::filesystem::path& path) {
    binary::write_file(path, encode_tensor(t));
}

inline AnyTensor read_tensor(const std::filesystem::path& path) {
    return decode_tensor(binary::read_file(path), path.string());
}

/// Reads a file that must hold a specific tensor kind.
template <typename Tensor>
Tensor read_tensor_as(const std::filesystem::path& path) {
    auto any = read_tensor(path);
    if (auto* t = std::get_if<Tensor>(&any)) return std::move(*t);
    throw FormatError(path.string() + ": unexpected tensor kind");
}

/// Seeded subset of feature channels that maps the extractor's full dimension
/// down to the working dimension.
struct ChannelSelection {
    std::uint64_t source_dim = 0;
    std::vector<std::uint64_t> indices;
    std::uint64_t seed = 0;

    std::size_t target_dim() const { return indices.size(); }

    friend bool operator==(const ChannelSelection&, const ChannelSelection&) = default;
};

inline ChannelSelection make_selection(std::uint64_t source_dim, std::uint64_t target_dim, std::uint64_t seed) {
    if (target_dim < 1 || target_dim > source_dim)
        throw ArgumentError("make_selection: need 1 <= target_dim (" + std::to_string(target_dim) +
                            ") <= source_dim (" + std::to_string(source_dim) + ")");
    Xoshiro256 rng(seed);
    ChannelSelection s{source_dim, sample_without_replacement(source_dim, target_dim, rng), seed};
    std::sort(s.indices.begin(), s.indices.end());
    return s;
}

inline FeatureTensor apply_selection(const FeatureTensor& t, const ChannelSelection& s) {
    if (t.dim != s.source_dim)
        throw ArgumentError("apply_selection: tensor dim " + std::to_string(t.dim) + " != selection source dim " +
                            std::to_string(s.source_dim));
    FeatureTensor out(t.height, t.width, s.indices.size());
    for (std::size_t p = 0; p < t.patches(); ++p) {
        const float* src = t.data.data() + p * t.dim;
        float* dst = out.data.data() + p * out.dim;
        for (std::size_t k = 0; k < s.indices.size(); ++k) dst[k] = src[s.indices[k]];
    }
    return out;
}

} // namespace kng

#endif // KNG_TENSOR_IO_HPP
