#ifndef KNG_SYNTH_HPP
#define KNG_SYNTH_HPP

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "kng/errors.hpp"
#include "kng/manifest.hpp"
#include "kng/rng.hpp"
#include "kng/tensor.hpp"
#include "kng/tensor_io.hpp"

namespace kng {

/// Desk-scale stand-in for an industrial dataset. Normal patch embeddings lie
/// near a low-dimensional linear manifold: a mixture of anisotropic Gaussian
/// modes in `latent_dim` coordinates, mapped into `ambient_dim` by a random
/// orthonormal basis, plus isotropic noise. Anomalous images carry one
/// rectangular patch region pushed off the manifold along a direction
/// orthogonal to it by `margin` noise standard deviations.
struct SynthSpec {
    std::size_t ambient_dim = 100;
    std::size_t grid_height = 14;
    std::size_t grid_width = 14;
    std::size_t n_train = 10;
    std::size_t n_sessions = 20;
    std::size_t session_size = 50;
    double anomaly_ratio = 0.1;
    std::uint64_t seed = 1;

    std::size_t latent_dim = 8;
    std::size_t modes = 6;
    double mode_spread = 3.0;   // std-dev of mode means in latent space
    double noise_std = 0.05;    // isotropic ambient noise
    double margin = 15.0;       // anomaly displacement, in noise std-devs
    std::size_t mask_scale = 4; // mask pixels per patch along each axis

    void validate() const {
        if (!(anomaly_ratio > 0.0 && anomaly_ratio < 1.0))
            throw ArgumentError("synth: anomaly_ratio must be in (0, 1)");
        if (ambient_dim < 1 || grid_height < 1 || grid_width < 1 || n_train < 1 || n_sessions < 1 ||
            session_size < 1 || mask_scale < 1 || modes < 1)
            throw ArgumentError("synth: sizes must be positive");
        if (latent_dim < 1 || latent_dim >= ambient_dim)
            throw ArgumentError("synth: latent_dim must be in [1, ambient_dim)");
        if (!(noise_std > 0.0) || !(margin > 0.0) || !(mode_spread > 0.0))
            throw ArgumentError("synth: noise_std, margin and mode_spread must be positive");
    }
};

struct SynthOutput {
    std::filesystem::path train_manifest;
    std::filesystem::path stream_manifest;
};

namespace detail {

class SynthWorld {
public:
    SynthWorld(const SynthSpec& spec, Xoshiro256& rng) : spec_(spec) {
        const auto d = static_cast<Eigen::Index>(spec.ambient_dim);
        const auto q = static_cast<Eigen::Index>(spec.latent_dim);
        Matrix g(d, q);
        for (Eigen::Index j = 0; j < q; ++j)
            for (Eigen::Index i = 0; i < d; ++i) g(i, j) = rng.normal();
        basis_ = Eigen::HouseholderQR<Matrix>(g).householderQ() * Matrix::Identity(d, q);

        mode_means_.resize(spec.modes);
        mode_scales_.resize(spec.modes);
        for (std::size_t m = 0; m < spec.modes; ++m) {
            mode_means_[m].resize(q);
            mode_scales_[m].resize(q);
            for (Eigen::Index j = 0; j < q; ++j) {
                mode_means_[m][j] = spec.mode_spread * rng.normal();
                // log-uniform axis scales in [0.2, 1.5]
                mode_scales_[m][j] = std::exp(std::log(0.2) + rng.uniform() * (std::log(1.5) - std::log(0.2)));
            }
        }
    }

    Vector normal_patch(Xoshiro256& rng) const {
        const auto m = static_cast<std::size_t>(rng.bounded(spec_.modes));
        Vector z(static_cast<Eigen::Index>(spec_.latent_dim));
        for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = mode_means_[m][j] + mode_scales_[m][j] * rng.normal();
        Vector x = basis_ * z;
        for (Eigen::Index i = 0; i < x.size(); ++i) x[i] += spec_.noise_std * rng.normal();
        return x;
    }

    /// Unit vector orthogonal to the manifold basis.
    Vector off_manifold_direction(Xoshiro256& rng) const {
        Vector u(static_cast<Eigen::Index>(spec_.ambient_dim));
        for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = rng.normal();
        u -= basis_ * (basis_.transpose() * u);
        return u.normalized();
    }

private:
    const SynthSpec& spec_;
    Matrix basis_;
    std::vector<Vector> mode_means_;
    std::vector<Vector> mode_scales_;
};

inline void store_patch(FeatureTensor& t, std::size_t p, const Vector& x) {
    for (std::size_t c = 0; c < t.dim; ++c) t.data[p * t.dim + c] = static_cast<float>(x[static_cast<Eigen::Index>(c)]);
}

inline std::string numbered(const char* prefix, std::size_t i, int width) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%0*zu", prefix, width, i);
    return buf;
}

} // namespace detail

/// Writes train/ and stream/ tensors plus train.json and stream.json under
/// `out_dir`. Output is a pure function of `spec`.
inline SynthOutput generate_synthetic(const SynthSpec& spec, const std::filesystem::path& out_dir) {
    spec.validate();
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir / "train", ec);
    fs::create_directories(out_dir / "stream", ec);
    if (ec) throw IoError("synth: cannot create directories under " + out_dir.string() + ": " + ec.message());

    Xoshiro256 rng(spec.seed);
    const detail::SynthWorld world(spec, rng);
    const std::size_t h = spec.grid_height;
    const std::size_t w = spec.grid_width;

    Manifest train;
    for (std::size_t i = 0; i < spec.n_train; ++i) {
        FeatureTensor t(h, w, spec.ambient_dim);
        for (std::size_t p = 0; p < h * w; ++p) detail::store_patch(t, p, world.normal_patch(rng));
        const auto id = detail::numbered("train", i, 3);
        const auto path = out_dir / "train" / (id + ".ften");
        write_tensor(t, path);
        train.items.push_back({id, path, std::nullopt, std::nullopt});
    }

    const std::size_t total = spec.n_sessions * spec.session_size;
    const auto n_anomalous = static_cast<std::size_t>(std::llround(spec.anomaly_ratio * static_cast<double>(total)));
    std::vector<std::uint8_t> is_anomalous(total, 0);
    for (std::size_t i = 0; i < n_anomalous && i < total; ++i) is_anomalous[i] = 1;
    shuffle(is_anomalous, rng);

    Manifest stream;
    for (std::size_t i = 0; i < total; ++i) {
        FeatureTensor t(h, w, spec.ambient_dim);
        for (std::size_t p = 0; p < h * w; ++p) detail::store_patch(t, p, world.normal_patch(rng));
        const auto id = detail::numbered("stream", i, 4);
        ManifestItem item{id, out_dir / "stream" / (id + ".ften"), Label::normal, std::nullopt};
        if (is_anomalous[i]) {
            const std::size_t rh = std::min<std::size_t>(h, 2 + rng.bounded(3));
            const std::size_t rw = std::min<std::size_t>(w, 2 + rng.bounded(3));
            const std::size_t r0 = rng.bounded(h - rh + 1);
            const std::size_t c0 = rng.bounded(w - rw + 1);
            const Vector shift = spec.margin * spec.noise_std * world.off_manifold_direction(rng);
            MaskTensor mask(h * spec.mask_scale, w * spec.mask_scale);
            for (std::size_t r = r0; r < r0 + rh; ++r)
                for (std::size_t c = c0; c < c0 + rw; ++c) {
                    const std::size_t p = r * w + c;
                    for (std::size_t k = 0; k < spec.ambient_dim; ++k)
                        t.data[p * spec.ambient_dim + k] += static_cast<float>(shift[static_cast<Eigen::Index>(k)]);
                    for (std::size_t mr = 0; mr < spec.mask_scale; ++mr)
                        for (std::size_t mc = 0; mc < spec.mask_scale; ++mc)
                            mask.at(r * spec.mask_scale + mr, c * spec.mask_scale + mc) = 1;
                }
            const auto mask_path = out_dir / "stream" / (id + "_mask.ften");
            write_tensor(mask, mask_path);
            item.label = Label::anomalous;
            item.mask = mask_path;
        }
        write_tensor(t, item.features);
        stream.items.push_back(std::move(item));
    }

    SynthOutput out{out_dir / "train.json", out_dir / "stream.json"};
    save_manifest(train, out.train_manifest);
    save_manifest(stream, out.stream_manifest);
    return out;
}

} // namespace kng

#endif // KNG_SYNTH_HPP
