#ifndef KNG_SCORING_HPP
#define KNG_SCORING_HPP

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "kng/errors.hpp"
#include "kng/model.hpp"
#include "kng/tensor.hpp"

namespace kng {

struct ScoreConfig {
    double sigma = 4.0;             // Gaussian smoothing std-dev, in output pixels
    std::size_t target_height = 0;  // 0: keep the patch-grid size
    std::size_t target_width = 0;
    unsigned threads = 0;           // 0: KNG_THREADS or hardware concurrency
};

/// Scoring parallelism: explicit request, else the KNG_THREADS env var, else
/// the hardware concurrency.
inline unsigned resolve_threads(unsigned requested) {
    unsigned n = requested;
    if (n == 0) {
        if (const char* env = std::getenv("KNG_THREADS")) {
            char* end = nullptr;
            const long v = std::strtol(env, &end, 10);
            if (end != env && v > 0) n = static_cast<unsigned>(v);
        }
    }
    if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
    return n;
}

namespace detail {

inline double mahalanobis_with(const NeuronFactor& factor, const double* x, const Vector& center) {
    Vector diff(center.size());
    for (Eigen::Index j = 0; j < center.size(); ++j) diff[j] = x[j] - center[j];
    factor.llt.matrixL().solveInPlace(diff);
    return std::sqrt(diff.squaredNorm());
}

} // namespace detail

/// sqrt((x - A_i)^T (Sigma_i + eps I)^-1 (x - A_i)).
inline double mahalanobis(std::span<const double> x, const KngModel& model, std::size_t i) {
    if (i >= model.neurons.size()) throw ArgumentError("mahalanobis: neuron index out of range");
    if (x.size() != model.config.dim) throw ArgumentError("mahalanobis: dimension mismatch");
    const auto state = model.scoring_state();
    return detail::mahalanobis_with(*state.factors[i], x.data(), model.neurons[i].center);
}

/// Corner-aligned bilinear resize: output pixel (r, c) samples the input at
/// (r * (H_in - 1) / (H_out - 1), c * (W_in - 1) / (W_out - 1)); a one-pixel
/// output axis samples coordinate 0.
inline AnomalyMap resize_bilinear(const AnomalyMap& in, std::size_t height, std::size_t width) {
    if (in.height == 0 || in.width == 0 || height == 0 || width == 0)
        throw ArgumentError("resize_bilinear: empty map or target");
    if (height == in.height && width == in.width) return in;
    AnomalyMap out(height, width);
    auto coord = [](std::size_t i, std::size_t n_out, std::size_t n_in) {
        if (n_out == 1 || n_in == 1) return 0.0;
        return static_cast<double>(i) * static_cast<double>(n_in - 1) / static_cast<double>(n_out - 1);
    };
    for (std::size_t r = 0; r < height; ++r) {
        const double y = coord(r, height, in.height);
        const auto y0 = std::min(static_cast<std::size_t>(y), in.height - 1);
        const std::size_t y1 = std::min(y0 + 1, in.height - 1);
        const double fy = y - static_cast<double>(y0);
        for (std::size_t c = 0; c < width; ++c) {
            const double x = coord(c, width, in.width);
            const auto x0 = std::min(static_cast<std::size_t>(x), in.width - 1);
            const std::size_t x1 = std::min(x0 + 1, in.width - 1);
            const double fx = x - static_cast<double>(x0);
            const double top = (1.0 - fx) * in.at(y0, x0) + fx * in.at(y0, x1);
            const double bottom = (1.0 - fx) * in.at(y1, x0) + fx * in.at(y1, x1);
            out.at(r, c) = (1.0 - fy) * top + fy * bottom;
        }
    }
    return out;
}

/// Normalized 1-D Gaussian taps for offsets -radius..radius, radius = ceil(4 sigma).
inline std::vector<double> gaussian_kernel(double sigma) {
    if (!(sigma > 0.0)) return {1.0};
    const auto radius = static_cast<std::ptrdiff_t>(std::ceil(4.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (std::ptrdiff_t j = -radius; j <= radius; ++j) {
        const double v = std::exp(-0.5 * static_cast<double>(j * j) / (sigma * sigma));
        k[static_cast<std::size_t>(j + radius)] = v;
        sum += v;
    }
    for (auto& v : k) v /= sum;
    return k;
}

/// Half-sample symmetric reflection (d c b a | a b c d | d c b a), valid
/// for offsets of any size.
inline std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
    const auto period = static_cast<std::ptrdiff_t>(2 * n);
    std::ptrdiff_t m = i % period;
    if (m < 0) m += period;
    return static_cast<std::size_t>(m < static_cast<std::ptrdiff_t>(n) ? m : period - 1 - m);
}

/// Separable Gaussian blur with reflect padding; sigma == 0 is the identity.
inline AnomalyMap gaussian_smooth(const AnomalyMap& in, double sigma) {
    if (sigma < 0.0 || !std::isfinite(sigma)) throw ArgumentError("gaussian_smooth: sigma must be >= 0");
    if (sigma == 0.0) return in;
    const auto kernel = gaussian_kernel(sigma);
    const auto radius = static_cast<std::ptrdiff_t>(kernel.size() / 2);
    AnomalyMap rows(in.height, in.width);
    for (std::size_t r = 0; r < in.height; ++r)
        for (std::size_t c = 0; c < in.width; ++c) {
            double acc = 0.0;
            for (std::ptrdiff_t j = -radius; j <= radius; ++j)
                acc += kernel[static_cast<std::size_t>(j + radius)] *
                       in.at(r, reflect_index(static_cast<std::ptrdiff_t>(c) + j, in.width));
            rows.at(r, c) = acc;
        }
    AnomalyMap out(in.height, in.width);
    for (std::size_t r = 0; r < in.height; ++r)
        for (std::size_t c = 0; c < in.width; ++c) {
            double acc = 0.0;
            for (std::ptrdiff_t j = -radius; j <= radius; ++j)
                acc += kernel[static_cast<std::size_t>(j + radius)] *
                       rows.at(reflect_index(static_cast<std::ptrdiff_t>(r) + j, in.height), c);
            out.at(r, c) = acc;
        }
    return out;
}

/// Per-patch score on the patch grid: Mahalanobis distance to the nearest
/// neuron (L2 nearest, same tie-breaking as `assign`).
inline AnomalyMap patch_scores(const FeatureTensor& t, const KngModel& model, unsigned threads = 1) {
    if (!model.initialized()) throw StateError("score_map: model is not initialized");
    const Matrix samples = embedding_matrix(t, model.selection, model.config.dim);
    const auto state = model.scoring_state();
    AnomalyMap grid(t.height, t.width);
    const auto n = samples.cols();
    std::vector<Assignment> nearest(static_cast<std::size_t>(n));

    auto work = [&](Eigen::Index begin, Eigen::Index end) {
        state.index->search_block(samples, begin, end, nearest);
        for (Eigen::Index p = begin; p < end; ++p) {
            const auto s1 = nearest[static_cast<std::size_t>(p)].s1;
            grid.scores[static_cast<std::size_t>(p)] =
                detail::mahalanobis_with(*state.factors[s1], samples.col(p).data(), model.neurons[s1].center);
        }
    };

    const auto workers = static_cast<Eigen::Index>(std::min<std::size_t>(
        std::max(1u, threads), static_cast<std::size_t>(std::max<Eigen::Index>(1, n / 256))));
    if (workers <= 1) {
        work(0, n);
        return grid;
    }
    std::vector<std::thread> pool;
    const Eigen::Index chunk = (n + workers - 1) / workers;
    for (Eigen::Index w = 0; w < workers; ++w) {
        const Eigen::Index begin = w * chunk;
        const Eigen::Index end = std::min(n, begin + chunk);
        if (begin < end) pool.emplace_back(work, begin, end);
    }
    for (auto& th : pool) th.join();
    return grid;
}

/// Anomaly map: patch scores, bilinear upsampling to the target size, then
/// Gaussian smoothing.
inline AnomalyMap score_map(const FeatureTensor& t, const KngModel& model, const ScoreConfig& cfg = {}) {
    if (cfg.sigma < 0.0) throw ArgumentError("score_map: sigma must be >= 0");
    AnomalyMap map = patch_scores(t, model, resolve_threads(cfg.threads));
    const std::size_t h = cfg.target_height ? cfg.target_height : t.height;
    const std::size_t w = cfg.target_width ? cfg.target_width : t.width;
    map = resize_bilinear(map, h, w);
    return gaussian_smooth(map, cfg.sigma);
}

/// Image-level score: the maximum of the map.
inline double image_score(const AnomalyMap& m) {
    if (m.scores.empty()) throw ArgumentError("image_score: empty map");
    return *std::max_element(m.scores.begin(), m.scores.end());
}

} // namespace kng

#endif // KNG_SCORING_HPP
