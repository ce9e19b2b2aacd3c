#ifndef KNG_METRICS_HPP
#define KNG_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "kng/errors.hpp"
#include "kng/tensor.hpp"

namespace kng {

struct ScoredSample {
    double score = 0.0;
    int label = 0;  // 1 = anomalous
};

/// Exact ROC AUC: Mann-Whitney U over (#pos * #neg), ties count one half.
inline double rocauc(std::span<const ScoredSample> samples) {
    std::vector<ScoredSample> sorted(samples.begin(), samples.end());
    for (const auto& s : sorted) {
        if (!std::isfinite(s.score)) throw ValidationError("rocauc: non-finite score");
        if (s.label != 0 && s.label != 1) throw ValidationError("rocauc: labels must be 0 or 1");
    }
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.score < b.score; });
    double negatives_below = 0.0;
    double wins = 0.0;  // in half-units would be exact too; values stay below 2^53
    double pos_total = 0.0;
    for (std::size_t i = 0; i < sorted.size();) {
        std::size_t j = i;
        double pos = 0.0;
        double neg = 0.0;
        for (; j < sorted.size() && sorted[j].score == sorted[i].score; ++j) (sorted[j].label ? pos : neg) += 1.0;
        wins += pos * negatives_below + 0.5 * pos * neg;
        negatives_below += neg;
        pos_total += pos;
        i = j;
    }
    if (pos_total == 0.0 || negatives_below == 0.0)
        throw UndefinedMetricError("rocauc: need at least one positive and one negative sample");
    return wins / (pos_total * negatives_below);
}

inline double rocauc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw ArgumentError("rocauc: scores and labels differ in length");
    std::vector<ScoredSample> s(scores.size());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = {scores[i], labels[i]};
    return rocauc(s);
}

/// 8-connected components of the foreground pixels, as sorted lists of
/// row-major pixel indices. Components are ordered by their first pixel.
inline std::vector<std::vector<std::size_t>> connected_components(const MaskTensor& mask) {
    validate(mask);
    const std::size_t h = mask.height;
    const std::size_t w = mask.width;
    std::vector<std::uint8_t> seen(h * w, 0);
    std::vector<std::vector<std::size_t>> components;
    std::vector<std::size_t> stack;
    for (std::size_t start = 0; start < h * w; ++start) {
        if (!mask.data[start] || seen[start]) continue;
        std::vector<std::size_t> comp;
        stack.assign(1, start);
        seen[start] = 1;
        while (!stack.empty()) {
            const std::size_t p = stack.back();
            stack.pop_back();
            comp.push_back(p);
            const auto r = static_cast<std::ptrdiff_t>(p / w);
            const auto c = static_cast<std::ptrdiff_t>(p % w);
            for (std::ptrdiff_t dr = -1; dr <= 1; ++dr)
                for (std::ptrdiff_t dc = -1; dc <= 1; ++dc) {
                    const auto rr = r + dr;
                    const auto cc = c + dc;
                    if (rr < 0 || cc < 0 || rr >= static_cast<std::ptrdiff_t>(h) ||
                        cc >= static_cast<std::ptrdiff_t>(w))
                        continue;
                    const auto q = static_cast<std::size_t>(rr) * w + static_cast<std::size_t>(cc);
                    if (mask.data[q] && !seen[q]) {
                        seen[q] = 1;
                        stack.push_back(q);
                    }
                }
        }
        std::sort(comp.begin(), comp.end());
        components.push_back(std::move(comp));
    }
    return components;
}

/// Pixel-level ROC AUC pooled over all pixels of all (map, mask) pairs.
inline double pixel_rocauc(std::span<const AnomalyMap> maps, std::span<const MaskTensor> masks) {
    if (maps.size() != masks.size()) throw ArgumentError("pixel_rocauc: maps and masks differ in count");
    std::vector<ScoredSample> pooled;
    for (std::size_t i = 0; i < maps.size(); ++i) {
        if (maps[i].height != masks[i].height || maps[i].width != masks[i].width)
            throw ArgumentError("pixel_rocauc: map/mask shape mismatch at index " + std::to_string(i));
        for (std::size_t p = 0; p < maps[i].scores.size(); ++p)
            pooled.push_back({maps[i].scores[p], masks[i].data[p]});
    }
    return rocauc(pooled);
}

/// Points (FPR, mean per-region overlap) of the PRO curve, one per distinct
/// score value in descending order, preceded by (0, 0). A pixel is predicted
/// anomalous when its score is >= the threshold.
struct ProCurve {
    std::vector<double> fpr;
    std::vector<double> overlap;
};

inline ProCurve pro_curve(std::span<const AnomalyMap> maps, std::span<const MaskTensor> masks) {
    if (maps.size() != masks.size()) throw ArgumentError("pro: maps and masks differ in count");
    struct Pixel {
        double score;
        double weight;  // contribution to mean overlap; 0 for normal pixels
        bool normal;
    };
    std::vector<Pixel> pixels;
    std::size_t total_components = 0;
    std::vector<std::vector<std::vector<std::size_t>>> comps(maps.size());
    for (std::size_t i = 0; i < maps.size(); ++i) {
        if (maps[i].height != masks[i].height || maps[i].width != masks[i].width)
            throw ArgumentError("pro: map/mask shape mismatch at index " + std::to_string(i));
        comps[i] = connected_components(masks[i]);
        total_components += comps[i].size();
    }
    if (total_components == 0) throw UndefinedMetricError("pro: no anomalous pixels");
    std::size_t normal_total = 0;
    for (std::size_t i = 0; i < maps.size(); ++i) {
        for (std::size_t p = 0; p < maps[i].scores.size(); ++p) {
            if (!std::isfinite(maps[i].scores[p])) throw ValidationError("pro: non-finite score");
            if (!masks[i].data[p]) {
                pixels.push_back({maps[i].scores[p], 0.0, true});
                ++normal_total;
            }
        }
        for (const auto& comp : comps[i]) {
            const double w = 1.0 / (static_cast<double>(comp.size()) * static_cast<double>(total_components));
            for (auto p : comp) pixels.push_back({maps[i].scores[p], w, false});
        }
    }
    std::stable_sort(pixels.begin(), pixels.end(), [](const Pixel& a, const Pixel& b) { return a.score > b.score; });

    ProCurve curve;
    curve.fpr.push_back(0.0);
    curve.overlap.push_back(0.0);
    std::size_t false_positives = 0;
    double overlap = 0.0;
    for (std::size_t i = 0; i < pixels.size();) {
        std::size_t j = i;
        for (; j < pixels.size() && pixels[j].score == pixels[i].score; ++j) {
            if (pixels[j].normal)
                ++false_positives;
            else
                overlap += pixels[j].weight;
        }
        curve.fpr.push_back(normal_total ? static_cast<double>(false_positives) / static_cast<double>(normal_total)
                                         : 0.0);
        curve.overlap.push_back(std::min(overlap, 1.0));
        i = j;
    }
    return curve;
}

/// Area under the step-interpolated PRO curve over FPR in [0, limit]: the
/// overlap at FPR f is the overlap of the lowest threshold whose FPR does not
/// exceed f. Returns the unnormalized integral.
inline double pro_integral(const ProCurve& curve, double limit) {
    double area = 0.0;
    for (std::size_t i = 0; i + 1 < curve.fpr.size(); ++i) {
        const double x0 = curve.fpr[i];
        if (x0 >= limit) break;
        const double x1 = std::min(curve.fpr[i + 1], limit);
        area += (x1 - x0) * curve.overlap[i];
    }
    if (curve.fpr.back() < limit) area += (limit - curve.fpr.back()) * curve.overlap.back();
    return area;
}

/// Normalized area under the PRO curve up to `fpr_limit`, in [0, 1].
inline double pro_score(std::span<const AnomalyMap> maps, std::span<const MaskTensor> masks,
                        double fpr_limit = 0.3) {
    if (!(fpr_limit > 0.0) || fpr_limit > 1.0) throw ArgumentError("pro_score: fpr_limit must be in (0, 1]");
    return pro_integral(pro_curve(maps, masks), fpr_limit) / fpr_limit;
}

} // namespace kng

#endif // KNG_METRICS_HPP
