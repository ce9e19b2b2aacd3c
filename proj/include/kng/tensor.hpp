#ifndef KNG_TENSOR_HPP
#define KNG_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "kng/errors.hpp"

namespace kng {

/// Patch embeddings of one image: height x width patches, `dim` channels each,
/// stored row-major (channel fastest).
struct FeatureTensor {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t dim = 0;
    std::vector<float> data;

    FeatureTensor() = default;
    FeatureTensor(std::size_t h, std::size_t w, std::size_t d)
        : height(h), width(w), dim(d), data(h * w * d, 0.0f) {}

    std::size_t patches() const { return height * width; }

    float& at(std::size_t row, std::size_t col, std::size_t channel) {
        return data[(row * width + col) * dim + channel];
    }
    float at(std::size_t row, std::size_t col, std::size_t channel) const {
        return data[(row * width + col) * dim + channel];
    }

    /// Embedding of patch `p` (row-major patch index).
    std::span<const float> patch(std::size_t p) const { return {data.data() + p * dim, dim}; }

    friend bool operator==(const FeatureTensor&, const FeatureTensor&) = default;
};

/// Binary ground-truth mask, one byte per pixel, values in {0, 1}.
struct MaskTensor {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> data;

    MaskTensor() = default;
    MaskTensor(std::size_t h, std::size_t w) : height(h), width(w), data(h * w, 0) {}

    std::uint8_t& at(std::size_t row, std::size_t col) { return data[row * width + col]; }
    std::uint8_t at(std::size_t row, std::size_t col) const { return data[row * width + col]; }

    friend bool operator==(const MaskTensor&, const MaskTensor&) = default;
};

/// Per-pixel anomaly scores.
struct AnomalyMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> scores;

    AnomalyMap() = default;
    AnomalyMap(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), scores(h * w, fill) {}

    double& at(std::size_t row, std::size_t col) { return scores[row * width + col]; }
    double at(std::size_t row, std::size_t col) const { return scores[row * width + col]; }

    friend bool operator==(const AnomalyMap&, const AnomalyMap&) = default;
};

inline void validate(const FeatureTensor& t) {
    if (t.data.size() != t.height * t.width * t.dim)
        throw ValidationError("feature tensor: data length " + std::to_string(t.data.size()) +
                              " does not match shape " + std::to_string(t.height) + "x" +
                              std::to_string(t.width) + "x" + std::to_string(t.dim));
    for (std::size_t i = 0; i < t.data.size(); ++i)
        if (!std::isfinite(t.data[i]))
            throw ValidationError("feature tensor: non-finite value at flat index " + std::to_string(i));
}

inline void validate(const MaskTensor& m) {
    if (m.data.size() != m.height * m.width)
        throw ValidationError("mask tensor: data length does not match shape");
    if (std::any_of(m.data.begin(), m.data.end(), [](std::uint8_t v) { return v > 1; }))
        throw ValidationError("mask tensor: values must be 0 or 1");
}

inline void validate(const AnomalyMap& m) {
    if (m.scores.size() != m.height * m.width)
        throw ValidationError("anomaly map: data length does not match shape");
    for (double v : m.scores)
        if (!std::isfinite(v) || v < 0.0) throw ValidationError("anomaly map: scores must be finite and >= 0");
}

} // namespace kng

#endif // KNG_TENSOR_HPP
