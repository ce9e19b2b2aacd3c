#ifndef KNG_NEAREST_HPP
#define KNG_NEAREST_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "kng/errors.hpp"
#include "kng/stats.hpp"

namespace kng {

/// Nearest (s1) and second-nearest (s2) neuron for one embedding.
struct Assignment {
    std::uint32_t s1 = 0;
    std::uint32_t s2 = 0;
    double d1 = 0.0;  // L2 distance to s1
    double d2 = 0.0;  // L2 distance to s2
};

/// Squared Euclidean distance, summed sequentially in index order. This is
/// the reference value every nearest-neighbour decision is made on.
inline double squared_distance(const double* a, const double* b, std::size_t d) {
    double acc = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double diff = a[i] - b[i];
        acc += diff * diff;
    }
    return acc;
}

/// Exhaustive nearest-two search over a fixed set of centers.
///
/// Candidate distances for a block of queries come from one GEMM
/// (|c|^2 - 2 c.x + |x|^2). Every center whose expanded distance could,
/// given a rounding-error bound, fall within the best two is then re-scored
/// with `squared_distance`, so results are identical to a plain linear scan
/// with lowest-index tie-breaking.
class CenterIndex {
public:
    CenterIndex() = default;

    /// `centers` is D x k, one center per column.
    explicit CenterIndex(Matrix centers) : centers_(std::move(centers)) {
        if (centers_.cols() < 2) throw ArgumentError("CenterIndex: need at least two centers");
        sqnorms_.resize(centers_.cols());
        double max_norm = 0.0;
        for (Eigen::Index i = 0; i < centers_.cols(); ++i) {
            const double* c = centers_.col(i).data();
            double s = 0.0;
            for (Eigen::Index j = 0; j < centers_.rows(); ++j) s += c[j] * c[j];
            sqnorms_[i] = s;
            max_norm = std::max(max_norm, std::sqrt(s));
        }
        max_norm_ = max_norm;
    }

    Eigen::Index dim() const { return centers_.rows(); }
    Eigen::Index size() const { return centers_.cols(); }
    const Matrix& centers() const { return centers_; }

    /// Linear scan, used for single queries.
    Assignment nearest_two(const double* x) const {
        const auto d = static_cast<std::size_t>(dim());
        Best best;
        for (Eigen::Index i = 0; i < size(); ++i)
            best.offer(squared_distance(x, centers_.col(i).data(), d), static_cast<std::uint32_t>(i));
        return best.result();
    }

    /// Nearest-two for every column of `queries` (D x n).
    std::vector<Assignment> nearest_two_all(const Matrix& queries) const {
        if (queries.rows() != dim()) throw ArgumentError("nearest search: dimension mismatch");
        std::vector<Assignment> out(static_cast<std::size_t>(queries.cols()));
        search_block(queries, 0, queries.cols(), out);
        return out;
    }

    /// Nearest-two for columns [begin, end) of `queries`, written into out[begin, end).
    void search_block(const Matrix& queries, Eigen::Index begin, Eigen::Index end,
                      std::span<Assignment> out) const {
        constexpr Eigen::Index kBlock = 256;
        const auto d = static_cast<std::size_t>(dim());
        const double unit = std::numeric_limits<double>::epsilon() / 2;
        const double gamma = 4.0 * static_cast<double>(d + 4) * unit;
        Matrix gram;
        std::vector<std::uint32_t> candidates;
        for (Eigen::Index b0 = begin; b0 < end; b0 += kBlock) {
            const Eigen::Index bn = std::min(kBlock, end - b0);
            gram.noalias() = centers_.transpose() * queries.middleCols(b0, bn);
            for (Eigen::Index q = 0; q < bn; ++q) {
                const double* x = queries.col(b0 + q).data();
                double xnorm2 = 0.0;
                for (std::size_t j = 0; j < d; ++j) xnorm2 += x[j] * x[j];
                double a1 = std::numeric_limits<double>::infinity();
                double a2 = a1;
                for (Eigen::Index i = 0; i < size(); ++i) {
                    const double approx = sqnorms_[i] - 2.0 * gram(i, q) + xnorm2;
                    if (approx < a1) {
                        a2 = a1;
                        a1 = approx;
                    } else if (approx < a2) {
                        a2 = approx;
                    }
                }
                const double scale = max_norm_ + std::sqrt(xnorm2);
                const double cutoff = a2 + 2.0 * gamma * scale * scale;
                candidates.clear();
                for (Eigen::Index i = 0; i < size(); ++i)
                    if (sqnorms_[i] - 2.0 * gram(i, q) + xnorm2 <= cutoff)
                        candidates.push_back(static_cast<std::uint32_t>(i));
                Best best;
                for (auto i : candidates) best.offer(squared_distance(x, centers_.col(i).data(), d), i);
                out[static_cast<std::size_t>(b0 + q)] = best.result();
            }
        }
    }

private:
    struct Best {
        double q1 = std::numeric_limits<double>::infinity();
        double q2 = std::numeric_limits<double>::infinity();
        std::uint32_t i1 = std::numeric_limits<std::uint32_t>::max();
        std::uint32_t i2 = std::numeric_limits<std::uint32_t>::max();

        // Candidates may arrive in any index order; ties go to the lower index.
        static bool better(double qa, std::uint32_t ia, double qb, std::uint32_t ib) {
            return qa < qb || (qa == qb && ia < ib);
        }

        void offer(double q, std::uint32_t i) {
            if (better(q, i, q1, i1)) {
                q2 = q1;
                i2 = i1;
                q1 = q;
                i1 = i;
            } else if (better(q, i, q2, i2)) {
                q2 = q;
                i2 = i;
            }
        }

        Assignment result() const { return {i1, i2, std::sqrt(q1), std::sqrt(q2)}; }
    };

    Matrix centers_;
    std::vector<double> sqnorms_;
    double max_norm_ = 0.0;
};

} // namespace kng

#endif // KNG_NEAREST_HPP
