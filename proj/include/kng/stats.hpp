#ifndef KNG_STATS_HPP
#define KNG_STATS_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kng/errors.hpp"

namespace kng {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Mean, unbiased sample covariance and size of a group of embeddings.
/// cov is the zero matrix when count == 1.
struct BatchStats {
    Vector mean;
    Matrix cov;
    std::uint64_t count = 0;
};

/// Result of folding a batch into existing statistics.
struct MergedStats {
    Vector mean;
    Matrix cov;
    std::uint64_t count = 0;
};

/// Statistics of the columns of `samples` (D x N).
inline BatchStats batch_stats(const Matrix& samples) {
    if (samples.cols() == 0) throw ArgumentError("batch_stats: empty input");
    const auto n = static_cast<std::uint64_t>(samples.cols());
    BatchStats s;
    s.count = n;
    s.mean = samples.rowwise().sum() / static_cast<double>(n);
    if (n == 1) {
        s.cov = Matrix::Zero(samples.rows(), samples.rows());
        return s;
    }
    const Matrix centered = samples.colwise() - s.mean;
    s.cov = (centered * centered.transpose()) / static_cast<double>(n - 1);
    s.cov = 0.5 * (s.cov + s.cov.transpose()).eval();
    return s;
}

inline BatchStats batch_stats(std::span<const Vector> xs) {
    if (xs.empty()) throw ArgumentError("batch_stats: empty input");
    Matrix samples(xs.front().size(), static_cast<Eigen::Index>(xs.size()));
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (xs[i].size() != samples.rows()) throw ArgumentError("batch_stats: inconsistent dimensions");
        samples.col(static_cast<Eigen::Index>(i)) = xs[i];
    }
    return batch_stats(samples);
}

/// Pooled mean and covariance of a prior group (mean, cov, count) and a new
/// batch, without revisiting the prior samples:
///
///   mu_all = (N_A * A + N * mu_new) / (N_A + N)
///   Sigma  = [ (N_A - 1) Sigma_A + N_A (mu_all - A)(mu_all - A)^T
///            + (N - 1) Sigma_new + N (mu_all - mu_new)(mu_all - mu_new)^T ] / (N_A + N - 1)
///
/// Either side may be empty (count 0, in which case its mean is ignored).
/// When the pooled count is below 2 the covariance is defined as zero.
inline MergedStats merge_stats(const Vector& prior_mean, const Matrix& prior_cov, std::uint64_t prior_count,
                               const BatchStats& batch) {
    if (prior_count == 0 && batch.count == 0) throw ArgumentError("merge_stats: both counts are zero");
    const Eigen::Index d = prior_count > 0 ? prior_mean.size() : batch.mean.size();
    if ((prior_count > 0 && (prior_cov.rows() != d || prior_cov.cols() != d)) ||
        (batch.count > 0 && (batch.mean.size() != d || batch.cov.rows() != d || batch.cov.cols() != d)))
        throw ArgumentError("merge_stats: dimension mismatch");

    MergedStats out;
    out.count = prior_count + batch.count;
    if (batch.count == 0) {
        out.mean = prior_mean;
        out.cov = prior_cov;
        return out;
    }
    if (prior_count == 0) {
        out.mean = batch.mean;
        out.cov = batch.cov;
        return out;
    }

    const auto na = static_cast<double>(prior_count);
    const auto nb = static_cast<double>(batch.count);
    out.mean = (na * prior_mean + nb * batch.mean) / (na + nb);
    if (out.count < 2) {
        out.cov = Matrix::Zero(d, d);
        return out;
    }
    const Vector shift_prior = out.mean - prior_mean;
    const Vector shift_batch = out.mean - batch.mean;
    Matrix acc = (na - 1.0) * prior_cov;
    acc.noalias() += na * shift_prior * shift_prior.transpose();
    acc.noalias() += (nb - 1.0) * batch.cov;
    acc.noalias() += nb * shift_batch * shift_batch.transpose();
    out.cov = acc / (na + nb - 1.0);
    out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
    return out;
}

} // namespace kng

#endif // KNG_STATS_HPP
