#ifndef KNG_MODEL_HPP
#define KNG_MODEL_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kng/errors.hpp"
#include "kng/nearest.hpp"
#include "kng/rng.hpp"
#include "kng/stats.hpp"
#include "kng/tensor.hpp"
#include "kng/tensor_io.hpp"
#include "kng/topology.hpp"

namespace kng {

/// How a neuron's acceptance radius aggregates distances to its graph neighbours.
enum class ThresholdMode : std::uint32_t { min = 0, mean = 1, max = 2, none = 3 };

inline std::string to_string(ThresholdMode m) {
    switch (m) {
    case ThresholdMode::min: return "min";
    case ThresholdMode::mean: return "mean";
    case ThresholdMode::max: return "max";
    case ThresholdMode::none: return "none";
    }
    return "unknown";
}

inline ThresholdMode parse_threshold_mode(const std::string& s) {
    if (s == "min") return ThresholdMode::min;
    if (s == "mean") return ThresholdMode::mean;
    if (s == "max") return ThresholdMode::max;
    if (s == "none") return ThresholdMode::none;
    throw ArgumentError("unknown threshold mode '" + s + "' (expected min|mean|max|none)");
}

struct KngConfig {
    std::uint32_t k = 3136;          // number of neurons
    std::uint32_t epochs = 10;       // initialization epochs
    std::uint32_t age_max = 25;      // edges older than this are pruned
    double epsilon = 0.01;           // covariance regularization, applied at factorization time
    ThresholdMode threshold_mode = ThresholdMode::mean;
    std::uint32_t dim = 100;         // working dimension after channel selection
    std::uint64_t seed = 0;
    std::uint32_t batch_size = 10;   // images per online update

    void validate() const {
        if (k < 2) throw ArgumentError("config: k must be >= 2");
        if (epochs < 1) throw ArgumentError("config: epochs must be >= 1");
        if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ArgumentError("config: epsilon must be > 0");
        if (dim < 1) throw ArgumentError("config: dim must be >= 1");
        if (batch_size < 1) throw ArgumentError("config: batch_size must be >= 1");
        if (static_cast<std::uint32_t>(threshold_mode) > 3) throw ArgumentError("config: bad threshold mode");
    }

    friend bool operator==(const KngConfig&, const KngConfig&) = default;
};

/// One cluster: center, number of embeddings absorbed, unregularized sample
/// covariance and acceptance threshold.
struct Neuron {
    Vector center;
    std::uint64_t count = 0;
    Matrix cov;
    double threshold = 0.0;
};

/// Cholesky factor of (cov + epsilon I). `epsilon` is the value that
/// actually succeeded, after any escalation.
struct NeuronFactor {
    Eigen::LLT<Matrix> llt;
    double epsilon = 0.0;

    Matrix precision() const { return llt.solve(Matrix::Identity(llt.rows(), llt.cols())); }
};

/// Factorizes cov + eps I, multiplying eps by 10 up to three times before
/// giving up.
inline NeuronFactor factorize_regularized(const Matrix& cov, double epsilon, std::size_t neuron) {
    double eps = epsilon;
    for (int attempt = 0; attempt <= 3; ++attempt, eps *= 10.0) {
        Matrix reg = cov;
        reg.diagonal().array() += eps;
        NeuronFactor f{Eigen::LLT<Matrix>(reg), eps};
        if (f.llt.info() == Eigen::Success) return f;
    }
    throw NumericError("covariance of neuron " + std::to_string(neuron) +
                       " is not positive definite even after regularization escalation");
}

/// Read-only scoring state derived from a model: the center index and per-neuron
/// factorizations. Snapshots are immutable and shared.
struct ScoringState {
    std::shared_ptr<const CenterIndex> index;
    std::vector<std::shared_ptr<const NeuronFactor>> factors;
};

/// Lazily built, invalidatable cache of ScoringState. Building is serialized
/// by a mutex; concurrent callers wait and then share the result.
class ModelCache {
public:
    ModelCache() = default;
    ModelCache(const ModelCache& other) {
        std::lock_guard lock(other.mu_);
        index_ = other.index_;
        factors_ = other.factors_;
    }
    ModelCache& operator=(const ModelCache& other) {
        if (this != &other) {
            std::scoped_lock lock(mu_, other.mu_);
            index_ = other.index_;
            factors_ = other.factors_;
        }
        return *this;
    }

    void invalidate_all() {
        std::lock_guard lock(mu_);
        index_.reset();
        factors_.clear();
    }

    void invalidate(std::span<const std::uint32_t> neurons) {
        std::lock_guard lock(mu_);
        index_.reset();
        for (auto i : neurons)
            if (i < factors_.size()) factors_[i].reset();
    }

    bool has_factor(std::size_t i) const {
        std::lock_guard lock(mu_);
        return i < factors_.size() && factors_[i] != nullptr;
    }

    std::shared_ptr<const CenterIndex> index(const std::vector<Neuron>& neurons) const {
        std::lock_guard lock(mu_);
        return build_index(neurons);
    }

    ScoringState ensure(const std::vector<Neuron>& neurons, double epsilon) const {
        std::lock_guard lock(mu_);
        build_index(neurons);
        factors_.resize(neurons.size());
        for (std::size_t i = 0; i < neurons.size(); ++i)
            if (!factors_[i])
                factors_[i] = std::make_shared<const NeuronFactor>(factorize_regularized(neurons[i].cov, epsilon, i));
        return {index_, factors_};
    }

private:
    const std::shared_ptr<const CenterIndex>& build_index(const std::vector<Neuron>& neurons) const {
        if (!index_) {
            Matrix centers(neurons.front().center.size(), static_cast<Eigen::Index>(neurons.size()));
            for (std::size_t i = 0; i < neurons.size(); ++i)
                centers.col(static_cast<Eigen::Index>(i)) = neurons[i].center;
            index_ = std::make_shared<const CenterIndex>(std::move(centers));
        }
        return index_;
    }

    mutable std::mutex mu_;
    mutable std::shared_ptr<const CenterIndex> index_;
    mutable std::vector<std::shared_ptr<const NeuronFactor>> factors_;
};

struct KngModel {
    KngConfig config;
    ChannelSelection selection;
    std::vector<Neuron> neurons;
    TopologyGraph graph;
    Xoshiro256::State rng_state{};
    mutable ModelCache cache;

    bool initialized() const { return !neurons.empty(); }

    ScoringState scoring_state() const {
        if (!initialized()) throw StateError("model is not initialized");
        return cache.ensure(neurons, config.epsilon);
    }

    std::shared_ptr<const CenterIndex> center_index() const {
        if (!initialized()) throw StateError("model is not initialized");
        return cache.index(neurons);
    }

    std::uint64_t total_count() const {
        std::uint64_t n = 0;
        for (const auto& neuron : neurons) n += neuron.count;
        return n;
    }
};

struct UpdateReport {
    std::uint64_t accepted = 0;
    std::uint64_t rejected = 0;
    std::uint64_t edges_removed = 0;
};

namespace detail {

/// Resolves the channel mapping for a tensor: full-dimension tensors go through
/// the model's selection, working-dimension tensors are taken as-is.
inline bool needs_selection(std::size_t tensor_dim, const ChannelSelection& sel, std::size_t working_dim) {
    if (tensor_dim == working_dim) return false;
    if (tensor_dim == sel.source_dim && sel.indices.size() == working_dim) return true;
    throw ArgumentError("tensor dim " + std::to_string(tensor_dim) + " matches neither the working dim " +
                        std::to_string(working_dim) + " nor the selection source dim " +
                        std::to_string(sel.source_dim));
}

} // namespace detail

/// Gathers every patch embedding of `tensors` into a D x M matrix (64-bit),
/// applying the channel selection when needed.
inline Matrix embedding_matrix(std::span<const FeatureTensor> tensors, const ChannelSelection& sel,
                               std::size_t working_dim) {
    std::size_t total = 0;
    for (const auto& t : tensors) total += t.patches();
    Matrix out(static_cast<Eigen::Index>(working_dim), static_cast<Eigen::Index>(total));
    Eigen::Index col = 0;
    for (const auto& t : tensors) {
        if (t.data.size() != t.patches() * t.dim) throw ValidationError("feature tensor: data length mismatch");
        const bool select = detail::needs_selection(t.dim, sel, working_dim);
        for (std::size_t p = 0; p < t.patches(); ++p, ++col) {
            const float* src = t.data.data() + p * t.dim;
            double* dst = out.col(col).data();
            for (std::size_t c = 0; c < working_dim; ++c) {
                const float v = select ? src[sel.indices[c]] : src[c];
                if (!std::isfinite(v)) throw ValidationError("non-finite embedding value");
                dst[c] = v;
            }
        }
    }
    return out;
}

inline Matrix embedding_matrix(const FeatureTensor& t, const ChannelSelection& sel, std::size_t working_dim) {
    return embedding_matrix(std::span<const FeatureTensor>(&t, 1), sel, working_dim);
}

inline double center_distance(const Neuron& a, const Neuron& b) {
    return std::sqrt(squared_distance(a.center.data(), b.center.data(), static_cast<std::size_t>(a.center.size())));
}

/// Nearest and second-nearest neuron for one working-dimension embedding.
inline Assignment assign(std::span<const double> x, const KngModel& model) {
    if (!model.initialized()) throw StateError("assign: model is not initialized");
    if (x.size() != model.config.dim)
        throw ArgumentError("assign: embedding has dim " + std::to_string(x.size()) + ", model expects " +
                            std::to_string(model.config.dim));
    if (model.neurons.size() < 2) throw ArgumentError("assign: need at least two neurons");
    return model.center_index()->nearest_two(x.data());
}

namespace detail {

inline double aggregate_neighbor_distances(const KngModel& model, std::size_t i,
                                           std::span<const std::uint32_t> neighbors) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    double sum = 0.0;
    for (auto n : neighbors) {
        const double d = center_distance(model.neurons[i], model.neurons[n]);
        lo = std::min(lo, d);
        hi = std::max(hi, d);
        sum += d;
    }
    switch (model.config.threshold_mode) {
    case ThresholdMode::min: return lo;
    case ThresholdMode::max: return hi;
    case ThresholdMode::mean: return sum / static_cast<double>(neighbors.size());
    case ThresholdMode::none: break;
    }
    return std::numeric_limits<double>::infinity();
}

} // namespace detail

/// Acceptance threshold of neuron `i`: neighbour-distance aggregate when the
/// neuron has graph neighbours, otherwise the distance to the closest other
/// neuron. Reads the graph as-is, so sweep first.
inline double compute_threshold(const KngModel& model, std::size_t i) {
    if (model.neurons.size() < 2) throw ArgumentError("compute_threshold: need at least two neurons");
    if (model.config.threshold_mode == ThresholdMode::none) return std::numeric_limits<double>::infinity();
    std::vector<std::uint32_t> neighbors;
    for (const auto& [e, refresh] : model.graph.edges()) {
        if (e.first == i) neighbors.push_back(e.second);
        if (e.second == i) neighbors.push_back(e.first);
    }
    std::sort(neighbors.begin(), neighbors.end());
    if (!neighbors.empty()) return detail::aggregate_neighbor_distances(model, i, neighbors);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t n = 0; n < model.neurons.size(); ++n)
        if (n != i) best = std::min(best, center_distance(model.neurons[i], model.neurons[n]));
    return best;
}

/// Recomputes every neuron's threshold; same values as compute_threshold.
inline void recompute_thresholds(KngModel& model) {
    const std::size_t k = model.neurons.size();
    if (model.config.threshold_mode == ThresholdMode::none) {
        for (auto& n : model.neurons) n.threshold = std::numeric_limits<double>::infinity();
        return;
    }
    const auto adjacency = model.graph.adjacency(k);
    std::vector<Assignment> closest;
    if (std::any_of(adjacency.begin(), adjacency.end(), [](const auto& a) { return a.empty(); })) {
        Matrix centers(model.neurons.front().center.size(), static_cast<Eigen::Index>(k));
        for (std::size_t i = 0; i < k; ++i) centers.col(static_cast<Eigen::Index>(i)) = model.neurons[i].center;
        CenterIndex index(centers);
        closest = index.nearest_two_all(centers);
    }
    for (std::size_t i = 0; i < k; ++i) {
        if (!adjacency[i].empty()) {
            model.neurons[i].threshold = detail::aggregate_neighbor_distances(model, i, adjacency[i]);
        } else {
            // s1 is the neuron itself unless an identical center has a lower index
            // (then d1 == 0 already is the minimum over the others).
            const auto& a = closest[i];
            model.neurons[i].threshold = a.s1 == i ? a.d2 : a.d1;
        }
    }
}

/// Indices of the `k` embeddings used as initial centers, in draw order.
inline std::vector<std::uint64_t> initial_center_indices(std::uint64_t total, std::uint32_t k, std::uint64_t seed,
                                                         Xoshiro256* rng_out = nullptr) {
    if (total < k)
        throw ArgumentError("init: " + std::to_string(total) + " embeddings cannot seed " + std::to_string(k) +
                            " neurons");
    Xoshiro256 rng(seed);
    auto idx = sample_without_replacement(total, k, rng);
    if (rng_out) *rng_out = rng;
    return idx;
}

/// Builds the network from few-shot training tensors: random initial centers,
/// then `epochs` rounds of nearest-two assignment with edge refresh/aging,
/// followed by per-neuron mean/covariance recomputation, pruning and
/// threshold update. Tensors may be full-dimension (selection is created
/// here from cfg.seed) or already at cfg.dim.
inline KngModel init_model(std::span<const FeatureTensor> train, const KngConfig& cfg) {
    cfg.validate();
    if (train.empty()) throw ArgumentError("init: no training tensors");
    const std::size_t source_dim = train.front().dim;
    for (const auto& t : train)
        if (t.dim != source_dim) throw ArgumentError("init: training tensors disagree on channel dimension");

    KngModel model;
    model.config = cfg;
    model.selection = make_selection(source_dim, cfg.dim, cfg.seed);
    const Matrix samples = embedding_matrix(train, model.selection, cfg.dim);
    const auto total = static_cast<std::uint64_t>(samples.cols());

    Xoshiro256 rng(cfg.seed);
    const auto seeds = initial_center_indices(total, cfg.k, cfg.seed, &rng);
    model.rng_state = rng.state();

    const Eigen::Index d = cfg.dim;
    model.neurons.resize(cfg.k);
    for (std::uint32_t i = 0; i < cfg.k; ++i) {
        model.neurons[i].center = samples.col(static_cast<Eigen::Index>(seeds[i]));
        model.neurons[i].cov = Matrix::Zero(d, d);
    }

    std::vector<std::vector<Eigen::Index>> members(cfg.k);
    for (std::uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Matrix centers(d, cfg.k);
        for (std::uint32_t i = 0; i < cfg.k; ++i) centers.col(i) = model.neurons[i].center;
        const CenterIndex index(std::move(centers));
        const auto assignments = index.nearest_two_all(samples);

        for (auto& m : members) m.clear();
        for (Eigen::Index l = 0; l < samples.cols(); ++l) {
            const auto& a = assignments[static_cast<std::size_t>(l)];
            model.graph.touch(a.s1, a.s2);
            members[a.s1].push_back(l);
        }
        model.graph.sweep(cfg.age_max);

        for (std::uint32_t i = 0; i < cfg.k; ++i) {
            auto& neuron = model.neurons[i];
            if (members[i].empty()) {
                neuron.count = 0;
                neuron.cov = Matrix::Zero(d, d);
                continue;
            }
            const BatchStats s = batch_stats(Matrix(samples(Eigen::all, members[i])));
            neuron.center = s.mean;
            neuron.cov = s.cov;
            neuron.count = s.count;
        }
        recompute_thresholds(model);
    }
    model.cache.invalidate_all();
    return model;
}

inline KngModel init_model(const std::vector<FeatureTensor>& train, const KngConfig& cfg) {
    return init_model(std::span<const FeatureTensor>(train), cfg);
}

/// Online step over one batch of unlabeled tensors. Acceptance uses the
/// thresholds in force at batch start; accepted embeddings refresh the
/// (s1, s2) edge and are pooled per neuron, then each touched neuron's
/// statistics are merged in one step and all thresholds are recomputed.
/// A batch with no accepted embedding leaves the model untouched.
inline UpdateReport online_update(KngModel& model, std::span<const FeatureTensor> batch) {
    if (!model.initialized()) throw StateError("online_update: model is not initialized");
    UpdateReport report;
    if (batch.empty()) return report;
    const Matrix samples = embedding_matrix(batch, model.selection, model.config.dim);
    const auto assignments = model.center_index()->nearest_two_all(samples);

    const std::size_t k = model.neurons.size();
    std::vector<std::vector<Eigen::Index>> accepted(k);
    for (Eigen::Index l = 0; l < samples.cols(); ++l) {
        const auto& a = assignments[static_cast<std::size_t>(l)];
        if (a.d1 <= model.neurons[a.s1].threshold) {
            accepted[a.s1].push_back(l);
            model.graph.touch(a.s1, a.s2);
            ++report.accepted;
        } else {
            ++report.rejected;
        }
    }
    if (report.accepted == 0) return report;

    std::vector<std::uint32_t> changed;
    for (std::uint32_t i = 0; i < k; ++i) {
        if (accepted[i].empty()) continue;
        auto& neuron = model.neurons[i];
        const BatchStats fresh = batch_stats(Matrix(samples(Eigen::all, accepted[i])));
        MergedStats merged = merge_stats(neuron.center, neuron.cov, neuron.count, fresh);
        neuron.center = std::move(merged.mean);
        neuron.cov = std::move(merged.cov);
        neuron.count = merged.count;
        changed.push_back(i);
    }
    report.edges_removed = model.graph.sweep(model.config.age_max);
    recompute_thresholds(model);
    model.cache.invalidate(changed);
    return report;
}

inline UpdateReport online_update(KngModel& model, const std::vector<FeatureTensor>& batch) {
    return online_update(model, std::span<const FeatureTensor>(batch));
}

} // namespace kng

#endif // KNG_MODEL_HPP
