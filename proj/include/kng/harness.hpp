#ifndef KNG_HARNESS_HPP
#define KNG_HARNESS_HPP

#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kng/errors.hpp"
#include "kng/manifest.hpp"
#include "kng/metrics.hpp"
#include "kng/model.hpp"
#include "kng/model_io.hpp"
#include "kng/rng.hpp"
#include "kng/scoring.hpp"
#include "kng/tensor_io.hpp"

namespace kng {

enum class SessionMode { online, offline };

inline std::string to_string(SessionMode m) { return m == SessionMode::online ? "online" : "offline"; }

inline SessionMode parse_session_mode(const std::string& s) {
    if (s == "online") return SessionMode::online;
    if (s == "offline") return SessionMode::offline;
    throw ArgumentError("unknown mode '" + s + "' (expected online|offline)");
}

struct SessionPlan {
    std::uint64_t shuffle_seed = 0;
    std::size_t session_size = 50;
    std::size_t batch_size = 10;
    SessionMode mode = SessionMode::online;
    double fpr_limit = 0.3;
    bool shuffle = true;

    void validate() const {
        if (batch_size < 1) throw ArgumentError("session plan: batch_size must be >= 1");
        if (session_size < batch_size) throw ArgumentError("session plan: session_size must be >= batch_size");
        if (!(fpr_limit > 0.0) || fpr_limit > 1.0) throw ArgumentError("session plan: fpr_limit must be in (0, 1]");
    }
};

struct ImagePrediction {
    std::string id;
    std::size_t session = 0;
    int label = 0;
    double score = 0.0;
};

struct SessionResult {
    std::size_t index = 0;
    std::size_t size = 0;
    std::size_t anomalous = 0;
    bool partial = false;
    std::optional<double> image_rocauc;
    std::optional<double> pixel_rocauc;
    std::optional<double> pro;
    std::uint64_t accepted = 0;
    std::uint64_t rejected = 0;
    std::uint64_t neuron_count_total = 0;  // after the session's updates
};

struct MetricAverages {
    std::optional<double> image_rocauc;
    std::optional<double> pixel_rocauc;
    std::optional<double> pro;
};

struct EvalReport {
    SessionPlan plan;
    ScoreConfig score;
    KngConfig model_config;
    std::vector<SessionResult> sessions;
    MetricAverages averages;
    std::uint64_t accepted = 0;
    std::uint64_t rejected = 0;
    std::string model_hash_before;
    std::string model_hash_after;
    bool pixel_metrics = true;
    std::vector<std::string> warnings;
    std::vector<ImagePrediction> predictions;
    double seconds_per_image = 0.0;
};

/// Mean of the defined values of one metric over full (non-partial) sessions.
inline MetricAverages average_sessions(const std::vector<SessionResult>& sessions) {
    auto mean_of = [&](auto field) -> std::optional<double> {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& s : sessions) {
            if (s.partial) continue;
            if (const auto& v = s.*field) {
                sum += *v;
                ++n;
            }
        }
        if (n == 0) return std::nullopt;
        return sum / static_cast<double>(n);
    };
    return {mean_of(&SessionResult::image_rocauc), mean_of(&SessionResult::pixel_rocauc),
            mean_of(&SessionResult::pro)};
}

namespace detail {

inline int label_value(const ManifestItem& item) { return *item.label == Label::anomalous ? 1 : 0; }

} // namespace detail

/// Session protocol: shuffle the labeled stream, cut it into sessions of
/// `session_size` (a shorter trailing session is reported but excluded from
/// averages), and within each session process batches by scoring every image
/// first and only then (online mode) updating the model with that batch.
/// Metrics are computed once per session from the recorded predictions.
inline EvalReport run_sessions(KngModel& model, const Manifest& manifest, const SessionPlan& plan,
                               const ScoreConfig& score_cfg = {}) {
    plan.validate();
    if (!model.initialized()) throw StateError("run_sessions: model is not initialized");
    for (const auto& item : manifest.items)
        if (!item.label) throw ValidationError("run_sessions: item '" + item.id + "' has no label");

    EvalReport report;
    report.plan = plan;
    report.score = score_cfg;
    report.model_config = model.config;
    report.model_hash_before = model_hash(model);

    for (const auto& item : manifest.items)
        if (*item.label == Label::anomalous && !item.mask) {
            report.pixel_metrics = false;
            report.warnings.push_back("pixel metrics omitted: anomalous item '" + item.id + "' has no mask");
            break;
        }

    ScoreConfig cfg = score_cfg;
    if (report.pixel_metrics && cfg.target_height == 0 && cfg.target_width == 0) {
        for (const auto& item : manifest.items)
            if (item.mask) {
                const auto m = read_tensor_as<MaskTensor>(*item.mask);
                cfg.target_height = m.height;
                cfg.target_width = m.width;
                break;
            }
    }

    std::vector<std::size_t> order(manifest.items.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (plan.shuffle) {
        Xoshiro256 rng(plan.shuffle_seed);
        shuffle(order, rng);
    }

    const auto started = std::chrono::steady_clock::now();
    for (std::size_t s0 = 0, index = 0; s0 < order.size(); s0 += plan.session_size, ++index) {
        const std::size_t s1 = std::min(order.size(), s0 + plan.session_size);
        SessionResult session;
        session.index = index;
        session.size = s1 - s0;
        session.partial = session.size < plan.session_size;
        if (session.partial)
            report.warnings.push_back("trailing partial session " + std::to_string(index) + " of " +
                                      std::to_string(session.size) + " images excluded from averages");

        std::vector<ScoredSample> image_scores;
        std::vector<AnomalyMap> maps;
        std::vector<MaskTensor> masks;
        for (std::size_t b0 = s0; b0 < s1; b0 += plan.batch_size) {
            const std::size_t b1 = std::min(s1, b0 + plan.batch_size);
            std::vector<FeatureTensor> batch;
            for (std::size_t i = b0; i < b1; ++i) {
                const auto& item = manifest.items[order[i]];
                batch.push_back(read_tensor_as<FeatureTensor>(item.features));
                AnomalyMap map = score_map(batch.back(), model, cfg);
                const int label = detail::label_value(item);
                const double score = image_score(map);
                image_scores.push_back({score, label});
                report.predictions.push_back({item.id, index, label, score});
                session.anomalous += static_cast<std::size_t>(label);
                if (report.pixel_metrics) {
                    MaskTensor mask = item.mask ? read_tensor_as<MaskTensor>(*item.mask)
                                                : MaskTensor(map.height, map.width);
                    if (mask.height != map.height || mask.width != map.width)
                        throw ValidationError("run_sessions: mask of '" + item.id + "' is " +
                                              std::to_string(mask.height) + "x" + std::to_string(mask.width) +
                                              ", anomaly map is " + std::to_string(map.height) + "x" +
                                              std::to_string(map.width));
                    maps.push_back(std::move(map));
                    masks.push_back(std::move(mask));
                }
            }
            if (plan.mode == SessionMode::online) {
                const auto update = online_update(model, batch);
                session.accepted += update.accepted;
                session.rejected += update.rejected;
            }
        }

        try {
            session.image_rocauc = rocauc(image_scores);
        } catch (const UndefinedMetricError&) {
            report.warnings.push_back("session " + std::to_string(index) + ": image ROCAUC undefined (single class)");
        }
        if (report.pixel_metrics) {
            try {
                session.pixel_rocauc = pixel_rocauc(maps, masks);
                session.pro = pro_score(maps, masks, plan.fpr_limit);
            } catch (const UndefinedMetricError&) {
                report.warnings.push_back("session " + std::to_string(index) +
                                          ": pixel metrics undefined (no anomalous pixels)");
            }
        }
        session.neuron_count_total = model.total_count();
        report.accepted += session.accepted;
        report.rejected += session.rejected;
        report.sessions.push_back(session);
    }
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - started;
    if (!order.empty()) report.seconds_per_image = elapsed.count() / static_cast<double>(order.size());

    report.averages = average_sessions(report.sessions);
    report.model_hash_after = model_hash(model);
    return report;
}

namespace detail {

inline nlohmann::json optional_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline nlohmann::json averages_json(const MetricAverages& a) {
    return {{"image_rocauc", optional_json(a.image_rocauc)},
            {"pixel_rocauc", optional_json(a.pixel_rocauc)},
            {"pro", optional_json(a.pro)}};
}

} // namespace detail

inline constexpr int kReportSchemaVersion = 1;

/// Report document. Timing is wall-clock dependent, so it is only emitted
/// on request; everything else is a deterministic function of the inputs.
inline nlohmann::json report_json(const EvalReport& r, bool include_timing = false) {
    using nlohmann::json;
    json sessions = json::array();
    for (const auto& s : r.sessions)
        sessions.push_back({{"session_index", s.index},
                            {"size", s.size},
                            {"anomalous", s.anomalous},
                            {"partial", s.partial},
                            {"image_rocauc", detail::optional_json(s.image_rocauc)},
                            {"pixel_rocauc", detail::optional_json(s.pixel_rocauc)},
                            {"pro", detail::optional_json(s.pro)},
                            {"accepted", s.accepted},
                            {"rejected", s.rejected},
                            {"neuron_count_total", s.neuron_count_total}});
    json predictions = json::array();
    for (const auto& p : r.predictions)
        predictions.push_back({{"id", p.id}, {"session", p.session}, {"label", p.label}, {"score", p.score}});
    json doc = {
        {"schema_version", kReportSchemaVersion},
        {"config",
         {{"mode", to_string(r.plan.mode)},
          {"shuffle_seed", r.plan.shuffle_seed},
          {"shuffle", r.plan.shuffle},
          {"session_size", r.plan.session_size},
          {"batch_size", r.plan.batch_size},
          {"fpr_limit", r.plan.fpr_limit},
          {"sigma", r.score.sigma},
          {"target_size", {r.score.target_height, r.score.target_width}},
          {"model",
           {{"k", r.model_config.k},
            {"epochs", r.model_config.epochs},
            {"age_max", r.model_config.age_max},
            {"epsilon", r.model_config.epsilon},
            {"threshold_mode", to_string(r.model_config.threshold_mode)},
            {"dim", r.model_config.dim},
            {"seed", r.model_config.seed}}}}},
        {"model_hash_before", r.model_hash_before},
        {"model_hash_after", r.model_hash_after},
        {"pixel_metrics", r.pixel_metrics},
        {"sessions", sessions},
        {"averages", detail::averages_json(r.averages)},
        {"averages_exclude_partial", true},
        {"accepted", r.accepted},
        {"rejected", r.rejected},
        {"warnings", r.warnings},
        {"predictions", predictions},
    };
    if (include_timing) doc["seconds_per_image"] = r.seconds_per_image;
    return doc;
}

/// Mean and sample standard deviation of each average over repeated runs.
inline nlohmann::json repeat_summary_json(const std::vector<EvalReport>& runs) {
    nlohmann::json out;
    auto summarize = [&](const char* name, auto field) {
        std::vector<double> v;
        for (const auto& r : runs)
            if (const auto& x = r.averages.*field) v.push_back(*x);
        if (v.empty()) {
            out[name] = {{"mean", nullptr}, {"stddev", nullptr}, {"n", 0}};
            return;
        }
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
        out[name] = {{"mean", mean}, {"stddev", sd}, {"n", v.size()}};
    };
    summarize("image_rocauc", &MetricAverages::image_rocauc);
    summarize("pixel_rocauc", &MetricAverages::pixel_rocauc);
    summarize("pro", &MetricAverages::pro);
    return out;
}

} // namespace kng

#endif // KNG_HARNESS_HPP
