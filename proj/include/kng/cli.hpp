#ifndef KNG_CLI_HPP
#define KNG_CLI_HPP

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kng/kng.hpp"

namespace kng {

namespace detail {

inline void write_json(const nlohmann::json& doc, const std::string& path, std::ostream& out) {
    const std::string text = doc.dump(2) + "\n";
    if (path.empty()) {
        out << text;
        return;
    }
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f << text;
    if (!f) throw IoError("write failed: " + path);
}

inline std::vector<FeatureTensor> load_features(const Manifest& m) {
    std::vector<FeatureTensor> out;
    out.reserve(m.items.size());
    for (const auto& item : m.items) out.push_back(read_tensor_as<FeatureTensor>(item.features));
    return out;
}

inline nlohmann::json inspect_json(const KngModel& model) {
    std::uint64_t empty = 0;
    double tmin = std::numeric_limits<double>::infinity(), tmax = 0.0, tsum = 0.0;
    std::size_t finite = 0;
    for (const auto& n : model.neurons) {
        if (n.count == 0) ++empty;
        if (std::isfinite(n.threshold)) {
            tmin = std::min(tmin, n.threshold);
            tmax = std::max(tmax, n.threshold);
            tsum += n.threshold;
            ++finite;
        }
    }
    const auto& c = model.config;
    return {{"k", c.k},
            {"dim", c.dim},
            {"source_dim", model.selection.source_dim},
            {"epochs", c.epochs},
            {"age_max", c.age_max},
            {"epsilon", c.epsilon},
            {"threshold_mode", to_string(c.threshold_mode)},
            {"seed", c.seed},
            {"batch_size", c.batch_size},
            {"total_count", model.total_count()},
            {"empty_neurons", empty},
            {"edges", model.graph.edge_count()},
            {"event_counter", model.graph.event_counter()},
            {"threshold_min", finite ? nlohmann::json(tmin) : nlohmann::json(nullptr)},
            {"threshold_mean", finite ? nlohmann::json(tsum / static_cast<double>(finite)) : nlohmann::json(nullptr)},
            {"threshold_max", finite ? nlohmann::json(tmax) : nlohmann::json(nullptr)},
            {"hash", model_hash(model)}};
}

} // namespace detail

/// Entry point of the `kng` tool. Exit codes: 0 success, 1 usage or
/// validation error, 2 I/O or format error.
inline int cli_dispatch(int argc, const char* const* argv, std::ostream& out = std::cout,
                        std::ostream& err = std::cerr) {
    CLI::App app{"K-NG streaming anomaly detection"};
    app.require_subcommand(1);

    // init
    auto* init = app.add_subcommand("init", "Build a model from a few-shot training manifest");
    std::string train_path, model_out;
    KngConfig cfg;
    std::string threshold_mode = "mean";
    init->add_option("--train", train_path, "Training manifest")->required();
    init->add_option("--out", model_out, "Output model file")->required();
    init->add_option("--k", cfg.k, "Number of neurons");
    init->add_option("--epochs", cfg.epochs, "Initialization epochs");
    init->add_option("--age-max", cfg.age_max, "Maximum edge age");
    init->add_option("--dim", cfg.dim, "Working dimension after channel selection");
    init->add_option("--epsilon", cfg.epsilon, "Covariance regularization");
    init->add_option("--seed", cfg.seed, "Random seed");
    init->add_option("--batch-size", cfg.batch_size, "Default online batch size");
    init->add_option("--threshold-mode", threshold_mode, "min|mean|max|none");

    // score
    auto* score = app.add_subcommand("score", "Score one feature tensor");
    std::string model_path, features_path, map_out;
    ScoreConfig score_cfg;
    std::vector<std::size_t> target_size;
    score->add_option("--model", model_path, "Model file")->required();
    score->add_option("--features", features_path, "Feature tensor (FTEN)")->required();
    score->add_option("--out", map_out, "Output anomaly map (FTEN f32 rank 2)");
    score->add_option("--sigma", score_cfg.sigma, "Gaussian smoothing sigma (pixels)");
    score->add_option("--target-size", target_size, "Output height and width")->expected(2);
    score->add_option("--threads", score_cfg.threads, "Scoring threads (0: KNG_THREADS or all cores)");

    // stream
    auto* stream = app.add_subcommand("stream", "Run the shuffled session protocol over a labeled stream");
    std::string manifest_path, report_path, save_model_path, mode = "online";
    SessionPlan plan;
    std::size_t batch_size = 0, repeats = 1;
    bool timing = false;
    stream->add_option("--model", model_path, "Model file")->required();
    stream->add_option("--manifest", manifest_path, "Labeled stream manifest")->required();
    stream->add_option("--report", report_path, "Report JSON (stdout if omitted)");
    stream->add_option("--batch-size", batch_size, "Images per update (default: model's batch size)");
    stream->add_option("--session-size", plan.session_size, "Images per session");
    stream->add_option("--mode", mode, "online|offline");
    stream->add_option("--shuffle-seed", plan.shuffle_seed, "Stream shuffle seed");
    stream->add_option("--repeats", repeats, "Independent shuffles (seed, seed+1, ...)");
    stream->add_option("--fpr-limit", plan.fpr_limit, "PRO integration limit");
    stream->add_option("--sigma", score_cfg.sigma, "Gaussian smoothing sigma (pixels)");
    stream->add_option("--target-size", target_size, "Anomaly map height and width")->expected(2);
    stream->add_option("--threads", score_cfg.threads, "Scoring threads");
    stream->add_option("--save-model", save_model_path, "Write the updated model (single run only)");
    stream->add_flag("--timing", timing, "Include wall-clock seconds per image in the report");

    // eval
    auto* eval = app.add_subcommand("eval", "Score a labeled manifest with a frozen model and report metrics");
    eval->add_option("--model", model_path, "Model file")->required();
    eval->add_option("--manifest", manifest_path, "Labeled manifest")->required();
    eval->add_option("--report", report_path, "Report JSON (stdout if omitted)");
    eval->add_option("--fpr-limit", plan.fpr_limit, "PRO integration limit");
    eval->add_option("--sigma", score_cfg.sigma, "Gaussian smoothing sigma (pixels)");
    eval->add_option("--target-size", target_size, "Anomaly map height and width")->expected(2);
    eval->add_option("--threads", score_cfg.threads, "Scoring threads");

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic train + stream dataset");
    SynthSpec spec;
    std::string out_dir;
    std::vector<std::size_t> grid;
    synth->add_option("--out-dir", out_dir, "Output directory")->required();
    synth->add_option("--dim", spec.ambient_dim, "Ambient embedding dimension");
    synth->add_option("--grid", grid, "Patch grid height and width")->expected(2);
    synth->add_option("--n-train", spec.n_train, "Training images");
    synth->add_option("--n-sessions", spec.n_sessions, "Stream sessions");
    synth->add_option("--session-size", spec.session_size, "Images per session");
    synth->add_option("--anomaly-ratio", spec.anomaly_ratio, "Fraction of anomalous stream images");
    synth->add_option("--seed", spec.seed, "Random seed");
    synth->add_option("--latent-dim", spec.latent_dim, "Manifold dimension");
    synth->add_option("--modes", spec.modes, "Mixture components");
    synth->add_option("--noise-std", spec.noise_std, "Ambient noise std-dev");
    synth->add_option("--margin", spec.margin, "Anomaly displacement in noise std-devs");
    synth->add_option("--mask-scale", spec.mask_scale, "Mask pixels per patch");

    // inspect
    auto* inspect = app.add_subcommand("inspect", "Print model statistics as JSON");
    inspect->add_option("--model", model_path, "Model file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << app.help();
        return 1;
    }

    try {
        if (!target_size.empty()) {
            score_cfg.target_height = target_size[0];
            score_cfg.target_width = target_size[1];
        }
        if (*init) {
            cfg.threshold_mode = parse_threshold_mode(threshold_mode);
            const Manifest m = load_manifest(train_path);
            const KngModel model = init_model(detail::load_features(m), cfg);
            save_model(model, model_out);
            out << "wrote " << model_out << " (k=" << cfg.k << ", dim=" << cfg.dim
                << ", embeddings=" << model.total_count() << ")\n";
        } else if (*score) {
            const KngModel model = load_model(model_path);
            const auto t = read_tensor_as<FeatureTensor>(features_path);
            const AnomalyMap map = score_map(t, model, score_cfg);
            if (!map_out.empty()) write_tensor(map, map_out);
            out << nlohmann::json{{"image_score", image_score(map)}, {"height", map.height}, {"width", map.width}}.dump()
                << "\n";
        } else if (*stream) {
            const KngModel initial = load_model(model_path);
            const Manifest m = load_manifest(manifest_path);
            plan.mode = parse_session_mode(mode);
            plan.batch_size = batch_size ? batch_size : initial.config.batch_size;
            if (repeats < 1) throw ArgumentError("--repeats must be >= 1");
            if (repeats > 1 && !save_model_path.empty())
                throw ArgumentError("--save-model requires a single run");
            std::vector<EvalReport> runs;
            for (std::size_t r = 0; r < repeats; ++r) {
                KngModel model = initial;
                SessionPlan p = plan;
                p.shuffle_seed = plan.shuffle_seed + r;
                runs.push_back(run_sessions(model, m, p, score_cfg));
                if (!save_model_path.empty()) save_model(model, save_model_path);
            }
            if (repeats == 1) {
                detail::write_json(report_json(runs.front(), timing), report_path, out);
            } else {
                nlohmann::json doc{{"schema_version", kReportSchemaVersion}, {"repeats", repeats}};
                doc["runs"] = nlohmann::json::array();
                for (const auto& r : runs) doc["runs"].push_back(report_json(r, timing));
                doc["summary"] = repeat_summary_json(runs);
                detail::write_json(doc, report_path, out);
            }
        } else if (*eval) {
            KngModel model = load_model(model_path);
            const Manifest m = load_manifest(manifest_path);
            if (m.items.empty()) throw ValidationError("eval: manifest is empty");
            plan.mode = SessionMode::offline;
            plan.shuffle = false;
            plan.session_size = m.items.size();
            plan.batch_size = m.items.size();
            detail::write_json(report_json(run_sessions(model, m, plan, score_cfg)), report_path, out);
        } else if (*synth) {
            if (!grid.empty()) {
                spec.grid_height = grid[0];
                spec.grid_width = grid[1];
            }
            const auto files = generate_synthetic(spec, out_dir);
            out << "wrote " << files.train_manifest.string() << " and " << files.stream_manifest.string() << "\n";
        } else if (*inspect) {
            out << detail::inspect_json(load_model(model_path)).dump(2) << "\n";
        }
    } catch (const IoError& e) {
        err << "io error: " << e.what() << "\n";
        return 2;
    } catch (const FormatError& e) {
        err << "format error: " << e.what() << "\n";
        return 2;
    } catch (const nlohmann::json::exception& e) {
        err << "format error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

} // namespace kng

#endif // KNG_CLI_HPP
