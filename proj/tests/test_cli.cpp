#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "kng/cli.hpp"
#include "support.hpp"

using testing_support::TempDir;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run(std::vector<std::string> args) {
    args.insert(args.begin(), "kng");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = kng::cli_dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
    const auto b = kng::binary::read_file(p);
    return std::string(b.begin(), b.end());
}

} // namespace

TEST(Cli, EndToEnd) {
    TempDir dir("cli");
    const auto d = dir.path().string();
    auto r = run({"synth", "--out-dir", d, "--dim", "16", "--grid", "6", "6", "--n-train", "3", "--n-sessions", "2",
                  "--session-size", "10", "--anomaly-ratio", "0.2", "--latent-dim", "3", "--modes", "2"});
    ASSERT_EQ(r.code, 0) << r.err;

    r = run({"init", "--train", d + "/train.json", "--k", "36", "--epochs", "3", "--age-max", "25", "--dim", "8",
             "--epsilon", "0.01", "--seed", "42", "--out", d + "/model.kng"});
    ASSERT_EQ(r.code, 0) << r.err;
    ASSERT_TRUE(std::filesystem::exists(dir / "model.kng"));

    r = run({"score", "--model", d + "/model.kng", "--features", d + "/stream/stream_0000.ften", "--out",
             d + "/map.ften", "--sigma", "4", "--target-size", "24", "24"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto map = kng::read_tensor_as<kng::AnomalyMap>(dir / "map.ften");
    EXPECT_EQ(map.height, 24u);
    const auto score = nlohmann::json::parse(r.out)["image_score"].get<double>();
    EXPECT_NEAR(score, kng::image_score(map), 1e-5 * (1.0 + score));

    r = run({"stream", "--model", d + "/model.kng", "--manifest", d + "/stream.json", "--batch-size", "5",
             "--session-size", "10", "--mode", "online", "--report", d + "/r1.json", "--save-model", d + "/m1.kng"});
    ASSERT_EQ(r.code, 0) << r.err;
    r = run({"stream", "--model", d + "/model.kng", "--manifest", d + "/stream.json", "--batch-size", "5",
             "--session-size", "10", "--mode", "online", "--report", d + "/r2.json", "--save-model", d + "/m2.kng"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(slurp(dir / "r1.json"), slurp(dir / "r2.json"));
    EXPECT_EQ(slurp(dir / "m1.kng"), slurp(dir / "m2.kng"));
    const auto report = nlohmann::json::parse(slurp(dir / "r1.json"));
    EXPECT_EQ(report["schema_version"], 1);
    EXPECT_EQ(report["sessions"].size(), 2u);
    EXPECT_FALSE(report.contains("seconds_per_image"));

    r = run({"stream", "--model", d + "/model.kng", "--manifest", d + "/stream.json", "--batch-size", "5",
             "--session-size", "10", "--repeats", "3", "--timing"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto repeated = nlohmann::json::parse(r.out);
    EXPECT_EQ(repeated["runs"].size(), 3u);
    EXPECT_EQ(repeated["summary"]["image_rocauc"]["n"], 3);
    EXPECT_TRUE(repeated["runs"][0].contains("seconds_per_image"));

    r = run({"eval", "--model", d + "/model.kng", "--manifest", d + "/stream.json"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto eval = nlohmann::json::parse(r.out);
    EXPECT_EQ(eval["sessions"].size(), 1u);
    EXPECT_EQ(eval["model_hash_before"], eval["model_hash_after"]);

    r = run({"inspect", "--model", d + "/model.kng"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto info = nlohmann::json::parse(r.out);
    EXPECT_EQ(info["k"], 36);
    EXPECT_EQ(info["total_count"], 3 * 36);
    EXPECT_EQ(info["hash"], kng::model_hash(kng::load_model(dir / "model.kng")));
}

TEST(Cli, ExitCodes) {
    TempDir dir("cli");
    const auto d = dir.path().string();
    EXPECT_EQ(run({"--help"}).code, 0);
    EXPECT_EQ(run({}).code, 1);
    EXPECT_EQ(run({"inspect", "--model", d + "/x.kng", "--bogus"}).code, 1);
    EXPECT_EQ(run({"frobnicate"}).code, 1);
    EXPECT_EQ(run({"inspect", "--model", d + "/missing.kng"}).code, 2);

    kng::binary::write_file(dir / "junk.kng", {'J', 'U', 'N', 'K', 0, 0, 0, 0, 0, 0});
    EXPECT_EQ(run({"inspect", "--model", d + "/junk.kng"}).code, 2);

    ASSERT_EQ(run({"synth", "--out-dir", d, "--dim", "8", "--grid", "4", "4", "--n-train", "2", "--n-sessions", "1",
                   "--session-size", "10", "--latent-dim", "2"})
                  .code,
              0);
    EXPECT_EQ(run({"synth", "--out-dir", d + "/z", "--anomaly-ratio", "0"}).code, 1);
    EXPECT_EQ(run({"init", "--train", d + "/train.json", "--out", d + "/m.kng", "--k", "4", "--dim", "4",
                   "--threshold-mode", "median"})
                  .code,
              1);
    EXPECT_EQ(run({"init", "--train", d + "/train.json", "--out", d + "/m.kng", "--k", "1000", "--dim", "4"}).code, 1);
    ASSERT_EQ(run({"init", "--train", d + "/train.json", "--out", d + "/m.kng", "--k", "4", "--dim", "4"}).code, 0);
    // training manifest carries no labels
    EXPECT_EQ(run({"stream", "--model", d + "/m.kng", "--manifest", d + "/train.json"}).code, 1);
    EXPECT_EQ(run({"stream", "--model", d + "/m.kng", "--manifest", d + "/stream.json", "--mode", "sideways"}).code,
              1);
}
