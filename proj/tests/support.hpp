#ifndef KNG_TESTS_SUPPORT_HPP
#define KNG_TESTS_SUPPORT_HPP

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "kng/kng.hpp"

namespace testing_support {

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("kng_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline kng::FeatureTensor random_tensor(std::size_t h, std::size_t w, std::size_t d, std::mt19937_64& gen,
                                        double scale = 1.0) {
    std::normal_distribution<float> nd(0.0f, static_cast<float>(scale));
    kng::FeatureTensor t(h, w, d);
    for (auto& v : t.data) v = nd(gen);
    return t;
}

/// Model with the given centers and covariances, no edges, thresholds
/// recomputed. Selection is the identity at the centers' dimension.
inline kng::KngModel make_model(const std::vector<kng::Vector>& centers, const std::vector<kng::Matrix>& covs,
                                double epsilon = 0.01, kng::ThresholdMode mode = kng::ThresholdMode::mean) {
    kng::KngModel m;
    const auto d = static_cast<std::size_t>(centers.front().size());
    m.config.k = static_cast<std::uint32_t>(centers.size());
    m.config.dim = static_cast<std::uint32_t>(d);
    m.config.epsilon = epsilon;
    m.config.threshold_mode = mode;
    m.selection = kng::make_selection(d, d, 0);
    for (std::size_t i = 0; i < centers.size(); ++i) {
        kng::Neuron n;
        n.center = centers[i];
        n.cov = covs.empty() ? kng::Matrix::Zero(centers[i].size(), centers[i].size()) : covs[i];
        n.count = 1;
        m.neurons.push_back(n);
    }
    kng::recompute_thresholds(m);
    return m;
}

/// Settings used for the desk-scale synthetic pipeline: one neuron per patch
/// position of the 14x14 grid, otherwise the library defaults.
inline kng::KngConfig synth_model_config(std::uint64_t seed) {
    kng::KngConfig c;
    c.k = 196;
    c.seed = seed;
    return c;
}

inline kng::KngModel init_from_manifest(const std::filesystem::path& manifest, const kng::KngConfig& cfg) {
    const auto m = kng::load_manifest(manifest);
    std::vector<kng::FeatureTensor> train;
    for (const auto& item : m.items) train.push_back(kng::read_tensor_as<kng::FeatureTensor>(item.features));
    return kng::init_model(train, cfg);
}

} // namespace testing_support

#endif // KNG_TESTS_SUPPORT_HPP
