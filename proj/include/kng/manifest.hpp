#ifndef KNG_MANIFEST_HPP
#define KNG_MANIFEST_HPP

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "kng/errors.hpp"

namespace kng {

enum class Label { normal, anomalous };

struct ManifestItem {
    std::string id;
    std::filesystem::path features;
    std::optional<Label> label;
    std::optional<std::filesystem::path> mask;
};

/// Dataset listing. Relative paths are resolved against the manifest's
/// directory at load time.
struct Manifest {
    std::vector<ManifestItem> items;

    bool fully_labeled() const {
        for (const auto& item : items)
            if (!item.label) return false;
        return true;
    }
};

namespace detail {

inline ManifestItem parse_manifest_item(const nlohmann::json& j, const std::filesystem::path& base) {
    if (!j.is_object()) throw ValidationError("manifest item must be an object");
    ManifestItem item;
    if (!j.contains("id") || !j["id"].is_string()) throw ValidationError("manifest item missing string 'id'");
    item.id = j["id"].get<std::string>();
    if (!j.contains("features") || !j["features"].is_string())
        throw ValidationError("manifest item '" + item.id + "' missing string 'features'");
    item.features = base / j["features"].get<std::string>();
    if (auto it = j.find("label"); it != j.end() && !it->is_null()) {
        const auto s = it->is_string() ? it->get<std::string>() : std::string();
        if (s == "normal")
            item.label = Label::normal;
        else if (s == "anomalous")
            item.label = Label::anomalous;
        else
            throw ValidationError("manifest item '" + item.id + "': label must be normal|anomalous|null");
    }
    if (auto it = j.find("mask"); it != j.end() && !it->is_null()) {
        if (!it->is_string()) throw ValidationError("manifest item '" + item.id + "': mask must be a string");
        item.mask = base / it->get<std::string>();
    }
    return item;
}

} // namespace detail

inline void validate(const Manifest& m, bool check_files = true) {
    std::set<std::string> ids;
    for (const auto& item : m.items) {
        if (!ids.insert(item.id).second) throw ValidationError("manifest: duplicate id '" + item.id + "'");
        if (item.mask && !item.label)
            throw ValidationError("manifest: item '" + item.id + "' has a mask but no label");
        if (check_files) {
            if (!std::filesystem::exists(item.features))
                throw IoError("manifest: missing features file " + item.features.string());
            if (item.mask && !std::filesystem::exists(*item.mask))
                throw IoError("manifest: missing mask file " + item.mask->string());
        }
    }
}

/// Accepts a single JSON document {"items": [...]} or line-delimited JSON with
/// one item object per line.
inline Manifest parse_manifest(const std::string& text, const std::filesystem::path& base) {
    Manifest m;
    nlohmann::json doc = nlohmann::json::parse(text, nullptr, false);
    if (!doc.is_discarded() && doc.is_object() && doc.contains("items")) {
        if (!doc["items"].is_array()) throw ValidationError("manifest: 'items' must be an array");
        for (const auto& j : doc["items"]) m.items.push_back(detail::parse_manifest_item(j, base));
        return m;
    }
    std::istringstream lines(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(lines, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw FormatError("manifest: invalid JSON on line " + std::to_string(lineno));
        m.items.push_back(detail::parse_manifest_item(j, base));
    }
    return m;
}

inline Manifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    Manifest m = parse_manifest(ss.str(), path.parent_path());
    validate(m);
    return m;
}

/// Writes a single-document manifest; paths are stored relative to the
/// manifest's directory when possible.
inline void save_manifest(const Manifest& m, const std::filesystem::path& path) {
    const auto base = path.parent_path();
    auto rel = [&](const std::filesystem::path& p) {
        return base.empty() ? p.generic_string() : p.lexically_relative(base).generic_string();
    };
    nlohmann::json items = nlohmann::json::array();
    for (const auto& item : m.items) {
        nlohmann::json j;
        j["id"] = item.id;
        j["features"] = rel(item.features);
        j["label"] = item.label ? nlohmann::json(*item.label == Label::normal ? "normal" : "anomalous")
                                : nlohmann::json(nullptr);
        j["mask"] = item.mask ? nlohmann::json(rel(*item.mask)) : nlohmann::json(nullptr);
        items.push_back(std::move(j));
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << nlohmann::json{{"items", items}}.dump(1) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

} // namespace kng

#endif // KNG_MANIFEST_HPP
