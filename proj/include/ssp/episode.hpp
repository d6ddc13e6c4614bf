#ifndef SSP_EPISODE_HPP
#define SSP_EPISODE_HPP

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssp/error.hpp"
#include "ssp/ops.hpp"
#include "ssp/pipeline.hpp"
#include "ssp/sspt.hpp"
#include "ssp/tensor.hpp"

namespace ssp {

/// K labelled supports plus one query. The query ground truth is optional so
/// that unlabelled queries can still be matched; evaluation requires it.
struct Episode {
    std::vector<SupportSample> supports;
    FeatureMap query;
    std::optional<Mask> query_gt;
    std::int64_t class_id = 0;
    std::int64_t episode_id = 0;
};

inline void validate(const Episode& ep) {
    if (ep.supports.empty()) {
        throw Error(ErrorCode::InvalidValue, "episode " + std::to_string(ep.episode_id) + " has no supports");
    }
    for (std::size_t k = 0; k < ep.supports.size(); ++k) {
        const auto& s = ep.supports[k];
        detail::require_channels(s.features.channels(), ep.query.channels(), "episode support");
        detail::require_extent(s.features.extent(), s.mask.extent(), "episode support mask");
        if (!s.mask.is_binary()) {
            throw Error(ErrorCode::InvalidValue, "support masks must be binary");
        }
        if (s.mask.empty()) {
            throw Error(ErrorCode::EmptyMask, "episode " + std::to_string(ep.episode_id) + " support " +
                                                  std::to_string(k) + " has no foreground pixels");
        }
    }
    if (ep.query_gt) {
        detail::require_extent(ep.query.extent(), ep.query_gt->extent(), "episode query mask");
        if (!ep.query_gt->is_binary()) {
            throw Error(ErrorCode::InvalidValue, "query ground truth must be binary");
        }
    }
}

// ---------------------------------------------------------------------------
// Manifest
//
// {
//   "format": "ssp-episodes", "version": 1,
//   "episodes": [
//     {"episode_id": 0, "class_id": 3,
//      "supports": [{"features": "e0_s0.sspt", "mask": "e0_s0_mask.sspt"}],
//      "query": {"features": "e0_q.sspt", "mask": "e0_q_mask.sspt"}}
//   ]
// }
//
// Relative paths resolve against the manifest's directory; query.mask is optional.

inline constexpr const char* kManifestFormat = "ssp-episodes";

namespace detail {

[[noreturn]] inline void manifest_fail(const std::filesystem::path& path, const std::string& msg) {
    throw Error(ErrorCode::BadManifest, path.string() + ": " + msg);
}

inline std::string manifest_string(const nlohmann::json& j, const char* key, const std::filesystem::path& path) {
    if (!j.is_object() || !j.contains(key) || !j[key].is_string()) {
        manifest_fail(path, std::string("missing string field '") + key + "'");
    }
    return j[key].get<std::string>();
}

inline std::int64_t manifest_int(const nlohmann::json& j, const char* key, const std::filesystem::path& path) {
    if (!j.contains(key) || !j[key].is_number_integer()) {
        manifest_fail(path, std::string("missing integer field '") + key + "'");
    }
    return j[key].get<std::int64_t>();
}

} // namespace detail

inline std::vector<Episode> load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot open " + path.string());
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        detail::manifest_fail(path, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object() || j.value("format", "") != kManifestFormat) {
        detail::manifest_fail(path, "format must be \"ssp-episodes\"");
    }
    if (!j.contains("version") || j["version"] != 1) {
        detail::manifest_fail(path, "unsupported manifest version");
    }
    if (!j.contains("episodes") || !j["episodes"].is_array()) {
        detail::manifest_fail(path, "missing episodes array");
    }
    const auto base = path.parent_path();
    auto resolve = [&](const std::string& p) {
        std::filesystem::path fp(p);
        return fp.is_absolute() ? fp : base / fp;
    };

    std::vector<Episode> out;
    for (const auto& e : j["episodes"]) {
        if (!e.is_object() || !e.contains("supports") || !e["supports"].is_array() || e["supports"].empty()) {
            detail::manifest_fail(path, "each episode needs a non-empty supports array");
        }
        if (!e.contains("query")) {
            detail::manifest_fail(path, "episode without query");
        }
        std::vector<SupportSample> supports;
        for (const auto& s : e["supports"]) {
            supports.push_back({sspt::read_features(resolve(detail::manifest_string(s, "features", path))),
                                sspt::read_mask(resolve(detail::manifest_string(s, "mask", path)))});
        }
        const auto& q = e["query"];
        FeatureMap query = sspt::read_features(resolve(detail::manifest_string(q, "features", path)));
        std::optional<Mask> gt;
        if (q.contains("mask")) {
            gt = sspt::read_mask(resolve(detail::manifest_string(q, "mask", path)));
        }
        Episode ep{std::move(supports), std::move(query), std::move(gt), detail::manifest_int(e, "class_id", path),
                   detail::manifest_int(e, "episode_id", path)};
        validate(ep);
        out.push_back(std::move(ep));
    }
    return out;
}

/// Writes every tensor as SSPT next to `manifest_path` and the manifest itself.
inline void save_manifest(const std::filesystem::path& manifest_path, const std::vector<Episode>& episodes) {
    const auto dir = manifest_path.parent_path();
    if (!dir.empty()) {
        std::filesystem::create_directories(dir);
    }
    nlohmann::json list = nlohmann::json::array();
    for (const auto& ep : episodes) {
        const std::string stem = "e" + std::to_string(ep.episode_id);
        nlohmann::json supports = nlohmann::json::array();
        for (std::size_t k = 0; k < ep.supports.size(); ++k) {
            const std::string f = stem + "_s" + std::to_string(k) + ".sspt";
            const std::string m = stem + "_s" + std::to_string(k) + "_mask.sspt";
            sspt::write_file(dir / f, ep.supports[k].features);
            sspt::write_file(dir / m, ep.supports[k].mask);
            supports.push_back({{"features", f}, {"mask", m}});
        }
        nlohmann::json query{{"features", stem + "_q.sspt"}};
        sspt::write_file(dir / (stem + "_q.sspt"), ep.query);
        if (ep.query_gt) {
            query["mask"] = stem + "_q_mask.sspt";
            sspt::write_file(dir / (stem + "_q_mask.sspt"), *ep.query_gt);
        }
        list.push_back({{"episode_id", ep.episode_id},
                        {"class_id", ep.class_id},
                        {"supports", std::move(supports)},
                        {"query", std::move(query)}});
    }
    nlohmann::json j{{"format", kManifestFormat}, {"version", 1}, {"episodes", std::move(list)}};
    std::ofstream out(manifest_path);
    if (!out) {
        throw Error(ErrorCode::Io, "cannot write " + manifest_path.string());
    }
    out << j.dump(2) << '\n';
}

} // namespace ssp

#endif // SSP_EPISODE_HPP
