#ifndef SSP_CONFIG_HPP
#define SSP_CONFIG_HPP

#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>

#include <json.hpp>

#include "ssp/error.hpp"

namespace ssp {

/// What to do when a thresholded self-support estimate selects no pixels.
enum class FallbackKind { support_only, topk };

struct EmptyMaskFallback {
    FallbackKind kind = FallbackKind::support_only;
    std::size_t k = 16; // only meaningful for topk

    friend bool operator==(const EmptyMaskFallback&, const EmptyMaskFallback&) = default;
};

struct SspConfig {
    double tau_fg = 0.7;
    double tau_bg = 0.6;
    // support / self-support blend
    double alpha1 = 0.5;
    double alpha2 = 0.5;
    // refinement: support / self-support / refined self-support
    bool refine = false;
    double refine_alpha1 = 0.5;
    double refine_alpha2 = 0.2;
    double refine_alpha3 = 0.3;
    double beta1 = 0.3;
    double beta2 = 0.7;
    // loss weights for matching / query self / support self
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    double lambda3 = 0.2;
    double temperature = 1.0;
    EmptyMaskFallback empty_mask_fallback{};

    friend bool operator==(const SspConfig&, const SspConfig&) = default;
};

namespace detail {

inline void config_fail(const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); }

inline void require_open_unit(double v, const char* name) {
    if (!(v > 0.0 && v < 1.0)) {
        config_fail(std::string(name) + " must lie in (0, 1)");
    }
}

inline void require_nonneg(double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
        config_fail(std::string(name) + " must be a finite non-negative number");
    }
}

inline constexpr double kWeightSumTolerance = 1e-9;

} // namespace detail

inline void validate(const SspConfig& cfg) {
    detail::require_open_unit(cfg.tau_fg, "tau_fg");
    detail::require_open_unit(cfg.tau_bg, "tau_bg");
    detail::require_nonneg(cfg.alpha1, "alpha1");
    detail::require_nonneg(cfg.alpha2, "alpha2");
    detail::require_nonneg(cfg.refine_alpha1, "refine_alpha1");
    detail::require_nonneg(cfg.refine_alpha2, "refine_alpha2");
    detail::require_nonneg(cfg.refine_alpha3, "refine_alpha3");
    detail::require_nonneg(cfg.beta1, "beta1");
    detail::require_nonneg(cfg.beta2, "beta2");
    detail::require_nonneg(cfg.lambda1, "lambda1");
    detail::require_nonneg(cfg.lambda2, "lambda2");
    detail::require_nonneg(cfg.lambda3, "lambda3");
    if (cfg.alpha1 == 0.0) {
        detail::config_fail("alpha1 must be positive: the support prototype is the only member that is always present");
    }
    if (cfg.refine_alpha1 == 0.0) {
        detail::config_fail("refine_alpha1 must be positive");
    }
    if (std::abs(cfg.beta1 + cfg.beta2 - 1.0) > detail::kWeightSumTolerance) {
        detail::config_fail("beta1 + beta2 must equal 1");
    }
    if (std::abs(cfg.refine_alpha1 + cfg.refine_alpha2 + cfg.refine_alpha3 - 1.0) > detail::kWeightSumTolerance) {
        detail::config_fail("refine_alpha1 + refine_alpha2 + refine_alpha3 must equal 1");
    }
    if (!(cfg.temperature > 0.0) || !std::isfinite(cfg.temperature)) {
        detail::config_fail("temperature must be positive");
    }
    if (cfg.empty_mask_fallback.kind == FallbackKind::topk && cfg.empty_mask_fallback.k == 0) {
        detail::config_fail("topk_k must be positive");
    }
}

inline std::string_view to_string(FallbackKind k) { return k == FallbackKind::topk ? "topk" : "support_only"; }

inline nlohmann::json to_json(const SspConfig& cfg) {
    nlohmann::json j;
    j["tau_fg"] = cfg.tau_fg;
    j["tau_bg"] = cfg.tau_bg;
    j["alpha1"] = cfg.alpha1;
    j["alpha2"] = cfg.alpha2;
    j["refine"] = cfg.refine;
    j["refine_alpha1"] = cfg.refine_alpha1;
    j["refine_alpha2"] = cfg.refine_alpha2;
    j["refine_alpha3"] = cfg.refine_alpha3;
    j["beta1"] = cfg.beta1;
    j["beta2"] = cfg.beta2;
    j["lambda1"] = cfg.lambda1;
    j["lambda2"] = cfg.lambda2;
    j["lambda3"] = cfg.lambda3;
    j["temperature"] = cfg.temperature;
    j["empty_mask_fallback"] = std::string(to_string(cfg.empty_mask_fallback.kind));
    j["topk_k"] = cfg.empty_mask_fallback.k;
    return j;
}

namespace detail {

inline double parse_double(std::string_view key, const std::string& value) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(value, &used);
    } catch (const std::exception&) {
        config_fail("value for " + std::string(key) + " is not a number: '" + value + "'");
    }
    if (used != value.size()) {
        config_fail("value for " + std::string(key) + " is not a number: '" + value + "'");
    }
    return v;
}

inline bool parse_bool(std::string_view key, const std::string& value) {
    if (value == "true" || value == "1") {
        return true;
    }
    if (value == "false" || value == "0") {
        return false;
    }
    config_fail("value for " + std::string(key) + " is not a boolean: '" + value + "'");
    return false;
}

} // namespace detail

/// Applies one key=value override. Unknown keys are rejected.
inline void apply_override(SspConfig& cfg, std::string_view key, const std::string& value) {
    struct Real {
        std::string_view name;
        double SspConfig::*field;
    };
    static constexpr Real reals[] = {
        {"tau_fg", &SspConfig::tau_fg},           {"tau_bg", &SspConfig::tau_bg},
        {"alpha1", &SspConfig::alpha1},           {"alpha2", &SspConfig::alpha2},
        {"refine_alpha1", &SspConfig::refine_alpha1}, {"refine_alpha2", &SspConfig::refine_alpha2},
        {"refine_alpha3", &SspConfig::refine_alpha3}, {"beta1", &SspConfig::beta1},
        {"beta2", &SspConfig::beta2},             {"lambda1", &SspConfig::lambda1},
        {"lambda2", &SspConfig::lambda2},         {"lambda3", &SspConfig::lambda3},
        {"temperature", &SspConfig::temperature},
    };
    for (const auto& r : reals) {
        if (r.name == key) {
            cfg.*(r.field) = detail::parse_double(key, value);
            return;
        }
    }
    if (key == "refine") {
        cfg.refine = detail::parse_bool(key, value);
    } else if (key == "empty_mask_fallback") {
        if (value == "support_only") {
            cfg.empty_mask_fallback.kind = FallbackKind::support_only;
        } else if (value == "topk") {
            cfg.empty_mask_fallback.kind = FallbackKind::topk;
        } else {
            detail::config_fail("empty_mask_fallback must be support_only or topk, got '" + value + "'");
        }
    } else if (key == "topk_k") {
        const double k = detail::parse_double(key, value);
        if (!(k >= 1.0) || k != std::floor(k)) {
            detail::config_fail("topk_k must be a positive integer");
        }
        cfg.empty_mask_fallback.k = static_cast<std::size_t>(k);
    } else {
        detail::config_fail("unknown config key '" + std::string(key) + "'");
    }
}

/// Reads a flat JSON object of config keys on top of `base`.
inline SspConfig config_from_json(const nlohmann::json& j, SspConfig base = {}) {
    if (!j.is_object()) {
        detail::config_fail("config must be a JSON object");
    }
    for (const auto& [key, value] : j.items()) {
        std::string text;
        if (value.is_string()) {
            text = value.get<std::string>();
        } else if (value.is_boolean()) {
            text = value.get<bool>() ? "true" : "false";
        } else if (value.is_number()) {
            text = value.dump();
        } else {
            detail::config_fail("config key '" + key + "' has an unsupported value type");
        }
        apply_override(base, key, text);
    }
    validate(base);
    return base;
}

} // namespace ssp

#endif // SSP_CONFIG_HPP
