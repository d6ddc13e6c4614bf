#ifndef SSP_LOSS_HPP
#define SSP_LOSS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "ssp/config.hpp"
#include "ssp/ops.hpp"
#include "ssp/pipeline.hpp"
#include "ssp/tensor.hpp"

namespace ssp {

// The cosine maps are treated as a two-way logit pair: p_fg = sigmoid(t * (cos_fg - cos_bg)),
// and BCE is taken on p_fg against the binary ground truth, averaged over pixels.
// Everything here runs in double straight from the float inputs; no float
// score maps are materialised, so finite differences stay meaningful.

namespace detail {

inline double softplus(double x) { return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0); }

inline void require_binary(const Mask& m, const char* what) {
    if (!m.is_binary()) {
        throw Error(ErrorCode::InvalidValue, std::string(what) + ": ground truth must be a binary mask");
    }
}

struct CosineTerm {
    double value;   // clamped cosine
    bool clamped;   // raw value fell outside [-1, 1]
    double denom;   // |p| |f| + eps
    double dot;
    double p_norm;
    double f_norm;
};

inline CosineTerm cosine_term(const float* p, std::size_t p_stride, double p_norm, const float* f, std::size_t f_stride,
                              std::size_t channels) {
    double dot = 0.0, ff = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
        const double x = f[c * f_stride];
        dot += static_cast<double>(p[c * p_stride]) * x;
        ff += x * x;
    }
    const double fn = std::sqrt(ff);
    const double denom = p_norm * fn + kCosineEpsilon;
    const double raw = dot / denom;
    return {clamp_unit(raw), raw > 1.0 || raw < -1.0, denom, dot, p_norm, fn};
}

struct MatchingTerms {
    const Prototype& fg;
    const PrototypeField& bg;
    const FeatureMap& feature;
    const Mask& gt;
    double temperature;
};

inline void check_terms(const MatchingTerms& t) {
    require_channels(t.fg.channels(), t.feature.channels(), "matching loss");
    require_channels(t.bg.channels(), t.feature.channels(), "matching loss");
    require_extent(t.bg.extent(), t.feature.extent(), "matching loss");
    require_extent(t.gt.extent(), t.feature.extent(), "matching loss");
    require_binary(t.gt, "matching loss");
    if (!(t.temperature > 0.0)) {
        throw Error(ErrorCode::InvalidValue, "matching loss: temperature must be positive");
    }
}

inline double matching_bce(const MatchingTerms& t) {
    check_terms(t);
    const std::size_t hw = t.feature.pixels();
    const std::size_t ch = t.feature.channels();
    const float* fd = t.feature.data().data();
    const float* bd = t.bg.data().data();
    const double fg_norm = norm(t.fg);
    double total = 0.0;
    for (std::size_t i = 0; i < hw; ++i) {
        const double cf = cosine_term(t.fg.values().data(), 1, fg_norm, fd + i, hw, ch).value;
        const double bn = std::sqrt(strided_sq_norm(bd + i, hw, ch));
        const double cb = cosine_term(bd + i, hw, bn, fd + i, hw, ch).value;
        const double d = t.temperature * (cf - cb);
        total += t.gt[i] != 0.0f ? softplus(-d) : softplus(d);
    }
    return total / static_cast<double>(hw);
}

/// d cos(p, f) / d f for one column, accumulated into `out` scaled by `scale`.
inline void add_cosine_grad(const CosineTerm& term, const float* p, std::size_t p_stride, const float* f,
                            std::size_t f_stride, std::size_t channels, double scale, double* out,
                            std::size_t out_stride) {
    if (term.clamped) {
        return;
    }
    const double d2 = term.denom * term.denom;
    for (std::size_t c = 0; c < channels; ++c) {
        const double fc = f[c * f_stride];
        double g = static_cast<double>(p[c * p_stride]) / term.denom;
        if (term.f_norm > 0.0) {
            g -= term.dot * term.p_norm * (fc / term.f_norm) / d2;
        }
        out[c * out_stride] += scale * g;
    }
}

} // namespace detail

/// Matching loss of the blended prototypes against the query ground truth.
inline double loss_matching(const Prototype& fg_star, const PrototypeField& bg_star, const FeatureMap& query,
                            const Mask& gq, double temperature = 1.0) {
    return detail::matching_bce({fg_star, bg_star, query, gq, temperature});
}

/// Self-matching loss of a feature map against a prototype pair built from itself.
inline double loss_self(const Prototype& fg, const PrototypeField& bg, const FeatureMap& feature, const Mask& gt,
                        double temperature = 1.0) {
    return detail::matching_bce({fg, bg, feature, gt, temperature});
}

inline double loss_self(const Prototype& fg, const Prototype& bg, const FeatureMap& feature, const Mask& gt,
                        double temperature = 1.0) {
    const PrototypeField field = PrototypeField::broadcast(bg, feature.extent());
    return detail::matching_bce({fg, field, feature, gt, temperature});
}

inline double loss_total(double lm, double lq, double ls, const SspConfig& cfg) {
    return cfg.lambda1 * lm + cfg.lambda2 * lq + cfg.lambda3 * ls;
}

/// Support self-matching loss averaged over supports: each support is matched
/// against its own foreground pooling and adaptive background field, both
/// built from its ground-truth mask. Supports without background are skipped;
/// nullopt when none remain.
inline std::optional<double> support_self_loss(std::span<const SupportSample> supports, double temperature) {
    double total = 0.0;
    std::size_t used = 0;
    for (const auto& s : supports) {
        const Mask bg = s.mask.complement();
        if (bg.empty() || s.mask.empty()) {
            continue;
        }
        const Prototype fg = masked_average_pooling(s.features, s.mask);
        const PrototypeField field = adaptive_bg_prototype(s.features, bg);
        total += loss_self(fg, field, s.features, s.mask, temperature);
        ++used;
    }
    if (used == 0) {
        return std::nullopt;
    }
    return total / static_cast<double>(used);
}

/// Analytic gradient of loss_matching with respect to the query features,
/// prototypes held constant.
inline FeatureMap loss_grad_query(const Prototype& fg_star, const PrototypeField& bg_star, const FeatureMap& query,
                                  const Mask& gq, double temperature = 1.0) {
    const detail::MatchingTerms t{fg_star, bg_star, query, gq, temperature};
    detail::check_terms(t);
    const std::size_t hw = query.pixels();
    const std::size_t ch = query.channels();
    const float* fd = query.data().data();
    const float* bd = bg_star.data().data();
    const float* pd = fg_star.values().data();
    const double fg_norm = norm(fg_star);
    std::vector<double> acc(ch * hw, 0.0);
    double* gd = acc.data();
    const double inv_n = 1.0 / static_cast<double>(hw);
    for (std::size_t i = 0; i < hw; ++i) {
        const auto cf = detail::cosine_term(pd, 1, fg_norm, fd + i, hw, ch);
        const double bn = std::sqrt(detail::strided_sq_norm(bd + i, hw, ch));
        const auto cb = detail::cosine_term(bd + i, hw, bn, fd + i, hw, ch);
        const double d = temperature * (cf.value - cb.value);
        const double g = gq[i] != 0.0f ? 1.0 : 0.0;
        const double dl_dd = (detail::sigmoid(d) - g) * inv_n;
        detail::add_cosine_grad(cf, pd, 1, fd + i, hw, ch, dl_dd * temperature, gd + i, hw);
        detail::add_cosine_grad(cb, bd + i, hw, fd + i, hw, ch, -dl_dd * temperature, gd + i, hw);
    }
    std::vector<float> out(acc.size());
    std::transform(acc.begin(), acc.end(), out.begin(), [](double v) { return static_cast<float>(v); });
    return FeatureMap(ch, query.height(), query.width(), std::move(out));
}

} // namespace ssp

#endif // SSP_LOSS_HPP
