#ifndef SSP_PIPELINE_HPP
#define SSP_PIPELINE_HPP

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ssp/config.hpp"
#include "ssp/error.hpp"
#include "ssp/ops.hpp"
#include "ssp/tensor.hpp"

namespace ssp {

/// One labelled support image at feature resolution.
struct SupportSample {
    FeatureMap features;
    Mask mask;
};

/// Raw cosine maps (the distance map D) behind one prediction stage.
struct StageScores {
    ScoreMap fg;
    ScoreMap bg;
};

struct StageOutput {
    Prediction prediction;
    StageScores scores;
};

struct PrototypeSet {
    Prototype fg_support;
    Prototype bg_support;
    std::optional<Prototype> fg_self;
    std::optional<PrototypeField> bg_self;
    std::optional<Prototype> fg_refined;
    std::optional<PrototypeField> bg_refined;
};

enum class FallbackUsed { none, support_only, topk };

inline std::string_view to_string(FallbackUsed f) {
    switch (f) {
    case FallbackUsed::none: return "none";
    case FallbackUsed::support_only: return "support_only";
    case FallbackUsed::topk: return "topk";
    }
    return "none";
}

/// Pixel counts picked by the thresholds and what happened when they were empty.
struct SelectionDiagnostics {
    std::size_t fg_selected = 0;
    std::size_t bg_selected = 0;
    FallbackUsed fg_fallback = FallbackUsed::none;
    FallbackUsed bg_fallback = FallbackUsed::none;
};

struct MatchResult {
    Prediction m1;
    std::optional<Prediction> m2;
    std::optional<Prediction> m3;
    Prediction m_final;
    StageScores d1;
    std::optional<StageScores> d2;
    std::optional<StageScores> d3;
    PrototypeSet prototypes;
    std::optional<SelectionDiagnostics> self_support;
    std::optional<SelectionDiagnostics> refinement;
};

// ---------------------------------------------------------------------------
// Support prototypes and baseline matching

struct SupportPrototypes {
    Prototype fg;
    Prototype bg;
};

namespace detail {

inline Prototype average_prototypes(const std::vector<Prototype>& ps, PrototypeRole role) {
    if (ps.size() == 1) {
        return Prototype(std::vector<float>(ps.front().values().begin(), ps.front().values().end()), role);
    }
    const std::size_t c = ps.front().channels();
    std::vector<double> acc(c, 0.0);
    for (const auto& p : ps) {
        require_channels(p.channels(), c, "average_prototypes");
        for (std::size_t i = 0; i < c; ++i) {
            acc[i] += p[i];
        }
    }
    std::vector<float> out(c);
    for (std::size_t i = 0; i < c; ++i) {
        out[i] = static_cast<float>(acc[i] / static_cast<double>(ps.size()));
    }
    return Prototype(std::move(out), role);
}

} // namespace detail

/// K-shot support prototypes: per-support masked pooling, then a uniform mean.
///
/// A support whose mask covers the whole frame contributes no background; if
/// every support does, the background prototype cannot be formed and
/// EmptyMask is raised.
inline SupportPrototypes support_prototypes(std::span<const SupportSample> supports) {
    if (supports.empty()) {
        throw Error(ErrorCode::InvalidValue, "at least one support sample is required");
    }
    std::vector<Prototype> fgs, bgs;
    for (std::size_t k = 0; k < supports.size(); ++k) {
        const auto& s = supports[k];
        detail::require_extent(s.features.extent(), s.mask.extent(), "support sample");
        if (s.mask.empty()) {
            throw Error(ErrorCode::EmptyMask, "support " + std::to_string(k) + " has no foreground pixels");
        }
        fgs.push_back(masked_average_pooling(s.features, s.mask, PrototypeRole::foreground));
        const Mask bg = s.mask.complement();
        if (!bg.empty()) {
            bgs.push_back(masked_average_pooling(s.features, bg, PrototypeRole::background));
        }
    }
    if (bgs.empty()) {
        throw Error(ErrorCode::EmptyMask, "no support has background pixels");
    }
    return {detail::average_prototypes(fgs, PrototypeRole::foreground),
            detail::average_prototypes(bgs, PrototypeRole::background)};
}

inline StageOutput match_prototypes(const Prototype& fg, const Prototype& bg, const FeatureMap& query,
                                    double temperature) {
    StageScores d{cosine_map(fg, query), cosine_map(bg, query)};
    Prediction m = pairwise_softmax(d.fg, d.bg, temperature);
    return {std::move(m), std::move(d)};
}

struct BaselineResult {
    StageOutput m1;
    SupportPrototypes support;
};

/// Support-prototype matching: the initial prediction M1.
inline BaselineResult baseline_match(std::span<const SupportSample> supports, const FeatureMap& query,
                                     const SspConfig& cfg) {
    for (const auto& s : supports) {
        detail::require_channels(s.features.channels(), query.channels(), "baseline_match");
    }
    SupportPrototypes sp = support_prototypes(supports);
    StageOutput m1 = match_prototypes(sp.fg, sp.bg, query, cfg.temperature);
    return {std::move(m1), std::move(sp)};
}

// ---------------------------------------------------------------------------
// Self-support prototypes

struct Selection {
    Mask fg;
    Mask bg;
};

/// fg = 1(p > tau_fg), bg = 1(1 - p > tau_bg).
inline Selection threshold_select(const Mask& fg_prob, const SspConfig& cfg) {
    Mask fg = Mask::binary(fg_prob.extent());
    Mask bg = Mask::binary(fg_prob.extent());
    for (std::size_t i = 0; i < fg_prob.pixels(); ++i) {
        const double p = fg_prob[i];
        if (p > cfg.tau_fg) {
            fg.set(i, 1.0f);
        }
        if (1.0 - p > cfg.tau_bg) {
            bg.set(i, 1.0f);
        }
    }
    return {std::move(fg), std::move(bg)};
}

/// Binary mask of the k pixels with the highest `score` (ties: lower raster index first).
inline Mask top_k_mask(std::span<const double> score, Extent e, std::size_t k) {
    std::vector<std::size_t> order(score.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    k = std::min(k, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) { return score[a] > score[b] || (score[a] == score[b] && a < b); });
    Mask out = Mask::binary(e);
    for (std::size_t i = 0; i < k; ++i) {
        out.set(order[i], 1.0f);
    }
    return out;
}

template <class T>
struct SelfSupport {
    std::optional<T> prototype;
    FallbackUsed fallback = FallbackUsed::none;
};

namespace detail {

/// The mask actually pooled: the estimate itself, or the fallback substitute.
inline std::pair<std::optional<Mask>, FallbackUsed> effective_selection(const Mask& estimate,
                                                                        std::span<const double> score,
                                                                        const SspConfig& cfg) {
    if (!estimate.empty()) {
        return {estimate, FallbackUsed::none};
    }
    if (cfg.empty_mask_fallback.kind == FallbackKind::topk) {
        return {top_k_mask(score, estimate.extent(), cfg.empty_mask_fallback.k), FallbackUsed::topk};
    }
    return {std::nullopt, FallbackUsed::support_only};
}

inline std::vector<double> fg_scores(const Mask& fg_prob) {
    return std::vector<double>(fg_prob.data().begin(), fg_prob.data().end());
}

inline std::vector<double> bg_scores(const Mask& fg_prob) {
    std::vector<double> s(fg_prob.pixels());
    for (std::size_t i = 0; i < s.size(); ++i) {
        s[i] = 1.0 - static_cast<double>(fg_prob[i]);
    }
    return s;
}

} // namespace detail

/// Self-support foreground prototype pooled from the query under its own estimate.
inline SelfSupport<Prototype> self_support_fg(const FeatureMap& query, const Mask& fg_estimate, const Mask& fg_prob,
                                              const SspConfig& cfg) {
    detail::require_extent(query.extent(), fg_estimate.extent(), "self_support_fg");
    detail::require_extent(query.extent(), fg_prob.extent(), "self_support_fg");
    const auto scores = detail::fg_scores(fg_prob);
    auto [mask, fallback] = detail::effective_selection(fg_estimate, scores, cfg);
    if (!mask) {
        return {std::nullopt, fallback};
    }
    return {masked_average_pooling(query, *mask, PrototypeRole::foreground), fallback};
}

/// Adaptive background prototype field.
///
/// Gathers the selected background columns F_b (C x M), forms the affinity
/// A = F_b^T F_q (M x HW), normalises each column of A with a softmax and
/// aggregates P = F_b softmax(A), one C-vector per query pixel.
inline PrototypeField adaptive_bg_prototype(const FeatureMap& query, const Mask& bg_estimate) {
    detail::require_extent(query.extent(), bg_estimate.extent(), "adaptive_bg_prototype");
    if (bg_estimate.empty()) {
        throw Error(ErrorCode::EmptyMask, "adaptive_bg_prototype: background estimate is empty");
    }
    const Matrix fb = gather_columns(query, bg_estimate);
    Matrix affinity = matmul(fb.transposed(), as_matrix(query));
    column_softmax(affinity);
    const Matrix field = matmul(fb, affinity);
    std::vector<float> data(field.data().size());
    std::transform(field.data().begin(), field.data().end(), data.begin(),
                   [](double v) { return static_cast<float>(v); });
    return PrototypeField(query.channels(), query.height(), query.width(), std::move(data));
}

enum class BackgroundMode { adaptive, global };

/// Self-support background: the adaptive field, or (global mode) one pooled
/// prototype broadcast over the frame.
inline SelfSupport<PrototypeField> self_support_bg(const FeatureMap& query, const Mask& bg_estimate,
                                                   const Mask& fg_prob, const SspConfig& cfg,
                                                   BackgroundMode mode = BackgroundMode::adaptive) {
    detail::require_extent(query.extent(), fg_prob.extent(), "self_support_bg");
    const auto scores = detail::bg_scores(fg_prob);
    auto [mask, fallback] = detail::effective_selection(bg_estimate, scores, cfg);
    if (!mask) {
        return {std::nullopt, fallback};
    }
    if (mode == BackgroundMode::global) {
        return {PrototypeField::broadcast(masked_average_pooling(query, *mask, PrototypeRole::background),
                                          query.extent()),
                fallback};
    }
    return {adaptive_bg_prototype(query, *mask), fallback};
}

// ---------------------------------------------------------------------------
// Blending

struct BlendedPrototypes {
    Prototype fg;
    PrototypeField bg;
};

namespace detail {

/// Weights of the present members, rescaled so they keep the total weight of
/// all members. Zero-weight and absent members drop out.
inline std::vector<double> renormalized(std::span<const double> weights, std::span<const bool> present) {
    double total = 0.0, kept = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        total += weights[i];
        if (present[i]) {
            kept += weights[i];
        }
    }
    std::vector<double> out(weights.size(), 0.0);
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (present[i] && weights[i] > 0.0) {
            out[i] = weights[i] * total / kept;
        }
    }
    return out;
}

inline std::size_t active_count(std::span<const double> w) {
    return static_cast<std::size_t>(std::count_if(w.begin(), w.end(), [](double v) { return v > 0.0; }));
}

/// w[0] * support + sum_k w[k] * members[k-1]; member k is used only when w[k] > 0.
inline Prototype mix_fg(const Prototype& support, std::span<const Prototype* const> members,
                        std::span<const double> w) {
    if (active_count(w) == 1 && w[0] > 0.0) {
        return support;
    }
    const std::size_t c = support.channels();
    std::vector<double> acc(c, 0.0);
    for (std::size_t i = 0; i < c; ++i) {
        acc[i] = w[0] * support[i];
    }
    for (std::size_t k = 0; k < members.size(); ++k) {
        if (w[k + 1] == 0.0) {
            continue;
        }
        require_channels(members[k]->channels(), c, "blend_prototypes");
        for (std::size_t i = 0; i < c; ++i) {
            acc[i] += w[k + 1] * (*members[k])[i];
        }
    }
    std::vector<float> out(c);
    std::transform(acc.begin(), acc.end(), out.begin(), [](double v) { return static_cast<float>(v); });
    return Prototype(std::move(out), PrototypeRole::foreground);
}

inline PrototypeField mix_bg(const Prototype& support, std::span<const PrototypeField* const> members,
                             std::span<const double> w, Extent e) {
    if (active_count(w) == 1 && w[0] > 0.0) {
        return PrototypeField::broadcast(support, e);
    }
    const std::size_t c = support.channels();
    const std::size_t hw = e.pixels();
    std::vector<double> acc(c * hw);
    for (std::size_t ch = 0; ch < c; ++ch) {
        std::fill_n(acc.begin() + static_cast<std::ptrdiff_t>(ch * hw), hw, w[0] * support[ch]);
    }
    for (std::size_t k = 0; k < members.size(); ++k) {
        if (w[k + 1] == 0.0) {
            continue;
        }
        const PrototypeField& m = *members[k];
        require_channels(m.channels(), c, "blend_prototypes");
        require_extent(m.extent(), e, "blend_prototypes");
        const auto md = m.data();
        for (std::size_t i = 0; i < acc.size(); ++i) {
            acc[i] += w[k + 1] * md[i];
        }
    }
    std::vector<float> out(acc.size());
    std::transform(acc.begin(), acc.end(), out.begin(), [](double v) { return static_cast<float>(v); });
    return PrototypeField(c, e.height, e.width, std::move(out));
}

} // namespace detail

/// P* = alpha1 * P_s + alpha2 * P_q; the support background vector is
/// broadcast over the self-support background field. Absent self-support
/// members hand their weight to the ones that are present.
inline BlendedPrototypes blend_prototypes(const PrototypeSet& ps, const SspConfig& cfg, Extent e) {
    const double w[] = {cfg.alpha1, cfg.alpha2};
    const bool fg_present[] = {true, ps.fg_self.has_value()};
    const bool bg_present[] = {true, ps.bg_self.has_value()};
    const auto wf = detail::renormalized(w, fg_present);
    const auto wb = detail::renormalized(w, bg_present);
    const Prototype* fg_members[] = {ps.fg_self ? &*ps.fg_self : nullptr};
    const PrototypeField* bg_members[] = {ps.bg_self ? &*ps.bg_self : nullptr};
    return {detail::mix_fg(ps.fg_support, fg_members, wf), detail::mix_bg(ps.bg_support, bg_members, wb, e)};
}

/// Matching of the blended prototypes against the query (M2).
inline StageOutput final_match(const FeatureMap& query, const Prototype& fg_star, const PrototypeField& bg_star,
                               const SspConfig& cfg) {
    StageScores d{cosine_map(fg_star, query), cosine_field_map(bg_star, query)};
    Prediction m = pairwise_softmax(d.fg, d.bg, cfg.temperature);
    return {std::move(m), std::move(d)};
}

// ---------------------------------------------------------------------------
// Refinement

/// beta1 * a + beta2 * b channelwise, computed in double.
inline Prediction combine_predictions(const Prediction& a, const Prediction& b, double beta1, double beta2) {
    auto mix = [&](const Mask& x, const Mask& y) {
        std::vector<float> out(x.pixels());
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double v = beta1 * static_cast<double>(x[i]) + beta2 * static_cast<double>(y[i]);
            out[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
        return Mask(MaskKind::probability, x.height(), x.width(), std::move(out));
    };
    return {mix(a.fg, b.fg), mix(a.bg, b.bg)};
}

struct RefineResult {
    StageOutput m3;
    Prediction m_final;
    std::optional<Prototype> fg_refined;
    std::optional<PrototypeField> bg_refined;
    SelectionDiagnostics diagnostics;
};

/// Second self-support pass driven by M2; M_final = beta1 * M2 + beta2 * M3.
inline RefineResult refine(const FeatureMap& query, const Prediction& m2, const PrototypeSet& ps,
                           const SspConfig& cfg, BackgroundMode mode = BackgroundMode::adaptive) {
    const Selection sel = threshold_select(m2.fg, cfg);
    auto fg_r = self_support_fg(query, sel.fg, m2.fg, cfg);
    auto bg_r = self_support_bg(query, sel.bg, m2.fg, cfg, mode);

    const double w[] = {cfg.refine_alpha1, cfg.refine_alpha2, cfg.refine_alpha3};
    const bool fg_present[] = {true, ps.fg_self.has_value(), fg_r.prototype.has_value()};
    const bool bg_present[] = {true, ps.bg_self.has_value(), bg_r.prototype.has_value()};
    const auto wf = detail::renormalized(w, fg_present);
    const auto wb = detail::renormalized(w, bg_present);
    const Prototype* fg_members[] = {ps.fg_self ? &*ps.fg_self : nullptr,
                                     fg_r.prototype ? &*fg_r.prototype : nullptr};
    const PrototypeField* bg_members[] = {ps.bg_self ? &*ps.bg_self : nullptr,
                                          bg_r.prototype ? &*bg_r.prototype : nullptr};
    const Prototype fg_star = detail::mix_fg(ps.fg_support, fg_members, wf);
    const PrototypeField bg_star = detail::mix_bg(ps.bg_support, bg_members, wb, query.extent());

    StageOutput m3 = final_match(query, fg_star, bg_star, cfg);
    Prediction m_final = combine_predictions(m2, m3.prediction, cfg.beta1, cfg.beta2);
    SelectionDiagnostics diag{sel.fg.count_nonzero(), sel.bg.count_nonzero(), fg_r.fallback, bg_r.fallback};
    return {std::move(m3), std::move(m_final), std::move(fg_r.prototype), std::move(bg_r.prototype), diag};
}

// ---------------------------------------------------------------------------
// Full pipeline

struct PipelineOptions {
    bool self_support = true;
    BackgroundMode background = BackgroundMode::adaptive;
};

/// M1 -> self-support prototypes -> blend -> M2 (-> refinement when enabled).
/// With self_support off the result is the baseline: m_final == m1.
inline MatchResult run_pipeline(std::span<const SupportSample> supports, const FeatureMap& query,
                                const SspConfig& cfg, PipelineOptions opts = {}) {
    validate(cfg);
    BaselineResult base = baseline_match(supports, query, cfg);
    PrototypeSet ps{base.support.fg, base.support.bg, std::nullopt, std::nullopt, std::nullopt, std::nullopt};

    if (!opts.self_support) {
        Prediction m_final = base.m1.prediction;
        return MatchResult{std::move(base.m1.prediction), std::nullopt,   std::nullopt,
                           std::move(m_final),            std::move(base.m1.scores), std::nullopt,
                           std::nullopt,                  std::move(ps), std::nullopt,
                           std::nullopt};
    }

    const Mask& m1_fg = base.m1.prediction.fg;
    const Selection sel = threshold_select(m1_fg, cfg);
    auto fg_self = self_support_fg(query, sel.fg, m1_fg, cfg);
    auto bg_self = self_support_bg(query, sel.bg, m1_fg, cfg, opts.background);
    ps.fg_self = std::move(fg_self.prototype);
    ps.bg_self = std::move(bg_self.prototype);
    SelectionDiagnostics diag{sel.fg.count_nonzero(), sel.bg.count_nonzero(), fg_self.fallback, bg_self.fallback};

    const BlendedPrototypes star = blend_prototypes(ps, cfg, query.extent());
    StageOutput m2 = final_match(query, star.fg, star.bg, cfg);

    MatchResult out{std::move(base.m1.prediction), std::nullopt, std::nullopt, m2.prediction,
                    std::move(base.m1.scores),     std::nullopt, std::nullopt, std::move(ps),
                    diag,                          std::nullopt};
    if (cfg.refine) {
        RefineResult r = refine(query, m2.prediction, out.prototypes, cfg, opts.background);
        out.prototypes.fg_refined = std::move(r.fg_refined);
        out.prototypes.bg_refined = std::move(r.bg_refined);
        out.m3 = std::move(r.m3.prediction);
        out.d3 = std::move(r.m3.scores);
        out.m_final = std::move(r.m_final);
        out.refinement = r.diagnostics;
    }
    out.m2 = std::move(m2.prediction);
    out.d2 = std::move(m2.scores);
    return out;
}

} // namespace ssp

#endif // SSP_PIPELINE_HPP
