#ifndef SSP_EVALUATE_HPP
#define SSP_EVALUATE_HPP

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "ssp/config.hpp"
#include "ssp/episode.hpp"
#include "ssp/loss.hpp"
#include "ssp/metrics.hpp"
#include "ssp/pipeline.hpp"

namespace ssp {

/// Runs fn(0..n-1) on up to `jobs` threads. Results must be written by index;
/// if several calls throw, the exception of the lowest index is rethrown so
/// the failure seen does not depend on scheduling.
inline void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
    jobs = std::max<std::size_t>(1, std::min(jobs, n));
    std::vector<std::exception_ptr> errors(n);
    if (jobs == 1) {
        for (std::size_t i = 0; i < n; ++i) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
                break;
            }
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < jobs; ++t) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        }
        for (auto& th : pool) {
            th.join();
        }
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

inline std::size_t default_jobs() { return std::max(1u, std::thread::hardware_concurrency()); }

enum class Ablation { full, no_ssm, no_ssl_metrics, no_asbp };

inline std::string_view to_string(Ablation a) {
    switch (a) {
    case Ablation::full: return "full";
    case Ablation::no_ssm: return "no_ssm";
    case Ablation::no_ssl_metrics: return "no_ssl_metrics";
    case Ablation::no_asbp: return "no_asbp";
    }
    return "full";
}

inline Ablation parse_ablation(std::string_view s) {
    if (s == "full") return Ablation::full;
    if (s == "no_ssm") return Ablation::no_ssm;
    if (s == "no_ssl_metrics") return Ablation::no_ssl_metrics;
    if (s == "no_asbp") return Ablation::no_asbp;
    throw Error(ErrorCode::InvalidConfig, "unknown ablation '" + std::string(s) + "'");
}

inline PipelineOptions pipeline_options(Ablation a) {
    switch (a) {
    case Ablation::no_ssm: return {false, BackgroundMode::adaptive};
    case Ablation::no_asbp: return {true, BackgroundMode::global};
    default: return {true, BackgroundMode::adaptive};
    }
}

struct LossValues {
    double matching = 0.0;
    double query_self = 0.0;
    std::optional<double> support_self;
    double total = 0.0;
};

struct EpisodeOutcome {
    std::int64_t episode_id = 0;
    std::int64_t class_id = 0;
    PixelMetrics m1;
    std::optional<PixelMetrics> m2;
    PixelMetrics m_final;
    std::optional<SelectionDiagnostics> self_support;
    std::optional<SelectionDiagnostics> refinement;
    std::optional<LossValues> losses;
};

struct StageSummary {
    double miou = 0.0;
    double mae_all = 0.0;
    double mae_tp = 0.0;
};

struct EpisodeBatchReport {
    Ablation ablation = Ablation::full;
    SspConfig config;
    std::uint64_t seed = 0;
    std::vector<EpisodeOutcome> episodes; // sorted by episode_id
    StageSummary m1;
    std::optional<StageSummary> m2;
    StageSummary m_final;
    std::optional<LossValues> mean_losses;

    double miou() const { return m_final.miou; }
};

/// Inference-time losses of one match: matching loss of the blended prototypes,
/// query self-loss of the self-support prototypes (support members stand in
/// for absent ones), and the support self-loss.
inline LossValues episode_losses(const Episode& ep, const MatchResult& r, const SspConfig& cfg) {
    const Mask& gt = *ep.query_gt;
    const BlendedPrototypes star = blend_prototypes(r.prototypes, cfg, ep.query.extent());
    LossValues l;
    l.matching = loss_matching(star.fg, star.bg, ep.query, gt, cfg.temperature);
    const Prototype& fg_q = r.prototypes.fg_self ? *r.prototypes.fg_self : r.prototypes.fg_support;
    const PrototypeField bg_q = r.prototypes.bg_self ? *r.prototypes.bg_self
                                                     : PrototypeField::broadcast(r.prototypes.bg_support,
                                                                                 ep.query.extent());
    l.query_self = loss_self(fg_q, bg_q, ep.query, gt, cfg.temperature);
    l.support_self = support_self_loss(ep.supports, cfg.temperature);
    l.total = loss_total(l.matching, l.query_self, l.support_self.value_or(0.0), cfg);
    return l;
}

inline EpisodeOutcome evaluate_episode(const Episode& ep, const SspConfig& cfg, Ablation ablation) {
    if (!ep.query_gt) {
        throw Error(ErrorCode::InvalidValue, "episode " + std::to_string(ep.episode_id) + " has no query ground truth");
    }
    validate(ep);
    const MatchResult r = run_pipeline(ep.supports, ep.query, cfg, pipeline_options(ablation));
    EpisodeOutcome o;
    o.episode_id = ep.episode_id;
    o.class_id = ep.class_id;
    o.m1 = pixel_metrics(r.m1.fg, *ep.query_gt);
    if (r.m2) {
        o.m2 = pixel_metrics(r.m2->fg, *ep.query_gt);
    }
    o.m_final = pixel_metrics(r.m_final.fg, *ep.query_gt);
    o.self_support = r.self_support;
    o.refinement = r.refinement;
    if (ablation == Ablation::full) {
        o.losses = episode_losses(ep, r, cfg);
    }
    return o;
}

namespace detail {

inline StageSummary summarize(const std::vector<EpisodeOutcome>& eps, const PixelMetrics& (*get)(const EpisodeOutcome&)) {
    StageSummary s;
    double tp_sum = 0.0;
    std::size_t tp_n = 0;
    for (const auto& e : eps) {
        const PixelMetrics& m = get(e);
        s.miou += m.iou;
        s.mae_all += m.mae_all;
        if (m.tp_pixels > 0) {
            tp_sum += m.mae_tp;
            ++tp_n;
        }
    }
    if (!eps.empty()) {
        s.miou /= static_cast<double>(eps.size());
        s.mae_all /= static_cast<double>(eps.size());
    }
    s.mae_tp = tp_n == 0 ? 0.0 : tp_sum / static_cast<double>(tp_n);
    return s;
}

} // namespace detail

/// Runs the pipeline on every episode under one ablation and aggregates
/// metrics. Output does not depend on `jobs`.
inline EpisodeBatchReport evaluate(std::span<const Episode> episodes, const SspConfig& cfg, Ablation ablation,
                                   std::uint64_t seed = 0, std::size_t jobs = 1) {
    validate(cfg);
    EpisodeBatchReport rep;
    rep.ablation = ablation;
    rep.config = cfg;
    rep.seed = seed;
    rep.episodes.resize(episodes.size());
    parallel_for(episodes.size(), jobs,
                 [&](std::size_t i) { rep.episodes[i] = evaluate_episode(episodes[i], cfg, ablation); });
    std::stable_sort(rep.episodes.begin(), rep.episodes.end(),
                     [](const EpisodeOutcome& a, const EpisodeOutcome& b) { return a.episode_id < b.episode_id; });

    rep.m1 = detail::summarize(rep.episodes, [](const EpisodeOutcome& e) -> const PixelMetrics& { return e.m1; });
    rep.m_final =
        detail::summarize(rep.episodes, [](const EpisodeOutcome& e) -> const PixelMetrics& { return e.m_final; });
    const bool all_m2 = !rep.episodes.empty() &&
                        std::all_of(rep.episodes.begin(), rep.episodes.end(), [](const auto& e) { return e.m2.has_value(); });
    if (all_m2) {
        rep.m2 = detail::summarize(rep.episodes, [](const EpisodeOutcome& e) -> const PixelMetrics& { return *e.m2; });
    }
    if (ablation == Ablation::full && !rep.episodes.empty()) {
        LossValues mean;
        double ss = 0.0;
        std::size_t ss_n = 0;
        for (const auto& e : rep.episodes) {
            mean.matching += e.losses->matching;
            mean.query_self += e.losses->query_self;
            mean.total += e.losses->total;
            if (e.losses->support_self) {
                ss += *e.losses->support_self;
                ++ss_n;
            }
        }
        const double n = static_cast<double>(rep.episodes.size());
        mean.matching /= n;
        mean.query_self /= n;
        mean.total /= n;
        if (ss_n > 0) {
            mean.support_self = ss / static_cast<double>(ss_n);
        }
        rep.mean_losses = mean;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Serialisation

inline nlohmann::json to_json(const PixelMetrics& m) {
    return {{"iou", m.iou}, {"mae_all", m.mae_all}, {"mae_tp", m.mae_tp}, {"tp_pixels", m.tp_pixels}};
}

inline nlohmann::json to_json(const SelectionDiagnostics& d) {
    return {{"fg_selected", d.fg_selected},
            {"bg_selected", d.bg_selected},
            {"fg_fallback", std::string(to_string(d.fg_fallback))},
            {"bg_fallback", std::string(to_string(d.bg_fallback))}};
}

inline nlohmann::json to_json(const StageSummary& s) {
    return {{"miou", s.miou}, {"mae_all", s.mae_all}, {"mae_tp", s.mae_tp}};
}

inline nlohmann::json to_json(const LossValues& l) {
    nlohmann::json j{{"matching", l.matching}, {"query_self", l.query_self}, {"total", l.total}};
    j["support_self"] = l.support_self ? nlohmann::json(*l.support_self) : nlohmann::json(nullptr);
    return j;
}

template <class T>
nlohmann::json optional_json(const std::optional<T>& v) {
    return v ? to_json(*v) : nlohmann::json(nullptr);
}

inline nlohmann::json to_json(const EpisodeBatchReport& r) {
    nlohmann::json eps = nlohmann::json::array();
    for (const auto& e : r.episodes) {
        eps.push_back({{"episode_id", e.episode_id},
                       {"class_id", e.class_id},
                       {"m1", to_json(e.m1)},
                       {"m2", optional_json(e.m2)},
                       {"m_final", to_json(e.m_final)},
                       {"self_support", optional_json(e.self_support)},
                       {"refinement", optional_json(e.refinement)},
                       {"losses", optional_json(e.losses)}});
    }
    return {{"ablation", std::string(to_string(r.ablation))},
            {"config", to_json(r.config)},
            {"seed", r.seed},
            {"episodes", std::move(eps)},
            {"summary",
             {{"episode_count", r.episodes.size()},
              {"miou", r.m_final.miou},
              {"mae_all", r.m_final.mae_all},
              {"mae_tp", r.m_final.mae_tp},
              {"stages", {{"m1", to_json(r.m1)}, {"m2", optional_json(r.m2)}, {"m_final", to_json(r.m_final)}}},
              {"losses", optional_json(r.mean_losses)}}}};
}

/// One row per episode; MAE columns in [0, 1].
inline std::string to_csv(const EpisodeBatchReport& r) {
    std::ostringstream out;
    out.precision(17);
    out << "episode_id,class_id,iou_m1,iou_m2,iou_final,mae_all,mae_tp,tp_pixels\n";
    for (const auto& e : r.episodes) {
        out << e.episode_id << ',' << e.class_id << ',' << e.m1.iou << ',';
        if (e.m2) {
            out << e.m2->iou;
        }
        out << ',' << e.m_final.iou << ',' << e.m_final.mae_all << ',' << e.m_final.mae_tp << ','
            << e.m_final.tp_pixels << '\n';
    }
    return out.str();
}

} // namespace ssp

#endif // SSP_EVALUATE_HPP
