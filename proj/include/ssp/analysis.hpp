#ifndef SSP_ANALYSIS_HPP
#define SSP_ANALYSIS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ssp/episode.hpp"
#include "ssp/error.hpp"
#include "ssp/metrics.hpp"
#include "ssp/ops.hpp"
#include "ssp/synthetic.hpp"
#include "ssp/tensor.hpp"

namespace ssp {

// ---------------------------------------------------------------------------
// Cross / intra object similarity

inline constexpr std::size_t kPairsPerCategory = 2500; // four categories: <= 10^4 pairs per episode

struct SimilaritySample {
    std::optional<double> fg_cross;
    std::optional<double> fg_intra;
    std::optional<double> bg_cross;
    std::optional<double> bg_intra;
};

struct SimilarityStats {
    double fg_cross = 0.0;
    double fg_intra = 0.0;
    double bg_cross = 0.0;
    double bg_intra = 0.0;
    std::vector<SimilaritySample> per_episode;
};

namespace detail {

inline double column_cosine(const FeatureMap& a, std::size_t i, const FeatureMap& b, std::size_t j) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t c = 0; c < a.channels(); ++c) {
        const double x = a.at_pixel(c, i), y = b.at_pixel(c, j);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    return clamp_unit(dot / (std::sqrt(na) * std::sqrt(nb) + kCosineEpsilon));
}

inline std::vector<std::size_t> pixels_where(const Mask& m, bool value) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < m.pixels(); ++i) {
        if ((m[i] != 0.0f) == value) {
            out.push_back(i);
        }
    }
    return out;
}

/// Mean cosine over pairs (a[i], b[j]); all pairs when they fit in the budget,
/// otherwise `budget` uniformly drawn pairs. With `distinct`, a and b index the
/// same map and i == j pairs are excluded.
inline std::optional<double> mean_pair_cosine(const FeatureMap& fa, const std::vector<std::size_t>& a,
                                              const FeatureMap& fb, const std::vector<std::size_t>& b, bool distinct,
                                              std::size_t budget, std::mt19937_64& rng) {
    if (a.empty() || b.empty() || (distinct && a.size() < 2)) {
        return std::nullopt;
    }
    const std::uint64_t total = static_cast<std::uint64_t>(a.size()) * b.size() - (distinct ? a.size() : 0);
    double sum = 0.0;
    std::size_t n = 0;
    if (total <= budget) {
        for (std::size_t i = 0; i < a.size(); ++i) {
            for (std::size_t j = 0; j < b.size(); ++j) {
                if (distinct && i == j) {
                    continue;
                }
                sum += column_cosine(fa, a[i], fb, b[j]);
                ++n;
            }
        }
        return sum / static_cast<double>(n);
    }
    std::uniform_int_distribution<std::size_t> pa(0, a.size() - 1), pb(0, b.size() - 1);
    while (n < budget) {
        const std::size_t i = pa(rng), j = pb(rng);
        if (distinct && i == j) {
            continue;
        }
        sum += column_cosine(fa, a[i], fb, b[j]);
        ++n;
    }
    return sum / static_cast<double>(n);
}

inline double mean_of(const std::vector<SimilaritySample>& s, std::optional<double> SimilaritySample::*field) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& x : s) {
        if (x.*field) {
            sum += *(x.*field);
            ++n;
        }
    }
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

} // namespace detail

/// Mean cosine similarity of object and background pixels, across images
/// (first support vs query) and within the query image.
inline SimilarityStats similarity_stats(std::span<const Episode> episodes, std::uint64_t seed,
                                        std::size_t pairs_per_category = kPairsPerCategory) {
    SimilarityStats out;
    for (const auto& ep : episodes) {
        if (!ep.query_gt) {
            throw Error(ErrorCode::InvalidValue, "similarity_stats: episode " + std::to_string(ep.episode_id) +
                                                     " has no query ground truth");
        }
        std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(ep.episode_id)));
        const auto& s = ep.supports.front();
        const auto s_fg = detail::pixels_where(s.mask, true), s_bg = detail::pixels_where(s.mask, false);
        const auto q_fg = detail::pixels_where(*ep.query_gt, true), q_bg = detail::pixels_where(*ep.query_gt, false);
        SimilaritySample sample;
        sample.fg_cross = detail::mean_pair_cosine(s.features, s_fg, ep.query, q_fg, false, pairs_per_category, rng);
        sample.fg_intra = detail::mean_pair_cosine(ep.query, q_fg, ep.query, q_fg, true, pairs_per_category, rng);
        sample.bg_cross = detail::mean_pair_cosine(s.features, s_bg, ep.query, q_bg, false, pairs_per_category, rng);
        sample.bg_intra = detail::mean_pair_cosine(ep.query, q_bg, ep.query, q_bg, true, pairs_per_category, rng);
        out.per_episode.push_back(sample);
    }
    out.fg_cross = detail::mean_of(out.per_episode, &SimilaritySample::fg_cross);
    out.fg_intra = detail::mean_of(out.per_episode, &SimilaritySample::fg_intra);
    out.bg_cross = detail::mean_of(out.per_episode, &SimilaritySample::bg_cross);
    out.bg_intra = detail::mean_of(out.per_episode, &SimilaritySample::bg_intra);
    return out;
}

// ---------------------------------------------------------------------------
// Bootstrap

struct ConfidenceInterval {
    double mean = 0.0;
    double lower = 0.0;
    double upper = 0.0;
};

/// Percentile bootstrap interval of the mean.
inline ConfidenceInterval bootstrap_mean(std::span<const double> values, std::uint64_t seed,
                                         std::size_t resamples = 2000, double level = 0.95) {
    if (values.empty()) {
        throw Error(ErrorCode::InvalidValue, "bootstrap_mean: no values");
    }
    const double n = static_cast<double>(values.size());
    ConfidenceInterval ci;
    ci.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
    std::vector<double> means(resamples);
    for (auto& m : means) {
        double s = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) {
            s += values[pick(rng)];
        }
        m = s / n;
    }
    std::sort(means.begin(), means.end());
    const double tail = (1.0 - level) / 2.0;
    auto at = [&](double q) {
        const auto idx = static_cast<std::size_t>(std::floor(q * static_cast<double>(resamples - 1)));
        return means[std::min(idx, resamples - 1)];
    };
    ci.lower = at(tail);
    ci.upper = at(1.0 - tail);
    return ci;
}

// ---------------------------------------------------------------------------
// Partial / noisy prototypes

enum class PrototypeSource { support, self };

inline std::string_view to_string(PrototypeSource s) { return s == PrototypeSource::self ? "self" : "support"; }

struct PartialResult {
    double mean_iou = 0.0;
    std::vector<double> ious;
};

/// Foreground prototype from a random subset of ground-truth object pixels of
/// either the first support or the query itself, optionally mixed with
/// features drawn from that image's background, matched against the query.
///
/// object_ratio picks max(1, round(ratio * |object|)) pixels. noise_ratio is
/// the share of noise features in the pooled set: max(1, round(n * r / (1 - r)))
/// background features are added when r > 0. The background prototype pools
/// the full ground-truth background of the same image.
inline PartialResult partial_prototype_experiment(std::span<const Episode> episodes, double object_ratio,
                                                  double noise_ratio, PrototypeSource mode, std::uint64_t seed,
                                                  double temperature = 1.0) {
    if (!(object_ratio > 0.0 && object_ratio <= 1.0)) {
        throw Error(ErrorCode::InvalidRatio, "object_ratio must lie in (0, 1]");
    }
    if (!(noise_ratio >= 0.0 && noise_ratio < 1.0)) {
        throw Error(ErrorCode::InvalidRatio, "noise_ratio must lie in [0, 1)");
    }
    PartialResult out;
    for (const auto& ep : episodes) {
        if (!ep.query_gt) {
            throw Error(ErrorCode::InvalidValue, "partial_prototype_experiment: query ground truth required");
        }
        std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(ep.episode_id)));
        const FeatureMap& src = mode == PrototypeSource::self ? ep.query : ep.supports.front().features;
        const Mask& src_mask = mode == PrototypeSource::self ? *ep.query_gt : ep.supports.front().mask;

        auto object = detail::pixels_where(src_mask, true);
        const auto background = detail::pixels_where(src_mask, false);
        if (object.empty() || background.empty()) {
            throw Error(ErrorCode::EmptyMask, "partial_prototype_experiment: episode " +
                                                  std::to_string(ep.episode_id) +
                                                  " source mask needs both object and background");
        }
        std::shuffle(object.begin(), object.end(), rng);
        const auto keep = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(object_ratio * static_cast<double>(object.size()))));
        object.resize(std::min(keep, object.size()));

        std::vector<std::size_t> pooled = object;
        if (noise_ratio > 0.0) {
            const auto extra = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(
                                                            static_cast<double>(object.size()) * noise_ratio /
                                                            (1.0 - noise_ratio))));
            std::uniform_int_distribution<std::size_t> pick(0, background.size() - 1);
            for (std::size_t i = 0; i < extra; ++i) {
                pooled.push_back(background[pick(rng)]);
            }
        }

        std::vector<double> acc(src.channels(), 0.0);
        for (std::size_t p : pooled) {
            for (std::size_t c = 0; c < src.channels(); ++c) {
                acc[c] += src.at_pixel(c, p);
            }
        }
        std::vector<float> fg(src.channels());
        for (std::size_t c = 0; c < fg.size(); ++c) {
            fg[c] = static_cast<float>(acc[c] / static_cast<double>(pooled.size()));
        }
        const Prototype fg_proto(std::move(fg), PrototypeRole::foreground);
        const Prototype bg_proto = masked_average_pooling(src, src_mask.complement(), PrototypeRole::background);
        const Prediction pred =
            pairwise_softmax(cosine_map(fg_proto, ep.query), cosine_map(bg_proto, ep.query), temperature);
        out.ious.push_back(iou(pred.fg, *ep.query_gt));
    }
    out.mean_iou = out.ious.empty() ? 0.0
                                    : std::accumulate(out.ious.begin(), out.ious.end(), 0.0) /
                                          static_cast<double>(out.ious.size());
    return out;
}

// ---------------------------------------------------------------------------
// Weak labels

/// Filled tight bounding box of the foreground.
inline Mask weak_label_bbox(const Mask& mask) {
    std::size_t y0 = mask.height(), y1 = 0, x0 = mask.width(), x1 = 0;
    bool any = false;
    for (std::size_t y = 0; y < mask.height(); ++y) {
        for (std::size_t x = 0; x < mask.width(); ++x) {
            if (mask(y, x) != 0.0f) {
                any = true;
                y0 = std::min(y0, y);
                y1 = std::max(y1, y);
                x0 = std::min(x0, x);
                x1 = std::max(x1, x);
            }
        }
    }
    if (!any) {
        throw Error(ErrorCode::EmptyMask, "weak_label_bbox: mask has no foreground");
    }
    Mask out = Mask::binary(mask.extent());
    for (std::size_t y = y0; y <= y1; ++y) {
        for (std::size_t x = x0; x <= x1; ++x) {
            out.set(y, x, 1.0f);
        }
    }
    return out;
}

/// Copy of the episodes with every support mask replaced by its bounding box.
inline std::vector<Episode> with_bbox_supports(std::span<const Episode> episodes) {
    std::vector<Episode> out(episodes.begin(), episodes.end());
    for (auto& ep : out) {
        for (auto& s : ep.supports) {
            s.mask = weak_label_bbox(s.mask);
        }
    }
    return out;
}

} // namespace ssp

#endif // SSP_ANALYSIS_HPP
