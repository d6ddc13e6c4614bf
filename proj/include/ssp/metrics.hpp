#ifndef SSP_METRICS_HPP
#define SSP_METRICS_HPP

#include <cmath>
#include <cstddef>

#include "ssp/ops.hpp"
#include "ssp/tensor.hpp"

namespace ssp {

/// Foreground probabilities above this count as predicted foreground.
inline constexpr double kBinarizeThreshold = 0.5;

struct PixelMetrics {
    double iou = 0.0;
    double mae_all = 0.0;
    /// Mean |p - gt| over pixels that are foreground in both prediction and ground truth.
    double mae_tp = 0.0;
    std::size_t tp_pixels = 0;
};

/// IoU of the binarised foreground channel; an empty union scores 1.
inline PixelMetrics pixel_metrics(const Mask& fg_prob, const Mask& gt) {
    detail::require_extent(fg_prob.extent(), gt.extent(), "pixel_metrics");
    std::size_t inter = 0, uni = 0, tp = 0;
    double abs_all = 0.0, abs_tp = 0.0;
    for (std::size_t i = 0; i < gt.pixels(); ++i) {
        const double p = fg_prob[i];
        const bool pred = p > kBinarizeThreshold;
        const bool truth = gt[i] != 0.0f;
        const double err = std::abs(p - (truth ? 1.0 : 0.0));
        abs_all += err;
        if (pred && truth) {
            ++inter;
            ++tp;
            abs_tp += err;
        }
        if (pred || truth) {
            ++uni;
        }
    }
    PixelMetrics m;
    m.iou = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
    m.mae_all = abs_all / static_cast<double>(gt.pixels());
    m.mae_tp = tp == 0 ? 0.0 : abs_tp / static_cast<double>(tp);
    m.tp_pixels = tp;
    return m;
}

inline double iou(const Mask& fg_prob, const Mask& gt) { return pixel_metrics(fg_prob, gt).iou; }

} // namespace ssp

#endif // SSP_METRICS_HPP
