#ifndef SSP_OPS_HPP
#define SSP_OPS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "ssp/error.hpp"
#include "ssp/tensor.hpp"

namespace ssp {

/// Added to the norm product in every cosine.
inline constexpr double kCosineEpsilon = 1e-8;

namespace detail {

inline void require_extent(Extent a, Extent b, const char* what) {
    if (a != b) {
        throw Error(ErrorCode::DimMismatch, std::string(what) + ": spatial dims " + describe(a) + " vs " + describe(b));
    }
}

inline void require_channels(std::size_t a, std::size_t b, const char* what) {
    if (a != b) {
        throw Error(ErrorCode::DimMismatch,
                    std::string(what) + ": channels " + std::to_string(a) + " vs " + std::to_string(b));
    }
}

/// Squared norm of a strided float column, accumulated in double.
inline double strided_sq_norm(const float* p, std::size_t stride, std::size_t channels) {
    double s = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
        const double v = p[c * stride];
        s += v * v;
    }
    return s;
}

/// Unclamped cosine between a strided prototype column (with precomputed norm)
/// and a strided feature column. Shared by the vector and field variants so a
/// broadcast field reproduces the vector result bit for bit.
inline double cosine_raw(const float* p, std::size_t p_stride, double p_norm, const float* f, std::size_t f_stride,
                         std::size_t channels) {
    double dot = 0.0;
    double ff = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
        const double x = f[c * f_stride];
        dot += static_cast<double>(p[c * p_stride]) * x;
        ff += x * x;
    }
    return dot / (p_norm * std::sqrt(ff) + kCosineEpsilon);
}

inline double clamp_unit(double v) { return std::clamp(v, -1.0, 1.0); }

inline double sigmoid(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

} // namespace detail

/// Masked average pooling: weighted mean of feature columns under `mask`.
inline Prototype masked_average_pooling(const FeatureMap& f, const Mask& mask,
                                        PrototypeRole role = PrototypeRole::foreground) {
    detail::require_extent(f.extent(), mask.extent(), "masked_average_pooling");
    const std::size_t hw = f.pixels();
    std::vector<double> acc(f.channels(), 0.0);
    double weight = 0.0;
    for (std::size_t i = 0; i < hw; ++i) {
        const double m = mask[i];
        if (m == 0.0) {
            continue;
        }
        weight += m;
        for (std::size_t c = 0; c < f.channels(); ++c) {
            acc[c] += m * static_cast<double>(f.at_pixel(c, i));
        }
    }
    if (weight == 0.0) {
        throw Error(ErrorCode::EmptyMask, "masked_average_pooling: mask has no active pixels");
    }
    std::vector<float> out(f.channels());
    for (std::size_t c = 0; c < out.size(); ++c) {
        out[c] = static_cast<float>(acc[c] / weight);
    }
    return Prototype(std::move(out), role);
}

inline double norm(const Prototype& p) { return std::sqrt(detail::strided_sq_norm(p.values().data(), 1, p.channels())); }

/// Cosine similarity of one prototype against every feature column.
inline ScoreMap cosine_map(const Prototype& p, const FeatureMap& f) {
    detail::require_channels(p.channels(), f.channels(), "cosine_map");
    const double pn = norm(p);
    if (pn == 0.0) {
        throw Error(ErrorCode::ZeroPrototype, "cosine_map: prototype has zero norm");
    }
    const std::size_t hw = f.pixels();
    ScoreMap out(f.extent());
    const float* fd = f.data().data();
    for (std::size_t i = 0; i < hw; ++i) {
        out[i] = static_cast<float>(
            detail::clamp_unit(detail::cosine_raw(p.values().data(), 1, pn, fd + i, hw, f.channels())));
    }
    return out;
}

/// Pixelwise cosine between a prototype field and a feature map.
inline ScoreMap cosine_field_map(const PrototypeField& p, const FeatureMap& f) {
    detail::require_channels(p.channels(), f.channels(), "cosine_field_map");
    detail::require_extent(p.extent(), f.extent(), "cosine_field_map");
    const std::size_t hw = f.pixels();
    ScoreMap out(f.extent());
    const float* pd = p.data().data();
    const float* fd = f.data().data();
    for (std::size_t i = 0; i < hw; ++i) {
        const double pn = std::sqrt(detail::strided_sq_norm(pd + i, hw, p.channels()));
        if (pn == 0.0) {
            if (detail::strided_sq_norm(fd + i, hw, f.channels()) != 0.0) {
                throw Error(ErrorCode::ZeroPrototype, "cosine_field_map: zero prototype column at pixel (" +
                                                          std::to_string(i / f.width()) + ", " +
                                                          std::to_string(i % f.width()) + ")");
            }
            out[i] = 0.0f;
            continue;
        }
        out[i] = static_cast<float>(detail::clamp_unit(detail::cosine_raw(pd + i, hw, pn, fd + i, hw, f.channels())));
    }
    return out;
}

/// Two-way softmax of (temperature * fg, temperature * bg) at every pixel.
inline Prediction pairwise_softmax(const ScoreMap& fg, const ScoreMap& bg, double temperature = 1.0) {
    detail::require_extent(fg.extent(), bg.extent(), "pairwise_softmax");
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
        throw Error(ErrorCode::InvalidValue, "pairwise_softmax: temperature must be positive");
    }
    const std::size_t n = fg.pixels();
    std::vector<float> pf(n), pb(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double d = temperature * (static_cast<double>(fg[i]) - static_cast<double>(bg[i]));
        pf[i] = static_cast<float>(detail::sigmoid(d));
        pb[i] = static_cast<float>(detail::sigmoid(-d));
    }
    const Extent e = fg.extent();
    return {Mask(MaskKind::probability, e.height, e.width, std::move(pf)),
            Mask(MaskKind::probability, e.height, e.width, std::move(pb))};
}

/// Dense product with i-k-j loop order.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw Error(ErrorCode::DimMismatch, "matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                                " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) {
                continue;
            }
            for (std::size_t j = 0; j < b.cols(); ++j) {
                out(i, j) += aik * b(k, j);
            }
        }
    }
    return out;
}

/// Softmax along the first dimension: every column sums to one afterwards.
inline void column_softmax(Matrix& m) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < m.rows(); ++i) {
            mx = std::max(mx, m(i, j));
        }
        double sum = 0.0;
        for (std::size_t i = 0; i < m.rows(); ++i) {
            m(i, j) = std::exp(m(i, j) - mx);
            sum += m(i, j);
        }
        for (std::size_t i = 0; i < m.rows(); ++i) {
            m(i, j) /= sum;
        }
    }
}

/// C x HW view of a feature map as a matrix.
inline Matrix as_matrix(const FeatureMap& f) {
    return Matrix(f.channels(), f.pixels(), std::vector<double>(f.data().begin(), f.data().end()));
}

/// C x M matrix of the feature columns selected by a binary mask, in raster order.
inline Matrix gather_columns(const FeatureMap& f, const Mask& mask) {
    detail::require_extent(f.extent(), mask.extent(), "gather_columns");
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < mask.pixels(); ++i) {
        if (mask[i] != 0.0f) {
            idx.push_back(i);
        }
    }
    Matrix out(f.channels(), idx.size());
    for (std::size_t c = 0; c < f.channels(); ++c) {
        for (std::size_t j = 0; j < idx.size(); ++j) {
            out(c, j) = f.at_pixel(c, idx[j]);
        }
    }
    return out;
}

} // namespace ssp

#endif // SSP_OPS_HPP
