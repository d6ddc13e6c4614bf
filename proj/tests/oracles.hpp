#ifndef SSP_TESTS_ORACLES_HPP
#define SSP_TESTS_ORACLES_HPP

// Naive per-element reference implementations. They work on plain vectors in
// [c][pixel] layout and share no code with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;

inline constexpr double kEps = 1e-8;

/// |a - b| relative to max(|a|, |b|, 1): the quantities compared here are unit scale.
inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0}); }

inline double max_rel_err(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) {
        return INFINITY;
    }
    double e = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        e = std::max(e, rel_err(a[i], b[i]));
    }
    return e;
}

template <class Span>
Vec to_vec(const Span& s) {
    return Vec(s.begin(), s.end());
}

inline Vec masked_average(const Vec& f, std::size_t C, std::size_t HW, const Vec& m) {
    Vec out(C, 0.0);
    double w = 0.0;
    for (std::size_t i = 0; i < HW; ++i) {
        w += m[i];
    }
    for (std::size_t c = 0; c < C; ++c) {
        double s = 0.0;
        for (std::size_t i = 0; i < HW; ++i) {
            s += f[c * HW + i] * m[i];
        }
        out[c] = s / w;
    }
    return out;
}

inline double cosine(const Vec& a, const Vec& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t c = 0; c < a.size(); ++c) {
        dot += a[c] * b[c];
        na += a[c] * a[c];
        nb += b[c] * b[c];
    }
    double v = dot / (std::sqrt(na) * std::sqrt(nb) + kEps);
    if (v > 1.0) v = 1.0;
    if (v < -1.0) v = -1.0;
    return v;
}

inline Vec column(const Vec& f, std::size_t C, std::size_t HW, std::size_t i) {
    Vec v(C);
    for (std::size_t c = 0; c < C; ++c) {
        v[c] = f[c * HW + i];
    }
    return v;
}

inline Vec cosine_map(const Vec& p, const Vec& f, std::size_t C, std::size_t HW) {
    Vec out(HW);
    for (std::size_t i = 0; i < HW; ++i) {
        out[i] = cosine(p, column(f, C, HW, i));
    }
    return out;
}

inline Vec field_cosine_map(const Vec& field, const Vec& f, std::size_t C, std::size_t HW) {
    Vec out(HW);
    for (std::size_t i = 0; i < HW; ++i) {
        out[i] = cosine(column(field, C, HW, i), column(f, C, HW, i));
    }
    return out;
}

/// e^{t fg} / (e^{t fg} + e^{t bg}) per pixel.
inline Vec softmax_fg(const Vec& fg, const Vec& bg, double t) {
    Vec out(fg.size());
    for (std::size_t i = 0; i < fg.size(); ++i) {
        const double m = std::max(t * fg[i], t * bg[i]);
        const double a = std::exp(t * fg[i] - m), b = std::exp(t * bg[i] - m);
        out[i] = a / (a + b);
    }
    return out;
}

/// Triple loop, row-major.
inline Vec matmul(const Vec& a, const Vec& b, std::size_t n, std::size_t k, std::size_t m) {
    Vec out(n * m, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            double s = 0.0;
            for (std::size_t l = 0; l < k; ++l) {
                s += a[i * k + l] * b[l * m + j];
            }
            out[i * m + j] = s;
        }
    }
    return out;
}

/// For each query pixel j: weights over selected background pixels b,
/// w_b = exp(<f_b, f_j>) / sum, field_j = sum_b w_b f_b.
inline Vec adaptive_background(const Vec& f, std::size_t C, std::size_t HW, const std::vector<std::size_t>& bg) {
    Vec out(C * HW, 0.0);
    for (std::size_t j = 0; j < HW; ++j) {
        Vec logits(bg.size());
        for (std::size_t b = 0; b < bg.size(); ++b) {
            double s = 0.0;
            for (std::size_t c = 0; c < C; ++c) {
                s += f[c * HW + bg[b]] * f[c * HW + j];
            }
            logits[b] = s;
        }
        const double mx = *std::max_element(logits.begin(), logits.end());
        double z = 0.0;
        for (double& l : logits) {
            l = std::exp(l - mx);
            z += l;
        }
        for (std::size_t c = 0; c < C; ++c) {
            double s = 0.0;
            for (std::size_t b = 0; b < bg.size(); ++b) {
                s += logits[b] / z * f[c * HW + bg[b]];
            }
            out[c * HW + j] = s;
        }
    }
    return out;
}

inline double iou(const Vec& prob, const Vec& gt) {
    double inter = 0.0, uni = 0.0;
    for (std::size_t i = 0; i < prob.size(); ++i) {
        const bool p = prob[i] > 0.5, g = gt[i] > 0.5;
        inter += (p && g) ? 1.0 : 0.0;
        uni += (p || g) ? 1.0 : 0.0;
    }
    return uni == 0.0 ? 1.0 : inter / uni;
}

inline double mae_all(const Vec& prob, const Vec& gt) {
    double s = 0.0;
    for (std::size_t i = 0; i < prob.size(); ++i) {
        s += std::abs(prob[i] - gt[i]);
    }
    return s / static_cast<double>(prob.size());
}

inline double mae_tp(const Vec& prob, const Vec& gt) {
    double s = 0.0, n = 0.0;
    for (std::size_t i = 0; i < prob.size(); ++i) {
        if (prob[i] > 0.5 && gt[i] > 0.5) {
            s += std::abs(prob[i] - gt[i]);
            n += 1.0;
        }
    }
    return n == 0.0 ? 0.0 : s / n;
}

/// Mean binary cross entropy of the fg softmax probability against gt.
inline double bce(const Vec& cos_fg, const Vec& cos_bg, const Vec& gt, double t) {
    const Vec p = softmax_fg(cos_fg, cos_bg, t);
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        s -= gt[i] > 0.5 ? std::log(p[i]) : std::log(1.0 - p[i]);
    }
    return s / static_cast<double>(p.size());
}

/// Indices of the k largest scores; ties keep raster order.
inline std::vector<std::size_t> top_k(const Vec& score, std::size_t k) {
    std::vector<std::size_t> idx(score.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
    idx.resize(std::min(k, idx.size()));
    std::sort(idx.begin(), idx.end());
    return idx;
}

/// Filled min/max box of the nonzero pixels.
inline Vec bbox(const Vec& m, std::size_t H, std::size_t W) {
    std::size_t y0 = H, y1 = 0, x0 = W, x1 = 0;
    for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
            if (m[y * W + x] != 0.0) {
                y0 = std::min(y0, y);
                y1 = std::max(y1, y);
                x0 = std::min(x0, x);
                x1 = std::max(x1, x);
            }
        }
    }
    Vec out(H * W, 0.0);
    for (std::size_t y = y0; y <= y1 && y < H; ++y) {
        for (std::size_t x = x0; x <= x1; ++x) {
            out[y * W + x] = 1.0;
        }
    }
    return out;
}

// Random inputs ---------------------------------------------------------------

inline std::vector<float> gaussian(std::mt19937_64& rng, std::size_t n, double sigma = 1.0) {
    std::normal_distribution<double> d(0.0, sigma);
    std::vector<float> v(n);
    for (auto& x : v) {
        x = static_cast<float>(d(rng));
    }
    return v;
}

inline std::vector<std::uint8_t> bits(std::mt19937_64& rng, std::size_t n, double p = 0.5) {
    std::bernoulli_distribution d(p);
    std::vector<std::uint8_t> v(n);
    for (auto& b : v) {
        b = d(rng) ? 1 : 0;
    }
    return v;
}

/// Random bits with at least one set and at least one clear (n >= 2).
inline std::vector<std::uint8_t> mixed_bits(std::mt19937_64& rng, std::size_t n, double p = 0.5) {
    auto v = bits(rng, n, p);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    const std::size_t a = pick(rng);
    std::size_t b = pick(rng);
    while (b == a) {
        b = pick(rng);
    }
    v[a] = 1;
    v[b] = 0;
    return v;
}

} // namespace oracle

#endif // SSP_TESTS_ORACLES_HPP
