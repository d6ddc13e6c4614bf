#ifndef SSP_SYNTHETIC_HPP
#define SSP_SYNTHETIC_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssp/episode.hpp"
#include "ssp/error.hpp"
#include "ssp/tensor.hpp"

namespace ssp {

/// Parameters of the synthetic feature generator.
///
/// Object pixels are  mu + object_offset + intra noise,  background pixels
/// are  b_j + image_offset_j + noise  for the Voronoi region j they fall in.
/// Every pixel is projected to the unit sphere and scaled by feature_norm.
///
/// Spreads are Gaussian magnitudes relative to a unit centroid (per-dimension
/// sigma = spread / sqrt(C)).
struct SyntheticSpec {
    std::size_t channels = 32;
    std::size_t height = 20;
    std::size_t width = 20;
    /// Fixed-length part of each object's offset from the class centroid.
    double fg_centroid_distance = 1.0;
    /// Per-pixel spread inside one object.
    double intra_object_spread = 0.6;
    /// Random part of each object's offset; also the per-image shift of each background cluster.
    double cross_object_spread = 1.0;
    std::size_t bg_cluster_count = 4;
    /// Per-pixel noise on every pixel.
    double noise_sigma = 0.8;
    /// How strongly background cluster centroids lean away from the class centroid.
    double bg_lean = 0.5;
    /// Norm of every emitted feature column.
    double feature_norm = 4.0;
    /// Object ellipse semi-axes as a fraction of the frame, drawn uniformly in [min, max].
    double object_scale_min = 0.2;
    double object_scale_max = 0.4;
    std::uint64_t seed = 0;
};

inline void validate(const SyntheticSpec& s) {
    auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidConfig, "synthetic spec: " + m); };
    if (s.channels == 0 || s.height == 0 || s.width == 0) {
        fail("channels, height and width must be positive");
    }
    for (double v : {s.fg_centroid_distance, s.intra_object_spread, s.cross_object_spread, s.noise_sigma, s.bg_lean}) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            fail("distances, spreads, noise and bg_lean must be finite and >= 0");
        }
    }
    if (s.bg_cluster_count < 1) {
        fail("bg_cluster_count must be >= 1");
    }
    if (!(s.feature_norm > 0.0) || !std::isfinite(s.feature_norm)) {
        fail("feature_norm must be positive");
    }
    if (!(s.object_scale_min > 0.0 && s.object_scale_min <= s.object_scale_max && s.object_scale_max <= 1.0)) {
        fail("object scales must satisfy 0 < min <= max <= 1");
    }
}

inline nlohmann::json to_json(const SyntheticSpec& s) {
    return {{"channels", s.channels},
            {"height", s.height},
            {"width", s.width},
            {"fg_centroid_distance", s.fg_centroid_distance},
            {"intra_object_spread", s.intra_object_spread},
            {"cross_object_spread", s.cross_object_spread},
            {"bg_cluster_count", s.bg_cluster_count},
            {"noise_sigma", s.noise_sigma},
            {"bg_lean", s.bg_lean},
            {"feature_norm", s.feature_norm},
            {"object_scale_min", s.object_scale_min},
            {"object_scale_max", s.object_scale_max},
            {"seed", s.seed}};
}

/// Applies one override; keys are the json field names above.
inline void apply_override(SyntheticSpec& s, std::string_view key, const std::string& value) {
    auto real = [&]() {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(value, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != value.size() || value.empty()) {
            throw Error(ErrorCode::InvalidConfig, "synthetic." + std::string(key) + ": not a number: '" + value + "'");
        }
        return v;
    };
    auto count = [&]() {
        const double v = real();
        if (!(v >= 0.0) || v != std::floor(v) || v > 1e9) {
            throw Error(ErrorCode::InvalidConfig, "synthetic." + std::string(key) + ": expected a non-negative integer");
        }
        return static_cast<std::size_t>(v);
    };
    if (key == "channels") s.channels = count();
    else if (key == "height") s.height = count();
    else if (key == "width") s.width = count();
    else if (key == "fg_centroid_distance") s.fg_centroid_distance = real();
    else if (key == "intra_object_spread") s.intra_object_spread = real();
    else if (key == "cross_object_spread") s.cross_object_spread = real();
    else if (key == "bg_cluster_count") s.bg_cluster_count = count();
    else if (key == "noise_sigma") s.noise_sigma = real();
    else if (key == "bg_lean") s.bg_lean = real();
    else if (key == "feature_norm") s.feature_norm = real();
    else if (key == "object_scale_min") s.object_scale_min = real();
    else if (key == "object_scale_max") s.object_scale_max = real();
    else if (key == "seed") {
        try {
            std::size_t used = 0;
            s.seed = std::stoull(value, &used);
            if (used != value.size()) throw std::invalid_argument("seed");
        } catch (const std::exception&) {
            throw Error(ErrorCode::InvalidConfig, "synthetic.seed: not an unsigned integer: '" + value + "'");
        }
    } else {
        throw Error(ErrorCode::InvalidConfig, "unknown config key 'synthetic." + std::string(key) + "'");
    }
}

/// splitmix64 finaliser; derives independent stream seeds from (seed, index).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

namespace detail {

class SyntheticImager {
public:
    SyntheticImager(const SyntheticSpec& spec, std::mt19937_64& rng) : spec_(spec), rng_(rng) {}

    std::vector<double> gaussian(double magnitude) {
        std::normal_distribution<double> n(0.0, 1.0);
        std::vector<double> v(spec_.channels);
        const double s = magnitude / std::sqrt(static_cast<double>(spec_.channels));
        for (auto& x : v) {
            x = n(rng_) * s;
        }
        return v;
    }

    std::vector<double> unit() {
        auto v = gaussian(1.0);
        normalize(v);
        return v;
    }

    static void normalize(std::vector<double>& v) {
        double n = 0.0;
        for (double x : v) {
            n += x * x;
        }
        n = std::sqrt(n);
        if (n == 0.0) {
            v[0] = 1.0;
            return;
        }
        for (auto& x : v) {
            x /= n;
        }
    }

    /// Filled ellipse; always contains its centre pixel.
    Mask object_mask() {
        const std::size_t h = spec_.height, w = spec_.width;
        std::uniform_real_distribution<double> scale(spec_.object_scale_min, spec_.object_scale_max);
        const double ry = std::max(0.5, scale(rng_) * static_cast<double>(h));
        const double rx = std::max(0.5, scale(rng_) * static_cast<double>(w));
        std::uniform_real_distribution<double> cy(std::min(ry, h / 2.0), std::max(h - ry, h / 2.0));
        std::uniform_real_distribution<double> cx(std::min(rx, w / 2.0), std::max(w - rx, w / 2.0));
        const double y0 = cy(rng_), x0 = cx(rng_);
        Mask m = Mask::binary(Extent{h, w});
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                const double dy = (static_cast<double>(y) + 0.5 - y0) / ry;
                const double dx = (static_cast<double>(x) + 0.5 - x0) / rx;
                if (dy * dy + dx * dx <= 1.0) {
                    m.set(y, x, 1.0f);
                }
            }
        }
        const auto centre_y = std::min(h - 1, static_cast<std::size_t>(y0));
        const auto centre_x = std::min(w - 1, static_cast<std::size_t>(x0));
        m.set(centre_y, centre_x, 1.0f);
        return m;
    }

    /// Background region label per pixel (nearest of bg_cluster_count random seeds).
    std::vector<std::size_t> bg_regions() {
        std::uniform_real_distribution<double> uy(0.0, static_cast<double>(spec_.height));
        std::uniform_real_distribution<double> ux(0.0, static_cast<double>(spec_.width));
        std::vector<std::pair<double, double>> seeds(spec_.bg_cluster_count);
        for (auto& s : seeds) {
            s = {uy(rng_), ux(rng_)};
        }
        std::vector<std::size_t> label(spec_.height * spec_.width);
        for (std::size_t y = 0; y < spec_.height; ++y) {
            for (std::size_t x = 0; x < spec_.width; ++x) {
                double best = std::numeric_limits<double>::infinity();
                for (std::size_t k = 0; k < seeds.size(); ++k) {
                    const double dy = y + 0.5 - seeds[k].first, dx = x + 0.5 - seeds[k].second;
                    if (dy * dy + dx * dx < best) {
                        best = dy * dy + dx * dx;
                        label[y * spec_.width + x] = k;
                    }
                }
            }
        }
        return label;
    }

    /// One image of the class: returns features and the object mask.
    SupportSample image(const std::vector<double>& class_centroid, const std::vector<std::vector<double>>& bg_centroids) {
        Mask mask = object_mask();
        const auto regions = bg_regions();

        auto object_centre = class_centroid;
        auto direction = unit();
        const auto random_offset = gaussian(spec_.cross_object_spread);
        for (std::size_t c = 0; c < spec_.channels; ++c) {
            object_centre[c] += spec_.fg_centroid_distance * direction[c] + random_offset[c];
        }
        std::vector<std::vector<double>> bg_centres = bg_centroids;
        for (auto& b : bg_centres) {
            const auto shift = gaussian(spec_.cross_object_spread);
            for (std::size_t c = 0; c < spec_.channels; ++c) {
                b[c] += shift[c];
            }
        }

        const std::size_t hw = spec_.height * spec_.width;
        std::vector<float> data(spec_.channels * hw);
        for (std::size_t i = 0; i < hw; ++i) {
            const bool object = mask[i] != 0.0f;
            std::vector<double> x = object ? object_centre : bg_centres[regions[i]];
            if (object) {
                const auto intra = gaussian(spec_.intra_object_spread);
                for (std::size_t c = 0; c < spec_.channels; ++c) {
                    x[c] += intra[c];
                }
            }
            const auto noise = gaussian(spec_.noise_sigma);
            for (std::size_t c = 0; c < spec_.channels; ++c) {
                x[c] += noise[c];
            }
            normalize(x);
            for (std::size_t c = 0; c < spec_.channels; ++c) {
                data[c * hw + i] = static_cast<float>(x[c] * spec_.feature_norm);
            }
        }
        return {FeatureMap(spec_.channels, spec_.height, spec_.width, std::move(data)), std::move(mask)};
    }

private:
    const SyntheticSpec& spec_;
    std::mt19937_64& rng_;
};

} // namespace detail

/// Draws one K-shot episode. Deterministic in (spec.seed, episode_id).
inline Episode generate_episode(const SyntheticSpec& spec, std::size_t shots, std::int64_t episode_id = 0) {
    validate(spec);
    if (shots == 0) {
        throw Error(ErrorCode::InvalidValue, "generate_episode: shots must be >= 1");
    }
    std::mt19937_64 rng(mix_seed(spec.seed, static_cast<std::uint64_t>(episode_id)));
    detail::SyntheticImager imager(spec, rng);

    const auto class_centroid = imager.unit();
    std::vector<std::vector<double>> bg_centroids(spec.bg_cluster_count);
    for (auto& b : bg_centroids) {
        b = imager.unit();
        for (std::size_t c = 0; c < spec.channels; ++c) {
            b[c] -= spec.bg_lean * class_centroid[c];
        }
        detail::SyntheticImager::normalize(b);
    }

    std::vector<SupportSample> supports;
    for (std::size_t k = 0; k < shots; ++k) {
        supports.push_back(imager.image(class_centroid, bg_centroids));
    }
    SupportSample query = imager.image(class_centroid, bg_centroids);
    const auto class_id = static_cast<std::int64_t>(rng() % 20);
    return Episode{std::move(supports), std::move(query.features), std::move(query.mask), class_id, episode_id};
}

/// Episodes 0..count-1 of one synthetic suite.
inline std::vector<Episode> generate_suite(const SyntheticSpec& spec, std::size_t count, std::size_t shots = 1) {
    std::vector<Episode> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        out.push_back(generate_episode(spec, shots, static_cast<std::int64_t>(i)));
    }
    return out;
}

} // namespace ssp

#endif // SSP_SYNTHETIC_HPP
