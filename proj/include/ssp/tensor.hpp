#ifndef SSP_TENSOR_HPP
#define SSP_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ssp/error.hpp"

namespace ssp {

struct Extent {
    std::size_t height = 0;
    std::size_t width = 0;

    std::size_t pixels() const { return height * width; }
    friend bool operator==(const Extent&, const Extent&) = default;
};

inline std::string describe(Extent e) {
    return std::to_string(e.height) + "x" + std::to_string(e.width);
}

namespace detail {

inline void require_positive(std::size_t c, std::size_t h, std::size_t w, const char* what) {
    if (c == 0 || h == 0 || w == 0) {
        throw Error(ErrorCode::BadDims, std::string(what) + " dimensions must be positive");
    }
}

inline void require_finite(std::span<const float> values, const char* what) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            throw Error(ErrorCode::NonFiniteValue,
                        std::string(what) + " has a non-finite value at element " + std::to_string(i));
        }
    }
}

inline void require_size(std::size_t got, std::size_t want, const char* what) {
    if (got != want) {
        throw Error(ErrorCode::DimMismatch, std::string(what) + " expects " + std::to_string(want) +
                                                " values, got " + std::to_string(got));
    }
}

} // namespace detail

/// Dense C x H x W feature tensor stored row-major as [c][h][w].
///
/// Values are checked for finiteness on construction. Mutable element access
/// exists for perturbation-style tests; callers that write through it own the
/// finiteness of what they write.
class FeatureMap {
public:
    FeatureMap(std::size_t channels, std::size_t height, std::size_t width)
        : channels_(channels), height_(height), width_(width), data_(channels * height * width, 0.0f) {
        detail::require_positive(channels, height, width, "FeatureMap");
    }

    FeatureMap(std::size_t channels, std::size_t height, std::size_t width, std::vector<float> data)
        : channels_(channels), height_(height), width_(width), data_(std::move(data)) {
        detail::require_positive(channels, height, width, "FeatureMap");
        detail::require_size(data_.size(), channels * height * width, "FeatureMap");
        detail::require_finite(data_, "FeatureMap");
    }

    std::size_t channels() const { return channels_; }
    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    Extent extent() const { return {height_, width_}; }
    std::size_t pixels() const { return height_ * width_; }

    float operator()(std::size_t c, std::size_t h, std::size_t w) const {
        return data_[(c * height_ + h) * width_ + w];
    }
    float& operator()(std::size_t c, std::size_t h, std::size_t w) {
        return data_[(c * height_ + h) * width_ + w];
    }

    /// Element at channel `c` of flattened pixel index `pixel` (= h*W + w).
    float at_pixel(std::size_t c, std::size_t pixel) const { return data_[c * pixels() + pixel]; }

    std::vector<float> column(std::size_t pixel) const {
        std::vector<float> out(channels_);
        for (std::size_t c = 0; c < channels_; ++c) {
            out[c] = at_pixel(c, pixel);
        }
        return out;
    }

    std::span<const float> data() const { return data_; }
    std::span<float> data() { return data_; }

    friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

private:
    std::size_t channels_;
    std::size_t height_;
    std::size_t width_;
    std::vector<float> data_;
};

enum class MaskKind : std::uint8_t { binary, probability };

/// H x W map; binary masks hold exactly 0 or 1, probability masks lie in [0, 1].
class Mask {
public:
    Mask(MaskKind kind, std::size_t height, std::size_t width)
        : kind_(kind), height_(height), width_(width), data_(height * width, 0.0f) {
        detail::require_positive(1, height, width, "Mask");
    }

    Mask(MaskKind kind, std::size_t height, std::size_t width, std::vector<float> data)
        : kind_(kind), height_(height), width_(width), data_(std::move(data)) {
        detail::require_positive(1, height, width, "Mask");
        detail::require_size(data_.size(), height * width, "Mask");
        validate();
    }

    static Mask binary(Extent e) { return Mask(MaskKind::binary, e.height, e.width); }
    static Mask probability(Extent e) { return Mask(MaskKind::probability, e.height, e.width); }

    static Mask binary(std::size_t height, std::size_t width, const std::vector<std::uint8_t>& bits) {
        std::vector<float> data(bits.size());
        std::transform(bits.begin(), bits.end(), data.begin(), [](std::uint8_t b) { return static_cast<float>(b); });
        return Mask(MaskKind::binary, height, width, std::move(data));
    }

    MaskKind kind() const { return kind_; }
    bool is_binary() const { return kind_ == MaskKind::binary; }
    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    Extent extent() const { return {height_, width_}; }
    std::size_t pixels() const { return data_.size(); }

    float operator()(std::size_t h, std::size_t w) const { return data_[h * width_ + w]; }
    float operator[](std::size_t pixel) const { return data_[pixel]; }

    /// Writes are range-checked against the mask kind.
    void set(std::size_t pixel, float value) {
        check_value(value, pixel);
        data_[pixel] = value;
    }
    void set(std::size_t h, std::size_t w, float value) { set(h * width_ + w, value); }

    std::size_t count_nonzero() const {
        return static_cast<std::size_t>(std::count_if(data_.begin(), data_.end(), [](float v) { return v != 0.0f; }));
    }
    bool empty() const { return count_nonzero() == 0; }

    /// Pixelwise complement 1 - m, same kind.
    Mask complement() const {
        Mask out(kind_, height_, width_);
        for (std::size_t i = 0; i < data_.size(); ++i) {
            out.data_[i] = 1.0f - data_[i];
        }
        return out;
    }

    std::span<const float> data() const { return data_; }

    friend bool operator==(const Mask&, const Mask&) = default;

private:
    void check_value(float v, std::size_t index) const {
        const bool ok = kind_ == MaskKind::binary ? (v == 0.0f || v == 1.0f) : (v >= 0.0f && v <= 1.0f);
        if (!ok) {
            throw Error(ErrorCode::InvalidMaskValue,
                        std::string(kind_ == MaskKind::binary ? "binary" : "probability") +
                            " mask value out of range at element " + std::to_string(index));
        }
    }

    void validate() const {
        for (std::size_t i = 0; i < data_.size(); ++i) {
            check_value(data_[i], i);
        }
    }

    MaskKind kind_;
    std::size_t height_;
    std::size_t width_;
    std::vector<float> data_;
};

/// Raw per-pixel similarity scores in [-1, 1] (the distance map D).
class ScoreMap {
public:
    explicit ScoreMap(Extent e) : extent_(e), data_(e.pixels(), 0.0f) {}
    ScoreMap(Extent e, std::vector<float> data) : extent_(e), data_(std::move(data)) {
        detail::require_size(data_.size(), e.pixels(), "ScoreMap");
    }

    Extent extent() const { return extent_; }
    std::size_t pixels() const { return data_.size(); }
    float operator[](std::size_t pixel) const { return data_[pixel]; }
    float& operator[](std::size_t pixel) { return data_[pixel]; }
    std::span<const float> data() const { return data_; }

    friend bool operator==(const ScoreMap&, const ScoreMap&) = default;

private:
    Extent extent_;
    std::vector<float> data_;
};

enum class PrototypeRole : std::uint8_t { foreground, background };

class Prototype {
public:
    Prototype(std::vector<float> values, PrototypeRole role = PrototypeRole::foreground)
        : values_(std::move(values)), role_(role) {
        if (values_.empty()) {
            throw Error(ErrorCode::BadDims, "Prototype must have at least one channel");
        }
        detail::require_finite(values_, "Prototype");
    }

    std::size_t channels() const { return values_.size(); }
    PrototypeRole role() const { return role_; }
    float operator[](std::size_t c) const { return values_[c]; }
    std::span<const float> values() const { return values_; }

    Prototype scaled(float factor) const {
        std::vector<float> v(values_);
        for (auto& x : v) {
            x *= factor;
        }
        return Prototype(std::move(v), role_);
    }

    friend bool operator==(const Prototype&, const Prototype&) = default;

private:
    std::vector<float> values_;
    PrototypeRole role_;
};

/// One prototype per spatial position, stored [c][h][w] like FeatureMap.
class PrototypeField {
public:
    PrototypeField(std::size_t channels, std::size_t height, std::size_t width, std::vector<float> data)
        : channels_(channels), height_(height), width_(width), data_(std::move(data)) {
        detail::require_positive(channels, height, width, "PrototypeField");
        detail::require_size(data_.size(), channels * height * width, "PrototypeField");
        detail::require_finite(data_, "PrototypeField");
    }

    /// The same prototype repeated at every position.
    static PrototypeField broadcast(const Prototype& p, Extent e) {
        const std::size_t hw = e.pixels();
        std::vector<float> data(p.channels() * hw);
        for (std::size_t c = 0; c < p.channels(); ++c) {
            std::fill_n(data.begin() + static_cast<std::ptrdiff_t>(c * hw), hw, p[c]);
        }
        return PrototypeField(p.channels(), e.height, e.width, std::move(data));
    }

    /// A feature map reinterpreted as a field (every position is its own prototype).
    static PrototypeField from_features(const FeatureMap& f) {
        return PrototypeField(f.channels(), f.height(), f.width(), std::vector<float>(f.data().begin(), f.data().end()));
    }

    std::size_t channels() const { return channels_; }
    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    Extent extent() const { return {height_, width_}; }
    std::size_t pixels() const { return height_ * width_; }

    float at_pixel(std::size_t c, std::size_t pixel) const { return data_[c * pixels() + pixel]; }
    std::vector<float> column(std::size_t pixel) const {
        std::vector<float> out(channels_);
        for (std::size_t c = 0; c < channels_; ++c) {
            out[c] = at_pixel(c, pixel);
        }
        return out;
    }

    std::span<const float> data() const { return data_; }

    friend bool operator==(const PrototypeField&, const PrototypeField&) = default;

private:
    std::size_t channels_;
    std::size_t height_;
    std::size_t width_;
    std::vector<float> data_;
};

/// Row-major dense matrix with double storage; used for the affinity path.
class Matrix {
public:
    Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        detail::require_size(data_.size(), rows * cols, "Matrix");
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            m(i, i) = 1.0;
        }
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    std::span<const double> data() const { return data_; }

    Matrix transposed() const {
        Matrix t(cols_, rows_);
        for (std::size_t r = 0; r < rows_; ++r) {
            for (std::size_t c = 0; c < cols_; ++c) {
                t(c, r) = (*this)(r, c);
            }
        }
        return t;
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_;
    std::size_t cols_;
    std::vector<double> data_;
};

/// Foreground / background probability pair for one prediction stage.
struct Prediction {
    Mask fg;
    Mask bg;
};

} // namespace ssp

#endif // SSP_TENSOR_HPP
