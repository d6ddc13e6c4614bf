#ifndef SSP_SSPT_HPP
#define SSP_SSPT_HPP

// SSPT tensor files, little-endian, no padding:
//
//   "SSPT"          4 bytes magic
//   version   u16   = 1
//   kind      u8    0 = feature C x H x W float32
//                   1 = binary mask H x W uint8
//                   2 = probability mask H x W float32
//   dims      u32   C, H, W for kind 0; H, W for kinds 1 and 2
//   payload         row-major values

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ssp/error.hpp"
#include "ssp/tensor.hpp"

namespace ssp::sspt {

inline constexpr char kMagic[4] = {'S', 'S', 'P', 'T'};
inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 30;

enum class Kind : std::uint8_t { feature = 0, binary_mask = 1, probability_mask = 2 };

using Item = std::variant<FeatureMap, Mask>;

namespace detail {

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u16(std::uint16_t v) {
        out_.push_back(static_cast<std::uint8_t>(v & 0xFF));
        out_.push_back(static_cast<std::uint8_t>(v >> 8));
    }
    void u32(std::uint32_t v) {
        for (int s = 0; s < 32; s += 8) {
            out_.push_back(static_cast<std::uint8_t>((v >> s) & 0xFF));
        }
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return in_.size() - pos_; }

    void need(std::size_t n, const char* what) const {
        if (remaining() < n) {
            throw Error(ErrorCode::TruncatedPayload, std::string("file ends inside the ") + what + " at byte " +
                                                         std::to_string(in_.size()));
        }
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return in_[pos_++];
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        const auto v = static_cast<std::uint16_t>(in_[pos_] | (in_[pos_ + 1] << 8));
        pos_ += 2;
        return v;
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(in_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
        }
        pos_ += 4;
        return v;
    }
    float f32(const char* what) { return std::bit_cast<float>(u32(what)); }

private:
    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

inline std::uint32_t dim32(std::size_t d) {
    if (d > 0xFFFFFFFFu) {
        throw Error(ErrorCode::DimOverflow, "dimension does not fit in u32");
    }
    return static_cast<std::uint32_t>(d);
}

inline void header(Writer& w, Kind kind) {
    w.bytes(kMagic, 4);
    w.u16(kVersion);
    w.u8(static_cast<std::uint8_t>(kind));
}

inline std::uint64_t element_count(std::span<const std::uint32_t> dims) {
    std::uint64_t n = 1;
    for (auto d : dims) {
        if (d == 0) {
            throw Error(ErrorCode::BadDims, "zero-sized dimension");
        }
        n *= d;
        if (n > kMaxElements) {
            throw Error(ErrorCode::DimOverflow, "tensor exceeds " + std::to_string(kMaxElements) + " elements");
        }
    }
    return n;
}

} // namespace detail

inline std::vector<std::uint8_t> encode(const FeatureMap& f) {
    detail::Writer w;
    detail::header(w, Kind::feature);
    w.u32(detail::dim32(f.channels()));
    w.u32(detail::dim32(f.height()));
    w.u32(detail::dim32(f.width()));
    for (float v : f.data()) {
        w.f32(v);
    }
    return w.take();
}

inline std::vector<std::uint8_t> encode(const Mask& m) {
    detail::Writer w;
    detail::header(w, m.is_binary() ? Kind::binary_mask : Kind::probability_mask);
    w.u32(detail::dim32(m.height()));
    w.u32(detail::dim32(m.width()));
    for (float v : m.data()) {
        if (m.is_binary()) {
            w.u8(v != 0.0f ? 1 : 0);
        } else {
            w.f32(v);
        }
    }
    return w.take();
}

inline std::vector<std::uint8_t> encode(const Item& item) {
    return std::visit([](const auto& x) { return encode(x); }, item);
}

/// Parses one SSPT blob. Every failure is an ssp::Error with a format code.
inline Item decode(std::span<const std::uint8_t> bytes) {
    detail::Reader r(bytes);
    r.need(4, "magic");
    for (int i = 0; i < 4; ++i) {
        if (r.u8("magic") != static_cast<std::uint8_t>(kMagic[i])) {
            throw Error(ErrorCode::BadMagic, "missing SSPT magic");
        }
    }
    const std::uint16_t version = r.u16("version");
    if (version != kVersion) {
        throw Error(ErrorCode::BadVersion, "unsupported SSPT version " + std::to_string(version));
    }
    const std::uint8_t kind_byte = r.u8("kind");
    if (kind_byte > 2) {
        throw Error(ErrorCode::BadKind, "unknown SSPT kind " + std::to_string(kind_byte));
    }
    const auto kind = static_cast<Kind>(kind_byte);

    std::vector<std::uint32_t> dims(kind == Kind::feature ? 3 : 2);
    for (auto& d : dims) {
        d = r.u32("dims");
    }
    const std::uint64_t n = detail::element_count(dims);
    const std::uint64_t elem = kind == Kind::binary_mask ? 1 : 4;
    if (r.remaining() < n * elem) {
        throw Error(ErrorCode::TruncatedPayload, "payload needs " + std::to_string(n * elem) + " bytes, " +
                                                     std::to_string(r.remaining()) + " present");
    }
    if (r.remaining() > n * elem) {
        throw Error(ErrorCode::TrailingBytes,
                    std::to_string(r.remaining() - n * elem) + " bytes after the payload");
    }

    std::vector<float> data(static_cast<std::size_t>(n));
    for (auto& v : data) {
        const std::size_t at = r.offset();
        if (kind == Kind::binary_mask) {
            const std::uint8_t b = r.u8("payload");
            if (b > 1) {
                throw Error(ErrorCode::InvalidMaskValue, "binary mask byte " + std::to_string(b) + " at offset " +
                                                             std::to_string(at));
            }
            v = static_cast<float>(b);
            continue;
        }
        v = r.f32("payload");
        if (!std::isfinite(v)) {
            throw Error(ErrorCode::NonFiniteValue, "non-finite value at offset " + std::to_string(at));
        }
        if (kind == Kind::probability_mask && !(v >= 0.0f && v <= 1.0f)) {
            throw Error(ErrorCode::InvalidMaskValue, "probability outside [0, 1] at offset " + std::to_string(at));
        }
    }

    if (kind == Kind::feature) {
        return FeatureMap(dims[0], dims[1], dims[2], std::move(data));
    }
    return Mask(kind == Kind::binary_mask ? MaskKind::binary : MaskKind::probability, dims[0], dims[1],
                std::move(data));
}

inline Item read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot open " + path.string());
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode(bytes);
    } catch (const Error& e) {
        throw Error(e.code(), path.string() + ": " + e.message());
    }
}

inline void write_file(const std::filesystem::path& path, const Item& item) {
    const auto bytes = encode(item);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::Io, "cannot write " + path.string());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw Error(ErrorCode::Io, "short write to " + path.string());
    }
}

inline FeatureMap read_features(const std::filesystem::path& path) {
    auto item = read_file(path);
    if (auto* f = std::get_if<FeatureMap>(&item)) {
        return std::move(*f);
    }
    throw Error(ErrorCode::BadKind, path.string() + ": expected a feature map, found a mask");
}

inline Mask read_mask(const std::filesystem::path& path) {
    auto item = read_file(path);
    if (auto* m = std::get_if<Mask>(&item)) {
        return std::move(*m);
    }
    throw Error(ErrorCode::BadKind, path.string() + ": expected a mask, found a feature map");
}

} // namespace ssp::sspt

namespace ssp {

inline sspt::Item read_tensor_file(const std::filesystem::path& path) { return sspt::read_file(path); }
inline void write_tensor_file(const std::filesystem::path& path, const sspt::Item& item) { sspt::write_file(path, item); }

} // namespace ssp

#endif // SSP_SSPT_HPP
