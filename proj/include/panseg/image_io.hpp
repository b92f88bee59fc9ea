#ifndef PANSEG_IMAGE_IO_HPP
#define PANSEG_IMAGE_IO_HPP

#include <zlib.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>
#include <vector>

#include "panseg/mask.hpp"

namespace panseg {

namespace detail {

inline std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), ErrorKind::io, "cannot open ", path, " for reading");
    f.seekg(0, std::ios::end);
    const std::streamoff len = f.tellg();
    f.seekg(0, std::ios::beg);
    std::vector<uint8_t> buf(static_cast<size_t>(len));
    if (len > 0) f.read(reinterpret_cast<char*>(buf.data()), len);
    require(f.good(), ErrorKind::io, "short read from ", path);
    return buf;
}

inline void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    require(f.good(), ErrorKind::io, "cannot open ", path, " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    f.flush();
    require(f.good(), ErrorKind::io, "short write to ", path);
}

}  // namespace detail

// ---- PGM (binary P5, maxval <= 255) ---------------------------------------------

inline Tensor<uint8_t> decode_pgm(const std::vector<uint8_t>& bytes, const std::string& what) {
    size_t pos = 0;
    auto next_token = [&]() -> std::string {
        while (pos < bytes.size()) {
            const char c = char(bytes[pos]);
            if (c == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                ++pos;
            } else {
                break;
            }
        }
        const size_t start = pos;
        while (pos < bytes.size() && !std::isspace(bytes[pos]) && bytes[pos] != '#') ++pos;
        require(pos > start, ErrorKind::format, what, ": truncated PGM header");
        return std::string(bytes.begin() + std::ptrdiff_t(start),
                           bytes.begin() + std::ptrdiff_t(pos));
    };
    auto next_int = [&](const char* field) {
        const std::string tok = next_token();
        long v = 0;
        for (char c : tok) {
            require(c >= '0' && c <= '9', ErrorKind::format, what, ": bad ", field,
                    " in PGM header: \"", tok, "\"");
            v = v * 10 + (c - '0');
            require(v <= 1 << 20, ErrorKind::format, what, ": ", field, " out of range");
        }
        return int(v);
    };
    require(next_token() == "P5", ErrorKind::format, what, ": not a binary (P5) PGM file");
    const int w = next_int("width");
    const int h = next_int("height");
    const int maxval = next_int("maxval");
    require(w >= 1 && h >= 1, ErrorKind::format, what, ": bad PGM dimensions ", w, "x", h);
    require(maxval >= 1, ErrorKind::format, what, ": bad PGM maxval ", maxval);
    require(maxval <= 255, ErrorKind::format, what, ": PGM maxval ", maxval,
            " means 16-bit samples; only 8-bit grayscale is supported");
    require(pos < bytes.size() && std::isspace(bytes[pos]), ErrorKind::format, what,
            ": missing whitespace after PGM maxval");
    ++pos;  // exactly one whitespace byte separates header and raster
    const size_t need = size_t(w) * size_t(h);
    require(bytes.size() - pos >= need, ErrorKind::format, what, ": PGM raster truncated (need ",
            need, " bytes, have ", bytes.size() - pos, ")");
    Tensor<uint8_t> img({h, w});
    std::copy(bytes.begin() + std::ptrdiff_t(pos), bytes.begin() + std::ptrdiff_t(pos + need),
              img.data());
    return img;
}

inline std::vector<uint8_t> encode_pgm(const Tensor<uint8_t>& img) {
    require(img.rank() == 2, ErrorKind::shape_mismatch, "encode_pgm: need [H,W], got ",
            shape_str(img.shape()));
    char header[64];
    const int n = std::snprintf(header, sizeof header, "P5\n%d %d\n255\n", img.dim(1), img.dim(0));
    std::vector<uint8_t> out(header, header + n);
    out.insert(out.end(), img.data(), img.data() + img.numel());
    return out;
}

inline Tensor<uint8_t> read_pgm(const std::string& path) {
    return decode_pgm(detail::read_file(path), path);
}

inline void write_pgm(const std::string& path, const Tensor<uint8_t>& img) {
    detail::write_file(path, encode_pgm(img));
}

// ---- PNG (8-bit grayscale, non-interlaced) ----------------------------------------

namespace detail {

inline void put_u32be(std::vector<uint8_t>& v, uint32_t x) {
    v.push_back(uint8_t(x >> 24));
    v.push_back(uint8_t(x >> 16));
    v.push_back(uint8_t(x >> 8));
    v.push_back(uint8_t(x));
}

inline uint32_t get_u32be(const uint8_t* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

inline void png_chunk(std::vector<uint8_t>& out, const char type[4],
                      const std::vector<uint8_t>& data) {
    put_u32be(out, uint32_t(data.size()));
    const size_t type_at = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    const uLong crc = ::crc32(::crc32(0L, Z_NULL, 0), out.data() + type_at, uInt(4 + data.size()));
    put_u32be(out, uint32_t(crc));
}

inline uint8_t paeth(uint8_t a, uint8_t b, uint8_t c) {
    const int p = int(a) + int(b) - int(c);
    const int pa = std::abs(p - int(a)), pb = std::abs(p - int(b)), pc = std::abs(p - int(c));
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

constexpr uint8_t png_signature[8] = {137, 80, 78, 71, 13, 10, 26, 10};

}  // namespace detail

inline std::vector<uint8_t> encode_png(const Tensor<uint8_t>& img) {
    require(img.rank() == 2, ErrorKind::shape_mismatch, "encode_png: need [H,W], got ",
            shape_str(img.shape()));
    const int H = img.dim(0), W = img.dim(1);
    std::vector<uint8_t> raw;
    raw.reserve(size_t(H) * (size_t(W) + 1));
    for (int y = 0; y < H; ++y) {
        raw.push_back(0);  // filter: none
        raw.insert(raw.end(), img.data() + int64_t(y) * W, img.data() + int64_t(y + 1) * W);
    }
    uLongf comp_len = ::compressBound(uLong(raw.size()));
    std::vector<uint8_t> comp(comp_len);
    const int rc = ::compress2(comp.data(), &comp_len, raw.data(), uLong(raw.size()),
                               Z_DEFAULT_COMPRESSION);
    require(rc == Z_OK, ErrorKind::io, "encode_png: deflate failed (zlib rc ", rc, ")");
    comp.resize(comp_len);

    std::vector<uint8_t> out(detail::png_signature, detail::png_signature + 8);
    std::vector<uint8_t> ihdr;
    detail::put_u32be(ihdr, uint32_t(W));
    detail::put_u32be(ihdr, uint32_t(H));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(0);  // color type: grayscale
    ihdr.push_back(0);  // compression
    ihdr.push_back(0);  // filter method
    ihdr.push_back(0);  // interlace: none
    detail::png_chunk(out, "IHDR", ihdr);
    detail::png_chunk(out, "IDAT", comp);
    detail::png_chunk(out, "IEND", {});
    return out;
}

inline Tensor<uint8_t> decode_png(const std::vector<uint8_t>& bytes, const std::string& what) {
    require(bytes.size() >= 8 && std::equal(detail::png_signature, detail::png_signature + 8,
                                            bytes.data()),
            ErrorKind::format, what, ": not a PNG file");
    size_t pos = 8;
    int W = -1, H = -1;
    bool saw_ihdr = false, saw_iend = false;
    std::vector<uint8_t> idat;
    while (pos + 8 <= bytes.size()) {
        const uint32_t len = detail::get_u32be(bytes.data() + pos);
        require(pos + 12 + len <= bytes.size(), ErrorKind::format, what,
                ": truncated PNG chunk");
        const std::string type(bytes.begin() + std::ptrdiff_t(pos + 4),
                               bytes.begin() + std::ptrdiff_t(pos + 8));
        const uint8_t* data = bytes.data() + pos + 8;
        const uLong crc_want = detail::get_u32be(data + len);
        const uLong crc_got =
            ::crc32(::crc32(0L, Z_NULL, 0), bytes.data() + pos + 4, uInt(4 + len));
        require(crc_got == crc_want, ErrorKind::format, what, ": PNG chunk ", type,
                " CRC mismatch");
        if (type == "IHDR") {
            require(len == 13, ErrorKind::format, what, ": bad IHDR length");
            W = int(detail::get_u32be(data));
            H = int(detail::get_u32be(data + 4));
            const int depth = data[8], color = data[9], interlace = data[12];
            require(W >= 1 && H >= 1, ErrorKind::format, what, ": bad PNG dimensions");
            require(depth == 8, ErrorKind::format, what, ": PNG bit depth ", depth,
                    " unsupported; only 8-bit grayscale is handled");
            require(color == 0, ErrorKind::format, what, ": PNG color type ", color,
                    " unsupported; only grayscale (0) is handled");
            require(data[10] == 0 && data[11] == 0, ErrorKind::format, what,
                    ": nonstandard PNG compression/filter method");
            require(interlace == 0, ErrorKind::format, what, ": interlaced PNG unsupported");
            saw_ihdr = true;
        } else if (type == "IDAT") {
            require(saw_ihdr, ErrorKind::format, what, ": IDAT before IHDR");
            idat.insert(idat.end(), data, data + len);
        } else if (type == "IEND") {
            saw_iend = true;
            pos += 12 + len;
            break;
        }
        // ancillary chunks are skipped
        pos += 12 + len;
    }
    require(saw_ihdr && saw_iend, ErrorKind::format, what, ": missing IHDR or IEND");
    require(!idat.empty(), ErrorKind::format, what, ": no IDAT data");

    const size_t stride = size_t(W) + 1;
    std::vector<uint8_t> raw(stride * size_t(H));
    uLongf raw_len = uLongf(raw.size());
    const int rc = ::uncompress(raw.data(), &raw_len, idat.data(), uLong(idat.size()));
    require(rc == Z_OK && raw_len == raw.size(), ErrorKind::format, what,
            ": PNG inflate failed (zlib rc ", rc, ")");

    Tensor<uint8_t> img({H, W});
    std::vector<uint8_t> prev(size_t(W), 0);
    for (int y = 0; y < H; ++y) {
        const uint8_t filter = raw[size_t(y) * stride];
        const uint8_t* src = raw.data() + size_t(y) * stride + 1;
        uint8_t* dst = img.data() + int64_t(y) * W;
        switch (filter) {
            case 0:
                std::copy(src, src + W, dst);
                break;
            case 1:  // sub
                for (int x = 0; x < W; ++x) dst[x] = uint8_t(src[x] + (x ? dst[x - 1] : 0));
                break;
            case 2:  // up
                for (int x = 0; x < W; ++x) dst[x] = uint8_t(src[x] + prev[size_t(x)]);
                break;
            case 3:  // average
                for (int x = 0; x < W; ++x)
                    dst[x] = uint8_t(src[x] + ((x ? dst[x - 1] : 0) + prev[size_t(x)]) / 2);
                break;
            case 4:  // paeth
                for (int x = 0; x < W; ++x)
                    dst[x] = uint8_t(src[x] + detail::paeth(x ? dst[x - 1] : 0, prev[size_t(x)],
                                                            x ? prev[size_t(x - 1)] : 0));
                break;
            default:
                fail(ErrorKind::format, what, ": unknown PNG filter type ", int(filter));
        }
        std::copy(dst, dst + W, prev.begin());
    }
    return img;
}

inline Tensor<uint8_t> read_png(const std::string& path) {
    return decode_png(detail::read_file(path), path);
}

inline void write_png(const std::string& path, const Tensor<uint8_t>& img) {
    detail::write_file(path, encode_png(img));
}

// ---- format dispatch and float/mask views ------------------------------------------

inline bool has_suffix(const std::string& s, const std::string& suf) {
    return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

inline Tensor<uint8_t> read_gray8(const std::string& path) {
    if (has_suffix(path, ".png")) return read_png(path);
    if (has_suffix(path, ".pgm")) return read_pgm(path);
    fail(ErrorKind::invalid_argument, path, ": unsupported image extension (use .pgm or .png)");
}

inline void write_gray8(const std::string& path, const Tensor<uint8_t>& img) {
    if (has_suffix(path, ".png")) return write_png(path, img);
    if (has_suffix(path, ".pgm")) return write_pgm(path, img);
    fail(ErrorKind::invalid_argument, path, ": unsupported image extension (use .pgm or .png)");
}

/// 8-bit grayscale file -> [H,W] floats in [0,1].
template <class S = float>
Tensor<S> load_image(const std::string& path) {
    const Tensor<uint8_t> raw = read_gray8(path);
    Tensor<S> img(raw.shape());
    for (int64_t i = 0; i < raw.numel(); ++i) img[i] = S(raw[i]) / S(255);
    return img;
}

/// [H,W] floats in [0,1] -> 8-bit grayscale file (round to nearest, clamped).
template <class S>
void save_image(const std::string& path, const Tensor<S>& img) {
    require(img.rank() == 2, ErrorKind::shape_mismatch, "save_image: need [H,W], got ",
            shape_str(img.shape()));
    Tensor<uint8_t> raw(img.shape());
    for (int64_t i = 0; i < img.numel(); ++i) {
        const S v = std::min(S(1), std::max(S(0), img[i]));
        raw[i] = uint8_t(std::lround(double(v) * 255.0));
    }
    write_gray8(path, raw);
}

/// Mask file: values >= 128 load as foreground.
inline BinaryMask load_mask(const std::string& path, MaskOrigin origin = MaskOrigin::label) {
    const Tensor<uint8_t> raw = read_gray8(path);
    Tensor<uint8_t> px(raw.shape());
    for (int64_t i = 0; i < raw.numel(); ++i) px[i] = raw[i] >= 128 ? 1 : 0;
    return BinaryMask(std::move(px), origin);
}

/// Masks are written as {0, 255}.
inline void save_mask(const std::string& path, const BinaryMask& m) {
    Tensor<uint8_t> raw(m.px.shape());
    for (int64_t i = 0; i < raw.numel(); ++i) raw[i] = m.px[i] ? 255 : 0;
    write_gray8(path, raw);
}

}  // namespace panseg

#endif  // PANSEG_IMAGE_IO_HPP
