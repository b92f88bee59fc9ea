#ifndef PANSEG_AUGMENT_HPP
#define PANSEG_AUGMENT_HPP

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "panseg/mask.hpp"
#include "panseg/rng.hpp"

namespace panseg {

enum class AugTag { none, hflip, vflip, rot180, rot_p30, rot_m30, elastic };

inline const char* aug_name(AugTag t) {
    switch (t) {
        case AugTag::none: return "none";
        case AugTag::hflip: return "hflip";
        case AugTag::vflip: return "vflip";
        case AugTag::rot180: return "rot180";
        case AugTag::rot_p30: return "rot+30";
        case AugTag::rot_m30: return "rot-30";
        case AugTag::elastic: return "elastic";
    }
    return "?";
}

/// Filesystem-safe id suffix for an augmented sample.
inline const char* aug_suffix(AugTag t) {
    switch (t) {
        case AugTag::none: return "none";
        case AugTag::hflip: return "hflip";
        case AugTag::vflip: return "vflip";
        case AugTag::rot180: return "rot180";
        case AugTag::rot_p30: return "rotp30";
        case AugTag::rot_m30: return "rotm30";
        case AugTag::elastic: return "elastic";
    }
    return "?";
}

// ---- exact index transforms ---------------------------------------------------

template <class T>
Tensor<T> hflip(const Tensor<T>& img) {
    require(img.rank() == 2, ErrorKind::shape_mismatch, "hflip: need [H,W]");
    const int H = img.dim(0), W = img.dim(1);
    Tensor<T> out(img.shape());
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) out[int64_t(y) * W + x] = img[int64_t(y) * W + (W - 1 - x)];
    return out;
}

template <class T>
Tensor<T> vflip(const Tensor<T>& img) {
    require(img.rank() == 2, ErrorKind::shape_mismatch, "vflip: need [H,W]");
    const int H = img.dim(0), W = img.dim(1);
    Tensor<T> out(img.shape());
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) out[int64_t(y) * W + x] = img[int64_t(H - 1 - y) * W + x];
    return out;
}

template <class T>
Tensor<T> rot180(const Tensor<T>& img) {
    require(img.rank() == 2, ErrorKind::shape_mismatch, "rot180: need [H,W]");
    const int H = img.dim(0), W = img.dim(1);
    Tensor<T> out(img.shape());
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            out[int64_t(y) * W + x] = img[int64_t(H - 1 - y) * W + (W - 1 - x)];
    return out;
}

// ---- rotation about the image center ---------------------------------------------

/// Rotate by `degrees` about the pixel-grid center, same output size,
/// out-of-bounds filled with `fill`. Bilinear interpolation.
template <class S>
Tensor<S> rotate_bilinear(const Tensor<S>& img, double degrees, S fill = S(0)) {
    require(img.rank() == 2, ErrorKind::shape_mismatch, "rotate_bilinear: need [H,W]");
    const int H = img.dim(0), W = img.dim(1);
    const double th = degrees * 3.14159265358979323846 / 180.0;
    const double c = std::cos(th), s = std::sin(th);
    const double cy = (H - 1) / 2.0, cx = (W - 1) / 2.0;
    Tensor<S> out(img.shape());
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            // inverse map: where did this output pixel come from?
            const double dx = x - cx, dy = y - cy;
            const double sx = cx + c * dx + s * dy;
            const double sy = cy - s * dx + c * dy;
            const int x0 = int(std::floor(sx)), y0 = int(std::floor(sy));
            const double fx = sx - x0, fy = sy - y0;
            auto pick = [&](int yy, int xx) -> double {
                if (yy < 0 || yy >= H || xx < 0 || xx >= W) return double(fill);
                return double(img[int64_t(yy) * W + xx]);
            };
            const double v = (1 - fy) * ((1 - fx) * pick(y0, x0) + fx * pick(y0, x0 + 1)) +
                             fy * ((1 - fx) * pick(y0 + 1, x0) + fx * pick(y0 + 1, x0 + 1));
            out[int64_t(y) * W + x] = S(v);
        }
    return out;
}

/// Same geometry as rotate_bilinear but nearest-neighbor, for masks.
inline Tensor<uint8_t> rotate_nearest(const Tensor<uint8_t>& img, double degrees,
                                      uint8_t fill = 0) {
    require(img.rank() == 2, ErrorKind::shape_mismatch, "rotate_nearest: need [H,W]");
    const int H = img.dim(0), W = img.dim(1);
    const double th = degrees * 3.14159265358979323846 / 180.0;
    const double c = std::cos(th), s = std::sin(th);
    const double cy = (H - 1) / 2.0, cx = (W - 1) / 2.0;
    Tensor<uint8_t> out(img.shape());
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const double dx = x - cx, dy = y - cy;
            const int sx = int(std::lround(cx + c * dx + s * dy));
            const int sy = int(std::lround(cy - s * dx + c * dy));
            out[int64_t(y) * W + x] = (sy < 0 || sy >= H || sx < 0 || sx >= W)
                                          ? fill
                                          : img[int64_t(sy) * W + sx];
        }
    return out;
}

// ---- elastic deformation -----------------------------------------------------------

struct ElasticConfig {
    double alpha = 8.0;         // displacement magnitude in pixels at reference width
    double sigma = 6.0;         // field smoothing in pixels at reference width
    int reference_width = 128;  // alpha and sigma scale proportionally with image width
};

namespace detail {

/// In-place separable Gaussian smoothing, kernel truncated at 3 sigma,
/// replicate boundary.
inline void gaussian_smooth(Tensor<double>& f, double sigma) {
    const int H = f.dim(0), W = f.dim(1);
    const int r = int(std::ceil(3.0 * sigma));
    std::vector<double> k(size_t(2 * r + 1));
    double norm = 0;
    for (int i = -r; i <= r; ++i) {
        k[size_t(i + r)] = std::exp(-double(i) * i / (2 * sigma * sigma));
        norm += k[size_t(i + r)];
    }
    for (double& v : k) v /= norm;

    Tensor<double> tmp(f.shape());
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double acc = 0;
            for (int i = -r; i <= r; ++i) {
                const int xx = std::min(W - 1, std::max(0, x + i));
                acc += k[size_t(i + r)] * f[int64_t(y) * W + xx];
            }
            tmp[int64_t(y) * W + x] = acc;
        }
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double acc = 0;
            for (int i = -r; i <= r; ++i) {
                const int yy = std::min(H - 1, std::max(0, y + i));
                acc += k[size_t(i + r)] * tmp[int64_t(yy) * W + x];
            }
            f[int64_t(y) * W + x] = acc;
        }
}

}  // namespace detail

/// Per-pixel displacement fields for an elastic warp: dx drawn first then dy,
/// each Uniform(-1,1) per pixel in row-major order, Gaussian-smoothed, scaled
/// by alpha. Returned as (dy, dx).
inline std::pair<Tensor<double>, Tensor<double>> elastic_fields(int h, int w, double alpha,
                                                                double sigma, Rng rng) {
    require(alpha >= 0 && sigma > 0, ErrorKind::invalid_argument,
            "elastic_fields: need alpha >= 0, sigma > 0");
    Tensor<double> dx({h, w}), dy({h, w});
    for (int64_t i = 0; i < dx.numel(); ++i) dx[i] = rng.uniform(-1.0, 1.0);
    for (int64_t i = 0; i < dy.numel(); ++i) dy[i] = rng.uniform(-1.0, 1.0);
    detail::gaussian_smooth(dx, sigma);
    detail::gaussian_smooth(dy, sigma);
    for (int64_t i = 0; i < dx.numel(); ++i) dx[i] *= alpha;
    for (int64_t i = 0; i < dy.numel(); ++i) dy[i] *= alpha;
    return {std::move(dy), std::move(dx)};
}

template <class S>
Tensor<S> warp_bilinear(const Tensor<S>& img, const Tensor<double>& dy, const Tensor<double>& dx,
                        S fill = S(0)) {
    const int H = img.dim(0), W = img.dim(1);
    Tensor<S> out(img.shape());
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const double sx = x + dx[int64_t(y) * W + x];
            const double sy = y + dy[int64_t(y) * W + x];
            const int x0 = int(std::floor(sx)), y0 = int(std::floor(sy));
            const double fx = sx - x0, fy = sy - y0;
            auto pick = [&](int yy, int xx) -> double {
                if (yy < 0 || yy >= H || xx < 0 || xx >= W) return double(fill);
                return double(img[int64_t(yy) * W + xx]);
            };
            const double v = (1 - fy) * ((1 - fx) * pick(y0, x0) + fx * pick(y0, x0 + 1)) +
                             fy * ((1 - fx) * pick(y0 + 1, x0) + fx * pick(y0 + 1, x0 + 1));
            out[int64_t(y) * W + x] = S(v);
        }
    return out;
}

inline Tensor<uint8_t> warp_nearest(const Tensor<uint8_t>& img, const Tensor<double>& dy,
                                    const Tensor<double>& dx, uint8_t fill = 0) {
    const int H = img.dim(0), W = img.dim(1);
    Tensor<uint8_t> out(img.shape());
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const int sx = int(std::lround(x + dx[int64_t(y) * W + x]));
            const int sy = int(std::lround(y + dy[int64_t(y) * W + x]));
            out[int64_t(y) * W + x] =
                (sy < 0 || sy >= H || sx < 0 || sx >= W) ? fill : img[int64_t(sy) * W + sx];
        }
    return out;
}

// ---- the six-transform augmentation set ----------------------------------------------

template <class S>
struct AugmentedPair {
    AugTag tag;
    Tensor<S> image;
    BinaryMask mask;
};

/// One image/mask pair deformed by the same elastic field; deterministic given rng.
template <class S>
AugmentedPair<S> elastic_deform(const Tensor<S>& img, const BinaryMask& mask,
                                const ElasticConfig& cfg, Rng rng) {
    require(img.rank() == 2 && img.dim(0) == mask.h() && img.dim(1) == mask.w(),
            ErrorKind::shape_mismatch, "elastic_deform: image ", shape_str(img.shape()),
            " vs mask ", mask.h(), "x", mask.w());
    const double scale = double(img.dim(1)) / double(cfg.reference_width);
    auto [dy, dx] = elastic_fields(img.dim(0), img.dim(1), cfg.alpha * scale, cfg.sigma * scale,
                                   rng);
    Tensor<uint8_t> warped_mask = warp_nearest(mask.px, dy, dx);
    return {AugTag::elastic, warp_bilinear(img, dy, dx), BinaryMask(std::move(warped_mask),
                                                                    mask.origin)};
}

/// The full augmentation set: hflip, vflip, rot180, +30 deg, -30 deg, elastic —
/// six derived pairs, the original excluded. Images are resampled bilinearly,
/// masks by nearest neighbor, with the identical geometry.
template <class S>
std::vector<AugmentedPair<S>> augment_pair(const Tensor<S>& img, const BinaryMask& mask,
                                           const ElasticConfig& elastic_cfg, Rng elastic_rng) {
    require(img.rank() == 2 && img.dim(0) == mask.h() && img.dim(1) == mask.w(),
            ErrorKind::shape_mismatch, "augment_pair: image ", shape_str(img.shape()), " vs mask ",
            mask.h(), "x", mask.w());
    std::vector<AugmentedPair<S>> out;
    out.reserve(6);
    out.push_back({AugTag::hflip, hflip(img), BinaryMask(hflip(mask.px), mask.origin)});
    out.push_back({AugTag::vflip, vflip(img), BinaryMask(vflip(mask.px), mask.origin)});
    out.push_back({AugTag::rot180, rot180(img), BinaryMask(rot180(mask.px), mask.origin)});
    out.push_back({AugTag::rot_p30, rotate_bilinear(img, 30.0),
                   BinaryMask(rotate_nearest(mask.px, 30.0), mask.origin)});
    out.push_back({AugTag::rot_m30, rotate_bilinear(img, -30.0),
                   BinaryMask(rotate_nearest(mask.px, -30.0), mask.origin)});
    out.push_back(elastic_deform(img, mask, elastic_cfg, elastic_rng));
    return out;
}

}  // namespace panseg

#endif  // PANSEG_AUGMENT_HPP
