#ifndef PANSEG_PHANTOM_HPP
#define PANSEG_PHANTOM_HPP

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "panseg/mask.hpp"
#include "panseg/rng.hpp"

namespace panseg {

/// Synthetic longitudinal ultrasound phantom: a dark lumen band between two
/// bright wall lines, with one or two plaque bumps protruding into the lumen,
/// under multiplicative speckle.
struct PhantomConfig {
    int width = 128, height = 128;
    int plaque_count = 0;       // 1, 2, or 0 = choose 1 or 2 at random
    double min_fg = 0.02, max_fg = 0.20;  // accepted mask foreground fraction
    int max_attempts = 64;

    // geometry draw ranges (fractions of image height/width)
    double wall_top_lo = 0.26, wall_top_hi = 0.34;
    double wall_bot_lo = 0.66, wall_bot_hi = 0.74;
    double wall_thickness_lo = 0.02, wall_thickness_hi = 0.05;
    double wobble_amp_hi = 0.015;
    double plaque_halfwidth_lo = 0.15, plaque_halfwidth_hi = 0.30;
    double plaque_depth_lo = 0.45, plaque_depth_hi = 0.85;  // of the usable lumen depth

    // intensities and noise
    double tissue = 0.42, lumen = 0.10, wall = 0.78, plaque = 0.55;
    double intensity_jitter = 0.03;
    double speckle_shape = 16.0;  // gamma shape; unit-mean multiplicative noise

    uint64_t seed = 0;

    void validate() const {
        require(width >= 32 && height >= 32, ErrorKind::invalid_argument,
                "PhantomConfig: size must be at least 32x32, got ", width, "x", height);
        require(plaque_count >= 0 && plaque_count <= 2, ErrorKind::invalid_argument,
                "PhantomConfig: plaque_count must be 0 (random), 1, or 2");
        require(min_fg > 0 && min_fg < max_fg && max_fg < 1, ErrorKind::invalid_argument,
                "PhantomConfig: need 0 < min_fg < max_fg < 1");
        require(speckle_shape >= 1, ErrorKind::invalid_argument,
                "PhantomConfig: speckle_shape must be >= 1");
        require(max_attempts >= 1, ErrorKind::invalid_argument,
                "PhantomConfig: max_attempts must be >= 1");
    }
};

struct Phantom {
    Tensor<uint8_t> image;  // [H,W]
    BinaryMask mask;        // plaque pixels, exact by construction
    int plaques = 0;
};

namespace detail {

struct PhantomGeometry {
    double top_frac, bot_frac, wt_frac;
    double amp, freq, phase_top, phase_bot;
    int count;
    struct PlaqueDraw {
        bool on_top;
        double xc_frac, hw_frac, depth_frac, intensity;
    } plq[2];
    double tissue_i, lumen_i, wall_i;
    double wall_top_y(int x, int w, int h) const {
        return (top_frac + amp * std::sin(2 * 3.14159265358979323846 * freq * x / w + phase_top)) *
               h;
    }
    double wall_bot_y(int x, int w, int h) const {
        return (bot_frac + amp * std::sin(2 * 3.14159265358979323846 * freq * x / w + phase_bot)) *
               h;
    }
};

inline PhantomGeometry draw_geometry(const PhantomConfig& cfg, Rng& r) {
    PhantomGeometry g{};
    g.top_frac = r.uniform(cfg.wall_top_lo, cfg.wall_top_hi);
    g.bot_frac = r.uniform(cfg.wall_bot_lo, cfg.wall_bot_hi);
    g.wt_frac = r.uniform(cfg.wall_thickness_lo, cfg.wall_thickness_hi);
    g.amp = r.uniform(0.0, cfg.wobble_amp_hi);
    g.freq = r.uniform(0.8, 2.2);
    g.phase_top = r.uniform(0.0, 2 * 3.14159265358979323846);
    g.phase_bot = r.uniform(0.0, 2 * 3.14159265358979323846);
    g.count = cfg.plaque_count ? cfg.plaque_count : 1 + int(r.below(2));
    const bool first_on_top = r.below(2) == 0;
    for (int j = 0; j < g.count; ++j) {
        auto& p = g.plq[j];
        // with two plaques, one sits on each wall
        p.on_top = g.count == 2 ? (j == 0) : first_on_top;
        p.xc_frac = r.uniform(0.22, 0.78);
        p.hw_frac = r.uniform(cfg.plaque_halfwidth_lo, cfg.plaque_halfwidth_hi);
        p.depth_frac = r.uniform(cfg.plaque_depth_lo, cfg.plaque_depth_hi);
        p.intensity = cfg.plaque + r.uniform(-cfg.intensity_jitter, cfg.intensity_jitter);
    }
    g.tissue_i = cfg.tissue + r.uniform(-cfg.intensity_jitter, cfg.intensity_jitter);
    g.lumen_i = cfg.lumen + r.uniform(-cfg.intensity_jitter, cfg.intensity_jitter);
    g.wall_i = cfg.wall + r.uniform(-cfg.intensity_jitter, cfg.intensity_jitter);
    return g;
}

}  // namespace detail

/// Generate one phantom. Retries with freshly forked substreams until the mask
/// foreground fraction lands in [min_fg, max_fg]; deterministic given rng.
inline Phantom synth_phantom(const PhantomConfig& cfg, Rng rng) {
    cfg.validate();
    const int H = cfg.height, W = cfg.width;
    for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
        Rng r = rng.fork(uint64_t(attempt));
        const detail::PhantomGeometry g = detail::draw_geometry(cfg, r);

        // per-column wall rows and lumen extent
        const size_t cols = static_cast<size_t>(W);
        std::vector<int> wall_top_a(cols), wall_top_b(cols);  // [a,b): top wall band
        std::vector<int> wall_bot_a(cols), wall_bot_b(cols);
        const double wt = g.wt_frac * H;
        for (int x = 0; x < W; ++x) {
            const double yt = g.wall_top_y(x, W, H);
            const double yb = g.wall_bot_y(x, W, H);
            wall_top_a[size_t(x)] = int(std::lround(yt));
            wall_top_b[size_t(x)] = int(std::lround(yt + wt));
            wall_bot_a[size_t(x)] = int(std::lround(yb - wt));
            wall_bot_b[size_t(x)] = int(std::lround(yb));
        }

        BinaryMask mask(H, W, MaskOrigin::label);
        std::vector<int8_t> plaque_ix(size_t(H) * size_t(W), -1);
        for (int j = 0; j < g.count; ++j) {
            const auto& p = g.plq[j];
            const double xc = p.xc_frac * W;
            const double hw = p.hw_frac * W;
            for (int x = 0; x < W; ++x) {
                const double u = (x - xc) / hw;
                if (u <= -1 || u >= 1) continue;
                const int lum_top = wall_top_b[size_t(x)];
                const int lum_bot = wall_bot_a[size_t(x)];  // exclusive
                const int lumen_h = lum_bot - lum_top;
                if (lumen_h <= 2) continue;
                // two plaques each get at most half the lumen so they stay disjoint
                const double avail = g.count == 2 ? 0.45 * lumen_h : 0.85 * lumen_h;
                const double cosu = std::cos(1.5707963267948966 * u);
                const int depth = int(std::lround(p.depth_frac * avail * cosu * cosu));
                for (int k = 0; k < depth; ++k) {
                    const int y = p.on_top ? lum_top + k : lum_bot - 1 - k;
                    if (y < 0 || y >= H) continue;
                    mask.set(y, x, 1);
                    plaque_ix[size_t(y) * size_t(W) + size_t(x)] = int8_t(j);
                }
            }
        }

        const double fg = mask.foreground_fraction();
        if (fg < cfg.min_fg || fg > cfg.max_fg) continue;

        Tensor<uint8_t> image({H, W});
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                double v;
                const int8_t pj = plaque_ix[size_t(y) * size_t(W) + size_t(x)];
                if (pj >= 0) {
                    v = g.plq[pj].intensity;
                } else if ((y >= wall_top_a[size_t(x)] && y < wall_top_b[size_t(x)]) ||
                           (y >= wall_bot_a[size_t(x)] && y < wall_bot_b[size_t(x)])) {
                    v = g.wall_i;
                } else if (y >= wall_top_b[size_t(x)] && y < wall_bot_a[size_t(x)]) {
                    v = g.lumen_i;
                } else {
                    v = g.tissue_i;
                }
                v *= r.speckle(cfg.speckle_shape);
                v = std::min(1.0, std::max(0.0, v));
                image[int64_t(y) * W + x] = uint8_t(std::lround(v * 255.0));
            }
        return Phantom{std::move(image), std::move(mask), g.count};
    }
    fail(ErrorKind::numeric, "synth_phantom: no draw hit foreground fraction [", cfg.min_fg, ", ",
         cfg.max_fg, "] after ", cfg.max_attempts, " attempts");
}

}  // namespace panseg

#endif  // PANSEG_PHANTOM_HPP
