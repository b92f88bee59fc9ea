#ifndef PANSEG_POSTPROCESS_HPP
#define PANSEG_POSTPROCESS_HPP

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "panseg/mask.hpp"

namespace panseg {

struct StructuringElement {
    Tensor<uint8_t> kernel;  // odd square, values 0/1, at least one 1
    int iterations = 1;

    static StructuringElement box3x3() {
        return StructuringElement{Tensor<uint8_t>::full({3, 3}, uint8_t(1)), 1};
    }

    void validate() const {
        require(kernel.rank() == 2 && kernel.dim(0) == kernel.dim(1) && kernel.dim(0) % 2 == 1,
                ErrorKind::invalid_argument, "StructuringElement: kernel must be odd square, got ",
                shape_str(kernel.shape()));
        require(iterations >= 1, ErrorKind::invalid_argument,
                "StructuringElement: iterations must be >= 1");
        int ones = 0;
        for (int64_t i = 0; i < kernel.numel(); ++i) {
            require(kernel[i] <= 1, ErrorKind::invalid_argument,
                    "StructuringElement: kernel entries must be 0/1");
            ones += kernel[i];
        }
        require(ones >= 1, ErrorKind::invalid_argument,
                "StructuringElement: kernel needs at least one 1");
    }
};

/// Morphological erosion: a pixel survives iff every 1-position of the kernel
/// centered on it lies on foreground. Out-of-bounds counts as background, so
/// border pixels always erode away under a full box kernel.
inline BinaryMask erode(const BinaryMask& m, const StructuringElement& se) {
    se.validate();
    const int H = m.h(), W = m.w();
    const int k = se.kernel.dim(0), r = k / 2;
    BinaryMask cur = m;
    for (int it = 0; it < se.iterations; ++it) {
        BinaryMask out(H, W, m.origin);
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                if (!cur.at(y, x)) continue;
                bool keep = true;
                for (int ky = 0; keep && ky < k; ++ky)
                    for (int kx = 0; kx < k; ++kx) {
                        if (!se.kernel[int64_t(ky) * k + kx]) continue;
                        const int yy = y + ky - r, xx = x + kx - r;
                        if (yy < 0 || yy >= H || xx < 0 || xx >= W || !cur.at(yy, xx)) {
                            keep = false;
                            break;
                        }
                    }
                if (keep) out.set(y, x, 1);
            }
        cur = std::move(out);
    }
    return cur;
}

struct LabeledComponents {
    Tensor<int32_t> labels;       // [H,W], 0 = background, labels 1..num in
                                  // first-encounter row-major order
    int num = 0;
    std::vector<int64_t> areas;   // areas[l-1] = pixel count of label l
    std::vector<int> ranked;      // labels sorted by area descending, ties by lower label

    int64_t area_of(int label) const { return areas[size_t(label - 1)]; }
};

namespace detail {

inline int uf_find(std::vector<int>& parent, int i) {
    while (parent[size_t(i)] != i) {
        parent[size_t(i)] = parent[size_t(parent[size_t(i)])];
        i = parent[size_t(i)];
    }
    return i;
}

inline void uf_union(std::vector<int>& parent, int a, int b) {
    a = uf_find(parent, a);
    b = uf_find(parent, b);
    if (a != b) parent[size_t(std::max(a, b))] = std::min(a, b);
}

}  // namespace detail

/// Two-pass union-find connected-component labeling. Components are maximal
/// under the given connectivity (8 or 4) and numbered in the order their first
/// pixel appears in a row-major scan.
inline LabeledComponents label_components(const BinaryMask& m, int connectivity = 8) {
    require(connectivity == 4 || connectivity == 8, ErrorKind::invalid_argument,
            "label_components: connectivity must be 4 or 8, got ", connectivity);
    const int H = m.h(), W = m.w();
    Tensor<int32_t> prov = Tensor<int32_t>::zeros({H, W});
    std::vector<int> parent{0};  // parent[0] unused (background)
    int next = 1;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            if (!m.at(y, x)) continue;
            // neighbors already scanned: W, and (for 8-conn) NW/N/NE, (4-conn) N
            int neigh[4];
            int nn = 0;
            auto consider = [&](int yy, int xx) {
                if (yy >= 0 && yy < H && xx >= 0 && xx < W) {
                    const int32_t l = prov[int64_t(yy) * W + xx];
                    if (l) neigh[nn++] = l;
                }
            };
            consider(y, x - 1);
            consider(y - 1, x);
            if (connectivity == 8) {
                consider(y - 1, x - 1);
                consider(y - 1, x + 1);
            }
            if (nn == 0) {
                prov[int64_t(y) * W + x] = next;
                parent.push_back(next);
                ++next;
            } else {
                int mn = neigh[0];
                for (int i = 1; i < nn; ++i) mn = std::min(mn, neigh[i]);
                prov[int64_t(y) * W + x] = mn;
                for (int i = 0; i < nn; ++i) detail::uf_union(parent, mn, neigh[i]);
            }
        }

    LabeledComponents lc{Tensor<int32_t>::zeros({H, W}), 0, {}, {}};
    std::vector<int> final_of(size_t(next), 0);  // root -> final label
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const int32_t p = prov[int64_t(y) * W + x];
            if (!p) continue;
            const int root = detail::uf_find(parent, p);
            int& f = final_of[size_t(root)];
            if (!f) {
                f = ++lc.num;
                lc.areas.push_back(0);
            }
            lc.labels[int64_t(y) * W + x] = f;
            ++lc.areas[size_t(f - 1)];
        }
    lc.ranked.resize(size_t(lc.num));
    std::iota(lc.ranked.begin(), lc.ranked.end(), 1);
    std::sort(lc.ranked.begin(), lc.ranked.end(), [&](int a, int b) {
        if (lc.area_of(a) != lc.area_of(b)) return lc.area_of(a) > lc.area_of(b);
        return a < b;
    });
    return lc;
}

struct PostprocessConfig {
    double area_ratio = 5.0;
    int connectivity = 8;
    StructuringElement se = StructuringElement::box3x3();

    void validate() const {
        require(area_ratio > 1.0, ErrorKind::invalid_argument,
                "PostprocessConfig: area_ratio must be > 1, got ", area_ratio);
        require(connectivity == 4 || connectivity == 8, ErrorKind::invalid_argument,
                "PostprocessConfig: connectivity must be 4 or 8");
        se.validate();
    }
};

/// Largest-component retention rule: nothing -> {}; one component -> it;
/// otherwise the largest C1 plus the second-largest C2 iff
/// area(C1) <= area_ratio * area(C2). Anything past the top two is discarded.
inline std::vector<int> select_components(const LabeledComponents& lc,
                                          const PostprocessConfig& cfg = {}) {
    if (lc.num == 0) return {};
    if (lc.num == 1) return {lc.ranked[0]};
    const int c1 = lc.ranked[0], c2 = lc.ranked[1];
    if (double(lc.area_of(c1)) <= cfg.area_ratio * double(lc.area_of(c2))) return {c1, c2};
    return {c1};
}

/// Fill enclosed holes: background pixels with no 4-connected background path
/// to the image border become foreground.
inline BinaryMask fill_holes(const BinaryMask& m) {
    const int H = m.h(), W = m.w();
    Tensor<uint8_t> inv({H, W});
    for (int64_t i = 0; i < inv.numel(); ++i) inv[i] = m.px[i] ? 0 : 1;
    const LabeledComponents bg = label_components(BinaryMask(std::move(inv), m.origin), 4);
    std::vector<char> touches_border(size_t(bg.num + 1), 0);
    for (int x = 0; x < W; ++x) {
        if (int32_t l = bg.labels[x]) touches_border[size_t(l)] = 1;
        if (int32_t l = bg.labels[int64_t(H - 1) * W + x]) touches_border[size_t(l)] = 1;
    }
    for (int y = 0; y < H; ++y) {
        if (int32_t l = bg.labels[int64_t(y) * W]) touches_border[size_t(l)] = 1;
        if (int32_t l = bg.labels[int64_t(y) * W + W - 1]) touches_border[size_t(l)] = 1;
    }
    BinaryMask out = m;
    for (int64_t i = 0; i < out.px.numel(); ++i) {
        const int32_t l = bg.labels[i];
        if (l && !touches_border[size_t(l)]) out.px[i] = 1;
    }
    return out;
}

struct PostprocessResult {
    BinaryMask mask;
    bool empty_after_erosion = false;
    int components_found = 0;      // components of the eroded mask
    std::vector<int> retained;     // eroded-seed labels that were kept
};

/// Largest-contour cleanup: erode away thin connections and speckle, keep the
/// one or two dominant components by the area-ratio rule, grow the survivors
/// back to their full extent inside the original mask, then fill holes.
inline PostprocessResult postprocess(const BinaryMask& m, const PostprocessConfig& cfg = {}) {
    cfg.validate();
    const BinaryMask eroded = erode(m, cfg.se);
    const LabeledComponents seeds = label_components(eroded, cfg.connectivity);
    if (seeds.num == 0) {
        return PostprocessResult{BinaryMask(m.h(), m.w(), MaskOrigin::postprocessed), true, 0, {}};
    }
    const std::vector<int> retained = select_components(seeds, cfg);

    // Geodesic reconstruction: keep every original component hosting a retained seed.
    const LabeledComponents orig = label_components(m, cfg.connectivity);
    std::vector<char> keep(size_t(orig.num + 1), 0);
    for (int label : retained) {
        for (int64_t i = 0; i < seeds.labels.numel(); ++i)
            if (seeds.labels[i] == label) {
                keep[size_t(orig.labels[i])] = 1;
                break;
            }
    }
    BinaryMask grown(m.h(), m.w(), MaskOrigin::postprocessed);
    for (int64_t i = 0; i < grown.px.numel(); ++i) {
        const int32_t l = orig.labels[i];
        if (l && keep[size_t(l)]) grown.px[i] = 1;
    }
    PostprocessResult res{fill_holes(grown), false, seeds.num, retained};
    res.mask.origin = MaskOrigin::postprocessed;
    return res;
}

}  // namespace panseg

#endif  // PANSEG_POSTPROCESS_HPP
