#ifndef PANSEG_MASK_HPP
#define PANSEG_MASK_HPP

#include <cstdint>
#include <utility>

#include "panseg/tensor.hpp"

namespace panseg {

enum class MaskOrigin { label, prediction, postprocessed };

inline const char* mask_origin_name(MaskOrigin o) {
    switch (o) {
        case MaskOrigin::label: return "label";
        case MaskOrigin::prediction: return "prediction";
        case MaskOrigin::postprocessed: return "postprocessed";
    }
    return "?";
}

/// H x W binary image, values strictly 0/1, tagged with where it came from.
struct BinaryMask {
    Tensor<uint8_t> px;
    MaskOrigin origin;

    BinaryMask(int h, int w, MaskOrigin o)
        : px(Tensor<uint8_t>::zeros({h, w})), origin(o) {}

    BinaryMask(Tensor<uint8_t> pixels, MaskOrigin o) : px(std::move(pixels)), origin(o) {
        require(px.rank() == 2, ErrorKind::shape_mismatch, "BinaryMask: need [H,W], got ",
                shape_str(px.shape()));
        for (int64_t i = 0; i < px.numel(); ++i)
            require(px[i] <= 1, ErrorKind::invalid_argument,
                    "BinaryMask: pixel value ", int(px[i]), " not in {0,1}");
    }

    int h() const { return px.dim(0); }
    int w() const { return px.dim(1); }
    uint8_t at(int y, int x) const { return px[int64_t(y) * w() + x]; }
    void set(int y, int x, uint8_t v) { px[int64_t(y) * w() + x] = v; }

    int64_t area() const {
        int64_t a = 0;
        for (int64_t i = 0; i < px.numel(); ++i) a += px[i];
        return a;
    }
    bool empty() const { return area() == 0; }
    double foreground_fraction() const { return double(area()) / double(px.numel()); }

    bool same_pixels(const BinaryMask& o) const {
        if (!px.same_shape(o.px)) return false;
        for (int64_t i = 0; i < px.numel(); ++i)
            if (px[i] != o.px[i]) return false;
        return true;
    }
};

/// Binarize a foreground-probability plane: foreground wins strictly above the
/// threshold (argmax convention for a 2-class softmax at 0.5).
template <class S>
BinaryMask threshold_mask(const Tensor<S>& prob, S threshold = S(0.5),
                          MaskOrigin origin = MaskOrigin::prediction) {
    require(prob.rank() == 2, ErrorKind::shape_mismatch, "threshold_mask: need [H,W], got ",
            shape_str(prob.shape()));
    Tensor<uint8_t> px(prob.shape());
    for (int64_t i = 0; i < prob.numel(); ++i) px[i] = prob[i] > threshold ? 1 : 0;
    return BinaryMask(std::move(px), origin);
}

/// Mask as a float tensor [1,1,H,W] for use as a training label.
template <class S>
Tensor<S> mask_to_label(const BinaryMask& m) {
    Tensor<S> t({1, 1, m.h(), m.w()});
    for (int64_t i = 0; i < m.px.numel(); ++i) t[i] = S(m.px[i]);
    return t;
}

}  // namespace panseg

#endif  // PANSEG_MASK_HPP
