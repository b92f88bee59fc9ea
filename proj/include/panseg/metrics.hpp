#ifndef PANSEG_METRICS_HPP
#define PANSEG_METRICS_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "panseg/mask.hpp"

namespace panseg {

struct ConfusionCounts {
    int64_t tp = 0, tn = 0, fp = 0, fn = 0;
    int64_t total() const { return tp + tn + fp + fn; }
};

inline ConfusionCounts confusion(const BinaryMask& label, const BinaryMask& pred) {
    require(label.px.same_shape(pred.px), ErrorKind::shape_mismatch, "confusion: label ",
            shape_str(label.px.shape()), " vs prediction ", shape_str(pred.px.shape()));
    ConfusionCounts c;
    for (int64_t i = 0; i < label.px.numel(); ++i) {
        const bool l = label.px[i] != 0, p = pred.px[i] != 0;
        if (l && p) ++c.tp;
        else if (!l && !p) ++c.tn;
        else if (!l && p) ++c.fp;
        else ++c.fn;
    }
    return c;
}

struct OverlapMetrics {
    double dice = 0, iou = 0, acc = 0;
    bool degenerate = false;  // both masks empty; dice and iou set to 1 by convention
};

/// Dice = 2TP/(2TP+FP+FN), IoU = TP/(TP+FP+FN), Acc = (TP+TN)/total.
/// When both masks are empty the overlap ratios are 0/0; they are defined as 1
/// and flagged degenerate.
inline OverlapMetrics overlap_metrics(const ConfusionCounts& c) {
    require(c.total() > 0, ErrorKind::invalid_argument, "overlap_metrics: empty confusion counts");
    OverlapMetrics m;
    m.acc = double(c.tp + c.tn) / double(c.total());
    const int64_t denom = 2 * c.tp + c.fp + c.fn;
    if (denom == 0) {
        m.dice = 1;
        m.iou = 1;
        m.degenerate = true;
    } else {
        m.dice = double(2 * c.tp) / double(denom);
        m.iou = double(c.tp) / double(c.tp + c.fp + c.fn);
    }
    return m;
}

// ---- modified Hausdorff distance ------------------------------------------------

struct Point {
    int y = 0, x = 0;
    bool operator==(const Point&) const = default;
};
using PointSet = std::vector<Point>;

/// Boundary of a mask: foreground pixels with at least one 4-neighbor that is
/// background or lies outside the image, in row-major order.
inline PointSet boundary(const BinaryMask& m) {
    PointSet pts;
    const int H = m.h(), W = m.w();
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            if (!m.at(y, x)) continue;
            const bool edge = (y == 0 || !m.at(y - 1, x)) || (y == H - 1 || !m.at(y + 1, x)) ||
                              (x == 0 || !m.at(y, x - 1)) || (x == W - 1 || !m.at(y, x + 1));
            if (edge) pts.push_back({y, x});
        }
    return pts;
}

/// Mean over a in A of the distance from a to its nearest point of B.
inline double directed_mhd(const PointSet& a, const PointSet& b) {
    require(!a.empty() && !b.empty(), ErrorKind::invalid_argument,
            "directed_mhd: empty point set");
    double acc = 0;
    for (const Point& p : a) {
        int64_t best = std::numeric_limits<int64_t>::max();
        for (const Point& q : b) {
            const int64_t dy = p.y - q.y, dx = p.x - q.x;
            const int64_t d2 = dy * dy + dx * dx;
            if (d2 < best) {
                best = d2;
                if (best == 0) break;
            }
        }
        acc += std::sqrt(double(best));
    }
    return acc / double(a.size());
}

/// Modified Hausdorff distance: max of the two directed mean distances.
inline double mhd(const PointSet& a, const PointSet& b) {
    require(!a.empty() && !b.empty(), ErrorKind::invalid_argument,
            "mhd: undefined for an empty point set");
    return std::max(directed_mhd(a, b), directed_mhd(b, a));
}

// ---- combined report -------------------------------------------------------------

struct MetricReport {
    double dice = 0, iou = 0, acc = 0;
    double mhd = 0;               // valid only when mhd_defined
    bool degenerate_overlap = false;
    bool mhd_defined = false;
};

/// All four metrics for a (label, prediction) pair. MHD is computed on the
/// 4-connectivity boundary point sets; if either mask is empty it is reported
/// undefined rather than zero.
inline MetricReport evaluate_pair(const BinaryMask& label, const BinaryMask& pred) {
    MetricReport r;
    const OverlapMetrics om = overlap_metrics(confusion(label, pred));
    r.dice = om.dice;
    r.iou = om.iou;
    r.acc = om.acc;
    r.degenerate_overlap = om.degenerate;
    const PointSet bl = boundary(label), bp = boundary(pred);
    if (!bl.empty() && !bp.empty()) {
        r.mhd = mhd(bl, bp);
        r.mhd_defined = true;
    }
    return r;
}

}  // namespace panseg

#endif  // PANSEG_METRICS_HPP
