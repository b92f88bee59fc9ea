#ifndef PANSEG_LOSSES_HPP
#define PANSEG_LOSSES_HPP

#include <cmath>
#include <string>
#include <vector>

#include "panseg/layers.hpp"

namespace panseg {

/// Soft Dice loss: 1 - (2*sum(L.*P) + eps) / (sum(L) + sum(P) + eps),
/// computed per batch item and averaged. Inputs must have identical shapes;
/// dim 0 is the batch axis. Differentiable in both arguments.
template <class S>
Var dice_loss(Tape<S>& t, Var pred, Var label, S eps = S(1e-6)) {
    const Tensor<S>& pv = t.value(pred);
    const Tensor<S>& lv = t.value(label);
    require(pv.same_shape(lv), ErrorKind::shape_mismatch, "dice_loss: pred ",
            shape_str(pv.shape()), " vs label ", shape_str(lv.shape()));
    const int N = pv.dim(0);
    const int64_t per = pv.numel() / N;
    std::vector<S> inter(static_cast<size_t>(N));
    std::vector<S> sums(static_cast<size_t>(N));
    S loss = S(0);
    for (int n = 0; n < N; ++n) {
        const S* pp = pv.data() + int64_t(n) * per;
        const S* lp = lv.data() + int64_t(n) * per;
        S i = S(0), s = S(0);
        for (int64_t k = 0; k < per; ++k) {
            i += lp[k] * pp[k];
            s += lp[k] + pp[k];
        }
        inter[size_t(n)] = i;
        sums[size_t(n)] = s;
        loss += S(1) - (S(2) * i + eps) / (s + eps);
    }
    loss /= S(N);

    auto backward = [N, per, eps, inter = std::move(inter), sums = std::move(sums)](Tape<S>& tp,
                                                                                    int id) {
        const S g = tp.grad(id)[0];
        int pp_ = tp.parents(id)[0], pl_ = tp.parents(id)[1];
        const Tensor<S>& pv = tp.value(pp_);
        const Tensor<S>& lv = tp.value(pl_);
        Tensor<S>& gp = tp.grad(pp_);
        Tensor<S>& gl = tp.grad(pl_);
        for (int n = 0; n < N; ++n) {
            const S den = sums[size_t(n)] + eps;
            const S num = S(2) * inter[size_t(n)] + eps;
            const S scale = g / (S(N) * den * den);
            const S* pd = pv.data() + int64_t(n) * per;
            const S* ld = lv.data() + int64_t(n) * per;
            S* gpd = gp.data() + int64_t(n) * per;
            S* gld = gl.data() + int64_t(n) * per;
            for (int64_t k = 0; k < per; ++k) {
                gpd[k] += scale * (num - S(2) * ld[k] * den);
                gld[k] += scale * (num - S(2) * pd[k] * den);
            }
        }
    };
    return t.record(OpKind::dice_loss, {pred.id, label.id}, Tensor<S>::scalar(loss),
                    std::move(backward));
}

/// Binary cross-entropy, averaged over every element:
/// -mean(l*ln(p) + (1-l)*ln(1-p)) with p clamped to [clamp, 1-clamp] before
/// the logarithms. No gradient flows where the clamp is active.
template <class S>
Var bce_loss(Tape<S>& t, Var pred, Var label, S clamp = S(1e-7)) {
    const Tensor<S>& pv = t.value(pred);
    const Tensor<S>& lv = t.value(label);
    require(pv.same_shape(lv), ErrorKind::shape_mismatch, "bce_loss: pred ",
            shape_str(pv.shape()), " vs label ", shape_str(lv.shape()));
    require(clamp > S(0) && clamp < S(0.5), ErrorKind::invalid_argument,
            "bce_loss: clamp must be in (0, 0.5)");
    const int64_t M = pv.numel();
    const S lo = clamp, hi = S(1) - clamp;
    S acc = S(0);
    for (int64_t k = 0; k < M; ++k) {
        const S p = std::min(hi, std::max(lo, pv[k]));
        acc += lv[k] * std::log(p) + (S(1) - lv[k]) * std::log(S(1) - p);
    }
    const S loss = -acc / S(M);

    auto backward = [M, lo, hi](Tape<S>& tp, int id) {
        const S g = tp.grad(id)[0];
        int pp_ = tp.parents(id)[0], pl_ = tp.parents(id)[1];
        const Tensor<S>& pv = tp.value(pp_);
        const Tensor<S>& lv = tp.value(pl_);
        Tensor<S>& gp = tp.grad(pp_);
        Tensor<S>& gl = tp.grad(pl_);
        const S scale = g / S(M);
        for (int64_t k = 0; k < M; ++k) {
            const S raw = pv[k];
            const S p = std::min(hi, std::max(lo, raw));
            if (raw > lo && raw < hi)
                gp[k] += -scale * (lv[k] / p - (S(1) - lv[k]) / (S(1) - p));
            gl[k] += -scale * (std::log(p) - std::log(S(1) - p));
        }
    };
    return t.record(OpKind::bce_loss, {pred.id, label.id}, Tensor<S>::scalar(loss),
                    std::move(backward));
}

// ---- SSIM ------------------------------------------------------------------

struct SsimConfig {
    enum class Mode { windowed, global };
    Mode mode = Mode::windowed;
    int window = 11;       // windowed mode: window side length (odd)
    double sigma = 1.5;    // windowed mode: Gaussian sigma
    bool uniform = false;  // windowed mode: flat 1/win^2 window instead of Gaussian
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;  // images live in [0, dynamic_range]
};

/// Normalized 2D Gaussian kernel as a [1,1,win,win] convolution weight.
template <class S>
Tensor<S> gaussian_kernel2d(int window, double sigma) {
    require(window >= 1 && window % 2 == 1, ErrorKind::invalid_argument,
            "gaussian_kernel2d: window must be odd and positive, got ", window);
    require(sigma > 0, ErrorKind::invalid_argument, "gaussian_kernel2d: sigma must be > 0");
    const int half = window / 2;
    std::vector<double> g1(static_cast<size_t>(window));
    for (int i = 0; i < window; ++i) {
        const double d = i - half;
        g1[size_t(i)] = std::exp(-d * d / (2 * sigma * sigma));
    }
    Tensor<S> k({1, 1, window, window});
    double total = 0;
    for (int i = 0; i < window; ++i)
        for (int j = 0; j < window; ++j) total += g1[size_t(i)] * g1[size_t(j)];
    for (int i = 0; i < window; ++i)
        for (int j = 0; j < window; ++j)
            k[int64_t(i) * window + j] = S(g1[size_t(i)] * g1[size_t(j)] / total);
    return k;
}

namespace detail {

/// Local means via Gaussian window (valid windows only) or per-item global
/// means, for single-channel [N,1,H,W] inputs.
template <class S>
Var ssim_smooth(Tape<S>& t, Var x, const SsimConfig& cfg, Var kernel, Var zero_bias) {
    if (cfg.mode == SsimConfig::Mode::windowed) return conv2d(t, x, kernel, zero_bias);
    return global_avg_pool(t, x);
}

}  // namespace detail

/// Mean structural similarity between two single-channel images in
/// [0, dynamic_range], shapes [N,1,H,W]. Windowed mode averages the SSIM map
/// over all valid Gaussian windows; global mode uses one set of statistics per
/// batch item. Fully differentiable in both arguments.
template <class S>
Var ssim(Tape<S>& t, Var a, Var b, const SsimConfig& cfg = {}) {
    const Tensor<S>& av = t.value(a);
    const Tensor<S>& bv = t.value(b);
    require(av.rank() == 4 && av.dim(1) == 1, ErrorKind::shape_mismatch,
            "ssim: need [N,1,H,W], got ", shape_str(av.shape()));
    require(av.same_shape(bv), ErrorKind::shape_mismatch, "ssim: a ", shape_str(av.shape()),
            " vs b ", shape_str(bv.shape()));
    Var kernel, zero_bias;
    if (cfg.mode == SsimConfig::Mode::windowed) {
        require(av.dim(2) >= cfg.window && av.dim(3) >= cfg.window, ErrorKind::invalid_argument,
                "ssim: image ", av.dim(2), "x", av.dim(3), " smaller than window ", cfg.window);
        Tensor<S> k = cfg.uniform ? Tensor<S>::full({1, 1, cfg.window, cfg.window},
                                                    S(1) / S(cfg.window * cfg.window))
                                  : gaussian_kernel2d<S>(cfg.window, cfg.sigma);
        kernel = t.constant(std::move(k));
        zero_bias = t.constant(Tensor<S>::zeros({1}));
    }
    const S c1 = S(cfg.k1 * cfg.dynamic_range) * S(cfg.k1 * cfg.dynamic_range);
    const S c2 = S(cfg.k2 * cfg.dynamic_range) * S(cfg.k2 * cfg.dynamic_range);

    Var mu_a = detail::ssim_smooth(t, a, cfg, kernel, zero_bias);
    Var mu_b = detail::ssim_smooth(t, b, cfg, kernel, zero_bias);
    Var e_aa = detail::ssim_smooth(t, mul(t, a, a), cfg, kernel, zero_bias);
    Var e_bb = detail::ssim_smooth(t, mul(t, b, b), cfg, kernel, zero_bias);
    Var e_ab = detail::ssim_smooth(t, mul(t, a, b), cfg, kernel, zero_bias);
    Var mu_ab = mul(t, mu_a, mu_b);
    Var var_a = sub(t, e_aa, mul(t, mu_a, mu_a));
    Var var_b = sub(t, e_bb, mul(t, mu_b, mu_b));
    Var cov = sub(t, e_ab, mu_ab);

    Var num = mul(t, add_scalar(t, mul_scalar(t, mu_ab, S(2)), c1),
                  add_scalar(t, mul_scalar(t, cov, S(2)), c2));
    Var den = mul(t, add_scalar(t, add(t, mul(t, mu_a, mu_a), mul(t, mu_b, mu_b)), c1),
                  add_scalar(t, add(t, var_a, var_b), c2));
    return mean(t, div(t, num, den));
}

/// 1 - ssim(a, b). Zero exactly when a and b hold identical values.
template <class S>
Var ssim_loss(Tape<S>& t, Var a, Var b, const SsimConfig& cfg = {}) {
    return add_scalar(t, mul_scalar(t, ssim(t, a, b, cfg), S(-1)), S(1));
}

// ---- dispatch ----------------------------------------------------------------

enum class LossKind { dice, bce, ssim };

inline const char* loss_name(LossKind k) {
    switch (k) {
        case LossKind::dice: return "dice";
        case LossKind::bce: return "bce";
        case LossKind::ssim: return "ssim";
    }
    return "?";
}

inline LossKind parse_loss(const std::string& s) {
    if (s == "dice") return LossKind::dice;
    if (s == "bce") return LossKind::bce;
    if (s == "ssim") return LossKind::ssim;
    fail(ErrorKind::invalid_argument, "unknown loss \"", s, "\" (expected dice, bce, or ssim)");
}

/// Apply the selected loss to a foreground-probability map and its binary
/// label, both [N,1,H,W].
template <class S>
Var segmentation_loss(Tape<S>& t, LossKind kind, Var pred_fg, Var label,
                      const SsimConfig& ssim_cfg = {}) {
    switch (kind) {
        case LossKind::dice: return dice_loss(t, pred_fg, label);
        case LossKind::bce: return bce_loss(t, pred_fg, label);
        case LossKind::ssim: return ssim_loss(t, pred_fg, label, ssim_cfg);
    }
    fail(ErrorKind::invalid_argument, "segmentation_loss: unknown kind");
}

}  // namespace panseg

#endif  // PANSEG_LOSSES_HPP
