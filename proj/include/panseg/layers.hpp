#ifndef PANSEG_LAYERS_HPP
#define PANSEG_LAYERS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "panseg/autodiff.hpp"

namespace panseg {

// ---- parameter bundles -----------------------------------------------------

/// 2D convolution parameters. weight is [Cout, Cin, kh, kw]; cross-correlation
/// convention (no kernel flip).
template <class S>
struct Conv2dParams {
    Parameter<S> weight;
    Parameter<S> bias;
    int stride = 1;
    int padding = 0;
    int dilation = 1;
};

template <class S>
struct BatchNormState {
    Parameter<S> gamma, beta;               // trainable scale/shift
    Parameter<S> running_mean, running_var; // frozen; updated by momentum in training mode
    S momentum = S(0.1);
    S epsilon = S(1e-5);

    BatchNormState() = default;
    BatchNormState(const std::string& name, int channels)
        : gamma(name + ".gamma", Tensor<S>::full({channels}, S(1))),
          beta(name + ".beta", Tensor<S>::zeros({channels})),
          running_mean(name + ".running_mean", Tensor<S>::zeros({channels}), false),
          running_var(name + ".running_var", Tensor<S>::full({channels}, S(1)), false) {}

    int channels() const { return gamma.value.dim(0); }
};

/// Squeeze-excitation gate: GAP -> fc1 (C -> B, ReLU) -> fc2 (B -> C, sigmoid),
/// bottleneck B = max(C / reduction, 4).
template <class S>
struct SeBlockParams {
    Parameter<S> fc1_weight, fc1_bias;  // [B, C], [B]
    Parameter<S> fc2_weight, fc2_bias;  // [C, B], [C]
    int reduction = 16;

    int channels() const { return fc2_weight.value.dim(0); }
    int bottleneck() const { return fc1_weight.value.dim(0); }
};

inline int se_bottleneck_width(int channels, int reduction) {
    return std::max(channels / reduction, 4);
}

/// Pyramid of three 3x3 convolutions with dilation 1/2/3 (padding = dilation,
/// so spatial size is preserved), each ReLU-activated, concatenated and fused
/// by a 1x1 convolution back to the input channel count.
template <class S>
struct PdcParams {
    std::array<Conv2dParams<S>, 3> branches;  // dilation 1, 2, 3
    Conv2dParams<S> fusion;                   // 1x1, 3*Cin -> Cin
};

// ---- shape helpers ----------------------------------------------------------

inline int conv_out_dim(int in, int k, int stride, int padding, int dilation) {
    return (in + 2 * padding - dilation * (k - 1) - 1) / stride + 1;
}

namespace detail {

inline int div_up_nonneg(int a, int b) { return a <= 0 ? 0 : (a + b - 1) / b; }

}  // namespace detail

// ---- convolution -------------------------------------------------------------

/// Dilated 2D cross-correlation with per-output-channel bias.
/// x [N,Cin,H,W] * w [Cout,Cin,kh,kw] + b [Cout] -> [N,Cout,OH,OW].
/// Accumulation order per output element is bias, then (ci, kh, kw) — the same
/// order as the direct-sum definition, so results match it bit-for-bit.
template <class S>
Var conv2d(Tape<S>& t, Var x, Var w, Var b, int stride = 1, int padding = 0, int dilation = 1) {
    const Tensor<S>& xv = t.value(x);
    const Tensor<S>& wv = t.value(w);
    const Tensor<S>& bv = t.value(b);
    require(xv.rank() == 4 && wv.rank() == 4 && bv.rank() == 1, ErrorKind::shape_mismatch,
            "conv2d: need x NCHW, w [Cout,Cin,kh,kw], b [Cout]; got x ", shape_str(xv.shape()),
            " w ", shape_str(wv.shape()), " b ", shape_str(bv.shape()));
    require(stride >= 1 && padding >= 0 && dilation >= 1, ErrorKind::invalid_argument,
            "conv2d: stride/padding/dilation out of range");
    const int N = xv.dim(0), Cin = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const int Cout = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
    require(wv.dim(1) == Cin, ErrorKind::shape_mismatch, "conv2d: input has ", Cin,
            " channels but weight expects ", wv.dim(1));
    require(bv.dim(0) == Cout, ErrorKind::shape_mismatch, "conv2d: bias length ", bv.dim(0),
            " vs Cout ", Cout);
    const int OH = conv_out_dim(H, kh, stride, padding, dilation);
    const int OW = conv_out_dim(W, kw, stride, padding, dilation);
    require(OH >= 1 && OW >= 1, ErrorKind::invalid_argument, "conv2d: output dims ", OH, "x", OW,
            " < 1 for input ", H, "x", W);

    Tensor<S> out({N, Cout, OH, OW});
    {
        const S* xp = xv.data();
        const S* wp = wv.data();
        const S* bp = bv.data();
        S* op = out.data();
        for (int n = 0; n < N; ++n)
            for (int co = 0; co < Cout; ++co) {
                S* oplane = op + (int64_t(n) * Cout + co) * OH * OW;
                const S bias = bp[co];
                for (int64_t i = 0; i < int64_t(OH) * OW; ++i) oplane[i] = bias;
                for (int ci = 0; ci < Cin; ++ci) {
                    const S* xplane = xp + (int64_t(n) * Cin + ci) * H * W;
                    const S* wk = wp + (int64_t(co) * Cin + ci) * kh * kw;
                    for (int ikh = 0; ikh < kh; ++ikh)
                        for (int ikw = 0; ikw < kw; ++ikw) {
                            const S wvv = wk[ikh * kw + ikw];
                            const int hoff = ikh * dilation - padding;
                            const int woff = ikw * dilation - padding;
                            const int oh_lo = std::max(0, detail::div_up_nonneg(-hoff, stride));
                            const int oh_hi = std::min(OH, detail::div_up_nonneg(H - hoff, stride));
                            const int ow_lo = std::max(0, detail::div_up_nonneg(-woff, stride));
                            const int ow_hi = std::min(OW, detail::div_up_nonneg(W - woff, stride));
                            for (int oh = oh_lo; oh < oh_hi; ++oh) {
                                const S* xrow = xplane + int64_t(oh * stride + hoff) * W + woff;
                                S* orow = oplane + int64_t(oh) * OW;
                                if (stride == 1) {
                                    for (int ow = ow_lo; ow < ow_hi; ++ow)
                                        orow[ow] += wvv * xrow[ow];
                                } else {
                                    for (int ow = ow_lo; ow < ow_hi; ++ow)
                                        orow[ow] += wvv * xrow[int64_t(ow) * stride];
                                }
                            }
                        }
                }
            }
    }

    auto backward = [stride, padding, dilation, N, Cin, H, W, Cout, kh, kw, OH, OW](Tape<S>& tp,
                                                                                    int id) {
        const Tensor<S>& g = tp.grad(id);
        int px = tp.parents(id)[0], pw = tp.parents(id)[1], pb = tp.parents(id)[2];
        const Tensor<S>& xv = tp.value(px);
        const Tensor<S>& wv = tp.value(pw);
        Tensor<S>& gx = tp.grad(px);
        Tensor<S>& gw = tp.grad(pw);
        Tensor<S>& gb = tp.grad(pb);
        const S* gp = g.data();
        const S* xp = xv.data();
        const S* wp = wv.data();
        std::vector<S> acc(static_cast<size_t>(OW));  // per-row products, summed once per tap
        for (int n = 0; n < N; ++n)
            for (int co = 0; co < Cout; ++co) {
                const S* gplane = gp + (int64_t(n) * Cout + co) * OH * OW;
                S gbacc = S(0);
                for (int64_t i = 0; i < int64_t(OH) * OW; ++i) gbacc += gplane[i];
                gb[co] += gbacc;
                for (int ci = 0; ci < Cin; ++ci) {
                    const S* xplane = xp + (int64_t(n) * Cin + ci) * H * W;
                    S* gxplane = gx.data() + (int64_t(n) * Cin + ci) * H * W;
                    const S* wk = wp + (int64_t(co) * Cin + ci) * kh * kw;
                    S* gwk = gw.data() + (int64_t(co) * Cin + ci) * kh * kw;
                    for (int ikh = 0; ikh < kh; ++ikh)
                        for (int ikw = 0; ikw < kw; ++ikw) {
                            const S wvv = wk[ikh * kw + ikw];
                            const int hoff = ikh * dilation - padding;
                            const int woff = ikw * dilation - padding;
                            const int oh_lo = std::max(0, detail::div_up_nonneg(-hoff, stride));
                            const int oh_hi = std::min(OH, detail::div_up_nonneg(H - hoff, stride));
                            const int ow_lo = std::max(0, detail::div_up_nonneg(-woff, stride));
                            const int ow_hi = std::min(OW, detail::div_up_nonneg(W - woff, stride));
                            if (oh_lo >= oh_hi || ow_lo >= ow_hi) continue;
                            for (int ow = ow_lo; ow < ow_hi; ++ow) acc[size_t(ow)] = S(0);
                            for (int oh = oh_lo; oh < oh_hi; ++oh) {
                                const S* xrow = xplane + int64_t(oh * stride + hoff) * W + woff;
                                S* gxrow = gxplane + int64_t(oh * stride + hoff) * W + woff;
                                const S* grow = gplane + int64_t(oh) * OW;
                                if (stride == 1) {
                                    for (int ow = ow_lo; ow < ow_hi; ++ow) {
                                        acc[size_t(ow)] += grow[ow] * xrow[ow];
                                        gxrow[ow] += wvv * grow[ow];
                                    }
                                } else {
                                    for (int ow = ow_lo; ow < ow_hi; ++ow) {
                                        acc[size_t(ow)] += grow[ow] * xrow[int64_t(ow) * stride];
                                        gxrow[int64_t(ow) * stride] += wvv * grow[ow];
                                    }
                                }
                            }
                            S dw = S(0);
                            for (int ow = ow_lo; ow < ow_hi; ++ow) dw += acc[size_t(ow)];
                            gwk[ikh * kw + ikw] += dw;
                        }
                }
            }
    };
    return t.record(OpKind::conv2d, {x.id, w.id, b.id}, std::move(out), std::move(backward));
}

template <class S>
Var conv2d(Tape<S>& t, Var x, Conv2dParams<S>& p) {
    return conv2d(t, x, t.param(p.weight), t.param(p.bias), p.stride, p.padding, p.dilation);
}

/// Learnable 2x upsampling: transposed convolution, 2x2 kernel, stride 2.
/// Stride equals kernel size, so each input pixel scatters into a disjoint
/// 2x2 output block. w is [Cout, Cin, 2, 2]; output is [N,Cout,2H,2W].
template <class S>
Var upsample2x(Tape<S>& t, Var x, Var w, Var b) {
    const Tensor<S>& xv = t.value(x);
    const Tensor<S>& wv = t.value(w);
    const Tensor<S>& bv = t.value(b);
    require(xv.rank() == 4 && wv.rank() == 4 && wv.dim(2) == 2 && wv.dim(3) == 2,
            ErrorKind::shape_mismatch, "upsample2x: need x NCHW and w [Cout,Cin,2,2], got x ",
            shape_str(xv.shape()), " w ", shape_str(wv.shape()));
    const int N = xv.dim(0), Cin = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const int Cout = wv.dim(0);
    require(wv.dim(1) == Cin, ErrorKind::shape_mismatch, "upsample2x: input has ", Cin,
            " channels but weight expects ", wv.dim(1));
    require(bv.rank() == 1 && bv.dim(0) == Cout, ErrorKind::shape_mismatch,
            "upsample2x: bias length ", bv.dim(0), " vs Cout ", Cout);

    Tensor<S> out({N, Cout, 2 * H, 2 * W});
    {
        const S* xp = xv.data();
        const S* wp = wv.data();
        for (int n = 0; n < N; ++n)
            for (int co = 0; co < Cout; ++co) {
                S* oplane = out.data() + (int64_t(n) * Cout + co) * 4 * H * W;
                const S bias = bv[co];
                for (int64_t i = 0; i < int64_t(4) * H * W; ++i) oplane[i] = bias;
                for (int ci = 0; ci < Cin; ++ci) {
                    const S* xplane = xp + (int64_t(n) * Cin + ci) * H * W;
                    const S* wk = wp + (int64_t(co) * Cin + ci) * 4;
                    for (int ikh = 0; ikh < 2; ++ikh)
                        for (int ikw = 0; ikw < 2; ++ikw) {
                            const S wvv = wk[ikh * 2 + ikw];
                            for (int h = 0; h < H; ++h) {
                                const S* xrow = xplane + int64_t(h) * W;
                                S* orow = oplane + int64_t(2 * h + ikh) * 2 * W + ikw;
                                for (int w2 = 0; w2 < W; ++w2) orow[2 * w2] += wvv * xrow[w2];
                            }
                        }
                }
            }
    }

    auto backward = [N, Cin, H, W, Cout](Tape<S>& tp, int id) {
        const Tensor<S>& g = tp.grad(id);
        int px = tp.parents(id)[0], pw = tp.parents(id)[1], pb = tp.parents(id)[2];
        const Tensor<S>& xv = tp.value(px);
        const Tensor<S>& wv = tp.value(pw);
        Tensor<S>& gx = tp.grad(px);
        Tensor<S>& gw = tp.grad(pw);
        Tensor<S>& gb = tp.grad(pb);
        for (int n = 0; n < N; ++n)
            for (int co = 0; co < Cout; ++co) {
                const S* gplane = g.data() + (int64_t(n) * Cout + co) * 4 * H * W;
                S gbacc = S(0);
                for (int64_t i = 0; i < int64_t(4) * H * W; ++i) gbacc += gplane[i];
                gb[co] += gbacc;
                for (int ci = 0; ci < Cin; ++ci) {
                    const S* xplane = xv.data() + (int64_t(n) * Cin + ci) * H * W;
                    S* gxplane = gx.data() + (int64_t(n) * Cin + ci) * H * W;
                    const S* wk = wv.data() + (int64_t(co) * Cin + ci) * 4;
                    S* gwk = gw.data() + (int64_t(co) * Cin + ci) * 4;
                    for (int ikh = 0; ikh < 2; ++ikh)
                        for (int ikw = 0; ikw < 2; ++ikw) {
                            const S wvv = wk[ikh * 2 + ikw];
                            S dw = S(0);
                            for (int h = 0; h < H; ++h) {
                                const S* grow = gplane + int64_t(2 * h + ikh) * 2 * W + ikw;
                                const S* xrow = xplane + int64_t(h) * W;
                                S* gxrow = gxplane + int64_t(h) * W;
                                for (int w2 = 0; w2 < W; ++w2) {
                                    const S gv = grow[2 * w2];
                                    dw += gv * xrow[w2];
                                    gxrow[w2] += wvv * gv;
                                }
                            }
                            gwk[ikh * 2 + ikw] += dw;
                        }
                }
            }
    };
    return t.record(OpKind::conv_transpose2x, {x.id, w.id, b.id}, std::move(out),
                    std::move(backward));
}

template <class S>
Var upsample2x(Tape<S>& t, Var x, Conv2dParams<S>& p) {
    return upsample2x(t, x, t.param(p.weight), t.param(p.bias));
}

// ---- batch normalization ------------------------------------------------------

/// Per-channel batch normalization over N*H*W. Training mode normalizes with
/// biased batch statistics and folds them into the running estimates with
/// `momentum`; inference mode uses the running estimates only.
template <class S>
Var batchnorm2d(Tape<S>& t, Var x, BatchNormState<S>& s, bool training) {
    const Tensor<S>& xv = t.value(x);
    require(xv.rank() == 4, ErrorKind::shape_mismatch, "batchnorm2d: need NCHW, got ",
            shape_str(xv.shape()));
    const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    require(C == s.channels(), ErrorKind::shape_mismatch, "batchnorm2d: input has ", C,
            " channels, state has ", s.channels());
    const int64_t m = int64_t(N) * H * W;
    require(m > 0, ErrorKind::invalid_argument, "batchnorm2d: zero elements per channel");
    const int64_t plane = int64_t(H) * W;
    const S eps = s.epsilon;

    std::vector<S> mean(static_cast<size_t>(C));
    std::vector<S> invstd(static_cast<size_t>(C));
    if (training) {
        for (int c = 0; c < C; ++c) {
            S acc = S(0);
            for (int n = 0; n < N; ++n) {
                const S* p = xv.data() + (int64_t(n) * C + c) * plane;
                for (int64_t i = 0; i < plane; ++i) acc += p[i];
            }
            S mu = acc / S(m);
            S vacc = S(0);
            for (int n = 0; n < N; ++n) {
                const S* p = xv.data() + (int64_t(n) * C + c) * plane;
                for (int64_t i = 0; i < plane; ++i) {
                    S d = p[i] - mu;
                    vacc += d * d;
                }
            }
            S var = vacc / S(m);
            mean[size_t(c)] = mu;
            invstd[size_t(c)] = S(1) / std::sqrt(var + eps);
            s.running_mean.value[c] = (S(1) - s.momentum) * s.running_mean.value[c] + s.momentum * mu;
            s.running_var.value[c] = (S(1) - s.momentum) * s.running_var.value[c] + s.momentum * var;
        }
    } else {
        for (int c = 0; c < C; ++c) {
            mean[size_t(c)] = s.running_mean.value[c];
            invstd[size_t(c)] = S(1) / std::sqrt(s.running_var.value[c] + eps);
        }
    }

    Var gv = t.param(s.gamma);
    Var bv = t.param(s.beta);
    const Tensor<S>& gamma = t.value(gv);
    const Tensor<S>& beta = t.value(bv);
    Tensor<S> out(xv.shape());
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const S* p = xv.data() + (int64_t(n) * C + c) * plane;
            S* o = out.data() + (int64_t(n) * C + c) * plane;
            const S mu = mean[size_t(c)], is = invstd[size_t(c)];
            const S ga = gamma[c], be = beta[c];
            for (int64_t i = 0; i < plane; ++i) o[i] = ga * (p[i] - mu) * is + be;
        }

    auto backward = [N, C, plane, m, mean, invstd, training](Tape<S>& tp, int id) {
        const Tensor<S>& g = tp.grad(id);
        int px = tp.parents(id)[0], pg = tp.parents(id)[1], pb = tp.parents(id)[2];
        const Tensor<S>& xv = tp.value(px);
        const Tensor<S>& gamma = tp.value(pg);
        Tensor<S>& gx = tp.grad(px);
        Tensor<S>& ggamma = tp.grad(pg);
        Tensor<S>& gbeta = tp.grad(pb);
        for (int c = 0; c < C; ++c) {
            const S mu = mean[size_t(c)], is = invstd[size_t(c)];
            S sum_g = S(0), sum_gxh = S(0);
            for (int n = 0; n < N; ++n) {
                const S* gp = g.data() + (int64_t(n) * C + c) * plane;
                const S* xp = xv.data() + (int64_t(n) * C + c) * plane;
                for (int64_t i = 0; i < plane; ++i) {
                    sum_g += gp[i];
                    sum_gxh += gp[i] * (xp[i] - mu) * is;
                }
            }
            ggamma[c] += sum_gxh;
            gbeta[c] += sum_g;
            const S ga = gamma[c];
            if (training) {
                // dx = gamma*invstd/m * (m*g - sum(g) - xhat*sum(g*xhat))
                const S k = ga * is / S(m);
                for (int n = 0; n < N; ++n) {
                    const S* gp = g.data() + (int64_t(n) * C + c) * plane;
                    const S* xp = xv.data() + (int64_t(n) * C + c) * plane;
                    S* gxp = gx.data() + (int64_t(n) * C + c) * plane;
                    for (int64_t i = 0; i < plane; ++i) {
                        const S xhat = (xp[i] - mu) * is;
                        gxp[i] += k * (S(m) * gp[i] - sum_g - xhat * sum_gxh);
                    }
                }
            } else {
                const S k = ga * is;
                for (int n = 0; n < N; ++n) {
                    const S* gp = g.data() + (int64_t(n) * C + c) * plane;
                    S* gxp = gx.data() + (int64_t(n) * C + c) * plane;
                    for (int64_t i = 0; i < plane; ++i) gxp[i] += k * gp[i];
                }
            }
        }
    };
    return t.record(OpKind::batchnorm2d, {x.id, gv.id, bv.id}, std::move(out), std::move(backward));
}

// ---- pooling and activations ---------------------------------------------------

/// 2x2 max pooling with stride 2. Backward routes the gradient to the argmax;
/// ties go to the first element in row-major scan order.
template <class S>
Var maxpool2d(Tape<S>& t, Var x) {
    const Tensor<S>& xv = t.value(x);
    require(xv.rank() == 4, ErrorKind::shape_mismatch, "maxpool2d: need NCHW, got ",
            shape_str(xv.shape()));
    const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    require(H % 2 == 0 && W % 2 == 0, ErrorKind::invalid_argument,
            "maxpool2d: H and W must be even, got ", H, "x", W);
    const int OH = H / 2, OW = W / 2;
    Tensor<S> out({N, C, OH, OW});
    std::vector<int32_t> argmax(size_t(out.numel()));  // offset within the input plane
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const S* xplane = xv.data() + (int64_t(n) * C + c) * H * W;
            S* oplane = out.data() + (int64_t(n) * C + c) * OH * OW;
            int32_t* aplane = argmax.data() + (int64_t(n) * C + c) * OH * OW;
            for (int oh = 0; oh < OH; ++oh)
                for (int ow = 0; ow < OW; ++ow) {
                    const int32_t base = int32_t(2 * oh) * W + 2 * ow;
                    const int32_t cand[4] = {base, base + 1, base + W, base + W + 1};
                    S best = xplane[cand[0]];
                    int32_t besti = cand[0];
                    for (int k = 1; k < 4; ++k)
                        if (xplane[cand[k]] > best) {
                            best = xplane[cand[k]];
                            besti = cand[k];
                        }
                    oplane[int64_t(oh) * OW + ow] = best;
                    aplane[int64_t(oh) * OW + ow] = besti;
                }
        }
    auto backward = [N, C, H, W, OH, OW, argmax = std::move(argmax)](Tape<S>& tp, int id) {
        const Tensor<S>& g = tp.grad(id);
        Tensor<S>& gx = tp.grad(tp.parents(id)[0]);
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                const S* gplane = g.data() + (int64_t(n) * C + c) * OH * OW;
                S* gxplane = gx.data() + (int64_t(n) * C + c) * H * W;
                const int32_t* aplane = argmax.data() + (int64_t(n) * C + c) * OH * OW;
                for (int64_t i = 0; i < int64_t(OH) * OW; ++i) gxplane[aplane[i]] += gplane[i];
            }
    };
    return t.record(OpKind::maxpool2d, {x.id}, std::move(out), std::move(backward));
}

template <class S>
Var relu(Tape<S>& t, Var x) {
    const Tensor<S>& xv = t.value(x);
    Tensor<S> out(xv.shape());
    for (int64_t i = 0; i < xv.numel(); ++i) out[i] = xv[i] > S(0) ? xv[i] : S(0);
    return t.record(OpKind::relu, {x.id}, std::move(out), [](Tape<S>& tp, int id) {
        const Tensor<S>& g = tp.grad(id);
        int p = tp.parents(id)[0];
        const Tensor<S>& xv = tp.value(p);
        Tensor<S>& gx = tp.grad(p);
        for (int64_t i = 0; i < g.numel(); ++i)
            if (xv[i] > S(0)) gx[i] += g[i];
    });
}

template <class S>
Var sigmoid(Tape<S>& t, Var x) {
    const Tensor<S>& xv = t.value(x);
    Tensor<S> out(xv.shape());
    for (int64_t i = 0; i < xv.numel(); ++i) {
        const S v = xv[i];
        if (v >= S(0)) {
            out[i] = S(1) / (S(1) + std::exp(-v));
        } else {
            const S e = std::exp(v);
            out[i] = e / (S(1) + e);
        }
    }
    return t.record(OpKind::sigmoid, {x.id}, std::move(out), [](Tape<S>& tp, int id) {
        const Tensor<S>& g = tp.grad(id);
        const Tensor<S>& y = tp.value(id);
        Tensor<S>& gx = tp.grad(tp.parents(id)[0]);
        for (int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * y[i] * (S(1) - y[i]);
    });
}

/// Per-pixel softmax across the channel axis, max-subtracted for stability.
template <class S>
Var softmax_channels(Tape<S>& t, Var x) {
    const Tensor<S>& xv = t.value(x);
    require(xv.rank() == 4, ErrorKind::shape_mismatch, "softmax_channels: need NCHW, got ",
            shape_str(xv.shape()));
    const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    require(C >= 2, ErrorKind::invalid_argument, "softmax_channels: need C >= 2, got ", C);
    const int64_t plane = int64_t(H) * W;
    Tensor<S> out(xv.shape());
    for (int n = 0; n < N; ++n) {
        const S* xb = xv.data() + int64_t(n) * C * plane;
        S* ob = out.data() + int64_t(n) * C * plane;
        for (int64_t i = 0; i < plane; ++i) {
            S mx = xb[i];
            for (int c = 1; c < C; ++c) mx = std::max(mx, xb[c * plane + i]);
            S z = S(0);
            for (int c = 0; c < C; ++c) {
                const S e = std::exp(xb[c * plane + i] - mx);
                ob[c * plane + i] = e;
                z += e;
            }
            const S inv = S(1) / z;
            for (int c = 0; c < C; ++c) ob[c * plane + i] *= inv;
        }
    }
    auto backward = [N, C, plane](Tape<S>& tp, int id) {
        const Tensor<S>& g = tp.grad(id);
        const Tensor<S>& y = tp.value(id);
        Tensor<S>& gx = tp.grad(tp.parents(id)[0]);
        for (int n = 0; n < N; ++n) {
            const S* gb = g.data() + int64_t(n) * C * plane;
            const S* yb = y.data() + int64_t(n) * C * plane;
            S* gxb = gx.data() + int64_t(n) * C * plane;
            for (int64_t i = 0; i < plane; ++i) {
                S dot = S(0);
                for (int c = 0; c < C; ++c) dot += gb[c * plane + i] * yb[c * plane + i];
                for (int c = 0; c < C; ++c)
                    gxb[c * plane + i] += yb[c * plane + i] * (gb[c * plane + i] - dot);
            }
        }
    };
    return t.record(OpKind::softmax_channels, {x.id}, std::move(out), std::move(backward));
}

enum class ActivationKind { relu, sigmoid, softmax_channels };

template <class S>
Var pointwise_activation(Tape<S>& t, ActivationKind kind, Var x) {
    switch (kind) {
        case ActivationKind::relu: return relu(t, x);
        case ActivationKind::sigmoid: return sigmoid(t, x);
        case ActivationKind::softmax_channels: return softmax_channels(t, x);
    }
    fail(ErrorKind::invalid_argument, "pointwise_activation: unknown kind");
}

/// Per-channel spatial mean: [N,C,H,W] -> [N,C].
template <class S>
Var global_avg_pool(Tape<S>& t, Var x) {
    const Tensor<S>& xv = t.value(x);
    require(xv.rank() == 4, ErrorKind::shape_mismatch, "global_avg_pool: need NCHW, got ",
            shape_str(xv.shape()));
    const int N = xv.dim(0), C = xv.dim(1);
    const int64_t plane = int64_t(xv.dim(2)) * xv.dim(3);
    Tensor<S> out({N, C});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const S* p = xv.data() + (int64_t(n) * C + c) * plane;
            S acc = S(0);
            for (int64_t i = 0; i < plane; ++i) acc += p[i];
            out[int64_t(n) * C + c] = acc / S(plane);
        }
    auto backward = [N, C, plane](Tape<S>& tp, int id) {
        const Tensor<S>& g = tp.grad(id);
        Tensor<S>& gx = tp.grad(tp.parents(id)[0]);
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                const S gv = g[int64_t(n) * C + c] / S(plane);
                S* p = gx.data() + (int64_t(n) * C + c) * plane;
                for (int64_t i = 0; i < plane; ++i) p[i] += gv;
            }
    };
    return t.record(OpKind::global_avg_pool, {x.id}, std::move(out), std::move(backward));
}

/// Concatenate along the channel axis in argument order.
template <class S>
Var concat_channels(Tape<S>& t, const std::vector<Var>& xs) {
    require(!xs.empty(), ErrorKind::invalid_argument, "concat_channels: empty input list");
    const Tensor<S>& first = t.value(xs[0]);
    require(first.rank() == 4, ErrorKind::shape_mismatch, "concat_channels: need NCHW, got ",
            shape_str(first.shape()));
    const int N = first.dim(0), H = first.dim(2), W = first.dim(3);
    int Ctot = 0;
    std::vector<int> parents;
    std::vector<int> channels;
    for (Var v : xs) {
        const Tensor<S>& tv = t.value(v);
        require(tv.rank() == 4 && tv.dim(0) == N && tv.dim(2) == H && tv.dim(3) == W,
                ErrorKind::shape_mismatch, "concat_channels: mismatched dims ",
                shape_str(tv.shape()), " vs ", shape_str(first.shape()));
        parents.push_back(v.id);
        channels.push_back(tv.dim(1));
        Ctot += tv.dim(1);
    }
    const int64_t plane = int64_t(H) * W;
    Tensor<S> out({N, Ctot, H, W});
    for (int n = 0; n < N; ++n) {
        int coff = 0;
        for (size_t k = 0; k < xs.size(); ++k) {
            const Tensor<S>& tv = t.value(xs[k]);
            const int ck = channels[k];
            const S* src = tv.data() + int64_t(n) * ck * plane;
            S* dst = out.data() + (int64_t(n) * Ctot + coff) * plane;
            for (int64_t i = 0; i < int64_t(ck) * plane; ++i) dst[i] = src[i];
            coff += ck;
        }
    }
    auto backward = [N, Ctot, plane, channels](Tape<S>& tp, int id) {
        const Tensor<S>& g = tp.grad(id);
        const std::vector<int>& ps = tp.parents(id);
        for (int n = 0; n < N; ++n) {
            int coff = 0;
            for (size_t k = 0; k < ps.size(); ++k) {
                const int ck = channels[k];
                Tensor<S>& gp = tp.grad(ps[k]);
                const S* src = g.data() + (int64_t(n) * Ctot + coff) * plane;
                S* dst = gp.data() + int64_t(n) * ck * plane;
                for (int64_t i = 0; i < int64_t(ck) * plane; ++i) dst[i] += src[i];
                coff += ck;
            }
        }
    };
    return t.record(OpKind::concat_channels, std::move(parents), std::move(out),
                    std::move(backward));
}

/// Dense layer on [N, C]: y = x * w^T + b with w [O, C], b [O].
template <class S>
Var linear(Tape<S>& t, Var x, Var w, Var b) {
    const Tensor<S>& xv = t.value(x);
    const Tensor<S>& wv = t.value(w);
    const Tensor<S>& bv = t.value(b);
    require(xv.rank() == 2 && wv.rank() == 2 && bv.rank() == 1, ErrorKind::shape_mismatch,
            "linear: need x [N,C], w [O,C], b [O]; got x ", shape_str(xv.shape()), " w ",
            shape_str(wv.shape()));
    const int N = xv.dim(0), C = xv.dim(1), O = wv.dim(0);
    require(wv.dim(1) == C && bv.dim(0) == O, ErrorKind::shape_mismatch,
            "linear: shapes inconsistent, x ", shape_str(xv.shape()), " w ",
            shape_str(wv.shape()), " b ", shape_str(bv.shape()));
    Tensor<S> out({N, O});
    for (int n = 0; n < N; ++n)
        for (int o = 0; o < O; ++o) {
            S acc = bv[o];
            const S* xr = xv.data() + int64_t(n) * C;
            const S* wr = wv.data() + int64_t(o) * C;
            for (int c = 0; c < C; ++c) acc += wr[c] * xr[c];
            out[int64_t(n) * O + o] = acc;
        }
    auto backward = [N, C, O](Tape<S>& tp, int id) {
        const Tensor<S>& g = tp.grad(id);
        int px = tp.parents(id)[0], pw = tp.parents(id)[1], pb = tp.parents(id)[2];
        const Tensor<S>& xv = tp.value(px);
        const Tensor<S>& wv = tp.value(pw);
        Tensor<S>& gx = tp.grad(px);
        Tensor<S>& gw = tp.grad(pw);
        Tensor<S>& gb = tp.grad(pb);
        for (int n = 0; n < N; ++n)
            for (int o = 0; o < O; ++o) {
                const S gv = g[int64_t(n) * O + o];
                gb[o] += gv;
                const S* xr = xv.data() + int64_t(n) * C;
                const S* wr = wv.data() + int64_t(o) * C;
                S* gxr = gx.data() + int64_t(n) * C;
                S* gwr = gw.data() + int64_t(o) * C;
                for (int c = 0; c < C; ++c) {
                    gxr[c] += gv * wr[c];
                    gwr[c] += gv * xr[c];
                }
            }
    };
    return t.record(OpKind::linear, {x.id, w.id, b.id}, std::move(out), std::move(backward));
}

/// Multiply each channel plane of x [N,C,H,W] by gate [N,C].
template <class S>
Var channel_scale(Tape<S>& t, Var x, Var gate) {
    const Tensor<S>& xv = t.value(x);
    const Tensor<S>& gv = t.value(gate);
    require(xv.rank() == 4 && gv.rank() == 2 && gv.dim(0) == xv.dim(0) && gv.dim(1) == xv.dim(1),
            ErrorKind::shape_mismatch, "channel_scale: x ", shape_str(xv.shape()), " gate ",
            shape_str(gv.shape()));
    const int N = xv.dim(0), C = xv.dim(1);
    const int64_t plane = int64_t(xv.dim(2)) * xv.dim(3);
    Tensor<S> out(xv.shape());
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const S s = gv[int64_t(n) * C + c];
            const S* p = xv.data() + (int64_t(n) * C + c) * plane;
            S* o = out.data() + (int64_t(n) * C + c) * plane;
            for (int64_t i = 0; i < plane; ++i) o[i] = s * p[i];
        }
    auto backward = [N, C, plane](Tape<S>& tp, int id) {
        const Tensor<S>& g = tp.grad(id);
        int px = tp.parents(id)[0], pg = tp.parents(id)[1];
        const Tensor<S>& xv = tp.value(px);
        const Tensor<S>& gatev = tp.value(pg);
        Tensor<S>& gx = tp.grad(px);
        Tensor<S>& ggate = tp.grad(pg);
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                const S s = gatev[int64_t(n) * C + c];
                const S* gp = g.data() + (int64_t(n) * C + c) * plane;
                const S* xp = xv.data() + (int64_t(n) * C + c) * plane;
                S* gxp = gx.data() + (int64_t(n) * C + c) * plane;
                S acc = S(0);
                for (int64_t i = 0; i < plane; ++i) {
                    gxp[i] += s * gp[i];
                    acc += gp[i] * xp[i];
                }
                ggate[int64_t(n) * C + c] += acc;
            }
    };
    return t.record(OpKind::channel_scale, {x.id, gate.id}, std::move(out), std::move(backward));
}

// ---- composite blocks -----------------------------------------------------------

/// Squeeze-excitation: x * sigmoid(fc2(relu(fc1(GAP(x))))), gate broadcast
/// over H,W. Gradients flow through both the gate and the identity path.
template <class S>
Var se_block(Tape<S>& t, Var x, SeBlockParams<S>& p) {
    const Tensor<S>& xv = t.value(x);
    require(xv.rank() == 4 && xv.dim(1) == p.channels(), ErrorKind::shape_mismatch,
            "se_block: input has ", xv.dim(1), " channels, block expects ", p.channels());
    Var squeezed = global_avg_pool(t, x);
    Var h = relu(t, linear(t, squeezed, t.param(p.fc1_weight), t.param(p.fc1_bias)));
    Var gate = sigmoid(t, linear(t, h, t.param(p.fc2_weight), t.param(p.fc2_bias)));
    return channel_scale(t, x, gate);
}

/// Pyramid dilated convolution block: three parallel 3x3 convs (dilation 1/2/3,
/// padding = dilation), each ReLU-activated, concatenated, fused by 1x1 conv.
template <class S>
Var pdc_block(Tape<S>& t, Var x, PdcParams<S>& p) {
    const Tensor<S>& xv = t.value(x);
    require(xv.rank() == 4 && xv.dim(1) == p.branches[0].weight.value.dim(1),
            ErrorKind::shape_mismatch, "pdc_block: input has ", xv.dim(1),
            " channels, block expects ", p.branches[0].weight.value.dim(1));
    std::vector<Var> outs;
    outs.reserve(3);
    for (auto& branch : p.branches) outs.push_back(relu(t, conv2d(t, x, branch)));
    Var fused = concat_channels(t, outs);
    return conv2d(t, fused, p.fusion);
}

}  // namespace panseg

#endif  // PANSEG_LAYERS_HPP
