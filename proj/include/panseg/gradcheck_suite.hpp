#ifndef PANSEG_GRADCHECK_SUITE_HPP
#define PANSEG_GRADCHECK_SUITE_HPP

#include <string>
#include <vector>

#include "panseg/gradcheck.hpp"
#include "panseg/losses.hpp"

namespace panseg {

struct GradCheckCase {
    std::string name;
    GradCheckReport report;
};

inline constexpr double gradcheck_tolerance = 1e-4;

namespace detail_gradsuite {

inline Tensor<double> rand_tensor(Shape shape, Rng& r, double lo = -1.0, double hi = 1.0) {
    Tensor<double> t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = lo + (hi - lo) * r.uniform();
    return t;
}

/// Uniform values kept away from zero, for ops with a kink there.
inline Tensor<double> rand_offzero(Shape shape, Rng& r) {
    Tensor<double> t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) {
        const double u = -0.75 + 1.5 * r.uniform();
        t[i] = u + (u >= 0 ? 0.25 : -0.25);
    }
    return t;
}

inline Tensor<double> rand_binary(Shape shape, Rng& r) {
    Tensor<double> t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = r.uniform() < 0.5 ? 0.0 : 1.0;
    return t;
}

/// sum(y*y): a scalar whose gradient distinguishes every entry of y.
inline Var sq_sum(Tape<double>& t, Var y) { return sum(t, mul(t, y, y)); }

}  // namespace detail_gradsuite

/// Finite-difference checks for every differentiable op and loss, double
/// precision, eps 1e-5. Deterministic; each case reports its max relative
/// error against gradcheck_tolerance.
inline std::vector<GradCheckCase> run_gradcheck_suite() {
    using detail_gradsuite::rand_binary;
    using detail_gradsuite::rand_offzero;
    using detail_gradsuite::rand_tensor;
    using detail_gradsuite::sq_sum;

    std::vector<GradCheckCase> cases;
    auto run = [&cases](const std::string& name, auto f, std::vector<Parameter<double>*> ps) {
        cases.push_back(GradCheckCase{name, gradcheck(f, ps)});
    };

    Rng root(0x5eed);

    {  // conv2d, each dilation rate, and a strided case
        for (int d : {1, 2, 3}) {
            Rng r = root.fork(uint64_t(d));
            Parameter<double> x{"x", rand_tensor({2, 3, 9, 9}, r)};
            Parameter<double> w{"w", rand_tensor({4, 3, 3, 3}, r)};
            Parameter<double> b{"b", rand_tensor({4}, r)};
            auto f = [&]() {
                Tape<double> t;
                Var loss = sq_sum(t, conv2d(t, t.param(x), t.param(w), t.param(b), 1, d, d));
                t.backward(loss);
                return t.value(loss)[0];
            };
            run(cat("conv2d_dilation", d), f, {&x, &w, &b});
        }
        Rng r = root.fork(10);
        Parameter<double> x{"x", rand_tensor({1, 2, 8, 8}, r)};
        Parameter<double> w{"w", rand_tensor({3, 2, 3, 3}, r)};
        Parameter<double> b{"b", rand_tensor({3}, r)};
        auto f = [&]() {
            Tape<double> t;
            Var loss = sq_sum(t, conv2d(t, t.param(x), t.param(w), t.param(b), 2, 1, 1));
            t.backward(loss);
            return t.value(loss)[0];
        };
        run("conv2d_stride2", f, {&x, &w, &b});

        Rng r1 = root.fork(11);
        Parameter<double> x1{"x", rand_tensor({2, 5, 4, 4}, r1)};
        Parameter<double> w1{"w", rand_tensor({3, 5, 1, 1}, r1)};
        Parameter<double> b1{"b", rand_tensor({3}, r1)};
        auto f1 = [&]() {
            Tape<double> t;
            Var loss = sq_sum(t, conv2d(t, t.param(x1), t.param(w1), t.param(b1)));
            t.backward(loss);
            return t.value(loss)[0];
        };
        run("conv2d_1x1", f1, {&x1, &w1, &b1});
    }

    {  // transposed-conv upsampling
        Rng r = root.fork(20);
        Parameter<double> x{"x", rand_tensor({1, 4, 5, 6}, r)};
        Parameter<double> w{"w", rand_tensor({4, 2, 2, 2}, r)};
        Parameter<double> b{"b", rand_tensor({2}, r)};
        auto f = [&]() {
            Tape<double> t;
            Var loss = sq_sum(t, upsample2x(t, t.param(x), t.param(w), t.param(b)));
            t.backward(loss);
            return t.value(loss)[0];
        };
        run("upsample2x", f, {&x, &w, &b});
    }

    {  // batchnorm, training statistics
        Rng r = root.fork(30);
        Parameter<double> x{"x", rand_tensor({3, 4, 6, 5}, r)};
        BatchNormState<double> bn("bn", 4);
        for (int64_t i = 0; i < 4; ++i) bn.gamma.value[i] = 0.5 + r.uniform();
        auto f = [&]() {
            Tape<double> t;
            Var loss = sq_sum(t, batchnorm2d(t, t.param(x), bn, true));
            t.backward(loss);
            return t.value(loss)[0];
        };
        run("batchnorm2d", f, {&x, &bn.gamma, &bn.beta});
    }

    {  // maxpool
        Rng r = root.fork(40);
        Parameter<double> x{"x", rand_tensor({2, 3, 6, 8}, r)};
        auto f = [&]() {
            Tape<double> t;
            Var loss = sq_sum(t, maxpool2d(t, t.param(x)));
            t.backward(loss);
            return t.value(loss)[0];
        };
        run("maxpool2d", f, {&x});
    }

    {  // activations
        Rng r = root.fork(50);
        Parameter<double> x{"x", rand_offzero({2, 3, 5, 5}, r)};
        auto f = [&]() {
            Tape<double> t;
            Var loss = sq_sum(t, relu(t, t.param(x)));
            t.backward(loss);
            return t.value(loss)[0];
        };
        run("relu", f, {&x});

        Parameter<double> y{"x", rand_tensor({2, 3, 5, 5}, r, -3, 3)};
        auto g = [&]() {
            Tape<double> t;
            Var loss = sq_sum(t, sigmoid(t, t.param(y)));
            t.backward(loss);
            return t.value(loss)[0];
        };
        run("sigmoid", g, {&y});

        Parameter<double> z{"x", rand_tensor({2, 4, 3, 3}, r, -2, 2)};
        auto h = [&]() {
            Tape<double> t;
            Var sm = softmax_channels(t, t.param(z));
            // squared distance to a constant target so the loss sees every channel
            Var d = sub(t, sm, t.constant(Tensor<double>::full({2, 4, 3, 3}, 0.25)));
            Var loss = sq_sum(t, d);
            t.backward(loss);
            return t.value(loss)[0];
        };
        run("softmax_channels", h, {&z});
    }

    {  // dense / pooling / concat plumbing
        Rng r = root.fork(60);
        Parameter<double> x{"x", rand_tensor({3, 5}, r)};
        Parameter<double> w{"w", rand_tensor({4, 5}, r)};
        Parameter<double> b{"b", rand_tensor({4}, r)};
        auto f = [&]() {
            Tape<double> t;
            Var loss = sq_sum(t, linear(t, t.param(x), t.param(w), t.param(b)));
            t.backward(loss);
            return t.value(loss)[0];
        };
        run("linear", f, {&x, &w, &b});

        Parameter<double> xc{"x", rand_tensor({2, 3, 4, 4}, r)};
        Parameter<double> gate{"gate", rand_tensor({2, 3}, r)};
        auto g = [&]() {
            Tape<double> t;
            Var loss = sq_sum(t, channel_scale(t, t.param(xc), t.param(gate)));
            t.backward(loss);
            return t.value(loss)[0];
        };
        run("channel_scale", g, {&xc, &gate});

        Parameter<double> xg{"x", rand_tensor({2, 3, 4, 6}, r)};
        auto h = [&]() {
            Tape<double> t;
            Var loss = sq_sum(t, global_avg_pool(t, t.param(xg)));
            t.backward(loss);
            return t.value(loss)[0];
        };
        run("global_avg_pool", h, {&xg});

        Parameter<double> a{"a", rand_tensor({1, 2, 3, 3}, r)};
        Parameter<double> c{"c", rand_tensor({1, 3, 3, 3}, r)};
        auto k = [&]() {
            Tape<double> t;
            Var loss = sq_sum(t, concat_channels(t, {t.param(a), t.param(c)}));
            t.backward(loss);
            return t.value(loss)[0];
        };
        run("concat_channels", k, {&a, &c});
    }

    {  // squeeze-excitation block (C=8, reduction 4 -> bottleneck 4)
        Rng r = root.fork(70);
        Parameter<double> x{"x", rand_tensor({2, 8, 4, 4}, r)};
        SeBlockParams<double> se{Parameter<double>{"se.fc1.weight", rand_tensor({4, 8}, r)},
                                 Parameter<double>{"se.fc1.bias", rand_tensor({4}, r)},
                                 Parameter<double>{"se.fc2.weight", rand_tensor({8, 4}, r)},
                                 Parameter<double>{"se.fc2.bias", rand_tensor({8}, r)}, 4};
        auto f = [&]() {
            Tape<double> t;
            Var loss = sq_sum(t, se_block(t, t.param(x), se));
            t.backward(loss);
            return t.value(loss)[0];
        };
        run("se_block", f,
            {&x, &se.fc1_weight, &se.fc1_bias, &se.fc2_weight, &se.fc2_bias});
    }

    {  // pyramid dilated convolution block (C=4)
        Rng r = root.fork(80);
        Parameter<double> x{"x", rand_tensor({1, 4, 6, 6}, r)};
        auto branch = [&](const char* name, int d) {
            return Conv2dParams<double>{
                Parameter<double>{cat(name, ".weight"), rand_tensor({4, 4, 3, 3}, r)},
                Parameter<double>{cat(name, ".bias"), rand_tensor({4}, r)}, 1, d, d};
        };
        PdcParams<double> pdc{
            std::array<Conv2dParams<double>, 3>{branch("pdc.d1", 1), branch("pdc.d2", 2),
                                                branch("pdc.d3", 3)},
            Conv2dParams<double>{
                Parameter<double>{"pdc.fusion.weight", rand_tensor({4, 12, 1, 1}, r)},
                Parameter<double>{"pdc.fusion.bias", rand_tensor({4}, r)}, 1, 0, 1}};
        std::vector<Parameter<double>*> ps{&x};
        for (auto& br : pdc.branches) {
            ps.push_back(&br.weight);
            ps.push_back(&br.bias);
        }
        ps.push_back(&pdc.fusion.weight);
        ps.push_back(&pdc.fusion.bias);
        auto f = [&]() {
            Tape<double> t;
            Var loss = sq_sum(t, pdc_block(t, t.param(x), pdc));
            t.backward(loss);
            return t.value(loss)[0];
        };
        run("pdc_block", f, ps);
    }

    {  // losses on random 16x16 inputs; predictions squashed to (0,1)
        Rng r = root.fork(90);
        Parameter<double> p{"logits", rand_tensor({1, 1, 16, 16}, r, -2, 2)};
        Tensor<double> lbl = rand_binary({1, 1, 16, 16}, r);
        auto f_dice = [&]() {
            Tape<double> t;
            Var loss = dice_loss(t, sigmoid(t, t.param(p)), t.constant(lbl));
            t.backward(loss);
            return t.value(loss)[0];
        };
        run("dice_loss", f_dice, {&p});

        auto f_bce = [&]() {
            Tape<double> t;
            Var loss = bce_loss(t, sigmoid(t, t.param(p)), t.constant(lbl));
            t.backward(loss);
            return t.value(loss)[0];
        };
        run("bce_loss", f_bce, {&p});

        Parameter<double> q{"logits_b", rand_tensor({1, 1, 16, 16}, r, -2, 2)};
        SsimConfig win;  // 11x11 Gaussian window
        auto f_ssim = [&]() {
            Tape<double> t;
            Var loss = ssim_loss(t, sigmoid(t, t.param(p)), sigmoid(t, t.param(q)), win);
            t.backward(loss);
            return t.value(loss)[0];
        };
        run("ssim_loss_windowed", f_ssim, {&p, &q});

        SsimConfig glob;
        glob.mode = SsimConfig::Mode::global;
        auto f_ssim_g = [&]() {
            Tape<double> t;
            Var loss = ssim_loss(t, sigmoid(t, t.param(p)), sigmoid(t, t.param(q)), glob);
            t.backward(loss);
            return t.value(loss)[0];
        };
        run("ssim_loss_global", f_ssim_g, {&p, &q});
    }

    return cases;
}

}  // namespace panseg

#endif  // PANSEG_GRADCHECK_SUITE_HPP
