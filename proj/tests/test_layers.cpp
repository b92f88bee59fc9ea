#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "panseg/gradcheck_suite.hpp"
#include "panseg/layers.hpp"

using namespace panseg;

namespace {

Tensor<double> rand_t(Shape shape, Rng& r, double lo = -1.0, double hi = 1.0) {
    Tensor<double> t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = lo + (hi - lo) * r.uniform();
    return t;
}

// Direct-sum convolution: per output element, bias first, then taps in
// (ci, kh, kw) order — the defining formula, written independently.
Tensor<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& w,
                           const Tensor<double>& b, int stride, int padding, int dilation) {
    const int N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int OH = conv_out_dim(H, kh, stride, padding, dilation);
    const int OW = conv_out_dim(W, kw, stride, padding, dilation);
    Tensor<double> out({N, Cout, OH, OW});
    for (int n = 0; n < N; ++n)
        for (int co = 0; co < Cout; ++co)
            for (int oh = 0; oh < OH; ++oh)
                for (int ow = 0; ow < OW; ++ow) {
                    double acc = b[co];
                    for (int ci = 0; ci < Cin; ++ci)
                        for (int ikh = 0; ikh < kh; ++ikh)
                            for (int ikw = 0; ikw < kw; ++ikw) {
                                const int ih = oh * stride + ikh * dilation - padding;
                                const int iw = ow * stride + ikw * dilation - padding;
                                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                                acc += w.at(co, ci, ikh, ikw) * x.at(n, ci, ih, iw);
                            }
                    out.at(n, co, oh, ow) = acc;
                }
    return out;
}

}  // namespace

TEST_CASE("conv2d equals the direct-sum oracle exactly on 50 random cases") {
    Rng r(2024);
    for (int c = 0; c < 50; ++c) {
        const int N = 1 + int(r.below(2));
        const int Cin = 1 + int(r.below(3));
        const int Cout = 1 + int(r.below(3));
        const int k = r.below(2) ? 3 : 1;
        const int dilation = k == 3 ? 1 + int(r.below(3)) : 1;
        const int stride = 1 + int(r.below(2));
        const int padding = int(r.below(3));
        const int lo = dilation * (k - 1) + 1;  // smallest input with a valid output
        const int H = lo + int(r.below(8));
        const int W = lo + int(r.below(8));

        const Tensor<double> x = rand_t({N, Cin, H, W}, r);
        const Tensor<double> w = rand_t({Cout, Cin, k, k}, r);
        const Tensor<double> b = rand_t({Cout}, r);

        Tape<double> t;
        const Var y =
            conv2d(t, t.constant(x), t.constant(w), t.constant(b), stride, padding, dilation);
        const Tensor<double> want = conv_oracle(x, w, b, stride, padding, dilation);
        const Tensor<double>& got = t.value(y);
        REQUIRE(got.same_shape(want));
        for (int64_t i = 0; i < got.numel(); ++i) {
            INFO("case " << c << " entry " << i);
            REQUIRE(got[i] == want[i]);
        }
    }
}

TEST_CASE("conv2d hand case: 3x3 box filter") {
    Tensor<double> x({1, 1, 3, 3});
    for (int64_t i = 0; i < 9; ++i) x[i] = double(i + 1);  // 1..9, sum 45
    const Tensor<double> w = Tensor<double>::full({1, 1, 3, 3}, 1.0);
    const Tensor<double> b = Tensor<double>::full({1}, 0.5);
    Tape<double> t;
    const Var y = conv2d(t, t.constant(x), t.constant(w), t.constant(b), 1, 0, 1);
    REQUIRE(t.value(y).numel() == 1);
    CHECK(t.value(y)[0] == 45.5);
}

TEST_CASE("conv2d rejects inconsistent shapes and degenerate outputs") {
    Tape<double> t;
    const Var x = t.constant(Tensor<double>::zeros({1, 2, 4, 4}));
    const Var w = t.constant(Tensor<double>::zeros({3, 2, 3, 3}));
    const Var w_bad = t.constant(Tensor<double>::zeros({3, 5, 3, 3}));
    const Var b = t.constant(Tensor<double>::zeros({3}));
    const Var b_bad = t.constant(Tensor<double>::zeros({2}));
    CHECK_THROWS_AS(conv2d(t, x, w_bad, b), Error);
    CHECK_THROWS_AS(conv2d(t, x, w, b_bad), Error);
    CHECK_THROWS_AS(conv2d(t, x, w, b, 1, 0, 3), Error);  // 3x3 dil 3 needs >= 7 px
    CHECK_THROWS_AS(conv2d(t, x, w, b, 0, 0, 1), Error);
}

TEST_CASE("upsample2x doubles the grid and matches its defining sum exactly") {
    Rng r(7);
    const Tensor<double> x = rand_t({2, 3, 4, 5}, r);
    const Tensor<double> w = rand_t({2, 3, 2, 2}, r);  // [Cout, Cin, 2, 2]
    const Tensor<double> b = rand_t({2}, r);
    Tape<double> t;
    const Var y = upsample2x(t, t.constant(x), t.constant(w), t.constant(b));
    const Tensor<double>& got = t.value(y);
    REQUIRE(got.dim(0) == 2);
    REQUIRE(got.dim(1) == 2);
    REQUIRE(got.dim(2) == 8);
    REQUIRE(got.dim(3) == 10);
    for (int n = 0; n < 2; ++n)
        for (int co = 0; co < 2; ++co)
            for (int oh = 0; oh < 8; ++oh)
                for (int ow = 0; ow < 10; ++ow) {
                    double acc = b[co];
                    for (int ci = 0; ci < 3; ++ci)
                        acc += w.at(co, ci, oh % 2, ow % 2) * x.at(n, ci, oh / 2, ow / 2);
                    REQUIRE(got.at(n, co, oh, ow) == acc);
                }
}

TEST_CASE("batchnorm normalizes batch statistics and tracks running estimates") {
    Rng r(3);
    const Tensor<double> x = rand_t({4, 3, 5, 5}, r, -2.0, 3.0);
    BatchNormState<double> bn("bn", 3);
    Tape<double> t;
    const Var y = batchnorm2d(t, t.constant(x), bn, true);
    const Tensor<double>& yv = t.value(y);

    const int64_t per = 4 * 25;
    for (int c = 0; c < 3; ++c) {
        double sum = 0, sq = 0;
        for (int n = 0; n < 4; ++n)
            for (int h = 0; h < 5; ++h)
                for (int wv = 0; wv < 5; ++wv) {
                    const double v = yv.at(n, c, h, wv);
                    sum += v;
                    sq += v * v;
                }
        const double mean = sum / double(per);
        const double var = sq / double(per) - mean * mean;
        CHECK(std::abs(mean) < 1e-9);
        CHECK(std::abs(var - 1.0) < 1e-4);  // gamma=1: unit variance up to epsilon

        // running stats after one step: 0.9 * init + 0.1 * batch
        double bsum = 0, bsq = 0;
        for (int n = 0; n < 4; ++n)
            for (int h = 0; h < 5; ++h)
                for (int wv = 0; wv < 5; ++wv) {
                    const double v = x.at(n, c, h, wv);
                    bsum += v;
                    bsq += v * v;
                }
        const double bmean = bsum / double(per);
        const double bvar = bsq / double(per) - bmean * bmean;
        CHECK(bn.running_mean.value[c] == Catch::Approx(0.1 * bmean).margin(1e-9));
        CHECK(bn.running_var.value[c] == Catch::Approx(0.9 + 0.1 * bvar).margin(1e-9));
    }

    // inference mode uses the running estimates: a second pass over the same
    // input no longer yields exactly unit variance
    Tape<double> t2;
    const Var y2 = batchnorm2d(t2, t2.constant(x), bn, false);
    CHECK(std::isfinite(t2.value(y2)[0]));
    CHECK_FALSE(t2.value(y2)[0] == yv[0]);
}

TEST_CASE("maxpool picks the window maximum and routes gradient to it") {
    Tensor<double> x({1, 1, 2, 4});
    // windows: {1,5,2,6} -> 6 at (1,1); {3,0,-1,4} -> 4 at (1,3)
    x[0] = 1;
    x[1] = 5;
    x[2] = 3;
    x[3] = 0;
    x[4] = 2;
    x[5] = 6;
    x[6] = -1;
    x[7] = 4;
    Parameter<double> p{"x", x};
    Tape<double> t;
    const Var y = maxpool2d(t, t.param(p));
    REQUIRE(t.value(y).numel() == 2);
    CHECK(t.value(y)[0] == 6.0);
    CHECK(t.value(y)[1] == 4.0);

    const Var loss = sum(t, mul_scalar(t, y, 3.0));
    t.backward(loss);
    const double want[8] = {0, 0, 0, 0, 0, 3, 0, 3};
    for (int64_t i = 0; i < 8; ++i) CHECK(p.grad[i] == want[i]);

    Tape<double> t2;
    CHECK_THROWS_AS(maxpool2d(t2, t2.constant(Tensor<double>::zeros({1, 1, 3, 4}))), Error);
}

TEST_CASE("activations compute the expected values") {
    Tensor<double> x({1, 2, 1, 2});
    x[0] = -1.0;
    x[1] = 0.0;
    x[2] = 2.0;
    x[3] = -50.0;
    Tape<double> t;
    const Var xr = t.constant(x);

    const Tensor<double>& rv = t.value(relu(t, xr));
    CHECK(rv[0] == 0.0);
    CHECK(rv[1] == 0.0);
    CHECK(rv[2] == 2.0);
    CHECK(rv[3] == 0.0);

    const Tensor<double>& sv = t.value(sigmoid(t, xr));
    CHECK(sv[0] == Catch::Approx(1.0 / (1.0 + std::exp(1.0))).epsilon(1e-12));
    CHECK(sv[1] == 0.5);
    CHECK(sv[2] == Catch::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-12));
    CHECK(sv[3] > 0.0);  // stable, no underflow to exactly 0 needed, just finite
    CHECK(std::isfinite(sv[3]));
}

TEST_CASE("softmax_channels sums to one and survives large logits") {
    Rng r(5);
    Tensor<double> x = rand_t({2, 2, 3, 3}, r, -60.0, 60.0);
    Tape<double> t;
    const Tensor<double>& y = t.value(softmax_channels(t, t.constant(x)));
    for (int n = 0; n < 2; ++n)
        for (int h = 0; h < 3; ++h)
            for (int wv = 0; wv < 3; ++wv) {
                const double s = y.at(n, 0, h, wv) + y.at(n, 1, h, wv);
                CHECK(s == Catch::Approx(1.0).epsilon(1e-12));
                CHECK(y.at(n, 0, h, wv) >= 0.0);
            }
}

TEST_CASE("global_avg_pool, linear, channel_scale, concat hand cases") {
    Tape<double> t;
    Tensor<double> x({1, 2, 2, 2});
    for (int64_t i = 0; i < 8; ++i) x[i] = double(i);
    const Tensor<double>& g = t.value(global_avg_pool(t, t.constant(x)));
    REQUIRE(g.rank() == 2);
    CHECK(g[0] == 1.5);  // mean of 0..3
    CHECK(g[1] == 5.5);  // mean of 4..7

    Tensor<double> xi({1, 2});
    xi[0] = 2.0;
    xi[1] = 3.0;
    Tensor<double> wl({2, 2});
    wl[0] = 1.0;
    wl[1] = -1.0;
    wl[2] = 0.5;
    wl[3] = 0.5;
    Tensor<double> bl({2});
    bl[0] = 10.0;
    bl[1] = 0.0;
    const Tensor<double>& lv = t.value(linear(t, t.constant(xi), t.constant(wl), t.constant(bl)));
    CHECK(lv[0] == 9.0);   // 2 - 3 + 10
    CHECK(lv[1] == 2.5);   // 1 + 1.5

    Tensor<double> gate({1, 2});
    gate[0] = 2.0;
    gate[1] = -1.0;
    const Tensor<double>& cv = t.value(channel_scale(t, t.constant(x), t.constant(gate)));
    CHECK(cv[0] == 0.0);
    CHECK(cv[3] == 6.0);
    CHECK(cv[4] == -4.0);

    const Var a = t.constant(Tensor<double>::full({1, 1, 2, 2}, 1.0));
    const Var b = t.constant(Tensor<double>::full({1, 2, 2, 2}, 2.0));
    const Tensor<double>& cc = t.value(concat_channels(t, {a, b}));
    REQUIRE(cc.dim(1) == 3);
    CHECK(cc[0] == 1.0);
    CHECK(cc[4] == 2.0);
    CHECK(cc[11] == 2.0);
}

TEST_CASE("se_block gates each channel by a factor in (0,1)") {
    Rng r(9);
    const Tensor<double> x = rand_t({2, 8, 3, 3}, r, 0.1, 1.0);
    SeBlockParams<double> se{Parameter<double>{"se.fc1.weight", rand_t({4, 8}, r)},
                             Parameter<double>{"se.fc1.bias", rand_t({4}, r)},
                             Parameter<double>{"se.fc2.weight", rand_t({8, 4}, r)},
                             Parameter<double>{"se.fc2.bias", rand_t({8}, r)}, 4};
    CHECK(se.channels() == 8);
    CHECK(se.bottleneck() == 4);
    CHECK(se_bottleneck_width(8, 4) == 4);
    CHECK(se_bottleneck_width(6, 16) == 4);  // floor clamps at 4
    CHECK(se_bottleneck_width(128, 16) == 8);

    Tape<double> t;
    const Var y = se_block(t, t.constant(x), se);
    const Tensor<double>& yv = t.value(y);
    REQUIRE(yv.same_shape(x));
    for (int n = 0; n < 2; ++n)
        for (int c = 0; c < 8; ++c) {
            const double ratio = yv.at(n, c, 0, 0) / x.at(n, c, 0, 0);
            CHECK(ratio > 0.0);
            CHECK(ratio < 1.0);
            for (int h = 0; h < 3; ++h)
                for (int wv = 0; wv < 3; ++wv)
                    CHECK(yv.at(n, c, h, wv) ==
                          Catch::Approx(ratio * x.at(n, c, h, wv)).margin(1e-12));
        }
}

TEST_CASE("pdc_block preserves shape for any dilation-compatible input") {
    Rng r(13);
    const Tensor<double> x = rand_t({1, 4, 7, 9}, r);
    auto branch = [&](const char* name, int d) {
        return Conv2dParams<double>{Parameter<double>{cat(name, ".weight"), rand_t({4, 4, 3, 3}, r)},
                                    Parameter<double>{cat(name, ".bias"), rand_t({4}, r)}, 1, d, d};
    };
    PdcParams<double> pdc{std::array<Conv2dParams<double>, 3>{branch("pdc.d1", 1),
                                                              branch("pdc.d2", 2),
                                                              branch("pdc.d3", 3)},
                          Conv2dParams<double>{
                              Parameter<double>{"pdc.fusion.weight", rand_t({4, 12, 1, 1}, r)},
                              Parameter<double>{"pdc.fusion.bias", rand_t({4}, r)}, 1, 0, 1}};
    Tape<double> t;
    const Tensor<double>& y = t.value(pdc_block(t, t.constant(x), pdc));
    CHECK(y.same_shape(x));
}

TEST_CASE("every layer op and loss passes its finite-difference check") {
    const auto cases = run_gradcheck_suite();
    REQUIRE(cases.size() >= 18);
    for (const auto& c : cases) {
        INFO(c.name << " worst entry " << c.report.worst << " rel err " << c.report.max_rel_err);
        CHECK(c.report.max_rel_err < gradcheck_tolerance);
    }
}
