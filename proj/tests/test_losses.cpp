#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "panseg/losses.hpp"
#include "panseg/rng.hpp"

using namespace panseg;

namespace {

Tensor<double> rand_unit(Shape shape, Rng& r) {
    Tensor<double> t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = r.uniform();
    return t;
}

}  // namespace

TEST_CASE("dice loss hand case") {
    Tensor<double> pred({1, 1, 1, 3});
    pred[0] = 1.0;
    pred[1] = 0.5;
    pred[2] = 0.0;
    Tensor<double> label({1, 1, 1, 3});
    label[0] = 1.0;
    label[1] = 1.0;
    label[2] = 0.0;
    Tape<double> t;
    const Var l = dice_loss(t, t.constant(pred), t.constant(label));
    // intersection 1.5, sums 3.5 -> 1 - (3 + eps) / (3.5 + eps)
    const double eps = 1e-6;
    CHECK(t.value(l)[0] == Catch::Approx(1.0 - (3.0 + eps) / (3.5 + eps)).epsilon(1e-12));
}

TEST_CASE("dice loss is zero on a perfect prediction and near one on disjoint") {
    Tensor<double> a({2, 1, 2, 2});
    for (int64_t i = 0; i < 8; ++i) a[i] = i % 2 ? 1.0 : 0.0;
    Tape<double> t;
    CHECK(t.value(dice_loss(t, t.constant(a), t.constant(a)))[0] < 1e-6);

    Tensor<double> b({2, 1, 2, 2});
    for (int64_t i = 0; i < 8; ++i) b[i] = i % 2 ? 0.0 : 1.0;
    Tape<double> t2;
    CHECK(t2.value(dice_loss(t2, t2.constant(a), t2.constant(b)))[0] > 1.0 - 1e-5);
}

TEST_CASE("dice loss averages per batch item") {
    // item 0 perfect, item 1 disjoint -> loss ~ 0.5
    Tensor<double> pred({2, 1, 1, 2});
    pred[0] = 1.0;
    pred[1] = 0.0;
    pred[2] = 1.0;
    pred[3] = 0.0;
    Tensor<double> label({2, 1, 1, 2});
    label[0] = 1.0;
    label[1] = 0.0;
    label[2] = 0.0;
    label[3] = 1.0;
    Tape<double> t;
    CHECK(t.value(dice_loss(t, t.constant(pred), t.constant(label)))[0] ==
          Catch::Approx(0.5).margin(1e-5));
}

TEST_CASE("bce loss hand cases") {
    Tape<double> t;
    const Var half = t.constant(Tensor<double>::full({1, 1, 2, 2}, 0.5));
    const Var lbl = t.constant(Tensor<double>::full({1, 1, 2, 2}, 1.0));
    CHECK(t.value(bce_loss(t, half, lbl))[0] == Catch::Approx(std::log(2.0)).epsilon(1e-12));

    Tensor<double> p({1, 1, 1, 2});
    p[0] = 0.25;
    p[1] = 0.75;
    Tensor<double> l({1, 1, 1, 2});
    l[0] = 0.0;
    l[1] = 1.0;
    Tape<double> t2;
    CHECK(t2.value(bce_loss(t2, t2.constant(p), t2.constant(l)))[0] ==
          Catch::Approx(-std::log(0.75)).epsilon(1e-12));
}

TEST_CASE("bce clamp keeps the loss finite and the gradient bounded") {
    Tensor<double> p({1, 1, 1, 2});
    p[0] = 0.0;  // exactly wrong and exactly at the clamp
    p[1] = 1.0;
    Tensor<double> l({1, 1, 1, 2});
    l[0] = 1.0;
    l[1] = 0.0;
    Parameter<double> pp{"p", p};
    Tape<double> t;
    const Var loss = bce_loss(t, t.param(pp), t.constant(l));
    CHECK(t.value(loss)[0] == Catch::Approx(-std::log(1e-7)).epsilon(1e-9));
    t.backward(loss);
    // clamp active: no gradient through the saturated entries
    CHECK(pp.grad[0] == 0.0);
    CHECK(pp.grad[1] == 0.0);

    CHECK_THROWS_AS([&] {
        Tape<double> t2;
        bce_loss(t2, t2.constant(p), t2.constant(l), 0.7);
    }(), Error);
}

TEST_CASE("ssim of an image with itself is exactly one, loss exactly zero") {
    Rng r(31);
    const Tensor<double> img = rand_unit({1, 1, 16, 16}, r);
    for (SsimConfig::Mode mode : {SsimConfig::Mode::windowed, SsimConfig::Mode::global}) {
        SsimConfig cfg;
        cfg.mode = mode;
        Tape<double> t;
        const Var a = t.constant(img), b = t.constant(img);
        CHECK(t.value(ssim(t, a, b, cfg))[0] == 1.0);
        Tape<double> t2;
        CHECK(t2.value(ssim_loss(t2, t2.constant(img), t2.constant(img), cfg))[0] == 0.0);
    }

    // also exact in single precision, where it matters for training
    const Tensor<float> imgf = img.cast<float>();
    Tape<float> tf;
    CHECK(tf.value(ssim_loss(tf, tf.constant(imgf), tf.constant(imgf)))[0] == 0.0f);
}

TEST_CASE("constant one versus constant zero hits the C1 floor") {
    // mu_a=1, mu_b=0, all variances 0: SSIM = C1 / (1 + C1) with C1 = 1e-4
    const Tensor<double> ones = Tensor<double>::full({1, 1, 16, 16}, 1.0);
    const Tensor<double> zeros = Tensor<double>::zeros({1, 1, 16, 16});
    const double c1 = 1e-4;
    for (SsimConfig::Mode mode : {SsimConfig::Mode::windowed, SsimConfig::Mode::global}) {
        SsimConfig cfg;
        cfg.mode = mode;
        Tape<double> t;
        const double got = t.value(ssim(t, t.constant(ones), t.constant(zeros), cfg))[0];
        CHECK(std::abs(got - c1 / (1.0 + c1)) < 1e-9);
    }
}

TEST_CASE("ssim is symmetric in its arguments, bit for bit") {
    Rng r(32);
    const Tensor<double> a = rand_unit({2, 1, 16, 16}, r);
    const Tensor<double> b = rand_unit({2, 1, 16, 16}, r);
    for (SsimConfig::Mode mode : {SsimConfig::Mode::windowed, SsimConfig::Mode::global}) {
        SsimConfig cfg;
        cfg.mode = mode;
        Tape<double> t1, t2;
        const double ab = t1.value(ssim(t1, t1.constant(a), t1.constant(b), cfg))[0];
        const double ba = t2.value(ssim(t2, t2.constant(b), t2.constant(a), cfg))[0];
        CHECK(ab == ba);
    }
}

TEST_CASE("uniform window spanning the whole image reproduces the global statistics") {
    Rng r(33);
    const Tensor<double> a = rand_unit({1, 1, 16, 16}, r);
    const Tensor<double> b = rand_unit({1, 1, 16, 16}, r);

    SsimConfig whole;
    whole.mode = SsimConfig::Mode::windowed;
    whole.uniform = true;
    whole.window = 16;  // one window covering everything
    SsimConfig glob;
    glob.mode = SsimConfig::Mode::global;

    Tape<double> t1, t2;
    const double windowed = t1.value(ssim(t1, t1.constant(a), t1.constant(b), whole))[0];
    const double global_v = t2.value(ssim(t2, t2.constant(b), t2.constant(a), glob))[0];
    CHECK(windowed == Catch::Approx(global_v).epsilon(1e-10));
}

TEST_CASE("gaussian window is normalized, symmetric, and peaked at the center") {
    const Tensor<double> k = gaussian_kernel2d<double>(11, 1.5);
    REQUIRE(k.rank() == 4);
    REQUIRE(k.dim(2) == 11);
    double total = 0;
    for (int64_t i = 0; i < k.numel(); ++i) total += k[i];
    CHECK(total == Catch::Approx(1.0).epsilon(1e-12));
    const auto at = [&](int i, int j) { return k[int64_t(i) * 11 + j]; };
    CHECK(at(5, 5) > at(5, 4));
    CHECK(at(5, 4) == at(5, 6));
    CHECK(at(0, 0) == at(10, 10));
    CHECK(at(2, 7) == at(7, 2));
    CHECK_THROWS_AS(gaussian_kernel2d<double>(10, 1.5), Error);
    CHECK_THROWS_AS(gaussian_kernel2d<double>(11, 0.0), Error);
}

TEST_CASE("windowed ssim needs the image to cover the window") {
    Tape<double> t;
    const Var a = t.constant(Tensor<double>::zeros({1, 1, 8, 8}));
    CHECK_THROWS_AS(ssim(t, a, a, SsimConfig{}), Error);  // 8 < 11
}

TEST_CASE("loss kinds parse, print, and dispatch") {
    CHECK(parse_loss("dice") == LossKind::dice);
    CHECK(parse_loss("bce") == LossKind::bce);
    CHECK(parse_loss("ssim") == LossKind::ssim);
    CHECK_THROWS_AS(parse_loss("hinge"), Error);
    CHECK(std::string(loss_name(LossKind::dice)) == "dice");
    CHECK(std::string(loss_name(LossKind::bce)) == "bce");
    CHECK(std::string(loss_name(LossKind::ssim)) == "ssim");

    Rng r(34);
    const Tensor<double> p = rand_unit({1, 1, 16, 16}, r);
    const Tensor<double> l = rand_unit({1, 1, 16, 16}, r);
    for (LossKind kind : {LossKind::dice, LossKind::bce, LossKind::ssim}) {
        Tape<double> t;
        const double via_dispatch =
            t.value(segmentation_loss(t, kind, t.constant(p), t.constant(l)))[0];
        Tape<double> t2;
        const Var pv = t2.constant(p), lv = t2.constant(l);
        double direct = 0;
        switch (kind) {
            case LossKind::dice: direct = t2.value(dice_loss(t2, pv, lv))[0]; break;
            case LossKind::bce: direct = t2.value(bce_loss(t2, pv, lv))[0]; break;
            case LossKind::ssim: direct = t2.value(ssim_loss(t2, pv, lv, SsimConfig{}))[0]; break;
        }
        CHECK(via_dispatch == direct);
    }
}
