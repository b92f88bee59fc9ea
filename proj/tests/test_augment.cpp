#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <string>

#include "panseg/augment.hpp"
#include "panseg/metrics.hpp"

using namespace panseg;

namespace {

Tensor<float> random_image(int h, int w, uint64_t seed) {
    Rng r(seed);
    Tensor<float> img({h, w});
    for (int64_t i = 0; i < img.numel(); ++i) img[i] = float(r.uniform());
    return img;
}

BinaryMask disk_mask(int h, int w, double cy, double cx, double radius) {
    BinaryMask m(h, w, MaskOrigin::label);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= radius * radius) m.set(y, x, 1);
    return m;
}

template <class T>
bool same_tensor(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) return false;
    for (int64_t i = 0; i < a.numel(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

}  // namespace

TEST_CASE("flips and rot180 are exact involutions that compose") {
    const Tensor<float> img = random_image(11, 17, 51);
    CHECK(same_tensor(hflip(hflip(img)), img));
    CHECK(same_tensor(vflip(vflip(img)), img));
    CHECK(same_tensor(rot180(rot180(img)), img));
    CHECK(same_tensor(rot180(img), hflip(vflip(img))));
    CHECK(same_tensor(rot180(img), vflip(hflip(img))));

    Tensor<int> t({2, 3});
    for (int i = 0; i < 6; ++i) t[i] = i;  // 0 1 2 / 3 4 5
    const Tensor<int> h = hflip(t);
    CHECK(h[0] == 2);
    CHECK(h[2] == 0);
    CHECK(h[3] == 5);
    const Tensor<int> v = vflip(t);
    CHECK(v[0] == 3);
    CHECK(v[5] == 2);
    const Tensor<int> r = rot180(t);
    CHECK(r[0] == 5);
    CHECK(r[5] == 0);

    Tensor<float> bad({4});
    CHECK_THROWS_AS(hflip(bad), Error);
}

TEST_CASE("zero-degree rotation is the identity") {
    const Tensor<float> img = random_image(13, 9, 52);
    CHECK(same_tensor(rotate_bilinear(img, 0.0), img));

    Tensor<uint8_t> m({5, 7});
    Rng r(53);
    for (int64_t i = 0; i < m.numel(); ++i) m[i] = uint8_t(r.below(2));
    CHECK(same_tensor(rotate_nearest(m, 0.0), m));
}

TEST_CASE("thirty-degree rotation preserves a centered disk and fills corners") {
    const BinaryMask disk = disk_mask(64, 64, 31.5, 31.5, 20.0);
    for (double deg : {30.0, -30.0}) {
        const Tensor<uint8_t> rot = rotate_nearest(disk.px, deg);
        int64_t area = 0;
        for (int64_t i = 0; i < rot.numel(); ++i) area += rot[i];
        CHECK(std::abs(double(area - disk.area())) < 0.05 * double(disk.area()));
    }

    Tensor<float> ones = Tensor<float>::full({16, 16}, 1.0f);
    const Tensor<float> rot = rotate_bilinear(ones, 30.0);
    CHECK(rot[0] == 0.0f);  // corner leaves the source square
    CHECK(rot[8 * 16 + 8] == Catch::Approx(1.0f));
}

TEST_CASE("elastic fields are deterministic, scale linearly, and validate") {
    const auto [dy1, dx1] = elastic_fields(24, 24, 8.0, 3.0, Rng(54));
    const auto [dy2, dx2] = elastic_fields(24, 24, 8.0, 3.0, Rng(54));
    CHECK(same_tensor(dy1, dy2));
    CHECK(same_tensor(dx1, dx2));

    const auto [dy3, dx3] = elastic_fields(24, 24, 8.0, 3.0, Rng(55));
    CHECK_FALSE(same_tensor(dy1, dy3));

    const auto [dy4, dx4] = elastic_fields(24, 24, 16.0, 3.0, Rng(54));
    for (int64_t i = 0; i < dy1.numel(); ++i) {
        REQUIRE(dy4[i] == 2.0 * dy1[i]);
        REQUIRE(dx4[i] == 2.0 * dx1[i]);
    }

    const auto [dy0, dx0] = elastic_fields(8, 8, 0.0, 3.0, Rng(56));
    for (int64_t i = 0; i < dy0.numel(); ++i) {
        REQUIRE(dy0[i] == 0.0);
        REQUIRE(dx0[i] == 0.0);
    }

    CHECK_THROWS_AS(elastic_fields(8, 8, -1.0, 3.0, Rng(0)), Error);
    CHECK_THROWS_AS(elastic_fields(8, 8, 8.0, 0.0, Rng(0)), Error);
}

TEST_CASE("warping with a zero field is the identity") {
    const Tensor<float> img = random_image(10, 12, 57);
    const Tensor<double> zero = Tensor<double>::zeros({10, 12});
    CHECK(same_tensor(warp_bilinear(img, zero, zero), img));

    Tensor<uint8_t> m({10, 12});
    Rng r(58);
    for (int64_t i = 0; i < m.numel(); ++i) m[i] = uint8_t(r.below(2));
    CHECK(same_tensor(warp_nearest(m, zero, zero), m));
}

TEST_CASE("elastic deformation is deterministic and area-preserving in bulk") {
    const Tensor<float> img = random_image(64, 64, 59);
    const BinaryMask mask = disk_mask(64, 64, 31.5, 31.5, 20.0);
    const ElasticConfig cfg;  // alpha 8, sigma 6 at reference width 128

    const AugmentedPair<float> a = elastic_deform(img, mask, cfg, Rng(60));
    const AugmentedPair<float> b = elastic_deform(img, mask, cfg, Rng(60));
    CHECK(a.tag == AugTag::elastic);
    CHECK(same_tensor(a.image, b.image));
    CHECK(a.mask.same_pixels(b.mask));

    const AugmentedPair<float> c = elastic_deform(img, mask, cfg, Rng(61));
    CHECK_FALSE(same_tensor(a.image, c.image));

    const double rel = std::abs(double(a.mask.area() - mask.area())) / double(mask.area());
    CHECK(rel < 0.30);

    ElasticConfig rigid;
    rigid.alpha = 0.0;
    const AugmentedPair<float> id = elastic_deform(img, mask, rigid, Rng(62));
    CHECK(same_tensor(id.image, img));
    CHECK(id.mask.same_pixels(mask));

    const BinaryMask small(32, 32, MaskOrigin::label);
    CHECK_THROWS_AS(elastic_deform(img, small, cfg, Rng(0)), Error);
}

TEST_CASE("the augmentation set is six pairs in a fixed order") {
    const Tensor<float> img = random_image(48, 48, 63);
    const BinaryMask mask = disk_mask(48, 48, 23.5, 23.5, 14.0);
    const ElasticConfig cfg;

    const auto set = augment_pair(img, mask, cfg, Rng(64));
    REQUIRE(set.size() == 6);
    const AugTag want[6] = {AugTag::hflip,   AugTag::vflip,   AugTag::rot180,
                            AugTag::rot_p30, AugTag::rot_m30, AugTag::elastic};
    for (int i = 0; i < 6; ++i) {
        CHECK(set[size_t(i)].tag == want[i]);
        CHECK(set[size_t(i)].image.dim(0) == 48);
        CHECK(set[size_t(i)].image.dim(1) == 48);
        CHECK(set[size_t(i)].mask.h() == 48);
    }
    CHECK(same_tensor(set[0].image, hflip(img)));
    CHECK(set[1].mask.same_pixels(BinaryMask(vflip(mask.px), MaskOrigin::label)));
    CHECK(same_tensor(set[2].image, rot180(img)));

    const auto again = augment_pair(img, mask, cfg, Rng(64));
    for (size_t i = 0; i < 6; ++i) {
        CHECK(same_tensor(set[i].image, again[i].image));
        CHECK(set[i].mask.same_pixels(again[i].mask));
    }
}

TEST_CASE("overlap metrics are invariant under a common flip") {
    Rng r(65);
    BinaryMask a(20, 20, MaskOrigin::label), b(20, 20, MaskOrigin::prediction);
    for (int64_t i = 0; i < a.px.numel(); ++i) {
        a.px[i] = r.uniform() < 0.4 ? 1 : 0;
        b.px[i] = r.uniform() < 0.4 ? 1 : 0;
    }
    const OverlapMetrics base = overlap_metrics(confusion(a, b));
    const OverlapMetrics flipped = overlap_metrics(
        confusion(BinaryMask(hflip(a.px), MaskOrigin::label),
                  BinaryMask(hflip(b.px), MaskOrigin::prediction)));
    CHECK(base.dice == flipped.dice);
    CHECK(base.iou == flipped.iou);
    CHECK(base.acc == flipped.acc);
}

TEST_CASE("augmentation tags have printable names and file-safe suffixes") {
    const AugTag all[7] = {AugTag::none,    AugTag::hflip,   AugTag::vflip,  AugTag::rot180,
                           AugTag::rot_p30, AugTag::rot_m30, AugTag::elastic};
    for (AugTag t : all) {
        const std::string n = aug_name(t), s = aug_suffix(t);
        CHECK_FALSE(n.empty());
        CHECK(s.find('+') == std::string::npos);
        CHECK(s.find('-') == std::string::npos);
    }
    CHECK(std::string(aug_name(AugTag::rot_p30)) == "rot+30");
    CHECK(std::string(aug_suffix(AugTag::rot_p30)) == "rotp30");
}
