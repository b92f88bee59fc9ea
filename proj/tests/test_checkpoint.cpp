#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "panseg/checkpoint.hpp"

using namespace panseg;

namespace {

ModelConfig tiny_cfg() {
    ModelConfig cfg;
    cfg.base_channels = 4;
    cfg.enable_pdc = true;
    cfg.enable_se = true;
    cfg.input_height = 64;
    cfg.input_width = 64;
    return cfg;
}

// Run `f`, demand it throws Error, and hand back the kind for inspection.
template <class F>
ErrorKind kind_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an Error");
    return ErrorKind::io;  // unreachable
}

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("encode-decode-encode is byte identical") {
    PaNet<float> model(tiny_cfg(), 11);
    const std::vector<uint8_t> bytes1 = encode_checkpoint(model);
    auto restored = decode_checkpoint<float>(bytes1, "test");
    const std::vector<uint8_t> bytes2 = encode_checkpoint(*restored);
    REQUIRE(bytes1 == bytes2);
}

TEST_CASE("checkpoint restores every value and the config") {
    PaNet<float> model(tiny_cfg(), 12);
    // make the state unmistakably non-default
    for (Parameter<float>* p : model.params())
        for (int64_t i = 0; i < p->value.numel(); ++i) p->value[i] += 0.125f * float(i % 7);

    const std::string path = temp_path("panseg_ckpt_roundtrip.ckpt");
    save_checkpoint(model, path);
    auto restored = load_checkpoint<float>(path);
    std::remove(path.c_str());

    CHECK(restored->config() == tiny_cfg());
    const auto pa = model.params(), pb = restored->params();
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i) {
        REQUIRE(pa[i]->name == pb[i]->name);
        REQUIRE(pa[i]->value.shape() == pb[i]->value.shape());
        for (int64_t k = 0; k < pa[i]->value.numel(); ++k)
            REQUIRE(pa[i]->value[k] == pb[i]->value[k]);
    }
}

TEST_CASE("double-precision models checkpoint through float storage") {
    ModelConfig cfg = tiny_cfg();
    cfg.enable_pdc = false;
    PaNet<double> model(cfg, 13);
    const std::vector<uint8_t> bytes = encode_checkpoint(model);
    auto restored = decode_checkpoint<double>(bytes, "test");
    const auto pa = model.params(), pb = restored->params();
    for (size_t i = 0; i < pa.size(); ++i)
        for (int64_t k = 0; k < pa[i]->value.numel(); ++k)
            REQUIRE(float(pa[i]->value[k]) == float(pb[i]->value[k]));
}

TEST_CASE("truncated checkpoints are rejected at any cut point") {
    ModelConfig cfg = tiny_cfg();
    cfg.enable_pdc = false;
    cfg.enable_se = false;
    PaNet<float> model(cfg, 14);
    const std::vector<uint8_t> bytes = encode_checkpoint(model);

    for (size_t cut : {size_t(0), size_t(3), size_t(6), size_t(11), size_t(13), size_t(20),
                       bytes.size() / 2, bytes.size() - 1}) {
        std::vector<uint8_t> cutb(bytes.begin(), bytes.begin() + ptrdiff_t(cut));
        INFO("cut at " << cut << " of " << bytes.size());
        CHECK(kind_of([&] { decode_checkpoint<float>(cutb, "test"); }) == ErrorKind::format);
    }
}

TEST_CASE("bad magic, bad version, corrupt name, trailing bytes") {
    ModelConfig cfg = tiny_cfg();
    cfg.enable_pdc = false;
    cfg.enable_se = false;
    PaNet<float> model(cfg, 15);
    const std::vector<uint8_t> good = encode_checkpoint(model);

    std::vector<uint8_t> b = good;
    b[0] = 'Q';
    CHECK(kind_of([&] { decode_checkpoint<float>(b, "test"); }) == ErrorKind::format);

    b = good;
    b[4] = 2;  // version field
    CHECK(kind_of([&] { decode_checkpoint<float>(b, "test"); }) == ErrorKind::version);

    b = good;
    b[14] ^= 1;  // first byte of the first parameter name
    CHECK(kind_of([&] { decode_checkpoint<float>(b, "test"); }) == ErrorKind::format);

    b = good;
    b.push_back(0);
    CHECK(kind_of([&] { decode_checkpoint<float>(b, "test"); }) == ErrorKind::format);
}

TEST_CASE("loading with an expected config insists on a match") {
    PaNet<float> model(tiny_cfg(), 16);
    const std::string path = temp_path("panseg_ckpt_cfgcheck.ckpt");
    save_checkpoint(model, path);

    CHECK_NOTHROW(load_checkpoint<float>(path, tiny_cfg()));
    ModelConfig other = tiny_cfg();
    other.enable_pdc = false;
    CHECK(kind_of([&] { load_checkpoint<float>(path, other); }) == ErrorKind::invalid_argument);
    std::remove(path.c_str());
}

TEST_CASE("missing file reports an io error") {
    CHECK(kind_of([&] { load_checkpoint<float>("/nonexistent/panseg.ckpt"); }) == ErrorKind::io);
}
