#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "panseg/experiment.hpp"

using namespace panseg;
namespace fs = std::filesystem;

namespace {

std::vector<LoadedSample<float>> phantom_samples(int count, int size, uint64_t seed) {
    PhantomConfig cfg;
    cfg.width = size;
    cfg.height = size;
    std::vector<LoadedSample<float>> out;
    Rng base(seed);
    for (int i = 0; i < count; ++i) {
        const Phantom ph = synth_phantom(cfg, base.fork(uint64_t(i)));
        Tensor<float> img(ph.image.shape());
        for (int64_t k = 0; k < img.numel(); ++k) img[k] = float(ph.image[k]) / 255.0f;
        out.push_back(LoadedSample<float>{"p" + std::to_string(i), std::move(img), ph.mask});
    }
    return out;
}

TrainConfig tiny_train_cfg() {
    TrainConfig cfg;
    cfg.model.base_channels = 4;
    cfg.model.input_height = 32;
    cfg.model.input_width = 32;
    cfg.learning_rate = 0.005;
    cfg.epochs = 2;
    cfg.batch_size = 2;
    cfg.folds = 3;
    return cfg;
}

}  // namespace

TEST_CASE("first optimizer step moves by roughly lr times the gradient sign") {
    Parameter<double> p("p", Tensor<double>::zeros({3}));
    p.value[0] = 1.0;
    p.value[1] = 2.0;
    p.value[2] = 3.0;
    Adam<double> opt({&p}, AdamConfig{0.1, 0.9, 0.999, 1e-8});
    p.grad[0] = 2.0;
    p.grad[1] = -0.5;
    p.grad[2] = 0.0;
    opt.step();
    CHECK(p.value[0] == Catch::Approx(0.9).margin(1e-6));
    CHECK(p.value[1] == Catch::Approx(2.1).margin(1e-6));
    CHECK(p.value[2] == 3.0);  // zero gradient, zero moments: exact fixed point
    CHECK(opt.steps() == 1);
}

TEST_CASE("optimizer guards and bookkeeping") {
    Parameter<double> p("theta", Tensor<double>::zeros({2}));
    Adam<double> opt({&p});
    p.grad[1] = std::numeric_limits<double>::quiet_NaN();
    try {
        opt.step();
        FAIL("expected an Error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::numeric);
        CHECK(std::string(e.what()).find("theta") != std::string::npos);
    }

    p.grad[0] = 5.0;
    p.grad[1] = 5.0;
    opt.zero_grad();
    CHECK(p.grad[0] == 0.0);
    CHECK(p.grad[1] == 0.0);

    Parameter<double> frozen("buf", Tensor<double>::full({2}, 7.0), false);
    Adam<double> opt2({&frozen});
    frozen.grad[0] = 100.0;
    opt2.step();
    CHECK(frozen.value[0] == 7.0);

    CHECK_THROWS_AS(Adam<double>({&p}, AdamConfig{0.0, 0.9, 0.999, 1e-8}), Error);
    CHECK_THROWS_AS(Adam<double>({&p}, AdamConfig{0.1, 1.0, 0.999, 1e-8}), Error);
    CHECK_THROWS_AS(opt.set_lr(0.0), Error);
    opt.set_lr(0.2);
    CHECK(opt.lr() == 0.2);
}

TEST_CASE("adam with constant gradients approaches the lr-sized step") {
    // with a constant gradient the bias-corrected update tends to exactly -lr
    Parameter<double> p("p", Tensor<double>::zeros({1}));
    Adam<double> opt({&p}, AdamConfig{0.01, 0.9, 0.999, 1e-8});
    double prev = 0.0;
    for (int i = 0; i < 50; ++i) {
        p.zero_grad();
        p.grad[0] = 3.0;
        opt.step();
        const double delta = p.value[0] - prev;
        prev = p.value[0];
        CHECK(delta < 0.0);
        CHECK(std::abs(delta) <= 0.0100001);
    }
    CHECK(p.value[0] == Catch::Approx(-0.5).epsilon(0.02));
}

TEST_CASE("training is deterministic and reduces the loss") {
    const auto samples = phantom_samples(4, 32, 71);
    TrainConfig cfg = tiny_train_cfg();
    cfg.epochs = 8;

    PaNet<float> m1(cfg.model, 5), m2(cfg.model, 5);
    const TrainResult r1 = train_model(m1, samples, cfg, Rng(9));
    const TrainResult r2 = train_model(m2, samples, cfg, Rng(9));
    REQUIRE(r1.epoch_loss.size() == 8);
    CHECK(r1.steps == 8 * 2);  // 4 samples / batch 2
    CHECK(r1.epoch_loss == r2.epoch_loss);
    const auto p1 = m1.params(), p2 = m2.params();
    for (size_t i = 0; i < p1.size(); ++i)
        for (int64_t k = 0; k < p1[i]->value.numel(); ++k)
            REQUIRE(p1[i]->value[k] == p2[i]->value[k]);

    CHECK(r1.epoch_loss.back() < r1.epoch_loss.front());

    PaNet<float> m3(cfg.model, 5);
    const TrainResult r3 = train_model(m3, samples, cfg, Rng(10));
    CHECK(r1.epoch_loss != r3.epoch_loss);  // shuffle stream matters

    const double d = mean_dice(m1, samples);
    CHECK(d >= 0.0);
    CHECK(d <= 1.0);
}

TEST_CASE("training rejects inconsistent inputs") {
    TrainConfig cfg = tiny_train_cfg();
    PaNet<float> model(cfg.model, 1);
    CHECK_THROWS_AS(train_model(model, std::vector<LoadedSample<float>>{}, cfg, Rng(0)), Error);

    auto samples = phantom_samples(2, 32, 72);
    auto mixed = samples;
    mixed.push_back(phantom_samples(1, 64, 73)[0]);
    CHECK_THROWS_AS(train_model(model, mixed, cfg, Rng(0)), Error);
    CHECK_THROWS_AS(mean_dice(model, std::vector<LoadedSample<float>>{}), Error);
}

TEST_CASE("aggregates compute sample statistics") {
    const Aggregate empty = aggregate({});
    CHECK(empty.n == 0);
    const Aggregate one = aggregate({5.0});
    CHECK(one.mean == 5.0);
    CHECK(one.sd == 0.0);
    CHECK(one.n == 1);
    const Aggregate two = aggregate({1.0, 3.0});
    CHECK(two.mean == 2.0);
    CHECK(two.sd == Catch::Approx(std::sqrt(2.0)));
    CHECK(two.n == 2);
}

TEST_CASE("report files carry per-image rows and null-safe aggregates") {
    ExperimentReport rep;
    rep.config = parse_kv_text("train.seed = 0\n");
    rep.folds.push_back(FoldRun{{"a", "b"}, {0.5, 0.4}});
    MetricReport with_mhd;
    with_mhd.dice = 0.75;
    with_mhd.iou = 0.6;
    with_mhd.acc = 0.9;
    with_mhd.mhd = 1.25;
    with_mhd.mhd_defined = true;
    MetricReport no_mhd;
    no_mhd.dice = 1.0;
    no_mhd.iou = 1.0;
    no_mhd.acc = 1.0;
    no_mhd.degenerate_overlap = true;
    rep.images.push_back(ImageEval{0, "a", with_mhd, with_mhd});
    rep.images.push_back(ImageEval{0, "b", no_mhd, no_mhd});

    const std::string csv = report_csv(rep);
    CHECK(csv.rfind("fold,id,stage,dice,iou,acc,mhd,degenerate_overlap,mhd_defined\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);  // header + 2 images x 2 stages
    CHECK(csv.find("0,a,raw,0.75,") != std::string::npos);
    CHECK(csv.find("0,b,post,1,1,1,,1,0\n") != std::string::npos);  // empty mhd cell

    const nlohmann::json j = report_json(rep);
    CHECK(j["images"][1]["raw"]["mhd"].is_null());
    CHECK(j["images"][0]["raw"]["mhd"] == 1.25);
    CHECK(j["aggregates"]["raw"]["dice"]["n"] == 2);
    CHECK(j["aggregates"]["raw"]["mhd"]["n"] == 1);  // only defined entries aggregate
    CHECK(j["aggregates"]["raw"]["dice"]["mean"] == Catch::Approx(0.875));

    ExperimentReport none;
    none.config = rep.config;
    const nlohmann::json je = report_json(none);
    CHECK(je["aggregates"]["raw"]["dice"]["mean"].is_null());
    CHECK(je["aggregates"]["raw"]["dice"]["n"] == 0);

    const std::string dir = (fs::temp_directory_path() / "panseg_report_test").string();
    fs::remove_all(dir);
    rep.wall_seconds = 1.23456;
    write_report(rep, dir);
    CHECK(fs::exists(dir + "/report.csv"));
    CHECK(fs::exists(dir + "/report.json"));
    const auto timing = detail::read_file(dir + "/timing.txt");
    CHECK(std::string(timing.begin(), timing.end()) == "wall_seconds\t1.235\n");
    fs::remove_all(dir);
}

TEST_CASE("cross-validation evaluates every sample once with reproducible bytes") {
    const auto base = phantom_samples(6, 32, 74);
    TrainConfig cfg = tiny_train_cfg();  // folds 3, epochs 2

    const ExperimentReport rep = cross_validate_samples(cfg, base);
    REQUIRE(rep.folds.size() == 3);
    REQUIRE(rep.images.size() == 6);
    std::vector<std::string> seen;
    size_t img = 0;
    for (size_t f = 0; f < 3; ++f) {
        CHECK(rep.folds[f].test_ids.size() == 2);
        CHECK(rep.folds[f].epoch_loss.size() == 2);
        for (const std::string& id : rep.folds[f].test_ids) {
            CHECK(rep.images[img].fold == int(f));
            CHECK(rep.images[img].id == id);
            seen.push_back(id);
            ++img;
        }
    }
    std::sort(seen.begin(), seen.end());
    std::vector<std::string> want;
    for (const auto& s : base) want.push_back(s.id);
    std::sort(want.begin(), want.end());
    CHECK(seen == want);
    CHECK(rep.config.at("train.folds") == "3");
    CHECK(rep.wall_seconds > 0.0);

    // a second run writes byte-identical reports (timing excluded by design)
    const ExperimentReport rep2 = cross_validate_samples(cfg, base);
    CHECK(report_csv(rep) == report_csv(rep2));
    CHECK(report_json(rep).dump(2) == report_json(rep2).dump(2));

    const auto agg = stage_aggregates(rep, Stage::raw);
    CHECK(agg.at("dice").n == 6);
    double mean = 0;
    for (const auto& e : rep.images) mean += e.raw.dice;
    mean /= 6.0;
    CHECK(agg.at("dice").mean == Catch::Approx(mean).margin(1e-12));

    auto dup = base;
    dup[1].id = dup[0].id;
    CHECK_THROWS_AS(cross_validate_samples(cfg, dup), Error);
    TrainConfig many = cfg;
    many.folds = 7;
    CHECK_THROWS_AS(cross_validate_samples(many, base), Error);
}

TEST_CASE("ablation grids share folds and toggle one variable at a time") {
    const auto base = phantom_samples(4, 32, 75);
    TrainConfig cfg = tiny_train_cfg();
    cfg.folds = 2;
    cfg.epochs = 1;
    cfg.augment_train = false;

    const AblationReports ab = run_ablation(cfg, base);
    REQUIRE(ab.modules.size() == 5);
    REQUIRE(ab.losses.size() == 3);

    const bool want_pdc[5] = {false, true, false, true, true};
    const bool want_se[5] = {false, false, true, true, true};
    const bool want_post[5] = {false, false, false, false, true};
    for (size_t i = 0; i < 5; ++i) {
        const auto& [row, rep] = ab.modules[i];
        CHECK(row.pdc == want_pdc[i]);
        CHECK(row.se == want_se[i]);
        CHECK(row.post == want_post[i]);
        CHECK(row.loss == cfg.loss);
        CHECK(rep.config.at("model.enable_pdc") == (row.pdc ? "true" : "false"));
        CHECK(rep.config.at("model.enable_se") == (row.se ? "true" : "false"));
        CHECK(rep.images.size() == 4);
        // every row sees the same fold split
        for (size_t f = 0; f < rep.folds.size(); ++f)
            CHECK(rep.folds[f].test_ids == ab.modules[0].second.folds[f].test_ids);
    }
    CHECK(ab.modules[4].first.stage == Stage::post);

    const LossKind want_loss[3] = {LossKind::ssim, LossKind::bce, LossKind::dice};
    for (size_t i = 0; i < 3; ++i) {
        const auto& [row, rep] = ab.losses[i];
        CHECK(row.loss == want_loss[i]);
        CHECK(row.pdc);
        CHECK(row.se);
        CHECK_FALSE(row.post);
        CHECK(rep.config.at("train.loss") == loss_name(row.loss));
        for (size_t f = 0; f < rep.folds.size(); ++f)
            CHECK(rep.folds[f].test_ids == ab.modules[0].second.folds[f].test_ids);
    }

    const std::string dir = (fs::temp_directory_path() / "panseg_ablation_test").string();
    fs::remove_all(dir);
    write_ablation(ab, dir);
    CHECK(fs::exists(dir + "/ablation_modules.json"));
    CHECK(fs::exists(dir + "/ablation_losses.json"));
    CHECK(fs::exists(dir + "/modules/pdc_se_post/report.csv"));
    CHECK(fs::exists(dir + "/losses/bce/report.json"));
    const nlohmann::json j =
        nlohmann::json::parse(detail::read_file(dir + "/ablation_modules.json"));
    REQUIRE(j["rows"].size() == 5);
    CHECK(j["rows"][0]["name"] == "base");
    CHECK(j["rows"][4]["stage"] == "post");
    fs::remove_all(dir);
}
