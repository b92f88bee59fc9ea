// Command-line front end: dataset synthesis, augmentation, training,
// prediction, post-processing, evaluation, cross-validation, ablation, and a
// gradient self-check. Every failure exits nonzero with one structured line
// on stderr.

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "panseg/gradcheck_suite.hpp"
#include "panseg/panseg.hpp"

using namespace panseg;

namespace {

KvMap collect_config(const std::string& config_path, const std::vector<std::string>& sets) {
    KvMap kv;
    if (!config_path.empty()) kv = load_kv_file(config_path);
    for (const std::string& s : sets) {
        const KvMap one = parse_kv_text(s, "--set");
        require(!one.empty(), ErrorKind::format, "--set expects key=value, got \"", s, "\"");
        for (const auto& [k, v] : one) kv[k] = v;
    }
    return kv;
}

std::string stem_of(const std::string& path) {
    return std::filesystem::path(path).stem().string();
}

/// Originals (augmentation tag none) of the dataset at root, loaded.
std::vector<LoadedSample<float>> load_originals(const std::string& root) {
    const Dataset ds = load_dataset(root);
    std::vector<LoadedSample<float>> base;
    for (const SampleInfo& info : ds.samples)
        if (info.aug == AugTag::none) base.push_back(load_sample<float>(ds.root, info));
    require(!base.empty(), ErrorKind::invalid_argument, root,
            ": dataset has no un-augmented samples");
    return base;
}

TrainConfig make_train_config(const std::string& config_path,
                              const std::vector<std::string>& sets, const std::string& data) {
    KvMap kv = collect_config(config_path, sets);
    if (!data.empty()) kv["data.root"] = data;
    TrainConfig cfg = train_config_from_kv(kv);
    require(!cfg.data_root.empty(), ErrorKind::invalid_argument,
            "no dataset given (--data or data.root)");
    return cfg;
}

void cmd_synth(const std::string& out, int count, uint64_t seed, int width, int height,
               int plaques) {
    PhantomConfig pc;
    pc.width = width;
    pc.height = height;
    pc.plaque_count = plaques;
    pc.seed = seed;
    synth_dataset(out, pc, count);
    std::printf("wrote %d image/mask pairs under %s\n", count, out.c_str());
}

void cmd_augment(const std::string& data, const std::string& out, uint64_t seed, double alpha,
                 double sigma, bool include_originals) {
    ElasticConfig ec;
    ec.alpha = alpha;
    ec.sigma = sigma;
    const Dataset in = load_dataset(data);
    const Dataset res = augment_dataset(in, out, ec, seed, include_originals);
    std::printf("wrote %zu samples under %s\n", res.samples.size(), out.c_str());
}

void cmd_train(const std::string& config_path, const std::vector<std::string>& sets,
               const std::string& data, const std::string& out) {
    const TrainConfig cfg = make_train_config(config_path, sets, data);
    const auto base = load_originals(cfg.data_root);

    std::vector<LoadedSample<float>> train;
    const Rng root(cfg.seed);
    if (cfg.augment_train) {
        for (size_t i = 0; i < base.size(); ++i) {
            auto variants = augment_pair(base[i].image, base[i].mask, cfg.elastic,
                                         root.fork(300 + uint64_t(i)));
            for (auto& v : variants)
                train.push_back(LoadedSample<float>{base[i].id + "_" + aug_suffix(v.tag),
                                                    std::move(v.image), std::move(v.mask)});
        }
    } else {
        train = base;
    }

    PaNet<float> model(cfg.model, root.fork(100).state());
    const TrainResult tr = train_model(model, train, cfg, root.fork(200));

    std::filesystem::create_directories(out);
    save_checkpoint(model, out + "/model.ckpt");
    std::string losses = "epoch,loss\n";
    for (size_t e = 0; e < tr.epoch_loss.size(); ++e)
        losses += cat(e + 1, ",", format_double(tr.epoch_loss[e]), "\n");
    detail_report::write_text(out + "/train_loss.csv", losses);
    detail_report::write_text(out + "/config.txt", kv_text(train_config_to_kv(cfg)));
    std::printf("trained %d epochs on %zu samples; final loss %.6f; checkpoint %s/model.ckpt\n",
                cfg.epochs, train.size(), tr.epoch_loss.back(), out.c_str());
}

void cmd_predict(const std::string& ckpt, const std::string& image, const std::string& out) {
    auto model = load_checkpoint<float>(ckpt);
    const Tensor<float> img = load_image<float>(image);
    const Tensor<float> prob = model->predict_prob(img);
    const BinaryMask mask = threshold_mask(prob);
    std::filesystem::create_directories(out);
    const std::string stem = stem_of(image);
    save_mask(out + "/" + stem + "_mask.pgm", mask);
    save_image(out + "/" + stem + "_prob.pgm", prob);
    std::printf("wrote %s/%s_mask.pgm and %s/%s_prob.pgm\n", out.c_str(), stem.c_str(),
                out.c_str(), stem.c_str());
}

void cmd_postprocess(const std::string& mask_path, const std::string& out, double area_ratio,
                     int connectivity) {
    PostprocessConfig cfg;
    cfg.area_ratio = area_ratio;
    cfg.connectivity = connectivity;
    const BinaryMask in = load_mask(mask_path, MaskOrigin::prediction);
    const PostprocessResult res = postprocess(in, cfg);
    std::filesystem::create_directories(out);
    const std::string stem = stem_of(mask_path);
    save_mask(out + "/" + stem + "_post.pgm", res.mask);
    std::printf("%d component(s) found, %zu retained; wrote %s/%s_post.pgm\n",
                res.components_found, res.retained.size(), out.c_str(), stem.c_str());
}

void cmd_evaluate(const std::string& pred_path, const std::string& label_path, bool header) {
    const BinaryMask label = load_mask(label_path, MaskOrigin::label);
    const BinaryMask pred = load_mask(pred_path, MaskOrigin::prediction);
    const MetricReport m = evaluate_pair(label, pred);
    if (header) std::printf("dice,iou,acc,mhd\n");
    std::printf("%s,%s,%s,%s\n", format_double(m.dice).c_str(), format_double(m.iou).c_str(),
                format_double(m.acc).c_str(),
                (m.mhd_defined ? format_double(m.mhd) : std::string()).c_str());
}

void cmd_cv(const std::string& config_path, const std::vector<std::string>& sets,
            const std::string& data, const std::string& out) {
    const TrainConfig cfg = make_train_config(config_path, sets, data);
    const ExperimentReport rep = cross_validate(cfg);
    write_report(rep, out);
    const auto raw = stage_aggregates(rep, Stage::raw);
    const auto post = stage_aggregates(rep, Stage::post);
    std::printf("%d folds, %zu test images; dice raw %.4f -> post %.4f; report under %s\n",
                cfg.folds, rep.images.size(), raw.at("dice").mean, post.at("dice").mean,
                out.c_str());
}

void cmd_ablate(const std::string& config_path, const std::vector<std::string>& sets,
                const std::string& data, const std::string& out) {
    const TrainConfig cfg = make_train_config(config_path, sets, data);
    const AblationReports ab = ablate(cfg, out);
    std::printf("wrote %zu module rows and %zu loss rows under %s\n", ab.modules.size(),
                ab.losses.size(), out.c_str());
}

int cmd_gradcheck() {
    const auto cases = run_gradcheck_suite();
    int failures = 0;
    for (const auto& c : cases) {
        const bool ok = c.report.max_rel_err < gradcheck_tolerance;
        failures += ok ? 0 : 1;
        std::printf("%-22s %12.3e  %s\n", c.name.c_str(), c.report.max_rel_err,
                    ok ? "pass" : "FAIL");
    }
    std::printf("%zu checks, %d failure(s), tolerance %g\n", cases.size(), failures,
                gradcheck_tolerance);
    return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Ultrasound plaque segmentation pipeline"};
    app.require_subcommand(1);

    std::string config_path, data, out, image, ckpt, mask_path, pred_path, label_path;
    std::vector<std::string> sets;
    uint64_t seed = 0;
    int count = 30, width = 128, height = 128, plaques = 0, connectivity = 8;
    double alpha = 8.0, elastic_sigma = 6.0, area_ratio = 5.0;
    bool include_originals = false, header = false;

    auto* synth = app.add_subcommand("synth", "Generate a seeded phantom dataset");
    synth->add_option("--out", out, "Dataset directory to create")->required();
    synth->add_option("--count", count, "Number of image/mask pairs");
    synth->add_option("--seed", seed, "Generator seed");
    synth->add_option("--width", width, "Image width");
    synth->add_option("--height", height, "Image height");
    synth->add_option("--plaques", plaques, "Plaques per image: 1, 2, or 0 = random 1-2");

    auto* aug = app.add_subcommand("augment", "Write the six-transform augmented dataset");
    aug->add_option("--data", data, "Input dataset directory")->required();
    aug->add_option("--out", out, "Output dataset directory")->required();
    aug->add_option("--seed", seed, "Elastic-field seed");
    aug->add_option("--alpha", alpha, "Elastic displacement strength (px at 128 width)");
    aug->add_option("--sigma", elastic_sigma, "Elastic field smoothness (px at 128 width)");
    aug->add_flag("--include-originals", include_originals, "Also copy untransformed pairs");

    auto* train = app.add_subcommand("train", "Train one model on a whole dataset");
    train->add_option("--config", config_path, "Key = value config file");
    train->add_option("--set", sets, "Override one config key (key=value), repeatable");
    train->add_option("--data", data, "Dataset directory (overrides data.root)");
    train->add_option("--out", out, "Output directory")->required();

    auto* predict = app.add_subcommand("predict", "Segment one image with a trained model");
    predict->add_option("--checkpoint", ckpt, "Model checkpoint")->required();
    predict->add_option("--image", image, "Input image (.pgm or .png)")->required();
    predict->add_option("--out", out, "Output directory")->required();

    auto* post = app.add_subcommand("postprocess", "Morphology cleanup of a binary mask");
    post->add_option("--mask", mask_path, "Input mask (.pgm or .png)")->required();
    post->add_option("--out", out, "Output directory")->required();
    post->add_option("--area-ratio", area_ratio, "Keep C2 iff area(C1) <= ratio * area(C2)");
    post->add_option("--connectivity", connectivity, "Component connectivity: 4 or 8");

    auto* eval = app.add_subcommand("evaluate", "Print dice,iou,acc,mhd for a prediction");
    eval->add_option("--pred", pred_path, "Predicted mask")->required();
    eval->add_option("--label", label_path, "Ground-truth mask")->required();
    eval->add_flag("--header", header, "Print the column header first");

    auto* cv = app.add_subcommand("cv", "K-fold cross-validation with reports");
    cv->add_option("--config", config_path, "Key = value config file");
    cv->add_option("--set", sets, "Override one config key (key=value), repeatable");
    cv->add_option("--data", data, "Dataset directory (overrides data.root)");
    cv->add_option("--out", out, "Report directory")->required();

    auto* abl = app.add_subcommand("ablate", "Module and loss ablation grids");
    abl->add_option("--config", config_path, "Key = value config file");
    abl->add_option("--set", sets, "Override one config key (key=value), repeatable");
    abl->add_option("--data", data, "Dataset directory (overrides data.root)");
    abl->add_option("--out", out, "Report directory")->required();

    auto* gc = app.add_subcommand("gradcheck",
                                  "Finite-difference check of every layer and loss gradient");
    (void)gc;

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) cmd_synth(out, count, seed, width, height, plaques);
        else if (aug->parsed())
            cmd_augment(data, out, seed, alpha, elastic_sigma, include_originals);
        else if (train->parsed()) cmd_train(config_path, sets, data, out);
        else if (predict->parsed()) cmd_predict(ckpt, image, out);
        else if (post->parsed()) cmd_postprocess(mask_path, out, area_ratio, connectivity);
        else if (eval->parsed()) cmd_evaluate(pred_path, label_path, header);
        else if (cv->parsed()) cmd_cv(config_path, sets, data, out);
        else if (abl->parsed()) cmd_ablate(config_path, sets, data, out);
        else if (gc->parsed()) return cmd_gradcheck();
    } catch (const Error& e) {
        std::fprintf(stderr, "error[%s]: %s\n", error_kind_name(e.kind()), e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error[internal]: %s\n", e.what());
        return 1;
    }
    return 0;
}
