#ifndef PANSEG_EXPERIMENT_HPP
#define PANSEG_EXPERIMENT_HPP

#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "panseg/metrics.hpp"
#include "panseg/train.hpp"

namespace panseg {

// ---- cross-validation ----------------------------------------------------------

struct ImageEval {
    int fold = 0;
    std::string id;
    MetricReport raw;   // thresholded network output
    MetricReport post;  // after morphology cleanup
};

struct FoldRun {
    std::vector<std::string> test_ids;
    std::vector<double> epoch_loss;
};

struct ExperimentReport {
    KvMap config;
    std::vector<FoldRun> folds;
    std::vector<ImageEval> images;  // fold-major, test order within fold
    double wall_seconds = 0;        // written to timing.txt, never report.json
};

enum class Stage { raw, post };

inline const char* stage_name(Stage s) { return s == Stage::raw ? "raw" : "post"; }

inline const MetricReport& stage_metrics(const ImageEval& e, Stage s) {
    return s == Stage::raw ? e.raw : e.post;
}

struct Aggregate {
    double mean = 0, sd = 0;  // sample SD (n-1); sd = 0 for n < 2
    int n = 0;
};

inline Aggregate aggregate(const std::vector<double>& xs) {
    Aggregate a;
    a.n = int(xs.size());
    if (a.n == 0) return a;
    double s = 0;
    for (double x : xs) s += x;
    a.mean = s / a.n;
    if (a.n >= 2) {
        double q = 0;
        for (double x : xs) q += (x - a.mean) * (x - a.mean);
        a.sd = std::sqrt(q / (a.n - 1));
    }
    return a;
}

/// Mean +- SD over the per-image rows of one stage. The mhd aggregate counts
/// only images where the metric is defined.
inline std::map<std::string, Aggregate> stage_aggregates(const ExperimentReport& r, Stage s) {
    std::vector<double> dice, iou, acc, mhd;
    for (const auto& e : r.images) {
        const MetricReport& m = stage_metrics(e, s);
        dice.push_back(m.dice);
        iou.push_back(m.iou);
        acc.push_back(m.acc);
        if (m.mhd_defined) mhd.push_back(m.mhd);
    }
    return {{"acc", aggregate(acc)},
            {"dice", aggregate(dice)},
            {"iou", aggregate(iou)},
            {"mhd", aggregate(mhd)}};
}

/// K-fold cross-validation over pre-loaded base samples. Each fold trains a
/// fresh model on the train split (expanded to the six-transform augmented set
/// unless cfg.augment_train is off) and evaluates the held-out originals both
/// raw and post-processed. Every random choice derives from cfg.seed:
/// substream 100+fold seeds model init, 200+fold the batch shuffles, and
/// 300+sample_index the elastic fields — the last keyed by position in `base`
/// so every run over the same data sees identical augmented images regardless
/// of fold membership.
template <class S = float>
ExperimentReport cross_validate_samples(const TrainConfig& cfg,
                                        const std::vector<LoadedSample<S>>& base) {
    cfg.validate();
    require(int(base.size()) >= cfg.folds, ErrorKind::invalid_argument, "cross_validate: ",
            base.size(), " samples but ", cfg.folds, " folds");
    const auto t0 = std::chrono::steady_clock::now();

    std::vector<std::string> ids;
    std::map<std::string, size_t> index;
    for (size_t i = 0; i < base.size(); ++i) {
        require(index.emplace(base[i].id, i).second, ErrorKind::invalid_argument,
                "cross_validate: duplicate sample id ", base[i].id);
        ids.push_back(base[i].id);
    }
    const std::vector<Fold> folds = kfold(ids, cfg.folds, cfg.seed);
    const Rng root(cfg.seed);

    ExperimentReport rep;
    rep.config = train_config_to_kv(cfg);
    for (int f = 0; f < cfg.folds; ++f) {
        PaNet<S> model(cfg.model, root.fork(uint64_t(100 + f)).state());
        std::vector<LoadedSample<S>> train;
        for (const std::string& id : folds[size_t(f)].train) {
            const LoadedSample<S>& s = base[index.at(id)];
            if (cfg.augment_train) {
                auto variants = augment_pair(s.image, s.mask, cfg.elastic,
                                             root.fork(300 + uint64_t(index.at(id))));
                for (auto& v : variants)
                    train.push_back(LoadedSample<S>{s.id + "_" + aug_suffix(v.tag),
                                                    std::move(v.image), std::move(v.mask)});
            } else {
                train.push_back(s);
            }
        }
        const TrainResult tr = train_model(model, train, cfg, root.fork(uint64_t(200 + f)));
        rep.folds.push_back(FoldRun{folds[size_t(f)].test, tr.epoch_loss});
        for (const std::string& id : folds[size_t(f)].test) {
            const LoadedSample<S>& s = base[index.at(id)];
            const BinaryMask raw = threshold_mask(model.predict_prob(s.image));
            const BinaryMask cleaned = postprocess(raw, cfg.post).mask;
            rep.images.push_back(
                ImageEval{f, id, evaluate_pair(s.mask, raw), evaluate_pair(s.mask, cleaned)});
        }
    }
    rep.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

/// Cross-validate the un-augmented samples of the dataset at cfg.data_root.
inline ExperimentReport cross_validate(const TrainConfig& cfg) {
    require(!cfg.data_root.empty(), ErrorKind::invalid_argument,
            "cross_validate: data.root not set");
    const Dataset ds = load_dataset(cfg.data_root);
    std::vector<LoadedSample<float>> base;
    for (const SampleInfo& info : ds.samples)
        if (info.aug == AugTag::none) base.push_back(load_sample<float>(ds.root, info));
    return cross_validate_samples(cfg, base);
}

// ---- report files ----------------------------------------------------------------

namespace detail_report {

inline nlohmann::json metric_json(const MetricReport& m) {
    nlohmann::json j;
    j["dice"] = m.dice;
    j["iou"] = m.iou;
    j["acc"] = m.acc;
    j["mhd"] = m.mhd_defined ? nlohmann::json(m.mhd) : nlohmann::json(nullptr);
    j["mhd_defined"] = m.mhd_defined;
    j["degenerate_overlap"] = m.degenerate_overlap;
    return j;
}

inline nlohmann::json aggregate_json(const Aggregate& a) {
    nlohmann::json j;
    j["mean"] = a.n ? nlohmann::json(a.mean) : nlohmann::json(nullptr);
    j["sd"] = a.n ? nlohmann::json(a.sd) : nlohmann::json(nullptr);
    j["n"] = a.n;
    return j;
}

inline nlohmann::json aggregates_json(const ExperimentReport& r, Stage s) {
    nlohmann::json j;
    for (const auto& [name, agg] : stage_aggregates(r, s)) j[name] = aggregate_json(agg);
    return j;
}

inline void write_text(const std::string& path, const std::string& text) {
    detail::write_file(path, std::vector<uint8_t>(text.begin(), text.end()));
}

}  // namespace detail_report

inline std::string report_csv(const ExperimentReport& rep) {
    std::string csv = "fold,id,stage,dice,iou,acc,mhd,degenerate_overlap,mhd_defined\n";
    for (const auto& e : rep.images) {
        for (Stage s : {Stage::raw, Stage::post}) {
            const MetricReport& m = stage_metrics(e, s);
            csv += cat(e.fold, ",", e.id, ",", stage_name(s), ",", format_double(m.dice), ",",
                       format_double(m.iou), ",", format_double(m.acc), ",",
                       m.mhd_defined ? format_double(m.mhd) : std::string(), ",",
                       m.degenerate_overlap ? 1 : 0, ",", m.mhd_defined ? 1 : 0, "\n");
        }
    }
    return csv;
}

inline nlohmann::json report_json(const ExperimentReport& rep) {
    nlohmann::json j;
    j["config"] = rep.config;
    j["folds"] = nlohmann::json::array();
    for (size_t f = 0; f < rep.folds.size(); ++f) {
        nlohmann::json fj;
        fj["fold"] = int(f);
        fj["test_ids"] = rep.folds[f].test_ids;
        fj["epoch_loss"] = rep.folds[f].epoch_loss;
        j["folds"].push_back(std::move(fj));
    }
    j["images"] = nlohmann::json::array();
    for (const auto& e : rep.images) {
        nlohmann::json ej;
        ej["fold"] = e.fold;
        ej["id"] = e.id;
        ej["raw"] = detail_report::metric_json(e.raw);
        ej["post"] = detail_report::metric_json(e.post);
        j["images"].push_back(std::move(ej));
    }
    j["aggregates"]["raw"] = detail_report::aggregates_json(rep, Stage::raw);
    j["aggregates"]["post"] = detail_report::aggregates_json(rep, Stage::post);
    return j;
}

/// Write report.csv (per-image rows), report.json (everything plus mean +- SD
/// aggregates), and timing.txt. Timing lives in its own file so the other two
/// are byte-identical across repeat runs of one config.
inline void write_report(const ExperimentReport& rep, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    detail_report::write_text(out_dir + "/report.csv", report_csv(rep));
    detail_report::write_text(out_dir + "/report.json", report_json(rep).dump(2) + "\n");
    char buf[64];
    std::snprintf(buf, sizeof buf, "wall_seconds\t%.3f\n", rep.wall_seconds);
    detail_report::write_text(out_dir + "/timing.txt", buf);
}

// ---- ablation --------------------------------------------------------------------

struct AblationRow {
    std::string name;
    bool pdc = false, se = false, post = false;
    LossKind loss = LossKind::dice;
    Stage stage = Stage::raw;  // the stage this row's headline numbers quote
};

/// Module grid: base net, each module alone, both, both plus post-processing.
inline std::vector<AblationRow> module_grid(LossKind loss) {
    return {{"base", false, false, false, loss, Stage::raw},
            {"pdc", true, false, false, loss, Stage::raw},
            {"se", false, true, false, loss, Stage::raw},
            {"pdc_se", true, true, false, loss, Stage::raw},
            {"pdc_se_post", true, true, true, loss, Stage::post}};
}

/// Loss grid: ssim / bce / dice on the full (PDC+SE) model, no post-processing.
inline std::vector<AblationRow> loss_grid() {
    return {{"ssim", true, true, false, LossKind::ssim, Stage::raw},
            {"bce", true, true, false, LossKind::bce, Stage::raw},
            {"dice", true, true, false, LossKind::dice, Stage::raw}};
}

inline TrainConfig apply_row(TrainConfig cfg, const AblationRow& row) {
    cfg.model.enable_pdc = row.pdc;
    cfg.model.enable_se = row.se;
    cfg.loss = row.loss;
    return cfg;
}

struct AblationReports {
    std::vector<std::pair<AblationRow, ExperimentReport>> modules;  // 5 rows
    std::vector<std::pair<AblationRow, ExperimentReport>> losses;   // 3 rows
};

/// Run both grids. Every row reuses cfg.seed, so all rows consume one fold
/// split and identical augmented training images; only the toggled variable
/// differs.
template <class S = float>
AblationReports run_ablation(const TrainConfig& cfg, const std::vector<LoadedSample<S>>& base) {
    AblationReports out;
    for (const AblationRow& row : module_grid(cfg.loss))
        out.modules.emplace_back(row, cross_validate_samples(apply_row(cfg, row), base));
    for (const AblationRow& row : loss_grid())
        out.losses.emplace_back(row, cross_validate_samples(apply_row(cfg, row), base));
    return out;
}

inline nlohmann::json ablation_summary_json(
    const std::vector<std::pair<AblationRow, ExperimentReport>>& rows) {
    nlohmann::json j;
    j["rows"] = nlohmann::json::array();
    for (const auto& [row, rep] : rows) {
        nlohmann::json rj;
        rj["name"] = row.name;
        rj["enable_pdc"] = row.pdc;
        rj["enable_se"] = row.se;
        rj["postprocess"] = row.post;
        rj["loss"] = loss_name(row.loss);
        rj["stage"] = stage_name(row.stage);
        rj["metrics"] = detail_report::aggregates_json(rep, row.stage);
        j["rows"].push_back(std::move(rj));
    }
    return j;
}

/// Full per-row reports under <out>/modules/<name>/ and <out>/losses/<name>/,
/// plus the two summary grids as ablation_modules.json / ablation_losses.json.
inline void write_ablation(const AblationReports& ab, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    for (const auto& [row, rep] : ab.modules) write_report(rep, out_dir + "/modules/" + row.name);
    for (const auto& [row, rep] : ab.losses) write_report(rep, out_dir + "/losses/" + row.name);
    detail_report::write_text(out_dir + "/ablation_modules.json",
                              ablation_summary_json(ab.modules).dump(2) + "\n");
    detail_report::write_text(out_dir + "/ablation_losses.json",
                              ablation_summary_json(ab.losses).dump(2) + "\n");
}

/// Load the dataset once and run + write both ablation grids.
inline AblationReports ablate(const TrainConfig& cfg, const std::string& out_dir) {
    require(!cfg.data_root.empty(), ErrorKind::invalid_argument, "ablate: data.root not set");
    const Dataset ds = load_dataset(cfg.data_root);
    std::vector<LoadedSample<float>> base;
    for (const SampleInfo& info : ds.samples)
        if (info.aug == AugTag::none) base.push_back(load_sample<float>(ds.root, info));
    AblationReports ab = run_ablation(cfg, base);
    write_ablation(ab, out_dir);
    return ab;
}

}  // namespace panseg

#endif  // PANSEG_EXPERIMENT_HPP
