#ifndef PANSEG_TRAIN_HPP
#define PANSEG_TRAIN_HPP

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "panseg/adam.hpp"
#include "panseg/dataset.hpp"
#include "panseg/losses.hpp"
#include "panseg/metrics.hpp"
#include "panseg/model.hpp"
#include "panseg/postprocess.hpp"

namespace panseg {

struct TrainConfig {
    double learning_rate = 0.001;
    int epochs = 100;
    int batch_size = 2;
    LossKind loss = LossKind::dice;
    uint64_t seed = 0;
    int folds = 10;
    bool augment_train = true;  // cross-validation: train on the 6-transform augmented folds
    ModelConfig model;
    PostprocessConfig post;
    SsimConfig ssim;
    ElasticConfig elastic;
    std::string data_root;

    void validate() const {
        require(learning_rate > 0, ErrorKind::invalid_argument,
                "TrainConfig: learning_rate must be > 0, got ", learning_rate);
        require(epochs >= 1, ErrorKind::invalid_argument, "TrainConfig: epochs must be >= 1, got ",
                epochs);
        require(batch_size >= 1, ErrorKind::invalid_argument,
                "TrainConfig: batch_size must be >= 1, got ", batch_size);
        require(folds >= 2, ErrorKind::invalid_argument, "TrainConfig: folds must be >= 2, got ",
                folds);
        model.validate();
        post.validate();
    }
};

inline TrainConfig train_config_from_kv(const KvMap& kv) {
    TrainConfig c;
    c.learning_rate = kv_get_double(kv, "train.lr", c.learning_rate);
    c.epochs = int(kv_get_int(kv, "train.epochs", c.epochs));
    c.batch_size = int(kv_get_int(kv, "train.batch_size", c.batch_size));
    c.loss = parse_loss(kv_get(kv, "train.loss", loss_name(c.loss)));
    c.seed = kv_get_u64(kv, "train.seed", c.seed);
    c.folds = int(kv_get_int(kv, "train.folds", c.folds));
    c.augment_train = kv_get_bool(kv, "train.augment", c.augment_train);
    c.model = model_config_from_kv(kv);
    c.post.area_ratio = kv_get_double(kv, "post.area_ratio", c.post.area_ratio);
    c.post.connectivity = int(kv_get_int(kv, "post.connectivity", c.post.connectivity));
    const std::string mode = kv_get(kv, "ssim.mode", "windowed");
    if (mode == "windowed") c.ssim.mode = SsimConfig::Mode::windowed;
    else if (mode == "global") c.ssim.mode = SsimConfig::Mode::global;
    else fail(ErrorKind::format, "config key ssim.mode: \"", mode, "\" (use windowed or global)");
    c.ssim.window = int(kv_get_int(kv, "ssim.window", c.ssim.window));
    c.ssim.sigma = kv_get_double(kv, "ssim.sigma", c.ssim.sigma);
    c.elastic.alpha = kv_get_double(kv, "augment.alpha", c.elastic.alpha);
    c.elastic.sigma = kv_get_double(kv, "augment.sigma", c.elastic.sigma);
    c.data_root = kv_get(kv, "data.root", c.data_root);
    c.validate();
    return c;
}

/// Full canonical echo of a training configuration.
inline KvMap train_config_to_kv(const TrainConfig& c) {
    KvMap kv = parse_kv_text(model_config_text(c.model), "model config");
    kv["train.lr"] = format_double(c.learning_rate);
    kv["train.epochs"] = std::to_string(c.epochs);
    kv["train.batch_size"] = std::to_string(c.batch_size);
    kv["train.loss"] = loss_name(c.loss);
    kv["train.seed"] = std::to_string(c.seed);
    kv["train.folds"] = std::to_string(c.folds);
    kv["train.augment"] = c.augment_train ? "true" : "false";
    kv["post.area_ratio"] = format_double(c.post.area_ratio);
    kv["post.connectivity"] = std::to_string(c.post.connectivity);
    kv["ssim.mode"] = c.ssim.mode == SsimConfig::Mode::windowed ? "windowed" : "global";
    kv["ssim.window"] = std::to_string(c.ssim.window);
    kv["ssim.sigma"] = format_double(c.ssim.sigma);
    kv["augment.alpha"] = format_double(c.elastic.alpha);
    kv["augment.sigma"] = format_double(c.elastic.sigma);
    kv["data.root"] = c.data_root;
    return kv;
}

struct TrainResult {
    std::vector<double> epoch_loss;  // mean training loss per epoch
    int64_t steps = 0;
};

/// Optimize `model` on `samples` for cfg.epochs passes of shuffled
/// cfg.batch_size batches. All samples must share one shape compatible with
/// the model. Deterministic given (cfg, rng, initial parameters).
template <class S>
TrainResult train_model(PaNet<S>& model, const std::vector<LoadedSample<S>>& samples,
                        const TrainConfig& cfg, Rng rng) {
    require(!samples.empty(), ErrorKind::invalid_argument, "train_model: empty training set");
    cfg.validate();
    const int H = samples[0].image.dim(0), W = samples[0].image.dim(1);
    for (const auto& s : samples) {
        require(s.image.dim(0) == H && s.image.dim(1) == W, ErrorKind::shape_mismatch,
                "train_model: sample ", s.id, " is ", s.image.dim(0), "x", s.image.dim(1),
                ", expected ", H, "x", W);
        require(s.mask.h() == H && s.mask.w() == W, ErrorKind::shape_mismatch,
                "train_model: sample ", s.id, " mask shape differs from its image");
    }

    Adam<S> opt(model.params(), AdamConfig{cfg.learning_rate, 0.9, 0.999, 1e-8});
    TrainResult result;
    std::vector<int> order(samples.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng erng = rng.fork(uint64_t(epoch));
        erng.shuffle(order);
        double loss_sum = 0;
        for (size_t start = 0; start < order.size(); start += size_t(cfg.batch_size)) {
            const int bs = int(std::min(order.size() - start, size_t(cfg.batch_size)));
            Tensor<S> input({bs, 1, H, W});
            Tensor<S> label({bs, 1, H, W});
            for (int b = 0; b < bs; ++b) {
                const auto& s = samples[size_t(order[start + size_t(b)])];
                const int64_t off = int64_t(b) * H * W;
                for (int64_t i = 0; i < int64_t(H) * W; ++i) {
                    input[off + i] = s.image[i];
                    label[off + i] = S(s.mask.px[i]);
                }
            }
            Tape<S> t;
            const Var probs = model.forward(t, t.constant(std::move(input)), true);
            const Var fg = slice_channels(t, probs, 1, 2);
            const Var loss = segmentation_loss(t, cfg.loss, fg, t.constant(std::move(label)),
                                               cfg.ssim);
            const double lv = double(t.value(loss)[0]);
            require(std::isfinite(lv), ErrorKind::numeric, "train_model: loss became ", lv,
                    " at epoch ", epoch + 1, ", batch ", start / size_t(cfg.batch_size) + 1);
            opt.zero_grad();
            t.backward(loss);
            opt.step();
            ++result.steps;
            loss_sum += lv * bs;
        }
        result.epoch_loss.push_back(loss_sum / double(samples.size()));
    }
    return result;
}

/// Mean Dice of thresholded predictions over a sample set (BN frozen).
template <class S>
double mean_dice(PaNet<S>& model, const std::vector<LoadedSample<S>>& samples) {
    require(!samples.empty(), ErrorKind::invalid_argument, "mean_dice: empty sample set");
    double acc = 0;
    for (const auto& s : samples) {
        const BinaryMask pred = threshold_mask(model.predict_prob(s.image));
        acc += overlap_metrics(confusion(s.mask, pred)).dice;
    }
    return acc / double(samples.size());
}

}  // namespace panseg

#endif  // PANSEG_TRAIN_HPP
