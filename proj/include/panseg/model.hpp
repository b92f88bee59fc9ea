#ifndef PANSEG_MODEL_HPP
#define PANSEG_MODEL_HPP

#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "panseg/config.hpp"
#include "panseg/layers.hpp"
#include "panseg/rng.hpp"

namespace panseg {

struct ModelConfig {
    int base_channels = 16;
    int num_classes = 2;
    bool enable_pdc = false;
    bool enable_se = false;
    int se_reduction = 16;
    int input_height = 128, input_width = 128;

    void validate() const {
        require(base_channels >= 4, ErrorKind::invalid_argument,
                "ModelConfig: base_channels must be >= 4, got ", base_channels);
        require(base_channels % 2 == 0, ErrorKind::invalid_argument,
                "ModelConfig: base_channels must be even (decoders end at half width), got ",
                base_channels);
        require(num_classes == 2, ErrorKind::invalid_argument,
                "ModelConfig: only 2-class output is supported, got ", num_classes);
        require(se_reduction >= 1, ErrorKind::invalid_argument,
                "ModelConfig: se_reduction must be >= 1");
        require(input_height % 32 == 0 && input_width % 32 == 0 && input_height >= 32 &&
                    input_width >= 32,
                ErrorKind::invalid_argument, "ModelConfig: input size ", input_height, "x",
                input_width, " must be multiples of 32 (five 2x poolings)");
    }

    bool operator==(const ModelConfig&) const = default;
};

/// Canonical single-line-per-key form, used as the checkpoint config echo.
inline std::string model_config_text(const ModelConfig& c) {
    KvMap kv;
    kv["model.base_channels"] = std::to_string(c.base_channels);
    kv["model.enable_pdc"] = c.enable_pdc ? "true" : "false";
    kv["model.enable_se"] = c.enable_se ? "true" : "false";
    kv["model.input_height"] = std::to_string(c.input_height);
    kv["model.input_width"] = std::to_string(c.input_width);
    kv["model.num_classes"] = std::to_string(c.num_classes);
    kv["model.se_reduction"] = std::to_string(c.se_reduction);
    return kv_text(kv);
}

inline ModelConfig model_config_from_kv(const KvMap& kv) {
    ModelConfig c;
    c.base_channels = int(kv_get_int(kv, "model.base_channels", c.base_channels));
    c.num_classes = int(kv_get_int(kv, "model.num_classes", c.num_classes));
    c.enable_pdc = kv_get_bool(kv, "model.enable_pdc", c.enable_pdc);
    c.enable_se = kv_get_bool(kv, "model.enable_se", c.enable_se);
    c.se_reduction = int(kv_get_int(kv, "model.se_reduction", c.se_reduction));
    c.input_height = int(kv_get_int(kv, "model.input_height", c.input_height));
    c.input_width = int(kv_get_int(kv, "model.input_width", c.input_width));
    c.validate();
    return c;
}

inline ModelConfig parse_model_config_text(const std::string& text) {
    return model_config_from_kv(parse_kv_text(text, "checkpoint config"));
}

// ---- building blocks -------------------------------------------------------------

template <class S>
struct ConvBnRelu {
    Conv2dParams<S> conv;
    BatchNormState<S> bn;
};

template <class S>
struct EncStage {
    ConvBnRelu<S> a, b;
};

template <class S>
struct DecStage {
    Conv2dParams<S> up;  // 2x2 stride-2 transposed conv, halves channels
    ConvBnRelu<S> cbr;
};

/// Encoder-decoder segmentation net: five conv-BN-ReLU encoder stages with 2x2
/// max pooling, taps at strides 8/16/32 (optionally refined by dilation-1/2/3
/// pyramid blocks), three decoders restoring full resolution with learnable 2x
/// upsampling, channel concatenation (optionally gated by squeeze-excitation),
/// and a 1x1 convolution to per-pixel class probabilities.
template <class S>
class PaNet {
public:
    PaNet(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
        cfg_.validate();
        Rng rng(seed);
        const int bc = cfg_.base_channels;

        int cin = 1;
        for (int s = 0; s < 5; ++s) {
            const int cout = bc << s;
            const std::string n = "enc" + std::to_string(s + 1);
            enc_.push_back(EncStage<S>{make_cbr(n + ".1", cin, cout, rng),
                                       make_cbr(n + ".2", cout, cout, rng)});
            cin = cout;
        }
        if (cfg_.enable_pdc) {
            pdc_.emplace(std::array<PdcParams<S>, 3>{make_pdc("pdc8", bc * 4, rng),
                                                     make_pdc("pdc16", bc * 8, rng),
                                                     make_pdc("pdc32", bc * 16, rng)});
        }
        build_decoder(dec8_, "dec8", bc * 4, 3, rng);
        build_decoder(dec16_, "dec16", bc * 8, 4, rng);
        build_decoder(dec32_, "dec32", bc * 16, 5, rng);
        const int fused = 3 * (bc / 2);
        if (cfg_.enable_se) se_.emplace(make_se("fuse.se", fused, cfg_.se_reduction, rng));
        head_.emplace(make_conv("head", fused, cfg_.num_classes, 1, 1, 0, 1, rng));
    }

    PaNet(const PaNet&) = delete;
    PaNet& operator=(const PaNet&) = delete;

    const ModelConfig& config() const { return cfg_; }

    /// images [N,1,H,W] (H, W multiples of 32) -> class probabilities
    /// [N,num_classes,H,W]; channel 1 is the foreground probability.
    Var forward(Tape<S>& t, Var x, bool training) {
        const Tensor<S>& xv = t.value(x);
        require(xv.rank() == 4 && xv.dim(1) == 1, ErrorKind::shape_mismatch,
                "forward: need [N,1,H,W], got ", shape_str(xv.shape()));
        require(xv.dim(2) % 32 == 0 && xv.dim(3) % 32 == 0 && xv.dim(2) >= 32 && xv.dim(3) >= 32,
                ErrorKind::shape_mismatch, "forward: H and W must be multiples of 32, got ",
                xv.dim(2), "x", xv.dim(3));

        Var h = x;
        Var taps[3];  // stride 8, 16, 32
        for (int s = 0; s < 5; ++s) {
            h = apply_cbr(t, h, enc_[size_t(s)].a, training);
            h = apply_cbr(t, h, enc_[size_t(s)].b, training);
            h = maxpool2d(t, h);
            if (s >= 2) taps[s - 2] = h;
        }
        if (pdc_) {
            for (int i = 0; i < 3; ++i) taps[i] = pdc_block(t, taps[i], (*pdc_)[size_t(i)]);
        }
        Var d8 = run_decoder(t, taps[0], dec8_, training);
        Var d16 = run_decoder(t, taps[1], dec16_, training);
        Var d32 = run_decoder(t, taps[2], dec32_, training);
        Var fused = concat_channels(t, {d8, d16, d32});
        if (se_) fused = se_block(t, fused, *se_);
        return softmax_channels(t, conv2d(t, fused, *head_));
    }

    /// Foreground probability for one [H,W] image in [0,1]; pads to multiples
    /// of 32 by reflection and crops back. Batch statistics stay frozen.
    Tensor<S> predict_prob(const Tensor<S>& image) {
        require(image.rank() == 2, ErrorKind::shape_mismatch, "predict_prob: need [H,W], got ",
                shape_str(image.shape()));
        const int H = image.dim(0), W = image.dim(1);
        const int H2 = (H + 31) / 32 * 32, W2 = (W + 31) / 32 * 32;
        require(H2 - H < H && W2 - W < W, ErrorKind::invalid_argument, "predict_prob: image ", H,
                "x", W, " too small to reflect-pad to ", H2, "x", W2,
                " (need at least 17 pixels per axis)");
        Tensor<S> padded({1, 1, H2, W2});
        for (int y = 0; y < H2; ++y) {
            const int sy = y < H ? y : 2 * H - 2 - y;
            for (int x = 0; x < W2; ++x) {
                const int sx = x < W ? x : 2 * W - 2 - x;
                padded[int64_t(y) * W2 + x] = image[int64_t(sy) * W + sx];
            }
        }
        Tape<S> t;
        const Var out = forward(t, t.constant(std::move(padded)), false);
        const Tensor<S>& probs = t.value(out);
        Tensor<S> fg({H, W});
        const int64_t plane = int64_t(H2) * W2;
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                fg[int64_t(y) * W + x] = probs[plane + int64_t(y) * W2 + x];  // channel 1
        return fg;
    }

    /// Every parameter in a stable order, batch-norm running statistics
    /// included (they are part of the model state and the checkpoint).
    std::vector<Parameter<S>*> params() {
        std::vector<Parameter<S>*> out;
        auto add_conv = [&](Conv2dParams<S>& c) {
            out.push_back(&c.weight);
            out.push_back(&c.bias);
        };
        auto add_bn = [&](BatchNormState<S>& b) {
            out.push_back(&b.gamma);
            out.push_back(&b.beta);
            out.push_back(&b.running_mean);
            out.push_back(&b.running_var);
        };
        auto add_cbr = [&](ConvBnRelu<S>& m) {
            add_conv(m.conv);
            add_bn(m.bn);
        };
        for (auto& st : enc_) {
            add_cbr(st.a);
            add_cbr(st.b);
        }
        if (pdc_)
            for (auto& p : *pdc_) {
                for (auto& br : p.branches) add_conv(br);
                add_conv(p.fusion);
            }
        for (auto* dec : {&dec8_, &dec16_, &dec32_})
            for (auto& st : *dec) {
                add_conv(st.up);
                add_cbr(st.cbr);
            }
        if (se_) {
            out.push_back(&se_->fc1_weight);
            out.push_back(&se_->fc1_bias);
            out.push_back(&se_->fc2_weight);
            out.push_back(&se_->fc2_bias);
        }
        add_conv(*head_);
        return out;
    }

    std::vector<Parameter<S>*> trainable_params() {
        std::vector<Parameter<S>*> out;
        for (auto* p : params())
            if (p->trainable) out.push_back(p);
        return out;
    }

    int64_t param_count() {
        int64_t total = 0;
        for (auto* p : params()) total += p->value.numel();
        return total;
    }

    std::string param_summary() {
        std::ostringstream ss;
        int64_t total = 0;
        for (auto* p : params()) {
            ss << p->name << '\t' << shape_str(p->value.shape()) << '\t' << p->value.numel()
               << '\n';
            total += p->value.numel();
        }
        ss << "total\t\t" << total << '\n';
        return ss.str();
    }

private:
    Conv2dParams<S> make_conv(const std::string& name, int cin, int cout, int k, int stride,
                              int pad, int dil, Rng& rng) {
        Tensor<S> w({cout, cin, k, k});
        const double sd = std::sqrt(2.0 / (double(cin) * k * k));
        for (int64_t i = 0; i < w.numel(); ++i) w[i] = S(rng.normal(0.0, sd));
        return Conv2dParams<S>{Parameter<S>(name + ".weight", std::move(w)),
                               Parameter<S>(name + ".bias", Tensor<S>::zeros({cout})), stride, pad,
                               dil};
    }

    Conv2dParams<S> make_up(const std::string& name, int cin, int cout, Rng& rng) {
        Tensor<S> w({cout, cin, 2, 2});
        const double sd = std::sqrt(2.0 / (double(cin) * 4));
        for (int64_t i = 0; i < w.numel(); ++i) w[i] = S(rng.normal(0.0, sd));
        return Conv2dParams<S>{Parameter<S>(name + ".weight", std::move(w)),
                               Parameter<S>(name + ".bias", Tensor<S>::zeros({cout})), 2, 0, 1};
    }

    ConvBnRelu<S> make_cbr(const std::string& name, int cin, int cout, Rng& rng) {
        return ConvBnRelu<S>{make_conv(name + ".conv", cin, cout, 3, 1, 1, 1, rng),
                             BatchNormState<S>(name + ".bn", cout)};
    }

    PdcParams<S> make_pdc(const std::string& name, int channels, Rng& rng) {
        PdcParams<S> p{{make_conv(name + ".branch1", channels, channels, 3, 1, 1, 1, rng),
                        make_conv(name + ".branch2", channels, channels, 3, 1, 2, 2, rng),
                        make_conv(name + ".branch3", channels, channels, 3, 1, 3, 3, rng)},
                       make_conv(name + ".fusion", 3 * channels, channels, 1, 1, 0, 1, rng)};
        return p;
    }

    SeBlockParams<S> make_se(const std::string& name, int channels, int reduction, Rng& rng) {
        const int b = se_bottleneck_width(channels, reduction);
        Tensor<S> w1({b, channels}), w2({channels, b});
        const double sd1 = std::sqrt(2.0 / double(channels));
        for (int64_t i = 0; i < w1.numel(); ++i) w1[i] = S(rng.normal(0.0, sd1));
        const double sd2 = std::sqrt(2.0 / double(b));
        for (int64_t i = 0; i < w2.numel(); ++i) w2[i] = S(rng.normal(0.0, sd2));
        return SeBlockParams<S>{Parameter<S>(name + ".fc1.weight", std::move(w1)),
                                Parameter<S>(name + ".fc1.bias", Tensor<S>::zeros({b})),
                                Parameter<S>(name + ".fc2.weight", std::move(w2)),
                                Parameter<S>(name + ".fc2.bias", Tensor<S>::zeros({channels})),
                                reduction};
    }

    void build_decoder(std::vector<DecStage<S>>& dec, const std::string& name, int cin,
                       int stages, Rng& rng) {
        int c = cin;
        for (int s = 0; s < stages; ++s) {
            const int cout = c / 2;
            const std::string n = name + ".stage" + std::to_string(s + 1);
            dec.push_back(DecStage<S>{make_up(n + ".up", c, cout, rng),
                                      make_cbr(n + ".conv", cout, cout, rng)});
            c = cout;
        }
    }

    Var apply_cbr(Tape<S>& t, Var x, ConvBnRelu<S>& m, bool training) {
        return relu(t, batchnorm2d(t, conv2d(t, x, m.conv), m.bn, training));
    }

    Var run_decoder(Tape<S>& t, Var x, std::vector<DecStage<S>>& dec, bool training) {
        for (auto& st : dec) {
            x = upsample2x(t, x, st.up);
            x = apply_cbr(t, x, st.cbr, training);
        }
        return x;
    }

    ModelConfig cfg_;
    std::vector<EncStage<S>> enc_;
    std::optional<std::array<PdcParams<S>, 3>> pdc_;
    std::vector<DecStage<S>> dec8_, dec16_, dec32_;
    std::optional<SeBlockParams<S>> se_;
    std::optional<Conv2dParams<S>> head_;
};

}  // namespace panseg

#endif  // PANSEG_MODEL_HPP
