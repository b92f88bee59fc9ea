#ifndef PANSEG_ADAM_HPP
#define PANSEG_ADAM_HPP

#include <cmath>
#include <cstdint>
#include <vector>

#include "panseg/autodiff.hpp"

namespace panseg {

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Bias-corrected Adam over a fixed parameter set. Non-trainable parameters
/// are ignored. step() consumes the gradients currently accumulated in the
/// parameters; the caller zeroes them between steps (or uses zero_grad()).
template <class S>
class Adam {
public:
    explicit Adam(std::vector<Parameter<S>*> params, AdamConfig cfg = {}) : cfg_(cfg) {
        require(cfg.lr > 0, ErrorKind::invalid_argument, "Adam: lr must be > 0, got ", cfg.lr);
        require(cfg.beta1 >= 0 && cfg.beta1 < 1 && cfg.beta2 >= 0 && cfg.beta2 < 1,
                ErrorKind::invalid_argument, "Adam: betas must lie in [0,1)");
        for (Parameter<S>* p : params)
            if (p->trainable)
                slots_.push_back(Slot{p, Tensor<S>::zeros(p->value.shape()),
                                      Tensor<S>::zeros(p->value.shape())});
    }

    int64_t steps() const { return t_; }
    double lr() const { return cfg_.lr; }
    void set_lr(double lr) {
        require(lr > 0, ErrorKind::invalid_argument, "Adam: lr must be > 0");
        cfg_.lr = lr;
    }

    void zero_grad() {
        for (Slot& s : slots_) s.p->zero_grad();
    }

    void step() {
        ++t_;
        const S b1 = S(cfg_.beta1), b2 = S(cfg_.beta2);
        const S bc1 = S(1.0 - std::pow(cfg_.beta1, double(t_)));
        const S bc2 = S(1.0 - std::pow(cfg_.beta2, double(t_)));
        const S lr = S(cfg_.lr), eps = S(cfg_.eps);
        for (Slot& s : slots_) {
            const Tensor<S>& g = s.p->grad;
            Tensor<S>& val = s.p->value;
            for (int64_t i = 0; i < g.numel(); ++i) {
                require(std::isfinite(double(g[i])), ErrorKind::numeric,
                        "Adam: non-finite gradient in parameter ", s.p->name, " at entry ", i);
                s.m[i] = b1 * s.m[i] + (S(1) - b1) * g[i];
                s.v[i] = b2 * s.v[i] + (S(1) - b2) * g[i] * g[i];
                const S mhat = s.m[i] / bc1;
                const S vhat = s.v[i] / bc2;
                val[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
    }

private:
    struct Slot {
        Parameter<S>* p;
        Tensor<S> m, v;
    };
    std::vector<Slot> slots_;
    AdamConfig cfg_;
    int64_t t_ = 0;
};

}  // namespace panseg

#endif  // PANSEG_ADAM_HPP
