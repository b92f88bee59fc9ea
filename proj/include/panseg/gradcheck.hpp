#ifndef PANSEG_GRADCHECK_HPP
#define PANSEG_GRADCHECK_HPP

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "panseg/autodiff.hpp"
#include "panseg/rng.hpp"

namespace panseg {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst;  // "param[index]" of the worst entry
    int64_t entries_checked = 0;
};

/// Central-difference check of reverse-mode gradients, double precision.
///
/// `f` evaluates the scalar loss and backpropagates it into the given
/// parameters' grad slots (grads are zeroed here before every call). The
/// relative error per entry is |analytic - numeric| / max(1, |analytic|,
/// |numeric|). With max_entries_per_param > 0 a seeded subset of entries is
/// perturbed instead of all of them (used for whole-model checks).
template <class F>
GradCheckReport gradcheck(F&& f, const std::vector<Parameter<double>*>& params, double eps = 1e-5,
                          int64_t max_entries_per_param = 0, uint64_t sample_seed = 0) {
    require(eps > 0, ErrorKind::invalid_argument, "gradcheck: eps must be positive");

    for (auto* p : params) p->zero_grad();
    double loss0 = f();
    require(std::isfinite(loss0), ErrorKind::numeric, "gradcheck: loss is not finite");

    std::vector<Tensor<double>> analytic;
    analytic.reserve(params.size());
    for (auto* p : params) {
        for (int64_t i = 0; i < p->grad.numel(); ++i)
            require(std::isfinite(p->grad[i]), ErrorKind::numeric,
                    "gradcheck: non-finite gradient in parameter ", p->name);
        analytic.push_back(p->grad);
    }

    GradCheckReport report;
    Rng pick(sample_seed);
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Parameter<double>& p = *params[pi];
        int64_t n = p.value.numel();
        std::vector<int64_t> entries;
        if (max_entries_per_param > 0 && n > max_entries_per_param) {
            Rng r = pick.fork(pi);
            for (int64_t k = 0; k < max_entries_per_param; ++k)
                entries.push_back(int64_t(r.below(uint64_t(n))));
        } else {
            entries.resize(size_t(n));
            for (int64_t i = 0; i < n; ++i) entries[size_t(i)] = i;
        }

        for (int64_t i : entries) {
            double old = p.value[i];
            p.value[i] = old + eps;
            for (auto* q : params) q->zero_grad();
            double lp = f();
            p.value[i] = old - eps;
            for (auto* q : params) q->zero_grad();
            double lm = f();
            p.value[i] = old;
            require(std::isfinite(lp) && std::isfinite(lm), ErrorKind::numeric,
                    "gradcheck: non-finite loss while perturbing parameter ", p.name);
            double numeric = (lp - lm) / (2.0 * eps);
            double a = analytic[pi][i];
            double rel = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
            ++report.entries_checked;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst = cat(p.name, "[", i, "]");
            }
        }
    }
    // Restore analytic grads so callers can inspect them afterwards.
    for (size_t pi = 0; pi < params.size(); ++pi) params[pi]->grad = analytic[pi];
    return report;
}

}  // namespace panseg

#endif  // PANSEG_GRADCHECK_HPP
