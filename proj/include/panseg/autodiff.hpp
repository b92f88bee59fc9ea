#ifndef PANSEG_AUTODIFF_HPP
#define PANSEG_AUTODIFF_HPP

#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "panseg/tensor.hpp"

namespace panseg {

enum class OpKind {
    constant,
    parameter,
    add,
    sub,
    mul,
    div,
    add_scalar,
    mul_scalar,
    sum,
    mean,
    slice_channels,
    conv2d,
    conv_transpose2x,
    batchnorm2d,
    relu,
    sigmoid,
    softmax_channels,
    maxpool2d,
    global_avg_pool,
    concat_channels,
    linear,
    channel_scale,
    dice_loss,
    bce_loss,
};

inline const char* op_name(OpKind k) {
    switch (k) {
        case OpKind::constant: return "constant";
        case OpKind::parameter: return "parameter";
        case OpKind::add: return "add";
        case OpKind::sub: return "sub";
        case OpKind::mul: return "mul";
        case OpKind::div: return "div";
        case OpKind::add_scalar: return "add_scalar";
        case OpKind::mul_scalar: return "mul_scalar";
        case OpKind::sum: return "sum";
        case OpKind::mean: return "mean";
        case OpKind::slice_channels: return "slice_channels";
        case OpKind::conv2d: return "conv2d";
        case OpKind::conv_transpose2x: return "conv_transpose2x";
        case OpKind::batchnorm2d: return "batchnorm2d";
        case OpKind::relu: return "relu";
        case OpKind::sigmoid: return "sigmoid";
        case OpKind::softmax_channels: return "softmax_channels";
        case OpKind::maxpool2d: return "maxpool2d";
        case OpKind::global_avg_pool: return "global_avg_pool";
        case OpKind::concat_channels: return "concat_channels";
        case OpKind::linear: return "linear";
        case OpKind::channel_scale: return "channel_scale";
        case OpKind::dice_loss: return "dice_loss";
        case OpKind::bce_loss: return "bce_loss";
    }
    return "unknown";
}

/// Trainable (or frozen) tensor with a gradient slot. Names are stable and
/// unique within a model; they key the checkpoint format.
template <class S>
struct Parameter {
    std::string name;
    Tensor<S> value;
    Tensor<S> grad;
    bool trainable = true;

    Parameter() = default;
    Parameter(std::string n, Tensor<S> v, bool train = true)
        : name(std::move(n)), value(std::move(v)), grad(Tensor<S>::zeros(value.shape())),
          trainable(train) {}

    void zero_grad() { grad.fill(S(0)); }
};

/// Handle into a Tape; plain index so layer code can pass them by value.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

/// Define-by-run reverse-mode tape. Rebuilt every forward pass; nodes are
/// recorded in forward order so a reverse index sweep is a valid reverse
/// topological order. Single-threaded mutation; never shared across threads.
template <class S>
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, int)>;

    struct Node {
        OpKind op;
        Tensor<S> value;
        Tensor<S> grad;  // allocated lazily; holds accumulated partials after backward
        bool has_grad = false;
        std::vector<int> parents;
        BackwardFn backward;
        Parameter<S>* param = nullptr;
    };

    Tape() { nodes_.reserve(128); }

    /// Core primitive: push a node whose backward closure implements the
    /// analytic derivative of `op`. Returns the handle.
    Var record(OpKind op, std::vector<int> parents, Tensor<S> value, BackwardFn backward) {
        for (int p : parents)
            require(p >= 0 && p < int(nodes_.size()), ErrorKind::invalid_argument,
                    op_name(op), ": parent not on tape");
        Node n;
        n.op = op;
        n.value = std::move(value);
        n.parents = std::move(parents);
        n.backward = std::move(backward);
        nodes_.push_back(std::move(n));
        return Var{int(nodes_.size()) - 1};
    }

    Var constant(Tensor<S> t) { return record(OpKind::constant, {}, std::move(t), nullptr); }

    /// Leaf for a Parameter. Memoized: using the same Parameter twice yields
    /// the same node, so gradient accumulation across uses is additive.
    Var param(Parameter<S>& p) {
        auto it = param_nodes_.find(&p);
        if (it != param_nodes_.end()) return Var{it->second};
        Var v = record(OpKind::parameter, {}, p.value, nullptr);
        nodes_[size_t(v.id)].param = &p;
        param_nodes_.emplace(&p, v.id);
        return v;
    }

    const Tensor<S>& value(Var v) const { return nodes_[size_t(v.id)].value; }
    const Tensor<S>& value(int id) const { return nodes_[size_t(id)].value; }

    /// Gradient slot, zero-initialized on first touch.
    Tensor<S>& grad(int id) {
        Node& n = nodes_[size_t(id)];
        if (!n.has_grad) {
            n.grad = Tensor<S>::zeros(n.value.shape());
            n.has_grad = true;
        }
        return n.grad;
    }

    bool has_grad(int id) const { return nodes_[size_t(id)].has_grad; }
    const Tensor<S>& grad_of(Var v) const { return nodes_[size_t(v.id)].grad; }
    const std::vector<int>& parents(int id) const { return nodes_[size_t(id)].parents; }
    size_t size() const { return nodes_.size(); }

    /// Reverse sweep from a scalar loss. Adds into each trainable
    /// Parameter's grad; the caller zeroes grads between steps.
    void backward(Var loss) {
        require(loss.valid() && loss.id < int(nodes_.size()), ErrorKind::invalid_argument,
                "backward: loss not on tape");
        require(!backward_done_, ErrorKind::invalid_argument,
                "backward: tape already swept; rebuild the tape for another pass");
        const Node& ln = nodes_[size_t(loss.id)];
        require(ln.value.numel() == 1, ErrorKind::invalid_argument,
                "backward: loss must be scalar, got shape ", shape_str(ln.value.shape()));
        backward_done_ = true;
        grad(loss.id).fill(S(1));
        for (int id = loss.id; id >= 0; --id) {
            Node& n = nodes_[size_t(id)];
            if (!n.has_grad) continue;
            if (n.backward) n.backward(*this, id);
            if (n.param && n.param->trainable) n.param->grad.add_(n.grad);
        }
    }

private:
    std::vector<Node> nodes_;
    std::unordered_map<Parameter<S>*, int> param_nodes_;
    bool backward_done_ = false;
};

namespace detail {

template <class S>
void require_same_shape(OpKind op, const Tensor<S>& a, const Tensor<S>& b) {
    require(a.same_shape(b), ErrorKind::shape_mismatch, op_name(op), ": shapes ",
            shape_str(a.shape()), " vs ", shape_str(b.shape()));
}

}  // namespace detail

// ---- elementwise and reduction ops ----

template <class S>
Var add(Tape<S>& t, Var a, Var b) {
    const Tensor<S>& av = t.value(a);
    const Tensor<S>& bv = t.value(b);
    detail::require_same_shape(OpKind::add, av, bv);
    Tensor<S> out(av.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = av[i] + bv[i];
    return t.record(OpKind::add, {a.id, b.id}, std::move(out), [](Tape<S>& tp, int id) {
        const Tensor<S>& g = tp.grad(id);
        int pa = tp.parents(id)[0], pb = tp.parents(id)[1];
        tp.grad(pa).add_(g);
        tp.grad(pb).add_(g);
    });
}

template <class S>
Var sub(Tape<S>& t, Var a, Var b) {
    const Tensor<S>& av = t.value(a);
    const Tensor<S>& bv = t.value(b);
    detail::require_same_shape(OpKind::sub, av, bv);
    Tensor<S> out(av.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = av[i] - bv[i];
    return t.record(OpKind::sub, {a.id, b.id}, std::move(out), [](Tape<S>& tp, int id) {
        const Tensor<S>& g = tp.grad(id);
        int pa = tp.parents(id)[0], pb = tp.parents(id)[1];
        tp.grad(pa).add_(g);
        Tensor<S>& gb = tp.grad(pb);
        for (int64_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
    });
}

template <class S>
Var mul(Tape<S>& t, Var a, Var b) {
    const Tensor<S>& av = t.value(a);
    const Tensor<S>& bv = t.value(b);
    detail::require_same_shape(OpKind::mul, av, bv);
    Tensor<S> out(av.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = av[i] * bv[i];
    return t.record(OpKind::mul, {a.id, b.id}, std::move(out), [](Tape<S>& tp, int id) {
        int pa = tp.parents(id)[0], pb = tp.parents(id)[1];
        const Tensor<S>& av = tp.value(pa);
        const Tensor<S>& bv = tp.value(pb);
        // grad(pa) may alias grad(pb) when a == b; read g by value index only.
        {
            Tensor<S>& ga = tp.grad(pa);
            const Tensor<S>& g = tp.grad(id);
            for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * bv[i];
        }
        {
            Tensor<S>& gb = tp.grad(pb);
            const Tensor<S>& g = tp.grad(id);
            for (int64_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * av[i];
        }
    });
}

template <class S>
Var div(Tape<S>& t, Var a, Var b) {
    const Tensor<S>& av = t.value(a);
    const Tensor<S>& bv = t.value(b);
    detail::require_same_shape(OpKind::div, av, bv);
    Tensor<S> out(av.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = av[i] / bv[i];
    return t.record(OpKind::div, {a.id, b.id}, std::move(out), [](Tape<S>& tp, int id) {
        int pa = tp.parents(id)[0], pb = tp.parents(id)[1];
        const Tensor<S>& av = tp.value(pa);
        const Tensor<S>& bv = tp.value(pb);
        {
            Tensor<S>& ga = tp.grad(pa);
            const Tensor<S>& g = tp.grad(id);
            for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] / bv[i];
        }
        {
            Tensor<S>& gb = tp.grad(pb);
            const Tensor<S>& g = tp.grad(id);
            for (int64_t i = 0; i < g.numel(); ++i) gb[i] -= g[i] * av[i] / (bv[i] * bv[i]);
        }
    });
}

template <class S>
Var add_scalar(Tape<S>& t, Var a, S c) {
    const Tensor<S>& av = t.value(a);
    Tensor<S> out(av.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = av[i] + c;
    return t.record(OpKind::add_scalar, {a.id}, std::move(out), [](Tape<S>& tp, int id) {
        tp.grad(tp.parents(id)[0]).add_(tp.grad(id));
    });
}

template <class S>
Var mul_scalar(Tape<S>& t, Var a, S c) {
    const Tensor<S>& av = t.value(a);
    Tensor<S> out(av.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = av[i] * c;
    return t.record(OpKind::mul_scalar, {a.id}, std::move(out), [c](Tape<S>& tp, int id) {
        Tensor<S>& ga = tp.grad(tp.parents(id)[0]);
        const Tensor<S>& g = tp.grad(id);
        for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * c;
    });
}

template <class S>
Var sum(Tape<S>& t, Var a) {
    const Tensor<S>& av = t.value(a);
    S acc = S(0);
    for (int64_t i = 0; i < av.numel(); ++i) acc += av[i];
    return t.record(OpKind::sum, {a.id}, Tensor<S>::scalar(acc), [](Tape<S>& tp, int id) {
        S g = tp.grad(id)[0];
        Tensor<S>& ga = tp.grad(tp.parents(id)[0]);
        for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += g;
    });
}

template <class S>
Var mean(Tape<S>& t, Var a) {
    const Tensor<S>& av = t.value(a);
    S acc = S(0);
    for (int64_t i = 0; i < av.numel(); ++i) acc += av[i];
    S inv = S(1) / S(av.numel());
    return t.record(OpKind::mean, {a.id}, Tensor<S>::scalar(acc * inv), [inv](Tape<S>& tp, int id) {
        S g = tp.grad(id)[0] * inv;
        Tensor<S>& ga = tp.grad(tp.parents(id)[0]);
        for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += g;
    });
}

/// Channel range [c0, c1) of an NCHW tensor.
template <class S>
Var slice_channels(Tape<S>& t, Var x, int c0, int c1) {
    const Tensor<S>& xv = t.value(x);
    require(xv.rank() == 4, ErrorKind::shape_mismatch, "slice_channels: need NCHW, got ",
            shape_str(xv.shape()));
    int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    require(0 <= c0 && c0 < c1 && c1 <= c, ErrorKind::invalid_argument,
            "slice_channels: range [", c0, ",", c1, ") out of ", c, " channels");
    Tensor<S> out({n, c1 - c0, h, w});
    int64_t plane = int64_t(h) * w;
    for (int in = 0; in < n; ++in)
        for (int ic = c0; ic < c1; ++ic) {
            const S* src = xv.data() + (int64_t(in) * c + ic) * plane;
            S* dst = out.data() + (int64_t(in) * (c1 - c0) + (ic - c0)) * plane;
            for (int64_t i = 0; i < plane; ++i) dst[i] = src[i];
        }
    return t.record(OpKind::slice_channels, {x.id}, std::move(out),
                    [c0, c1, c, plane](Tape<S>& tp, int id) {
                        const Tensor<S>& g = tp.grad(id);
                        Tensor<S>& gx = tp.grad(tp.parents(id)[0]);
                        int n = g.dim(0);
                        for (int in = 0; in < n; ++in)
                            for (int ic = c0; ic < c1; ++ic) {
                                const S* src = g.data() + (int64_t(in) * (c1 - c0) + (ic - c0)) * plane;
                                S* dst = gx.data() + (int64_t(in) * c + ic) * plane;
                                for (int64_t i = 0; i < plane; ++i) dst[i] += src[i];
                            }
                    });
}

}  // namespace panseg

#endif  // PANSEG_AUTODIFF_HPP
