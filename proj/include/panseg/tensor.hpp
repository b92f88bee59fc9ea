#ifndef PANSEG_TENSOR_HPP
#define PANSEG_TENSOR_HPP

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "panseg/common.hpp"

namespace panseg {

using Shape = std::vector<int>;

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

/// Dense row-major tensor, rank 1..4. Segmentation tensors are N x C x H x W.
/// Scalar type S is float on the training path and double in gradient checks.
template <class S>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape) : shape_(std::move(shape)) {
        validate_shape();
        data_.assign(size_t(shape_numel(shape_)), S(0));
    }

    Tensor(Shape shape, std::vector<S> data) : shape_(std::move(shape)), data_(std::move(data)) {
        validate_shape();
        require(int64_t(data_.size()) == shape_numel(shape_), ErrorKind::shape_mismatch,
                "tensor data length ", data_.size(), " does not match shape ", shape_str(shape_));
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor full(Shape shape, S v) {
        Tensor t(std::move(shape));
        for (S& x : t.data_) x = v;
        return t;
    }

    static Tensor scalar(S v) { return Tensor({1}, {v}); }

    const Shape& shape() const { return shape_; }
    int rank() const { return int(shape_.size()); }
    int dim(int i) const { return shape_[size_t(i)]; }
    int64_t numel() const { return int64_t(data_.size()); }
    bool empty() const { return data_.empty(); }

    S* data() { return data_.data(); }
    const S* data() const { return data_.data(); }

    S& operator[](int64_t i) { return data_[size_t(i)]; }
    const S& operator[](int64_t i) const { return data_[size_t(i)]; }

    // NCHW accessors; no bounds checks, hot-path code indexes raw data instead.
    S& at(int n, int c, int h, int w) {
        return data_[size_t(((int64_t(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
    }
    const S& at(int n, int c, int h, int w) const {
        return data_[size_t(((int64_t(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
    }

    void fill(S v) {
        for (S& x : data_) x = v;
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    /// Elementwise accumulate; shapes must match exactly.
    void add_(const Tensor& o) {
        require(same_shape(o), ErrorKind::shape_mismatch, "add_: shape ", shape_str(shape_),
                " vs ", shape_str(o.shape_));
        for (size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    }

    template <class T>
    Tensor<T> cast() const {
        std::vector<T> d(data_.size());
        for (size_t i = 0; i < data_.size(); ++i) d[i] = T(data_[i]);
        return Tensor<T>(shape_, std::move(d));
    }

private:
    void validate_shape() const {
        require(!shape_.empty() && shape_.size() <= 4, ErrorKind::invalid_argument,
                "tensor rank must be 1..4, got ", shape_.size());
        for (int d : shape_)
            require(d >= 1, ErrorKind::invalid_argument, "tensor dims must be >= 1, got ",
                    shape_str(shape_));
    }

    Shape shape_;
    std::vector<S> data_;
};

}  // namespace panseg

#endif  // PANSEG_TENSOR_HPP
