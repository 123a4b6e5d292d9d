#pragma once

#include <array>
#include <cassert>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace sketchgen {

// Dense row-major tensor. Rank is at most 4; images use NCHW order.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int64_t> dims) : dims_(std::move(dims)) {
        data_.assign(static_cast<size_t>(count(dims_)), T(0));
    }

    Tensor(std::vector<int64_t> dims, std::vector<T> data)
        : dims_(std::move(dims)), data_(std::move(data)) {
        if (count(dims_) != static_cast<int64_t>(data_.size()))
            throw std::invalid_argument("tensor data does not match shape");
    }

    static Tensor zeros(std::vector<int64_t> dims) { return Tensor(std::move(dims)); }

    static Tensor full(std::vector<int64_t> dims, T v) {
        Tensor t(std::move(dims));
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }

    const std::vector<int64_t>& dims() const { return dims_; }
    int64_t dim(size_t i) const { return dims_.at(i); }
    int rank() const { return static_cast<int>(dims_.size()); }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // NCHW accessor
    T& at(int64_t n, int64_t c, int64_t h, int64_t w) {
        return data_[static_cast<size_t>(((n * dims_[1] + c) * dims_[2] + h) * dims_[3] + w)];
    }
    const T& at(int64_t n, int64_t c, int64_t h, int64_t w) const {
        return data_[static_cast<size_t>(((n * dims_[1] + c) * dims_[2] + h) * dims_[3] + w)];
    }
    // 2-D accessor
    T& at(int64_t r, int64_t c) { return data_[static_cast<size_t>(r * dims_[1] + c)]; }
    const T& at(int64_t r, int64_t c) const { return data_[static_cast<size_t>(r * dims_[1] + c)]; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Tensor& o) const { return dims_ == o.dims_; }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < dims_.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(dims_[i]);
        }
        return s + "]";
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(dims_);
        for (int64_t i = 0; i < size(); ++i) out[i] = static_cast<U>(data_[static_cast<size_t>(i)]);
        return out;
    }

    static int64_t count(const std::vector<int64_t>& dims) {
        int64_t n = 1;
        for (int64_t d : dims) {
            if (d < 0) throw std::invalid_argument("negative tensor dim");
            n *= d;
        }
        return n;
    }

private:
    std::vector<int64_t> dims_;
    std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

} // namespace sketchgen
