#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace voxseg {

// Dense N-d array, x fastest. Network tensors are [batch, channels, z, y, x].
// T is float for training/inference and double for gradient-check builds.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
        data_.assign(count(), T(0));
    }

    static Tensor zeros_like(const Tensor& o) { return Tensor(o.shape_); }

    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t dim(size_t i) const { return shape_.at(i); }
    size_t rank() const { return shape_.size(); }

    int64_t count() const {
        int64_t n = 1;
        for (int64_t e : shape_) n *= e;
        return shape_.empty() ? 0 : n;
    }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    T& operator[](int64_t i) { return data_[i]; }
    const T& operator[](int64_t i) const { return data_[i]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    void fill(T v) { data_.assign(data_.size(), v); }

    void require_shape(const std::vector<int64_t>& s, const char* what) const {
        if (shape_ != s)
            throw std::invalid_argument(std::string(what) + ": tensor shape mismatch");
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_);
        for (size_t i = 0; i < data_.size(); ++i) out[static_cast<int64_t>(i)] = static_cast<U>(data_[i]);
        return out;
    }

private:
    std::vector<int64_t> shape_;
    std::vector<T> data_;
};

} // namespace voxseg
