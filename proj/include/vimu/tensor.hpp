#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "vimu/errors.hpp"

namespace vimu {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

std::string shape_str(const Shape& s);

/// Dense row-major n-d array. Network activations use the layout
/// batch x maps x height x width, with height = time and width = channel.
template <typename T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T(0))
        : shape_(std::move(shape)), values_(shape_size(shape_), fill) {
        for (auto d : shape_) {
            if (d == 0) throw DimensionError("tensor dimension must be positive: " + shape_str(shape_));
        }
    }
    Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), values_(std::move(values)) {
        if (shape_size(shape_) != values_.size()) {
            throw DimensionError("tensor shape " + shape_str(shape_) + " does not match " +
                                 std::to_string(values_.size()) + " values");
        }
    }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }

    T* data() { return values_.data(); }
    const T* data() const { return values_.data(); }
    std::span<T> values() { return values_; }
    std::span<const T> values() const { return values_; }
    std::vector<T>& storage() { return values_; }
    const std::vector<T>& storage() const { return values_; }

    T& operator[](std::size_t i) { return values_[i]; }
    const T& operator[](std::size_t i) const { return values_[i]; }

    T& at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return values_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    const T& at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return values_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }

    /// Same values, new shape of equal element count.
    Tensor reshaped(Shape s) const { return Tensor(std::move(s), values_); }
    void reshape(Shape s) {
        if (shape_size(s) != values_.size()) throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(s));
        shape_ = std::move(s);
    }

    void fill(T v) { std::fill(values_.begin(), values_.end(), v); }
    bool all_finite() const;

    template <typename U>
    Tensor<U> cast() const {
        return Tensor<U>(shape_, std::vector<U>(values_.begin(), values_.end()));
    }

    /// Rows [begin, begin+count) along the leading axis.
    Tensor slice_rows(std::size_t begin, std::size_t count) const;

    bool operator==(const Tensor& o) const = default;

private:
    Shape shape_;
    std::vector<T> values_;
};

/// Stack equally shaped tensors along a new leading axis.
template <typename T>
Tensor<T> stack(std::span<const Tensor<T>> items);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace vimu
