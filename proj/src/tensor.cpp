#include "vimu/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace vimu {

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

template <typename T>
bool Tensor<T>::all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
Tensor<T> Tensor<T>::slice_rows(std::size_t begin, std::size_t count) const {
    if (shape_.empty() || begin + count > shape_[0] || count == 0) {
        throw DimensionError("slice_rows out of range for " + shape_str(shape_));
    }
    Shape s = shape_;
    s[0] = count;
    const std::size_t row = values_.size() / shape_[0];
    std::vector<T> v(values_.begin() + static_cast<std::ptrdiff_t>(begin * row),
                     values_.begin() + static_cast<std::ptrdiff_t>((begin + count) * row));
    return Tensor<T>(std::move(s), std::move(v));
}

template <typename T>
Tensor<T> stack(std::span<const Tensor<T>> items) {
    if (items.empty()) throw DimensionError("stack of zero tensors");
    Shape s{items.size()};
    const Shape& inner = items.front().shape();
    s.insert(s.end(), inner.begin(), inner.end());
    std::vector<T> v;
    v.reserve(shape_size(s));
    for (const auto& t : items) {
        if (t.shape() != inner) throw DimensionError("stack shape mismatch: " + shape_str(t.shape()) + " vs " + shape_str(inner));
        v.insert(v.end(), t.storage().begin(), t.storage().end());
    }
    return Tensor<T>(std::move(s), std::move(v));
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> stack(std::span<const Tensor<float>>);
template Tensor<double> stack(std::span<const Tensor<double>>);

}  // namespace vimu
