#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "masksparsity/errors.hpp"

namespace masksparsity {

std::string shape_to_string(const std::vector<int64_t>& shape);
int64_t shape_numel(const std::vector<int64_t>& shape);

/// Dense row-major n-d array. Rank is restricted to 1 (vectors), 2 (matrices)
/// or 4 (NCHW activation and weight blocks); the buffer length always equals
/// the product of the dimensions.
template <typename T>
class TensorT {
 public:
  TensorT() = default;

  explicit TensorT(std::vector<int64_t> shape) : shape_(std::move(shape)) {
    check_shape();
    data_.assign(static_cast<size_t>(shape_numel(shape_)), T(0));
  }

  TensorT(std::vector<int64_t> shape, std::vector<T> values)
      : shape_(std::move(shape)), data_(std::move(values)) {
    check_shape();
    if (static_cast<int64_t>(data_.size()) != shape_numel(shape_)) {
      throw InvariantError("tensor: buffer of " + std::to_string(data_.size()) +
                           " values does not fill shape " + shape_to_string(shape_));
    }
  }

  static TensorT full(std::vector<int64_t> shape, T value) {
    TensorT t(std::move(shape));
    for (auto& v : t.data_) v = value;
    return t;
  }

  bool empty() const { return shape_.empty(); }
  int rank() const { return static_cast<int>(shape_.size()); }
  const std::vector<int64_t>& shape() const { return shape_; }
  int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  T& operator()(int64_t a, int64_t b) { return data_[static_cast<size_t>(a * shape_[1] + b)]; }
  const T& operator()(int64_t a, int64_t b) const {
    return data_[static_cast<size_t>(a * shape_[1] + b)];
  }

  T& operator()(int64_t a, int64_t b, int64_t c, int64_t d) {
    return data_[static_cast<size_t>(((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d)];
  }
  const T& operator()(int64_t a, int64_t b, int64_t c, int64_t d) const {
    return data_[static_cast<size_t>(((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d)];
  }

  /// Same buffer under a new shape with equal element count.
  TensorT reshaped(std::vector<int64_t> new_shape) const {
    if (shape_numel(new_shape) != numel()) {
      throw InvariantError("tensor: cannot reshape " + shape_to_string(shape_) + " to " +
                           shape_to_string(new_shape));
    }
    return TensorT(std::move(new_shape), data_);
  }

  bool same_shape(const TensorT& other) const { return shape_ == other.shape_; }

 private:
  void check_shape() const {
    const int r = static_cast<int>(shape_.size());
    if (r != 1 && r != 2 && r != 4) {
      throw InvariantError("tensor: rank must be 1, 2 or 4, got shape " +
                           shape_to_string(shape_));
    }
    for (int64_t d : shape_) {
      if (d <= 0) {
        throw InvariantError("tensor: non-positive dimension in shape " +
                             shape_to_string(shape_));
      }
    }
  }

  std::vector<int64_t> shape_;
  std::vector<T> data_;
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

template <typename T, typename U>
TensorT<U> tensor_cast(const TensorT<T>& t) {
  if (t.empty()) return {};
  std::vector<U> values(t.values().begin(), t.values().end());
  return TensorT<U>(t.shape(), std::move(values));
}

}  // namespace masksparsity
