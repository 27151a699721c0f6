#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <string>
#include <vector>

#include "branchy/errors.hpp"

namespace branchy {

// Extents of a dense tensor. Order is (batch, channels, height, width) for
// 4-D activations and (batch, features) for 2-D ones.
class Shape {
 public:
  Shape() = default;

  Shape(std::initializer_list<std::int64_t> dims)
      : Shape(std::vector<std::int64_t>(dims)) {}

  explicit Shape(std::vector<std::int64_t> dims) : dims_(std::move(dims)) {
    std::int64_t count = 1;
    for (std::int64_t d : dims_) {
      if (d < 1) {
        throw ValidationError("shape extent must be >= 1, got " +
                              std::to_string(d) + " in " + str_of(dims_));
      }
      if (count > std::numeric_limits<std::int64_t>::max() / d) {
        throw ValidationError("shape element count overflows: " + str_of(dims_));
      }
      count *= d;
    }
    elements_ = count;
  }

  std::int64_t rank() const { return static_cast<std::int64_t>(dims_.size()); }
  std::int64_t extent(std::int64_t axis) const { return dims_[static_cast<std::size_t>(axis)]; }
  std::int64_t elements() const { return elements_; }
  const std::vector<std::int64_t>& dims() const { return dims_; }

  bool operator==(const Shape& other) const { return dims_ == other.dims_; }
  bool operator!=(const Shape& other) const { return !(*this == other); }

  std::string str() const { return str_of(dims_); }

 private:
  static std::string str_of(const std::vector<std::int64_t>& dims) {
    if (dims.empty()) return "scalar";
    std::string s;
    for (std::size_t i = 0; i < dims.size(); ++i) {
      if (i) s += 'x';
      s += std::to_string(dims[i]);
    }
    return s;
  }

  std::vector<std::int64_t> dims_;
  std::int64_t elements_ = 1;
};

// Dense n-dimensional array, row-major with the last dimension fastest.
template <typename T>
class TensorT {
 public:
  using value_type = T;

  TensorT() = default;

  explicit TensorT(Shape shape)
      : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_.elements()), T(0)) {}

  TensorT(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<std::int64_t>(data_.size()) != shape_.elements()) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_.str());
    }
  }

  static TensorT full(Shape shape, T value) {
    TensorT t(std::move(shape));
    for (auto& v : t.data_) v = value;
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::int64_t size() const { return shape_.elements(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  // (batch, feature) accessor for rank-2 tensors.
  T& at(std::int64_t n, std::int64_t f) {
    return data_[static_cast<std::size_t>(n * shape_.extent(1) + f)];
  }
  const T& at(std::int64_t n, std::int64_t f) const {
    return data_[static_cast<std::size_t>(n * shape_.extent(1) + f)];
  }

  // (batch, channel, row, col) accessor for rank-4 tensors.
  T& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
    return data_[static_cast<std::size_t>(
        ((n * shape_.extent(1) + c) * shape_.extent(2) + h) * shape_.extent(3) + w)];
  }
  const T& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return data_[static_cast<std::size_t>(
        ((n * shape_.extent(1) + c) * shape_.extent(2) + h) * shape_.extent(3) + w)];
  }

  // Same data, different shape. Element count must match.
  TensorT reshaped(Shape shape) const {
    if (shape.elements() != shape_.elements()) {
      throw DimensionError("cannot reshape " + shape_.str() + " to " + shape.str());
    }
    return TensorT(std::move(shape), data_);
  }

  void fill(T value) {
    for (auto& v : data_) v = value;
  }

  bool all_finite() const {
    for (T v : data_) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  bool operator==(const TensorT& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = TensorT<float>;

}  // namespace branchy
