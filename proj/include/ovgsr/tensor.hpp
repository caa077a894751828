#pragma once

#include <cstdint>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ovgsr/errors.hpp"

namespace ovgsr {

// Dense row-major tensor. Storage is shared between copies; the
// convention throughout the library is that tensors produced by ops are
// immutable, so shallow copies (including reshapes) are safe. Code that
// mutates in place (parameter updates, gradient accumulation) must own
// its tensor, i.e. have created it rather than copied it from elsewhere.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::int64_t> shape)
      : shape_(std::move(shape)), numel_(count(shape_)) {
    data_ = std::shared_ptr<T[]>(new T[numel_]());
  }

  static Tensor zeros(std::vector<std::int64_t> shape) {
    return Tensor(std::move(shape));
  }

  static Tensor full(std::vector<std::int64_t> shape, T v) {
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel_; ++i) t.data_[i] = v;
    return t;
  }

  static Tensor scalar(T v) { return full({1}, v); }

  static Tensor from(std::vector<std::int64_t> shape, std::vector<T> values) {
    Tensor t(std::move(shape));
    if (static_cast<std::int64_t>(values.size()) != t.numel_)
      throw ShapeMismatch("Tensor::from: value count does not match shape");
    std::copy(values.begin(), values.end(), t.data_.get());
    return t;
  }

  bool defined() const { return data_ != nullptr; }
  std::int64_t numel() const { return numel_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  const std::vector<std::int64_t>& shape() const { return shape_; }
  std::int64_t dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }

  T* data() { return data_.get(); }
  const T* data() const { return data_.get(); }

  T& at(std::int64_t i) { return data_[i]; }
  T at(std::int64_t i) const { return data_[i]; }

  // 2D accessors; first dimension is rows.
  std::int64_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::int64_t cols() const {
    return shape_.empty() ? 0 : numel_ / shape_[0];
  }
  T& at(std::int64_t r, std::int64_t c) { return data_[r * cols() + c]; }
  T at(std::int64_t r, std::int64_t c) const { return data_[r * cols() + c]; }

  // Shares storage; only the shape changes.
  Tensor reshaped(std::vector<std::int64_t> shape) const {
    if (count(shape) != numel_)
      throw ShapeMismatch("reshape: element count mismatch");
    Tensor t;
    t.shape_ = std::move(shape);
    t.numel_ = numel_;
    t.data_ = data_;
    return t;
  }

  Tensor copy() const {
    Tensor t(shape_);
    std::copy(data_.get(), data_.get() + numel_, t.data());
    return t;
  }

  void fill(T v) {
    for (std::int64_t i = 0; i < numel_; ++i) data_[i] = v;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape_.size(); ++i)
      os << (i ? "," : "") << shape_[i];
    os << "]";
    return os.str();
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> t(shape_);
    for (std::int64_t i = 0; i < numel_; ++i)
      t.data()[i] = static_cast<U>(data_[i]);
    return t;
  }

 private:
  template <typename>
  friend class Tensor;

  static std::int64_t count(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (auto d : shape) {
      if (d < 0) throw ShapeMismatch("negative dimension");
      n *= d;
    }
    return n;
  }

  std::vector<std::int64_t> shape_;
  std::int64_t numel_ = 0;
  std::shared_ptr<T[]> data_;
};

// Normal(0, std^2) samples from a caller-owned generator.
template <typename T>
Tensor<T> randn(std::vector<std::int64_t> shape, std::mt19937_64& rng, T stddev) {
  Tensor<T> t(std::move(shape));
  std::normal_distribution<double> d(0.0, static_cast<double>(stddev));
  for (std::int64_t i = 0; i < t.numel(); ++i)
    t.data()[i] = static_cast<T>(d(rng));
  return t;
}

template <typename T>
Tensor<T> rand_uniform(std::vector<std::int64_t> shape, std::mt19937_64& rng,
                       T lo, T hi) {
  Tensor<T> t(std::move(shape));
  std::uniform_real_distribution<double> d(static_cast<double>(lo),
                                           static_cast<double>(hi));
  for (std::int64_t i = 0; i < t.numel(); ++i)
    t.data()[i] = static_cast<T>(d(rng));
  return t;
}

}  // namespace ovgsr
