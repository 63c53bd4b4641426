#pragma once

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "lgc3d/errors.hpp"

namespace lgc3d {

// Dense row-major n-d array; the last axis is fastest.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int64_t> shape, T fill = T(0)) : shape_(std::move(shape)) {
    int64_t n = 1;
    for (size_t i = 0; i < shape_.size(); ++i) {
      if (shape_[i] <= 0) throw ShapeError("axis " + std::to_string(i) + " must be positive, got " + std::to_string(shape_[i]));
      n *= shape_[i];
    }
    compute_strides();
    data_.assign(static_cast<size_t>(n), fill);
  }

  static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int64_t> shape, T v) { return Tensor(std::move(shape), v); }

  static Tensor from_data(std::vector<int64_t> shape, std::vector<T> data) {
    Tensor t(std::move(shape));
    if (static_cast<int64_t>(data.size()) != t.numel())
      throw ShapeError("data length " + std::to_string(data.size()) + " != product(shape) " + std::to_string(t.numel()));
    t.data_ = std::move(data);
    return t;
  }

  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  int rank() const { return static_cast<int>(shape_.size()); }
  const std::vector<int64_t>& shape() const { return shape_; }
  const std::vector<int64_t>& strides() const { return strides_; }
  int64_t dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& raw() { return data_; }
  const std::vector<T>& raw() const { return data_; }

  T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  template <typename... Ix>
  T& operator()(Ix... ix) {
    return data_[static_cast<size_t>(offset(ix...))];
  }
  template <typename... Ix>
  const T& operator()(Ix... ix) const {
    return data_[static_cast<size_t>(offset(ix...))];
  }

  template <typename... Ix>
  int64_t offset(Ix... ix) const {
    const int64_t idx[] = {static_cast<int64_t>(ix)...};
    int64_t off = 0;
    for (size_t k = 0; k < sizeof...(Ix); ++k) off += idx[k] * strides_[k];
    return off;
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor reshaped(std::vector<int64_t> new_shape) const {
    Tensor t(std::move(new_shape));
    if (t.numel() != numel()) throw ShapeError("reshape from " + shape_string(shape_) + " to " + shape_string(t.shape_));
    t.data_ = data_;
    return t;
  }

  static std::string shape_string(const std::vector<int64_t>& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
  }
  std::string shape_string() const { return shape_string(shape_); }

 private:
  void compute_strides() {
    strides_.assign(shape_.size(), 1);
    for (int i = static_cast<int>(shape_.size()) - 2; i >= 0; --i)
      strides_[static_cast<size_t>(i)] = strides_[static_cast<size_t>(i) + 1] * shape_[static_cast<size_t>(i) + 1];
  }

  std::vector<int64_t> shape_;
  std::vector<int64_t> strides_;
  std::vector<T> data_;
};

template <typename T>
inline const char* dtype_name() {
  return "unknown";
}
template <>
inline const char* dtype_name<float>() {
  return "f32";
}
template <>
inline const char* dtype_name<double>() {
  return "f64";
}

template <typename T>
inline void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* ctx) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(ctx) + ": " + a.shape_string() + " vs " + b.shape_string());
}

}  // namespace lgc3d
