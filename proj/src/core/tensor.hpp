#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "core/error.hpp"

namespace stnet {

// Dense row-major tensor. Shape is a small vector of extents; layout for
// feature maps is NCHW throughout.
template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(static_cast<size_t>(numel_of(shape))) {}
  Tensor(std::vector<int> s, T fill)
      : shape(std::move(s)), data(static_cast<size_t>(numel_of(shape)), fill) {}

  static int64_t numel_of(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  T& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  // NCHW addressing
  int64_t idx4(int n, int c, int h, int w) const {
    return ((static_cast<int64_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w;
  }
  T& at4(int n, int c, int h, int w) { return data[static_cast<size_t>(idx4(n, c, h, w))]; }
  const T& at4(int n, int c, int h, int w) const { return data[static_cast<size_t>(idx4(n, c, h, w))]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  void zero() { std::fill(data.begin(), data.end(), T(0)); }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int> s, T v) { return Tensor(std::move(s), v); }
};

template <typename T>
bool all_finite(const Tensor<T>& t) {
  for (const T& v : t.data)
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

inline std::string shape_str(const std::vector<int>& s) {
  std::string out = "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (!a.same_shape(b))
    data_error(std::string(what) + ": shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
}

}  // namespace stnet
