#pragma once

#include <cmath>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "gmic/common.hpp"

namespace gmic {

// Dense n-dimensional array, row-major. T is float in normal runs and double
// in check precision (gradient verification only).
template <typename T>
struct TensorT {
  std::vector<i64> shape;
  std::vector<T> v;

  TensorT() = default;
  explicit TensorT(std::vector<i64> s) : shape(std::move(s)), v(size_t(numel_of(shape)), T(0)) {}
  TensorT(std::vector<i64> s, std::vector<T> data) : shape(std::move(s)), v(std::move(data)) {
    if (i64(v.size()) != numel_of(shape)) throw ShapeError("tensor data size does not match shape");
  }

  static i64 numel_of(const std::vector<i64>& s) {
    i64 n = 1;
    for (i64 d : s) {
      if (d <= 0) throw ShapeError("tensor dims must be positive");
      n *= d;
    }
    return n;
  }

  static TensorT zeros(std::vector<i64> s) { return TensorT(std::move(s)); }
  static TensorT full(std::vector<i64> s, T value) {
    TensorT t(std::move(s));
    std::fill(t.v.begin(), t.v.end(), value);
    return t;
  }
  static TensorT scalar(T value) { return TensorT({1}, {value}); }

  i64 numel() const { return i64(v.size()); }
  i64 rank() const { return i64(shape.size()); }
  i64 dim(i64 i) const { return shape[size_t(i)]; }

  T* data() { return v.data(); }
  const T* data() const { return v.data(); }

  T& operator[](i64 i) { return v[size_t(i)]; }
  const T& operator[](i64 i) const { return v[size_t(i)]; }

  // 4-D accessors for [N,C,H,W] tensors
  i64 at4(i64 n, i64 c, i64 y, i64 x) const {
    return ((n * shape[1] + c) * shape[2] + y) * shape[3] + x;
  }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (const T& x : v)
      if (!std::isfinite(double(x))) return false;
    return true;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
  }

  template <typename U>
  TensorT<U> cast() const {
    TensorT<U> out;
    out.shape = shape;
    out.v.resize(v.size());
    for (size_t i = 0; i < v.size(); ++i) out.v[i] = U(v[i]);
    return out;
  }
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

}  // namespace gmic
