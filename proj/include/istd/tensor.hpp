#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "istd/errors.hpp"

namespace istd {

// Dense rank-4 array in (n, c, h, w) row-major layout. The one value type
// used for images, feature maps, parameters and gradients. float for
// compute, double for gradient checks.
template <typename T>
struct Tensor4 {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> v;

  Tensor4() = default;
  Tensor4(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_),
        v(static_cast<size_t>(n_) * c_ * h_ * w_, T(0)) {
    if (n_ < 0 || c_ < 0 || h_ < 0 || w_ < 0)
      throw ValueError("Tensor4: negative dimension in " + dims_str());
  }

  static Tensor4 full(int n_, int c_, int h_, int w_, T value) {
    Tensor4 t(n_, c_, h_, w_);
    t.fill(value);
    return t;
  }

  size_t size() const { return v.size(); }
  bool empty() const { return v.empty(); }

  T* data() { return v.data(); }
  const T* data() const { return v.data(); }

  T& at(int i, int j, int y, int x) {
    return v[((static_cast<size_t>(i) * c + j) * h + y) * w + x];
  }
  const T& at(int i, int j, int y, int x) const {
    return v[((static_cast<size_t>(i) * c + j) * h + y) * w + x];
  }

  // Pointer to the (i, j) spatial plane of h*w values.
  T* plane(int i, int j) {
    return v.data() + (static_cast<size_t>(i) * c + j) * h * w;
  }
  const T* plane(int i, int j) const {
    return v.data() + (static_cast<size_t>(i) * c + j) * h * w;
  }

  bool same_dims(const Tensor4& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }

  void fill(T value) {
    for (auto& x : v) x = value;
  }

  void zero() { fill(T(0)); }

  bool all_finite() const {
    for (T x : v)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }

  std::string dims_str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }

  template <typename U>
  Tensor4<U> cast() const {
    Tensor4<U> out(n, c, h, w);
    for (size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
    return out;
  }
};

using Tensor4f = Tensor4<float>;
using Tensor4d = Tensor4<double>;

// Row-major matrix used by the attention path and the matrix-level ops.
template <typename T>
struct Matrix {
  int rows = 0, cols = 0;
  std::vector<T> v;

  Matrix() = default;
  Matrix(int r, int c)
      : rows(r), cols(c), v(static_cast<size_t>(r) * c, T(0)) {}

  T* row(int i) { return v.data() + static_cast<size_t>(i) * cols; }
  const T* row(int i) const { return v.data() + static_cast<size_t>(i) * cols; }
  T& at(int i, int j) { return v[static_cast<size_t>(i) * cols + j]; }
  const T& at(int i, int j) const {
    return v[static_cast<size_t>(i) * cols + j];
  }
};

// Debug tensor dump: magic "TSR1", u32 LE rank, u32 LE dims, raw f32 LE data.
void write_tsr(const std::string& path, const Tensor4f& t);
Tensor4f read_tsr(const std::string& path);

}  // namespace istd
