#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <type_traits>

#include "istd/simd.hpp"

namespace istd {

template <typename T>
inline T fast_exp(T x);

template <>
inline float fast_exp<float>(float x) {
  return expf_core(x);
}

// Gradient checks run in double and want library precision.
template <>
inline double fast_exp<double>(double x) {
  return std::exp(x);
}

// Sum with 8 fixed accumulator lanes: deterministic order, vectorizable
// without -ffast-math.
template <typename T>
inline T sum_lanes(const T* p, int64_t len) {
  T acc[8] = {T(0), T(0), T(0), T(0), T(0), T(0), T(0), T(0)};
  int64_t i = 0;
  for (; i + 8 <= len; i += 8)
    for (int l = 0; l < 8; ++l) acc[l] += p[i + l];
  T s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) +
        ((acc[2] + acc[6]) + (acc[3] + acc[7]));
  for (; i < len; ++i) s += p[i];
  return s;
}

// Dot product, same lane scheme.
template <typename T>
inline T dot_lanes(const T* a, const T* b, int64_t len) {
  T acc[8] = {T(0), T(0), T(0), T(0), T(0), T(0), T(0), T(0)};
  int64_t i = 0;
  for (; i + 8 <= len; i += 8)
    for (int l = 0; l < 8; ++l) acc[l] += a[i + l] * b[i + l];
  T s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) +
        ((acc[2] + acc[6]) + (acc[3] + acc[7]));
  for (; i < len; ++i) s += a[i] * b[i];
  return s;
}

// Max is associative, so lane order does not matter; inputs are finite.
template <typename T>
inline T max_of(const T* p, int64_t len) {
  if (len >= 8) {
    T acc[8];
    for (int l = 0; l < 8; ++l) acc[l] = p[l];
    int64_t i = 8;
    for (; i + 8 <= len; i += 8)
      for (int l = 0; l < 8; ++l) acc[l] = std::max(acc[l], p[i + l]);
    T m = std::max(std::max(std::max(acc[0], acc[1]), std::max(acc[2], acc[3])),
                   std::max(std::max(acc[4], acc[5]), std::max(acc[6], acc[7])));
    for (; i < len; ++i) m = std::max(m, p[i]);
    return m;
  }
  T m = p[0];
  for (int64_t i = 1; i < len; ++i) m = std::max(m, p[i]);
  return m;
}

// y += a * x
template <typename T>
inline void axpy(T a, const T* x, T* y, int64_t len) {
  for (int64_t i = 0; i < len; ++i) y[i] += a * x[i];
}

namespace detail {

#ifdef ISTD_VEC8
// Narrow float output held in v8f register accumulators; four accumulators
// per column block break the FMA latency chain.
template <int R>
void gemm_nn_narrow_f(const float* a, const float* b, float* c, int p, int q,
                      float scale, bool accumulate) {
  static_assert(R == 8 || R == 16);
  constexpr int NB = R / 8;
  for (int i = 0; i < p; ++i) {
    v8f acc0[NB], acc1[NB], acc2[NB], acc3[NB];
    float* crow = c + static_cast<int64_t>(i) * R;
    for (int v = 0; v < NB; ++v) {
      acc0[v] = accumulate ? v8_load(crow + 8 * v) : v8_set1(0.0f);
      acc1[v] = v8_set1(0.0f);
      acc2[v] = v8_set1(0.0f);
      acc3[v] = v8_set1(0.0f);
    }
    const float* arow = a + static_cast<int64_t>(i) * q;
    int k = 0;
    for (; k + 4 <= q; k += 4) {
      const float* b0 = b + static_cast<int64_t>(k) * R;
      v8f v0 = v8_set1(arow[k] * scale), v1 = v8_set1(arow[k + 1] * scale);
      v8f v2 = v8_set1(arow[k + 2] * scale), v3 = v8_set1(arow[k + 3] * scale);
      for (int v = 0; v < NB; ++v) {
        acc0[v] += v0 * v8_load(b0 + 8 * v);
        acc1[v] += v1 * v8_load(b0 + R + 8 * v);
        acc2[v] += v2 * v8_load(b0 + 2 * R + 8 * v);
        acc3[v] += v3 * v8_load(b0 + 3 * R + 8 * v);
      }
    }
    for (; k < q; ++k) {
      v8f av = v8_set1(arow[k] * scale);
      const float* brow = b + static_cast<int64_t>(k) * R;
      for (int v = 0; v < NB; ++v) acc0[v] += av * v8_load(brow + 8 * v);
    }
    for (int v = 0; v < NB; ++v)
      v8_store(crow + 8 * v, (acc0[v] + acc2[v]) + (acc1[v] + acc3[v]));
  }
}
#endif

}  // namespace detail

// C (p x r) = scale * A (p x q) * B (q x r); accumulate adds into C instead
// of overwriting. k-outer row updates keep all inner loops unit-stride.
template <typename T>
void gemm_nn(const T* __restrict a, const T* __restrict b, T* __restrict c,
             int p, int q, int r, T scale, bool accumulate) {
#ifdef ISTD_VEC8
  if constexpr (std::is_same_v<T, float>) {
    if (r == 8)
      return detail::gemm_nn_narrow_f<8>(a, b, c, p, q, scale, accumulate);
    if (r == 16)
      return detail::gemm_nn_narrow_f<16>(a, b, c, p, q, scale, accumulate);
  }
#endif
  for (int i = 0; i < p; ++i) {
    T* crow = c + static_cast<int64_t>(i) * r;
    if (!accumulate)
      for (int j = 0; j < r; ++j) crow[j] = T(0);
    const T* arow = a + static_cast<int64_t>(i) * q;
    for (int k = 0; k < q; ++k) {
      T av = arow[k] * scale;
      const T* brow = b + static_cast<int64_t>(k) * r;
      for (int j = 0; j < r; ++j) crow[j] += av * brow[j];
    }
  }
}

// C (q x r) += scale * A^T * B with A (p x q), B (p x r). Processes four A
// rows per pass so each C row store amortizes over four FMAs.
template <typename T>
void gemm_tn_acc(const T* __restrict a, const T* __restrict b,
                 T* __restrict c, int p, int q, int r, T scale) {
  int i = 0;
  for (; i + 4 <= p; i += 4) {
    const T* a0 = a + static_cast<int64_t>(i) * q;
    const T* a1 = a0 + q;
    const T* a2 = a1 + q;
    const T* a3 = a2 + q;
    const T* b0 = b + static_cast<int64_t>(i) * r;
    const T* b1 = b0 + r;
    const T* b2 = b1 + r;
    const T* b3 = b2 + r;
    for (int k = 0; k < q; ++k) {
      T* crow = c + static_cast<int64_t>(k) * r;
      T v0 = a0[k] * scale, v1 = a1[k] * scale, v2 = a2[k] * scale,
        v3 = a3[k] * scale;
      for (int j = 0; j < r; ++j)
        crow[j] += (v0 * b0[j] + v1 * b1[j]) + (v2 * b2[j] + v3 * b3[j]);
    }
  }
  for (; i < p; ++i) {
    const T* arow = a + static_cast<int64_t>(i) * q;
    const T* brow = b + static_cast<int64_t>(i) * r;
    for (int k = 0; k < q; ++k) {
      T av = arow[k] * scale;
      T* crow = c + static_cast<int64_t>(k) * r;
      for (int j = 0; j < r; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void transpose(const T* src, int rows, int cols, T* dst) {
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      dst[static_cast<int64_t>(j) * rows + i] =
          src[static_cast<int64_t>(i) * cols + j];
}

}  // namespace istd
