#pragma once

#include <cstdint>
#include <cstring>

namespace istd {

// 8-wide float kernels via GCC/Clang vector extensions. Scalar tails use
// the identical arithmetic, so array results do not depend on how the work
// splits between the vector body and the tail.

#if defined(__GNUC__) || defined(__clang__)
#define ISTD_VEC8 1
typedef float v8f __attribute__((vector_size(32)));
typedef int32_t v8i __attribute__((vector_size(32)));

inline v8f v8_load(const float* p) {
  v8f r;
  std::memcpy(&r, p, sizeof(r));
  return r;
}

inline void v8_store(float* p, v8f x) { std::memcpy(p, &x, sizeof(x)); }

inline v8f v8_set1(float x) { return v8f{x, x, x, x, x, x, x, x}; }
#endif

// exp core shared by the scalar and vector paths: clamp, round to nearest
// via the 1.5*2^23 magic constant, Cody-Waite reduction, degree-5
// polynomial, exponent splice. Relative error ~2e-7 on the clamped range.
inline float expf_core(float x) {
  x = x < -87.0f ? -87.0f : (x > 88.0f ? 88.0f : x);
  float t = x * 1.44269504088896341f + 12582912.0f;
  float n = t - 12582912.0f;
  x -= n * 0.693359375f;
  x += n * 2.12194440e-4f;
  float p = 1.9875691500e-4f;
  p = p * x + 1.3981999507e-3f;
  p = p * x + 8.3334519073e-3f;
  p = p * x + 4.1665795894e-2f;
  p = p * x + 1.6666665459e-1f;
  p = p * x + 5.0000001201e-1f;
  p = p * x * x + x + 1.0f;
  int32_t e = static_cast<int32_t>(n);
  uint32_t bits = static_cast<uint32_t>(e + 127) << 23;
  float s;
  std::memcpy(&s, &bits, 4);
  return p * s;
}

#ifdef ISTD_VEC8
inline v8f v8_exp(v8f x) {
  const v8f lo = v8_set1(-87.0f), hi = v8_set1(88.0f);
  x = x < lo ? lo : x;
  x = x > hi ? hi : x;
  const v8f magic = v8_set1(12582912.0f);
  v8f t = x * v8_set1(1.44269504088896341f) + magic;
  v8f n = t - magic;
  x -= n * v8_set1(0.693359375f);
  x += n * v8_set1(2.12194440e-4f);
  v8f p = v8_set1(1.9875691500e-4f);
  p = p * x + v8_set1(1.3981999507e-3f);
  p = p * x + v8_set1(8.3334519073e-3f);
  p = p * x + v8_set1(4.1665795894e-2f);
  p = p * x + v8_set1(1.6666665459e-1f);
  p = p * x + v8_set1(5.0000001201e-1f);
  p = p * x * x + x + v8_set1(1.0f);
  v8i e = __builtin_convertvector(n, v8i);
  v8i bits = (e + 127) << 23;
  v8f s;
  std::memcpy(&s, &bits, sizeof(s));
  return p * s;
}
#endif

// y[i] = exp(x[i]) elementwise; x and y may alias exactly.
inline void vec_exp(const float* x, float* y, int64_t len) {
  int64_t i = 0;
#ifdef ISTD_VEC8
  for (; i + 8 <= len; i += 8) v8_store(y + i, v8_exp(v8_load(x + i)));
#endif
  for (; i < len; ++i) y[i] = expf_core(x[i]);
}

// y[i] = exp(x[i] - shift), fused for the softmax hot path.
inline void vec_exp_shift(const float* x, float* y, float shift,
                          int64_t len) {
  int64_t i = 0;
#ifdef ISTD_VEC8
  const v8f sh = v8_set1(shift);
  for (; i + 8 <= len; i += 8) v8_store(y + i, v8_exp(v8_load(x + i) - sh));
#endif
  for (; i < len; ++i) y[i] = expf_core(x[i] - shift);
}

inline void vec_scale(float* x, float s, int64_t len) {
  for (int64_t i = 0; i < len; ++i) x[i] *= s;
}

}  // namespace istd
