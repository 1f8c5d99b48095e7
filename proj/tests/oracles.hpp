// Independent reference implementations the fast paths are tested against.
// Everything here is deliberately naive: direct loops straight from the
// definitions, no shared code with the library kernels.
#pragma once

#include <algorithm>
#include <vector>

#include "istd/metrics.hpp"
#include "istd/tensor.hpp"

namespace oracle {

// Plain nested-loop cross-correlation with zero padding.
template <typename T>
istd::Tensor4<T> conv2d_ref(const istd::Tensor4<T>& in,
                            const istd::Tensor4<T>& w,
                            const std::vector<T>& bias, int stride, int pad) {
  int oh = (in.h + 2 * pad - w.h) / stride + 1;
  int ow = (in.w + 2 * pad - w.w) / stride + 1;
  istd::Tensor4<T> out(in.n, w.n, oh, ow);
  for (int ni = 0; ni < in.n; ++ni)
    for (int oc = 0; oc < w.n; ++oc)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          T acc = bias[oc];
          for (int ic = 0; ic < in.c; ++ic)
            for (int ky = 0; ky < w.h; ++ky)
              for (int kx = 0; kx < w.w; ++kx) {
                int iy = oy * stride + ky - pad;
                int ix = ox * stride + kx - pad;
                if (iy < 0 || iy >= in.h || ix < 0 || ix >= in.w) continue;
                acc += w.at(oc, ic, ky, kx) * in.at(ni, ic, iy, ix);
              }
          out.at(ni, oc, oy, ox) = acc;
        }
  return out;
}

// Per-pixel window max/mean with replicate padding.
template <typename T>
istd::Tensor4<T> window_ref(const istd::Tensor4<T>& in, int k, bool want_max) {
  int r = k / 2;
  istd::Tensor4<T> out(in.n, in.c, in.h, in.w);
  for (int ni = 0; ni < in.n; ++ni)
    for (int ch = 0; ch < in.c; ++ch)
      for (int y = 0; y < in.h; ++y)
        for (int x = 0; x < in.w; ++x) {
          T best = in.at(ni, ch, std::clamp(y - r, 0, in.h - 1),
                         std::clamp(x - r, 0, in.w - 1));
          T sum = T(0);
          for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx) {
              T v = in.at(ni, ch, std::clamp(y + dy, 0, in.h - 1),
                          std::clamp(x + dx, 0, in.w - 1));
              best = std::max(best, v);
              sum += v;
            }
          out.at(ni, ch, y, x) = want_max ? best : sum / T(k * k);
        }
  return out;
}

// Residual prior straight from the definition.
template <typename T>
istd::Tensor4<T> hint_prior_ref(const istd::Tensor4<T>& img, int k) {
  istd::Tensor4<T> mean = window_ref(img, k, false);
  istd::Tensor4<T> mx = window_ref(img, k, true);
  istd::Tensor4<T> out(img.n, 2 * img.c, img.h, img.w);
  for (int ni = 0; ni < img.n; ++ni)
    for (int ch = 0; ch < img.c; ++ch)
      for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
          out.at(ni, 2 * ch, y, x) =
              img.at(ni, ch, y, x) - mean.at(ni, ch, y, x);
          out.at(ni, 2 * ch + 1, y, x) =
              img.at(ni, ch, y, x) - mx.at(ni, ch, y, x);
        }
  return out;
}

template <typename T>
istd::Matrix<T> matmul_ref(const istd::Matrix<T>& a, const istd::Matrix<T>& b) {
  istd::Matrix<T> c(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < b.cols; ++j) {
      T acc = T(0);
      for (int k = 0; k < a.cols; ++k) acc += a.at(i, k) * b.at(k, j);
      c.at(i, j) = acc;
    }
  return c;
}

// Recursive flood fill, 8-connected.
inline void flood(const istd::BinaryMask& m, std::vector<int32_t>& labels,
                  int y, int x, int id) {
  if (y < 0 || y >= m.h || x < 0 || x >= m.w) return;
  int64_t p = static_cast<int64_t>(y) * m.w + x;
  if (!m.v[p] || labels[p]) return;
  labels[p] = id;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx)
      if (dy || dx) flood(m, labels, y + dy, x + dx, id);
}

inline std::vector<int32_t> flood_fill_ref(const istd::BinaryMask& m) {
  std::vector<int32_t> labels(static_cast<size_t>(m.h) * m.w, 0);
  int id = 0;
  for (int y = 0; y < m.h; ++y)
    for (int x = 0; x < m.w; ++x)
      if (m.at(y, x) && !labels[static_cast<size_t>(y) * m.w + x])
        flood(m, labels, y, x, ++id);
  return labels;
}

struct MetricsRef {
  long long tp = 0, fp = 0, fn = 0, gp = 0;
  int detected = 0, total = 0;
};

// Pixel/component counting straight from the definitions.
inline MetricsRef metrics_ref(const istd::BinaryMask& pred,
                              const istd::BinaryMask& gt) {
  MetricsRef r;
  for (int y = 0; y < pred.h; ++y)
    for (int x = 0; x < pred.w; ++x) {
      bool p = pred.at(y, x), g = gt.at(y, x);
      r.tp += p && g;
      r.fp += p && !g;
      r.fn += !p && g;
    }
  r.gp = r.tp + r.fn;
  std::vector<int32_t> labels = flood_fill_ref(gt);
  int n_comps = 0;
  for (int32_t l : labels) n_comps = std::max(n_comps, l);
  r.total = n_comps;
  std::vector<char> hit(static_cast<size_t>(n_comps) + 1, 0);
  for (size_t i = 0; i < labels.size(); ++i)
    if (labels[i] && pred.v[i]) hit[labels[i]] = 1;
  for (int l = 1; l <= n_comps; ++l) r.detected += hit[l];
  return r;
}

}  // namespace oracle
