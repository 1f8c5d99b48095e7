#include "istd/layers.hpp"

#include <algorithm>
#include <cmath>

#include "istd/mathkit.hpp"
#include "istd/parallel.hpp"
#include "istd/simd.hpp"

namespace istd {

// ---------------------------------------------------------------- ParamStore

template <typename T>
void ParamStore<T>::add_param(const std::string& name, Tensor4<T>* value,
                              Tensor4<T>* grad) {
  if (seen_.count(name))
    throw ValueError("ParamStore: duplicate name '" + name + "'");
  if (!value->same_dims(*grad))
    throw ValueError("ParamStore: param/grad dims differ for '" + name +
                     "': " + value->dims_str() + " vs " + grad->dims_str());
  seen_[name] = 1;
  params.push_back({name, value, grad});
}

template <typename T>
void ParamStore<T>::add_buffer(const std::string& name, Tensor4<T>* value) {
  if (seen_.count(name))
    throw ValueError("ParamStore: duplicate name '" + name + "'");
  seen_[name] = 1;
  buffers.push_back({name, value, nullptr});
}

template <typename T>
const typename ParamStore<T>::Slot* ParamStore<T>::find(
    const std::string& name) const {
  for (const auto& s : params)
    if (s.name == name) return &s;
  for (const auto& s : buffers)
    if (s.name == name) return &s;
  return nullptr;
}

template <typename T>
void ParamStore<T>::zero_grads() {
  for (auto& s : params) s.grad->zero();
}

template <typename T>
int64_t ParamStore<T>::param_count() const {
  int64_t total = 0;
  for (const auto& s : params) total += static_cast<int64_t>(s.value->size());
  return total;
}

// -------------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(int in_ch, int out_ch, int k, int stride, int pad)
    : ic_(in_ch), oc_(out_ch), k_(k), stride_(stride), pad_(pad) {
  if (in_ch < 1 || out_ch < 1 || k < 1)
    throw ValueError("conv2d: bad channel/kernel config");
  if (stride != 1 && stride != 2)
    throw ValueError("conv2d: stride must be 1 or 2, got " +
                     std::to_string(stride));
  if (pad < 0) throw ValueError("conv2d: negative padding");
  weight = Tensor4<T>(oc_, ic_, k_, k_);
  wgrad = Tensor4<T>(oc_, ic_, k_, k_);
  bias = Tensor4<T>(1, oc_, 1, 1);
  bgrad = Tensor4<T>(1, oc_, 1, 1);
}

template <typename T>
void Conv2d<T>::init_he(Pcg32& rng) {
  double fan_in = static_cast<double>(ic_) * k_ * k_;
  double stddev = std::sqrt(2.0 / fan_in);
  for (auto& x : weight.v) x = static_cast<T>(stddev * rng.normal());
  bias.zero();
}

template <typename T>
void Conv2d<T>::register_into(ParamStore<T>& ps, const std::string& prefix) {
  ps.add_param(prefix + ".weight", &weight, &wgrad);
  ps.add_param(prefix + ".bias", &bias, &bgrad);
}

template <typename T>
Tensor4<T> Conv2d<T>::forward(const Tensor4<T>& x) {
  if (x.c != ic_)
    throw ValueError("conv2d: input has " + std::to_string(x.c) +
                     " channels, weight expects " + std::to_string(ic_));
  int oh = (x.h + 2 * pad_ - k_) / stride_ + 1;
  int ow = (x.w + 2 * pad_ - k_) / stride_ + 1;
  if (x.h + 2 * pad_ < k_ || x.w + 2 * pad_ < k_ || oh < 1 || ow < 1)
    throw ValueError("conv2d: input " + x.dims_str() + " too small for k=" +
                     std::to_string(k_) + " pad=" + std::to_string(pad_));
  x_ = x;
  has_cache_ = true;

  Tensor4<T> out(x.n, oc_, oh, ow);
  parallel_for(static_cast<int64_t>(x.n) * oc_, [&](int64_t idx) {
    int ni = static_cast<int>(idx / oc_);
    int oc = static_cast<int>(idx % oc_);
    T* op = out.plane(ni, oc);
    T b = bias.v[oc];
    for (int64_t i = 0; i < static_cast<int64_t>(oh) * ow; ++i) op[i] = b;
    for (int ic = 0; ic < ic_; ++ic) {
      const T* ip = x.plane(ni, ic);
      const T* wp = weight.plane(oc, ic);
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx) {
          T wv = wp[ky * k_ + kx];
          // output rows/cols whose source lies inside the image
          int oy_lo = std::max(0, (pad_ - ky + stride_ - 1) / stride_);
          int oy_hi = std::min(oh, (x.h - 1 + pad_ - ky) / stride_ + 1);
          int ox_lo = std::max(0, (pad_ - kx + stride_ - 1) / stride_);
          int ox_hi = std::min(ow, (x.w - 1 + pad_ - kx) / stride_ + 1);
          for (int oy = oy_lo; oy < oy_hi; ++oy) {
            int iy = oy * stride_ + ky - pad_;
            const T* irow = ip + static_cast<int64_t>(iy) * x.w;
            T* orow = op + static_cast<int64_t>(oy) * ow;
            if (stride_ == 1) {
              const T* is = irow + (ox_lo + kx - pad_);
              for (int ox = ox_lo; ox < ox_hi; ++ox)
                orow[ox] += wv * is[ox - ox_lo];
            } else {
              for (int ox = ox_lo; ox < ox_hi; ++ox)
                orow[ox] += wv * irow[ox * 2 + kx - pad_];
            }
          }
        }
      }
    }
  });
  return out;
}

template <typename T>
Tensor4<T> Conv2d<T>::backward(const Tensor4<T>& gy) {
  if (!has_cache_) throw ValueError("conv2d: backward before forward");
  const Tensor4<T>& x = x_;
  int oh = gy.h, ow = gy.w;

  // d(bias)
  for (int oc = 0; oc < oc_; ++oc) {
    T s = T(0);
    for (int ni = 0; ni < x.n; ++ni)
      s += sum_lanes(gy.plane(ni, oc), static_cast<int64_t>(oh) * ow);
    bgrad.v[oc] += s;
  }

  // d(weight): per-(oc, ic) plane, rows reduce with dot products
  parallel_for(static_cast<int64_t>(oc_) * ic_, [&](int64_t idx) {
    int oc = static_cast<int>(idx / ic_);
    int ic = static_cast<int>(idx % ic_);
    T* wg = wgrad.plane(oc, ic);
    for (int ky = 0; ky < k_; ++ky) {
      for (int kx = 0; kx < k_; ++kx) {
        int oy_lo = std::max(0, (pad_ - ky + stride_ - 1) / stride_);
        int oy_hi = std::min(oh, (x.h - 1 + pad_ - ky) / stride_ + 1);
        int ox_lo = std::max(0, (pad_ - kx + stride_ - 1) / stride_);
        int ox_hi = std::min(ow, (x.w - 1 + pad_ - kx) / stride_ + 1);
        T s = T(0);
        for (int ni = 0; ni < x.n; ++ni) {
          const T* ip = x.plane(ni, ic);
          const T* gp = gy.plane(ni, oc);
          for (int oy = oy_lo; oy < oy_hi; ++oy) {
            int iy = oy * stride_ + ky - pad_;
            const T* grow = gp + static_cast<int64_t>(oy) * ow + ox_lo;
            if (stride_ == 1) {
              const T* irow =
                  ip + static_cast<int64_t>(iy) * x.w + (ox_lo + kx - pad_);
              s += dot_lanes(grow, irow, ox_hi - ox_lo);
            } else {
              const T* irow = ip + static_cast<int64_t>(iy) * x.w;
              for (int ox = ox_lo; ox < ox_hi; ++ox)
                s += grow[ox - ox_lo] * irow[ox * 2 + kx - pad_];
            }
          }
        }
        wg[ky * k_ + kx] += s;
      }
    }
  });

  // d(input)
  Tensor4<T> gx(x.n, ic_, x.h, x.w);
  parallel_for(static_cast<int64_t>(x.n) * ic_, [&](int64_t idx) {
    int ni = static_cast<int>(idx / ic_);
    int ic = static_cast<int>(idx % ic_);
    T* gxp = gx.plane(ni, ic);
    for (int oc = 0; oc < oc_; ++oc) {
      const T* gp = gy.plane(ni, oc);
      const T* wp = weight.plane(oc, ic);
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx) {
          T wv = wp[ky * k_ + kx];
          int oy_lo = std::max(0, (pad_ - ky + stride_ - 1) / stride_);
          int oy_hi = std::min(oh, (x.h - 1 + pad_ - ky) / stride_ + 1);
          int ox_lo = std::max(0, (pad_ - kx + stride_ - 1) / stride_);
          int ox_hi = std::min(ow, (x.w - 1 + pad_ - kx) / stride_ + 1);
          for (int oy = oy_lo; oy < oy_hi; ++oy) {
            int iy = oy * stride_ + ky - pad_;
            T* gxrow = gxp + static_cast<int64_t>(iy) * x.w;
            const T* grow = gp + static_cast<int64_t>(oy) * ow;
            if (stride_ == 1) {
              T* gs = gxrow + (ox_lo + kx - pad_);
              for (int ox = ox_lo; ox < ox_hi; ++ox)
                gs[ox - ox_lo] += wv * grow[ox];
            } else {
              for (int ox = ox_lo; ox < ox_hi; ++ox)
                gxrow[ox * 2 + kx - pad_] += wv * grow[ox];
            }
          }
        }
      }
    }
  });
  return gx;
}

// ----------------------------------------------------------------- BatchNorm

template <typename T>
BatchNorm<T>::BatchNorm(int channels, T eps, T momentum)
    : c_(channels), eps_(eps), momentum_(momentum) {
  gamma = Tensor4<T>::full(1, c_, 1, 1, T(1));
  ggrad = Tensor4<T>(1, c_, 1, 1);
  beta = Tensor4<T>(1, c_, 1, 1);
  bgrad = Tensor4<T>(1, c_, 1, 1);
  running_mean = Tensor4<T>(1, c_, 1, 1);
  running_var = Tensor4<T>::full(1, c_, 1, 1, T(1));
}

template <typename T>
void BatchNorm<T>::register_into(ParamStore<T>& ps, const std::string& prefix) {
  ps.add_param(prefix + ".gamma", &gamma, &ggrad);
  ps.add_param(prefix + ".beta", &beta, &bgrad);
  ps.add_buffer(prefix + ".running_mean", &running_mean);
  ps.add_buffer(prefix + ".running_var", &running_var);
}

template <typename T>
Tensor4<T> BatchNorm<T>::forward(const Tensor4<T>& x, Mode mode) {
  if (x.c != c_)
    throw ValueError("batch_norm: input has " + std::to_string(x.c) +
                     " channels, expected " + std::to_string(c_));
  int64_t plane = static_cast<int64_t>(x.h) * x.w;
  int64_t m = static_cast<int64_t>(x.n) * plane;
  mode_ = mode;
  xhat_ = Tensor4<T>(x.n, x.c, x.h, x.w);
  inv_std_.assign(c_, T(0));
  Tensor4<T> out(x.n, x.c, x.h, x.w);

  if (mode == Mode::kTrain) {
    if (m < 2)
      throw ValueError(
          "batch_norm: train mode needs n*h*w >= 2 per channel (variance is "
          "degenerate with a single element), got n*h*w = " +
          std::to_string(m));
    for (int ch = 0; ch < c_; ++ch) {
      T sum = T(0), sumsq = T(0);
      for (int ni = 0; ni < x.n; ++ni) {
        const T* p = x.plane(ni, ch);
        sum += sum_lanes(p, plane);
        sumsq += dot_lanes(p, p, plane);
      }
      T mean = sum / static_cast<T>(m);
      T var = sumsq / static_cast<T>(m) - mean * mean;
      if (var < T(0)) var = T(0);  // rounding guard
      T inv = T(1) / std::sqrt(var + eps_);
      inv_std_[ch] = inv;
      T g = gamma.v[ch], b = beta.v[ch];
      for (int ni = 0; ni < x.n; ++ni) {
        const T* p = x.plane(ni, ch);
        T* xh = xhat_.plane(ni, ch);
        T* op = out.plane(ni, ch);
        for (int64_t i = 0; i < plane; ++i) {
          T v = (p[i] - mean) * inv;
          xh[i] = v;
          op[i] = g * v + b;
        }
      }
      T unbiased = m > 1 ? var * static_cast<T>(m) / static_cast<T>(m - 1)
                         : var;
      running_mean.v[ch] =
          (T(1) - momentum_) * running_mean.v[ch] + momentum_ * mean;
      running_var.v[ch] =
          (T(1) - momentum_) * running_var.v[ch] + momentum_ * unbiased;
    }
  } else {
    for (int ch = 0; ch < c_; ++ch) {
      T inv = T(1) / std::sqrt(running_var.v[ch] + eps_);
      inv_std_[ch] = inv;
      T mean = running_mean.v[ch];
      T g = gamma.v[ch], b = beta.v[ch];
      for (int ni = 0; ni < x.n; ++ni) {
        const T* p = x.plane(ni, ch);
        T* xh = xhat_.plane(ni, ch);
        T* op = out.plane(ni, ch);
        for (int64_t i = 0; i < plane; ++i) {
          T v = (p[i] - mean) * inv;
          xh[i] = v;
          op[i] = g * v + b;
        }
      }
    }
  }
  has_cache_ = true;
  return out;
}

template <typename T>
Tensor4<T> BatchNorm<T>::backward(const Tensor4<T>& gy) {
  if (!has_cache_) throw ValueError("batch_norm: backward before forward");
  if (!gy.same_dims(xhat_))
    throw ValueError("batch_norm: gradient dims " + gy.dims_str() +
                     " do not match forward dims " + xhat_.dims_str());
  int64_t plane = static_cast<int64_t>(gy.h) * gy.w;
  int64_t m = static_cast<int64_t>(gy.n) * plane;
  Tensor4<T> gx(gy.n, gy.c, gy.h, gy.w);

  for (int ch = 0; ch < c_; ++ch) {
    T sum_gy = T(0), sum_gy_xhat = T(0);
    for (int ni = 0; ni < gy.n; ++ni) {
      const T* g = gy.plane(ni, ch);
      const T* xh = xhat_.plane(ni, ch);
      sum_gy += sum_lanes(g, plane);
      sum_gy_xhat += dot_lanes(g, xh, plane);
    }
    ggrad.v[ch] += sum_gy_xhat;
    bgrad.v[ch] += sum_gy;
    T g = gamma.v[ch], inv = inv_std_[ch];
    if (mode_ == Mode::kTrain) {
      T k1 = g * inv / static_cast<T>(m);
      for (int ni = 0; ni < gy.n; ++ni) {
        const T* gp = gy.plane(ni, ch);
        const T* xh = xhat_.plane(ni, ch);
        T* gxp = gx.plane(ni, ch);
        for (int64_t i = 0; i < plane; ++i)
          gxp[i] = k1 * (static_cast<T>(m) * gp[i] - sum_gy -
                         xh[i] * sum_gy_xhat);
      }
    } else {
      T k = g * inv;
      for (int ni = 0; ni < gy.n; ++ni) {
        const T* gp = gy.plane(ni, ch);
        T* gxp = gx.plane(ni, ch);
        for (int64_t i = 0; i < plane; ++i) gxp[i] = k * gp[i];
      }
    }
  }
  return gx;
}

// ---------------------------------------------------------------- Activation

template <typename T>
Tensor4<T> Activation<T>::forward(const Tensor4<T>& x) {
  Tensor4<T> out(x.n, x.c, x.h, x.w);
  if (kind_ == Act::kRelu) {
    for (size_t i = 0; i < x.v.size(); ++i)
      out.v[i] = x.v[i] > T(0) ? x.v[i] : T(0);
  } else {
    for (size_t i = 0; i < x.v.size(); ++i) {
      T xv = x.v[i];
      T e = fast_exp<T>(xv >= T(0) ? -xv : xv);
      out.v[i] = xv >= T(0) ? T(1) / (T(1) + e) : e / (T(1) + e);
    }
  }
  y_ = out;
  has_cache_ = true;
  return out;
}

template <typename T>
Tensor4<T> Activation<T>::backward(const Tensor4<T>& gy) {
  if (!has_cache_) throw ValueError("activation: backward before forward");
  Tensor4<T> gx(gy.n, gy.c, gy.h, gy.w);
  if (kind_ == Act::kRelu) {
    for (size_t i = 0; i < gy.v.size(); ++i)
      gx.v[i] = y_.v[i] > T(0) ? gy.v[i] : T(0);
  } else {
    for (size_t i = 0; i < gy.v.size(); ++i)
      gx.v[i] = gy.v[i] * y_.v[i] * (T(1) - y_.v[i]);
  }
  return gx;
}

// ---------------------------------------------------------------- WindowStat

template <typename T>
WindowStat<T>::WindowStat(int k, WindowKind kind) : k_(k), kind_(kind) {
  if (k < 3 || k % 2 == 0)
    throw ValueError("window_stat: k must be odd and >= 3, got " +
                     std::to_string(k));
}

template <typename T>
Tensor4<T> WindowStat<T>::forward(const Tensor4<T>& x) {
  n_ = x.n;
  c_ = x.c;
  h_ = x.h;
  w_ = x.w;
  int r = k_ / 2;
  Tensor4<T> out(x.n, x.c, x.h, x.w);
  int64_t plane = static_cast<int64_t>(h_) * w_;

  if (kind_ == WindowKind::kMean) {
    parallel_for(static_cast<int64_t>(n_) * c_, [&](int64_t idx) {
      const T* ip = x.plane(static_cast<int>(idx / c_),
                            static_cast<int>(idx % c_));
      T* op = out.plane(static_cast<int>(idx / c_),
                        static_cast<int>(idx % c_));
      std::vector<T> tmp(plane);
      // horizontal clamped sums
      for (int y = 0; y < h_; ++y) {
        const T* row = ip + static_cast<int64_t>(y) * w_;
        T* trow = tmp.data() + static_cast<int64_t>(y) * w_;
        for (int xq = 0; xq < w_; ++xq) {
          T s = T(0);
          for (int dx = -r; dx <= r; ++dx) {
            int xi = std::clamp(xq + dx, 0, w_ - 1);
            s += row[xi];
          }
          trow[xq] = s;
        }
      }
      T invk2 = T(1) / static_cast<T>(k_ * k_);
      for (int y = 0; y < h_; ++y) {
        T* orow = op + static_cast<int64_t>(y) * w_;
        for (int xq = 0; xq < w_; ++xq) orow[xq] = T(0);
        for (int dy = -r; dy <= r; ++dy) {
          int yi = std::clamp(y + dy, 0, h_ - 1);
          const T* trow = tmp.data() + static_cast<int64_t>(yi) * w_;
          for (int xq = 0; xq < w_; ++xq) orow[xq] += trow[xq];
        }
        for (int xq = 0; xq < w_; ++xq) orow[xq] *= invk2;
      }
    });
  } else {
    src_y_.assign(static_cast<size_t>(n_) * c_ * plane, 0);
    src_x_.assign(static_cast<size_t>(n_) * c_ * plane, 0);
    parallel_for(static_cast<int64_t>(n_) * c_, [&](int64_t idx) {
      const T* ip = x.plane(static_cast<int>(idx / c_),
                            static_cast<int>(idx % c_));
      T* op = out.plane(static_cast<int>(idx / c_),
                        static_cast<int>(idx % c_));
      int32_t* sy = src_y_.data() + idx * plane;
      int32_t* sx = src_x_.data() + idx * plane;
      // horizontal pass: value + argmax column (first max wins)
      std::vector<T> hv(plane);
      std::vector<int32_t> hc(plane);
      for (int y = 0; y < h_; ++y) {
        const T* row = ip + static_cast<int64_t>(y) * w_;
        for (int xq = 0; xq < w_; ++xq) {
          T best = row[std::clamp(xq - r, 0, w_ - 1)];
          int bc = std::clamp(xq - r, 0, w_ - 1);
          for (int dx = -r + 1; dx <= r; ++dx) {
            int xi = std::clamp(xq + dx, 0, w_ - 1);
            if (row[xi] > best) {
              best = row[xi];
              bc = xi;
            }
          }
          hv[static_cast<int64_t>(y) * w_ + xq] = best;
          hc[static_cast<int64_t>(y) * w_ + xq] = bc;
        }
      }
      // vertical pass: first max row wins, then its column
      for (int y = 0; y < h_; ++y) {
        for (int xq = 0; xq < w_; ++xq) {
          int yi0 = std::clamp(y - r, 0, h_ - 1);
          T best = hv[static_cast<int64_t>(yi0) * w_ + xq];
          int br = yi0;
          for (int dy = -r + 1; dy <= r; ++dy) {
            int yi = std::clamp(y + dy, 0, h_ - 1);
            T v = hv[static_cast<int64_t>(yi) * w_ + xq];
            if (v > best) {
              best = v;
              br = yi;
            }
          }
          int64_t o = static_cast<int64_t>(y) * w_ + xq;
          op[o] = best;
          sy[o] = br;
          sx[o] = hc[static_cast<int64_t>(br) * w_ + xq];
        }
      }
    });
  }
  has_cache_ = true;
  return out;
}

template <typename T>
Tensor4<T> WindowStat<T>::backward(const Tensor4<T>& gy) {
  if (!has_cache_) throw ValueError("window_stat: backward before forward");
  int r = k_ / 2;
  int64_t plane = static_cast<int64_t>(h_) * w_;
  Tensor4<T> gx(n_, c_, h_, w_);

  if (kind_ == WindowKind::kMean) {
    T invk2 = T(1) / static_cast<T>(k_ * k_);
    parallel_for(static_cast<int64_t>(n_) * c_, [&](int64_t idx) {
      const T* gp = gy.plane(static_cast<int>(idx / c_),
                             static_cast<int>(idx % c_));
      T* gxp = gx.plane(static_cast<int>(idx / c_),
                        static_cast<int>(idx % c_));
      std::vector<T> tmp(plane, T(0));
      // vertical scatter (transpose of the clamped vertical gather)
      for (int y = 0; y < h_; ++y) {
        const T* grow = gp + static_cast<int64_t>(y) * w_;
        for (int dy = -r; dy <= r; ++dy) {
          int yi = std::clamp(y + dy, 0, h_ - 1);
          T* trow = tmp.data() + static_cast<int64_t>(yi) * w_;
          for (int xq = 0; xq < w_; ++xq) trow[xq] += grow[xq];
        }
      }
      // horizontal scatter
      for (int y = 0; y < h_; ++y) {
        const T* trow = tmp.data() + static_cast<int64_t>(y) * w_;
        T* gxrow = gxp + static_cast<int64_t>(y) * w_;
        for (int xq = 0; xq < w_; ++xq) {
          T v = trow[xq] * invk2;
          for (int dx = -r; dx <= r; ++dx)
            gxrow[std::clamp(xq + dx, 0, w_ - 1)] += v;
        }
      }
    });
  } else {
    parallel_for(static_cast<int64_t>(n_) * c_, [&](int64_t idx) {
      const T* gp = gy.plane(static_cast<int>(idx / c_),
                             static_cast<int>(idx % c_));
      T* gxp = gx.plane(static_cast<int>(idx / c_),
                        static_cast<int>(idx % c_));
      const int32_t* sy = src_y_.data() + idx * plane;
      const int32_t* sx = src_x_.data() + idx * plane;
      for (int64_t o = 0; o < plane; ++o)
        gxp[static_cast<int64_t>(sy[o]) * w_ + sx[o]] += gp[o];
    });
  }
  return gx;
}

// ----------------------------------------------------------------- MaxPool2x

template <typename T>
Tensor4<T> MaxPool2x<T>::forward(const Tensor4<T>& x) {
  if (x.h % 2 != 0 || x.w % 2 != 0)
    throw ValueError("maxpool2x: spatial dims must be even, got " +
                     x.dims_str());
  n_ = x.n;
  c_ = x.c;
  h_ = x.h;
  w_ = x.w;
  int oh = x.h / 2, ow = x.w / 2;
  Tensor4<T> out(x.n, x.c, oh, ow);
  arg_.assign(out.size(), 0);
  parallel_for(static_cast<int64_t>(n_) * c_, [&](int64_t idx) {
    const T* ip = x.plane(static_cast<int>(idx / c_),
                          static_cast<int>(idx % c_));
    T* op = out.plane(static_cast<int>(idx / c_), static_cast<int>(idx % c_));
    int8_t* ap = arg_.data() + idx * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      const T* r0 = ip + static_cast<int64_t>(2 * oy) * w_;
      const T* r1 = r0 + w_;
      for (int ox = 0; ox < ow; ++ox) {
        T c0 = r0[2 * ox], c1 = r0[2 * ox + 1];
        T c2 = r1[2 * ox], c3 = r1[2 * ox + 1];
        T best = c0;
        int8_t a = 0;
        if (c1 > best) { best = c1; a = 1; }
        if (c2 > best) { best = c2; a = 2; }
        if (c3 > best) { best = c3; a = 3; }
        op[static_cast<int64_t>(oy) * ow + ox] = best;
        ap[static_cast<int64_t>(oy) * ow + ox] = a;
      }
    }
  });
  has_cache_ = true;
  return out;
}

template <typename T>
Tensor4<T> MaxPool2x<T>::backward(const Tensor4<T>& gy) {
  if (!has_cache_) throw ValueError("maxpool2x: backward before forward");
  int oh = h_ / 2, ow = w_ / 2;
  Tensor4<T> gx(n_, c_, h_, w_);
  parallel_for(static_cast<int64_t>(n_) * c_, [&](int64_t idx) {
    const T* gp = gy.plane(static_cast<int>(idx / c_),
                           static_cast<int>(idx % c_));
    T* gxp = gx.plane(static_cast<int>(idx / c_), static_cast<int>(idx % c_));
    const int8_t* ap = arg_.data() + idx * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        int8_t a = ap[static_cast<int64_t>(oy) * ow + ox];
        int iy = 2 * oy + (a >> 1), ix = 2 * ox + (a & 1);
        gxp[static_cast<int64_t>(iy) * w_ + ix] +=
            gp[static_cast<int64_t>(oy) * ow + ox];
      }
    }
  });
  return gx;
}

// ------------------------------------------------------------ ResizeBilinear

namespace {

struct AxisMap {
  std::vector<int> i0, i1;
  std::vector<double> t;
};

AxisMap make_axis_map(int in, int out) {
  AxisMap m;
  m.i0.resize(out);
  m.i1.resize(out);
  m.t.resize(out);
  double scale = static_cast<double>(in) / out;
  for (int d = 0; d < out; ++d) {
    double src = (d + 0.5) * scale - 0.5;
    double f = std::floor(src);
    int x0 = static_cast<int>(f);
    m.t[d] = src - f;
    m.i0[d] = std::clamp(x0, 0, in - 1);
    m.i1[d] = std::clamp(x0 + 1, 0, in - 1);
  }
  return m;
}

}  // namespace

template <typename T>
Tensor4<T> resize_bilinear(const Tensor4<T>& x, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1)
    throw ValueError("resize: output dims must be >= 1");
  if (out_h == x.h && out_w == x.w) return x;
  AxisMap ym = make_axis_map(x.h, out_h);
  AxisMap xm = make_axis_map(x.w, out_w);
  Tensor4<T> out(x.n, x.c, out_h, out_w);
  parallel_for(static_cast<int64_t>(x.n) * x.c, [&](int64_t idx) {
    const T* ip = x.plane(static_cast<int>(idx / x.c),
                          static_cast<int>(idx % x.c));
    T* op = out.plane(static_cast<int>(idx / x.c),
                      static_cast<int>(idx % x.c));
    for (int y = 0; y < out_h; ++y) {
      const T* r0 = ip + static_cast<int64_t>(ym.i0[y]) * x.w;
      const T* r1 = ip + static_cast<int64_t>(ym.i1[y]) * x.w;
      T ty = static_cast<T>(ym.t[y]);
      T* orow = op + static_cast<int64_t>(y) * out_w;
      for (int xq = 0; xq < out_w; ++xq) {
        T tx = static_cast<T>(xm.t[xq]);
        T a = r0[xm.i0[xq]], b = r0[xm.i1[xq]];
        T c = r1[xm.i0[xq]], d = r1[xm.i1[xq]];
        T top = a + tx * (b - a);
        T bot = c + tx * (d - c);
        orow[xq] = top + ty * (bot - top);
      }
    }
  });
  return out;
}

template <typename T>
Tensor4<T> ResizeBilinear<T>::forward(const Tensor4<T>& x, int out_h,
                                      int out_w) {
  n_ = x.n;
  c_ = x.c;
  in_h_ = x.h;
  in_w_ = x.w;
  out_h_ = out_h;
  out_w_ = out_w;
  has_cache_ = true;
  return resize_bilinear(x, out_h, out_w);
}

template <typename T>
Tensor4<T> ResizeBilinear<T>::backward(const Tensor4<T>& gy) {
  if (!has_cache_) throw ValueError("resize: backward before forward");
  if (out_h_ == in_h_ && out_w_ == in_w_) return gy;
  AxisMap ym = make_axis_map(in_h_, out_h_);
  AxisMap xm = make_axis_map(in_w_, out_w_);
  Tensor4<T> gx(n_, c_, in_h_, in_w_);
  parallel_for(static_cast<int64_t>(n_) * c_, [&](int64_t idx) {
    const T* gp = gy.plane(static_cast<int>(idx / c_),
                           static_cast<int>(idx % c_));
    T* gxp = gx.plane(static_cast<int>(idx / c_), static_cast<int>(idx % c_));
    for (int y = 0; y < out_h_; ++y) {
      T* r0 = gxp + static_cast<int64_t>(ym.i0[y]) * in_w_;
      T* r1 = gxp + static_cast<int64_t>(ym.i1[y]) * in_w_;
      T ty = static_cast<T>(ym.t[y]);
      const T* grow = gp + static_cast<int64_t>(y) * out_w_;
      for (int xq = 0; xq < out_w_; ++xq) {
        T tx = static_cast<T>(xm.t[xq]);
        T g = grow[xq];
        r0[xm.i0[xq]] += (T(1) - ty) * (T(1) - tx) * g;
        r0[xm.i1[xq]] += (T(1) - ty) * tx * g;
        r1[xm.i0[xq]] += ty * (T(1) - tx) * g;
        r1[xm.i1[xq]] += ty * tx * g;
      }
    }
  });
  return gx;
}

// ------------------------------------------------------- concat / matrix ops

template <typename T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b) {
  if (a.n != b.n || a.h != b.h || a.w != b.w)
    throw ValueError("concat: batch/spatial dims differ: " + a.dims_str() +
                     " vs " + b.dims_str());
  Tensor4<T> out(a.n, a.c + b.c, a.h, a.w);
  int64_t plane = static_cast<int64_t>(a.h) * a.w;
  for (int ni = 0; ni < a.n; ++ni) {
    for (int ch = 0; ch < a.c; ++ch)
      std::copy_n(a.plane(ni, ch), plane, out.plane(ni, ch));
    for (int ch = 0; ch < b.c; ++ch)
      std::copy_n(b.plane(ni, ch), plane, out.plane(ni, a.c + ch));
  }
  return out;
}

template <typename T>
void split_channels(const Tensor4<T>& g, int c_first, Tensor4<T>& ga,
                    Tensor4<T>& gb) {
  if (c_first < 0 || c_first > g.c)
    throw ValueError("split: bad channel split " + std::to_string(c_first) +
                     " of " + std::to_string(g.c));
  ga = Tensor4<T>(g.n, c_first, g.h, g.w);
  gb = Tensor4<T>(g.n, g.c - c_first, g.h, g.w);
  int64_t plane = static_cast<int64_t>(g.h) * g.w;
  for (int ni = 0; ni < g.n; ++ni) {
    for (int ch = 0; ch < c_first; ++ch)
      std::copy_n(g.plane(ni, ch), plane, ga.plane(ni, ch));
    for (int ch = 0; ch < g.c - c_first; ++ch)
      std::copy_n(g.plane(ni, c_first + ch), plane, gb.plane(ni, ch));
  }
}

template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols != b.rows)
    throw ValueError("matmul: inner dims differ: (" + std::to_string(a.rows) +
                     "x" + std::to_string(a.cols) + ") * (" +
                     std::to_string(b.rows) + "x" + std::to_string(b.cols) +
                     ")");
  Matrix<T> c(a.rows, b.cols);
  gemm_nn(a.v.data(), b.v.data(), c.v.data(), a.rows, a.cols, b.cols, T(1),
          false);
  return c;
}

template <typename T>
void softmax_rows_inplace(T* m, int rows, int cols) {
  for (int i = 0; i < rows; ++i) {
    T* row = m + static_cast<int64_t>(i) * cols;
    T mx = max_of(row, cols);
    if constexpr (std::is_same_v<T, float>) {
      vec_exp_shift(row, row, mx, cols);
    } else {
      for (int j = 0; j < cols; ++j) row[j] = std::exp(row[j] - mx);
    }
    T sum = sum_lanes(row, cols);
    T inv = T(1) / sum;
    for (int j = 0; j < cols; ++j) row[j] *= inv;
  }
}

template <typename T>
Matrix<T> softmax_rows(const Matrix<T>& m) {
  Matrix<T> out = m;
  softmax_rows_inplace(out.v.data(), out.rows, out.cols);
  return out;
}

// ---------------------------------------------------- explicit instantiation

template struct ParamStore<float>;
template struct ParamStore<double>;
template class Conv2d<float>;
template class Conv2d<double>;
template class BatchNorm<float>;
template class BatchNorm<double>;
template class Activation<float>;
template class Activation<double>;
template class WindowStat<float>;
template class WindowStat<double>;
template class MaxPool2x<float>;
template class MaxPool2x<double>;
template class ResizeBilinear<float>;
template class ResizeBilinear<double>;
template Tensor4<float> resize_bilinear(const Tensor4<float>&, int, int);
template Tensor4<double> resize_bilinear(const Tensor4<double>&, int, int);
template Tensor4<float> concat_channels(const Tensor4<float>&,
                                        const Tensor4<float>&);
template Tensor4<double> concat_channels(const Tensor4<double>&,
                                         const Tensor4<double>&);
template void split_channels(const Tensor4<float>&, int, Tensor4<float>&,
                             Tensor4<float>&);
template void split_channels(const Tensor4<double>&, int, Tensor4<double>&,
                             Tensor4<double>&);
template Matrix<float> matmul(const Matrix<float>&, const Matrix<float>&);
template Matrix<double> matmul(const Matrix<double>&, const Matrix<double>&);
template void softmax_rows_inplace(float*, int, int);
template void softmax_rows_inplace(double*, int, int);
template Matrix<float> softmax_rows(const Matrix<float>&);
template Matrix<double> softmax_rows(const Matrix<double>&);

}  // namespace istd
