#include "istd/hint.hpp"

#include <cmath>

#include "istd/mathkit.hpp"

namespace istd {

std::string to_string(HintMode m) {
  switch (m) {
    case HintMode::kHintU: return "hintu";
    case HintMode::kHintO: return "hinto";
    case HintMode::kOff: return "off";
  }
  return "?";
}

HintMode hint_mode_from_string(const std::string& s) {
  if (s == "hintu") return HintMode::kHintU;
  if (s == "hinto") return HintMode::kHintO;
  if (s == "off") return HintMode::kOff;
  throw ValueError("unknown hint mode '" + s + "' (hintu|hinto|off)");
}

void HintConfig::validate() const {
  if (k < 3 || k % 2 == 0)
    throw ValueError("hint: k must be odd and >= 3, got " + std::to_string(k));
  if (in_channels < 1) throw ValueError("hint: in_channels must be >= 1");
  if (c_base < 1) throw ValueError("hint: c_base must be >= 1");
  if (max_tokens < 1) throw ValueError("hint: max_tokens must be >= 1");
}

template <typename T>
Tensor4<T> hint_prior(const Tensor4<T>& image, int k) {
  WindowStat<T> mean(k, WindowKind::kMean), max(k, WindowKind::kMax);
  Tensor4<T> m = mean.forward(image);
  Tensor4<T> mx = max.forward(image);
  Tensor4<T> out(image.n, 2 * image.c, image.h, image.w);
  int64_t plane = static_cast<int64_t>(image.h) * image.w;
  for (int ni = 0; ni < image.n; ++ni) {
    for (int ch = 0; ch < image.c; ++ch) {
      const T* ip = image.plane(ni, ch);
      const T* mp = m.plane(ni, ch);
      const T* xp = mx.plane(ni, ch);
      T* o0 = out.plane(ni, 2 * ch);
      T* o1 = out.plane(ni, 2 * ch + 1);
      for (int64_t i = 0; i < plane; ++i) {
        o0[i] = ip[i] - mp[i];
        o1[i] = ip[i] - xp[i];
      }
    }
  }
  return out;
}

template <typename T>
HintModule<T>::HintModule(const HintConfig& cfg)
    : cfg_(cfg),
      ws_mean_(cfg.k, WindowKind::kMean),
      ws_max_(cfg.k, WindowKind::kMax) {
  cfg_.validate();
  int ci = cfg_.in_channels;
  int cb = cfg_.c_base;
  if (cfg_.mode == HintMode::kOff) {
    mx_ = std::make_unique<ConvBlock<T>>(ci, cb, 3, 1);
    return;
  }
  ma1_ = std::make_unique<ConvBlock<T>>(2 * ci, cb, 3, 1);
  ma2_ = std::make_unique<ConvBlock<T>>(cb, cb, 3, 1);
  int proj_in = cfg_.mode == HintMode::kHintO ? cb : ci;
  mp_ = std::make_unique<ConvBlock<T>>(proj_in, cb, 3, 1);
  mh_ = std::make_unique<ConvBlock<T>>(cb, cb, 3, 1);
  bool fuse_image = !(cfg_.mode == HintMode::kHintO && cfg_.hinto_strict);
  if (fuse_image) mx_ = std::make_unique<ConvBlock<T>>(ci, cb, 3, 1);
  mf1_ = std::make_unique<ConvBlock<T>>(fuse_image ? 2 * cb : cb, cb, 1, 0);
  mf2_ = std::make_unique<ConvBlock<T>>(cb, cb, 1, 0);
}

template <typename T>
void HintModule<T>::register_into(ParamStore<T>& ps,
                                  const std::string& prefix) {
  if (ma1_) ma1_->register_into(ps, prefix + ".ma1");
  if (ma2_) ma2_->register_into(ps, prefix + ".ma2");
  if (mp_) mp_->register_into(ps, prefix + ".mp");
  if (mx_) mx_->register_into(ps, prefix + ".mx");
  if (mh_) mh_->register_into(ps, prefix + ".mh");
  if (mf1_) mf1_->register_into(ps, prefix + ".mf1");
  if (mf2_) mf2_->register_into(ps, prefix + ".mf2");
}

template <typename T>
void HintModule<T>::init(Pcg32& rng) {
  if (ma1_) ma1_->init(rng);
  if (ma2_) ma2_->init(rng);
  if (mp_) mp_->init(rng);
  if (mx_) mx_->init(rng);
  if (mh_) mh_->init(rng);
  if (mf1_) mf1_->init(rng);
  if (mf2_) mf2_->init(rng);
}

template <typename T>
Tensor4<T> HintModule<T>::prior_forward(const Tensor4<T>& image) {
  Tensor4<T> m = ws_mean_.forward(image);
  Tensor4<T> mx = ws_max_.forward(image);
  Tensor4<T> out(image.n, 2 * image.c, image.h, image.w);
  int64_t plane = static_cast<int64_t>(image.h) * image.w;
  for (int ni = 0; ni < image.n; ++ni) {
    for (int ch = 0; ch < image.c; ++ch) {
      const T* ip = image.plane(ni, ch);
      const T* mp = m.plane(ni, ch);
      const T* xp = mx.plane(ni, ch);
      T* o0 = out.plane(ni, 2 * ch);
      T* o1 = out.plane(ni, 2 * ch + 1);
      for (int64_t i = 0; i < plane; ++i) {
        o0[i] = ip[i] - mp[i];
        o1[i] = ip[i] - xp[i];
      }
    }
  }
  return out;
}

template <typename T>
Tensor4<T> HintModule<T>::prior_backward(const Tensor4<T>& gy) {
  int ci = gy.c / 2;
  Tensor4<T> d_mean(gy.n, ci, gy.h, gy.w), d_max(gy.n, ci, gy.h, gy.w);
  Tensor4<T> gx(gy.n, ci, gy.h, gy.w);
  int64_t plane = static_cast<int64_t>(gy.h) * gy.w;
  for (int ni = 0; ni < gy.n; ++ni) {
    for (int ch = 0; ch < ci; ++ch) {
      const T* g0 = gy.plane(ni, 2 * ch);
      const T* g1 = gy.plane(ni, 2 * ch + 1);
      T* dm = d_mean.plane(ni, ch);
      T* dx = d_max.plane(ni, ch);
      T* gp = gx.plane(ni, ch);
      for (int64_t i = 0; i < plane; ++i) {
        gp[i] = g0[i] + g1[i];
        dm[i] = -g0[i];
        dx[i] = -g1[i];
      }
    }
  }
  Tensor4<T> via_mean = ws_mean_.backward(d_mean);
  Tensor4<T> via_max = ws_max_.backward(d_max);
  for (size_t i = 0; i < gx.v.size(); ++i)
    gx.v[i] += via_mean.v[i] + via_max.v[i];
  return gx;
}

template <typename T>
void HintModule<T>::attention_forward(const Tensor4<T>& q_feat,
                                      const Tensor4<T>& k_feat,
                                      Tensor4<T>& out) {
  int cb = cfg_.c_base;
  int n = q_feat.n, h = q_feat.h, w = q_feat.w;
  int64_t tokens = static_cast<int64_t>(h) * w;
  tokens_ = static_cast<int>(tokens);
  T scale = static_cast<T>(
      1.0 / std::sqrt(static_cast<double>(
                cfg_.scale_by_c_base ? cfg_.c_base : cfg_.in_channels)));

  out = Tensor4<T>(n, cb, h, w);
  q_cache_.assign(static_cast<size_t>(n) * tokens * cb, T(0));
  k_cache_.assign(static_cast<size_t>(n) * tokens * cb, T(0));
  row_max_.assign(static_cast<size_t>(n) * tokens, T(0));
  row_inv_sum_.assign(static_cast<size_t>(n) * tokens, T(0));

  const int bs = static_cast<int>(std::min<int64_t>(256, tokens));
  std::vector<T> kt(static_cast<size_t>(cb) * tokens);
  std::vector<T> s(static_cast<size_t>(bs) * tokens);
  std::vector<T> o(static_cast<size_t>(tokens) * cb);

  for (int ni = 0; ni < n; ++ni) {
    T* q = q_cache_.data() + static_cast<size_t>(ni) * tokens * cb;
    T* k = k_cache_.data() + static_cast<size_t>(ni) * tokens * cb;
    T* rmax = row_max_.data() + static_cast<size_t>(ni) * tokens;
    T* rinv = row_inv_sum_.data() + static_cast<size_t>(ni) * tokens;
    // (c, h*w) planes -> (tokens x c) rows
    transpose(q_feat.plane(ni, 0), cb, static_cast<int>(tokens), q);
    transpose(k_feat.plane(ni, 0), cb, static_cast<int>(tokens), k);
    transpose(k, static_cast<int>(tokens), cb, kt.data());

    for (int64_t r0 = 0; r0 < tokens; r0 += bs) {
      int rows = static_cast<int>(std::min<int64_t>(bs, tokens - r0));
      gemm_nn(q + r0 * cb, kt.data(), s.data(), rows, cb,
              static_cast<int>(tokens), scale, false);
      for (int i = 0; i < rows; ++i) {
        T* row = s.data() + static_cast<int64_t>(i) * tokens;
        T mx = max_of(row, tokens);
        if constexpr (std::is_same_v<T, float>) {
          vec_exp_shift(row, row, mx, tokens);
        } else {
          for (int64_t j = 0; j < tokens; ++j)
            row[j] = fast_exp<T>(row[j] - mx);
        }
        T inv = T(1) / sum_lanes(row, tokens);
        for (int64_t j = 0; j < tokens; ++j) row[j] *= inv;
        rmax[r0 + i] = mx;
        rinv[r0 + i] = inv;
      }
      gemm_nn(s.data(), q, o.data() + r0 * cb, rows, static_cast<int>(tokens),
              cb, T(1), false);
    }
    transpose(o.data(), static_cast<int>(tokens), cb, out.plane(ni, 0));
  }
}

template <typename T>
void HintModule<T>::attention_backward(const Tensor4<T>& g_out,
                                       Tensor4<T>& d_qv, Tensor4<T>& d_k) {
  int cb = cfg_.c_base;
  int n = g_out.n, h = g_out.h, w = g_out.w;
  int64_t tokens = tokens_;
  T scale = static_cast<T>(
      1.0 / std::sqrt(static_cast<double>(
                cfg_.scale_by_c_base ? cfg_.c_base : cfg_.in_channels)));

  d_qv = Tensor4<T>(n, cb, h, w);
  d_k = Tensor4<T>(n, cb, h, w);

  const int bs = static_cast<int>(std::min<int64_t>(256, tokens));
  std::vector<T> kt(static_cast<size_t>(cb) * tokens);
  std::vector<T> qt(static_cast<size_t>(cb) * tokens);
  std::vector<T> a(static_cast<size_t>(bs) * tokens);
  std::vector<T> da(static_cast<size_t>(bs) * tokens);
  std::vector<T> go(static_cast<size_t>(tokens) * cb);
  std::vector<T> dq(static_cast<size_t>(tokens) * cb);
  std::vector<T> dk(static_cast<size_t>(tokens) * cb);
  std::vector<T> dv(static_cast<size_t>(tokens) * cb);

  for (int ni = 0; ni < n; ++ni) {
    const T* q = q_cache_.data() + static_cast<size_t>(ni) * tokens * cb;
    const T* k = k_cache_.data() + static_cast<size_t>(ni) * tokens * cb;
    const T* rmax = row_max_.data() + static_cast<size_t>(ni) * tokens;
    const T* rinv = row_inv_sum_.data() + static_cast<size_t>(ni) * tokens;
    transpose(k, static_cast<int>(tokens), cb, kt.data());
    transpose(q, static_cast<int>(tokens), cb, qt.data());
    transpose(g_out.plane(ni, 0), cb, static_cast<int>(tokens), go.data());
    std::fill(dk.begin(), dk.end(), T(0));
    std::fill(dv.begin(), dv.end(), T(0));

    for (int64_t r0 = 0; r0 < tokens; r0 += bs) {
      int rows = static_cast<int>(std::min<int64_t>(bs, tokens - r0));
      // recompute the softmax block from the cached row statistics
      gemm_nn(q + r0 * cb, kt.data(), a.data(), rows, cb,
              static_cast<int>(tokens), scale, false);
      for (int i = 0; i < rows; ++i) {
        T* row = a.data() + static_cast<int64_t>(i) * tokens;
        T mx = rmax[r0 + i], inv = rinv[r0 + i];
        if constexpr (std::is_same_v<T, float>) {
          vec_exp_shift(row, row, mx, tokens);
        } else {
          for (int64_t j = 0; j < tokens; ++j)
            row[j] = fast_exp<T>(row[j] - mx);
        }
        for (int64_t j = 0; j < tokens; ++j) row[j] *= inv;
      }
      // dA = dO * V^T (V = Q)
      gemm_nn(go.data() + r0 * cb, qt.data(), da.data(), rows, cb,
              static_cast<int>(tokens), T(1), false);
      // dV += A^T * dO
      gemm_tn_acc(a.data(), go.data() + r0 * cb, dv.data(), rows,
                  static_cast<int>(tokens), cb, T(1));
      // dS = A o (dA - rowdot(dA, A)), reusing the A buffer
      for (int i = 0; i < rows; ++i) {
        T* arow = a.data() + static_cast<int64_t>(i) * tokens;
        T* darow = da.data() + static_cast<int64_t>(i) * tokens;
        T rd = dot_lanes(darow, arow, tokens);
        for (int64_t j = 0; j < tokens; ++j)
          arow[j] = arow[j] * (darow[j] - rd);
      }
      // dQ_blk = scale * dS * K ; dK += scale * dS^T * Q_blk
      gemm_nn(a.data(), k, dq.data() + r0 * cb, rows,
              static_cast<int>(tokens), cb, scale, false);
      gemm_tn_acc(a.data(), q + r0 * cb, dk.data(), rows,
                  static_cast<int>(tokens), cb, scale);
    }
    for (size_t i = 0; i < dq.size(); ++i) dq[i] += dv[i];
    transpose(dq.data(), static_cast<int>(tokens), cb, d_qv.plane(ni, 0));
    transpose(dk.data(), static_cast<int>(tokens), cb, d_k.plane(ni, 0));
  }
}

template <typename T>
Tensor4<T> HintModule<T>::forward(const Tensor4<T>& image, Mode mode) {
  if (image.c != cfg_.in_channels)
    throw ValueError("hint: image has " + std::to_string(image.c) +
                     " channels, config says " +
                     std::to_string(cfg_.in_channels));
  if (cfg_.mode == HintMode::kOff) {
    has_cache_ = true;
    return mx_->forward(image, mode);
  }
  int64_t tokens = static_cast<int64_t>(image.h) * image.w;
  if (tokens > cfg_.max_tokens)
    throw ValueError(
        "hint: " + std::to_string(tokens) + " attention tokens exceed the " +
        std::to_string(cfg_.max_tokens) +
        " cap (the attention matrix is (h*w)^2); use a smaller input, raise "
        "--max-tokens, or run --mode off");

  image_ = image;
  prior_ = prior_forward(image);
  hint_ = ma2_->forward(ma1_->forward(prior_, mode), mode);
  qfeat_ = cfg_.mode == HintMode::kHintO ? mp_->forward(hint_, mode)
                                         : mp_->forward(image, mode);
  attention_forward(qfeat_, hint_, attn_);
  embedded_ = mh_->forward(attn_, mode);

  Tensor4<T> fused;
  if (mx_) {
    Tensor4<T> widened = mx_->forward(image, mode);
    fused = concat_channels(widened, embedded_);
  } else {
    fused = embedded_;
  }
  has_cache_ = true;
  return mf2_->forward(mf1_->forward(fused, mode), mode);
}

template <typename T>
Tensor4<T> HintModule<T>::backward(const Tensor4<T>& gx) {
  if (!has_cache_) throw ValueError("hint: backward before forward");
  if (cfg_.mode == HintMode::kOff) return mx_->backward(gx);

  Tensor4<T> g_fused = mf1_->backward(mf2_->backward(gx));
  Tensor4<T> d_image(image_.n, image_.c, image_.h, image_.w);
  Tensor4<T> g_embedded;
  if (mx_) {
    Tensor4<T> g_widened;
    split_channels(g_fused, cfg_.c_base, g_widened, g_embedded);
    d_image = mx_->backward(g_widened);
  } else {
    g_embedded = g_fused;
  }

  Tensor4<T> g_attn = mh_->backward(g_embedded);
  Tensor4<T> d_qv, d_k;
  attention_backward(g_attn, d_qv, d_k);

  Tensor4<T> d_hint = d_k;
  if (cfg_.mode == HintMode::kHintO) {
    Tensor4<T> via_proj = mp_->backward(d_qv);
    for (size_t i = 0; i < d_hint.v.size(); ++i)
      d_hint.v[i] += via_proj.v[i];
  } else {
    Tensor4<T> via_proj = mp_->backward(d_qv);
    for (size_t i = 0; i < d_image.v.size(); ++i)
      d_image.v[i] += via_proj.v[i];
  }

  Tensor4<T> d_prior = ma1_->backward(ma2_->backward(d_hint));
  Tensor4<T> via_prior = prior_backward(d_prior);
  for (size_t i = 0; i < d_image.v.size(); ++i)
    d_image.v[i] += via_prior.v[i];
  return d_image;
}

template Tensor4<float> hint_prior(const Tensor4<float>&, int);
template Tensor4<double> hint_prior(const Tensor4<double>&, int);
template struct ConvBlock<float>;
template struct ConvBlock<double>;
template class HintModule<float>;
template class HintModule<double>;

}  // namespace istd
