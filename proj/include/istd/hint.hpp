#pragma once

#include <memory>
#include <string>

#include "istd/layers.hpp"

namespace istd {

enum class HintMode { kHintU, kHintO, kOff };

std::string to_string(HintMode m);
HintMode hint_mode_from_string(const std::string& s);

struct HintConfig {
  int k = 3;              // residual window size, odd
  int in_channels = 1;    // c_i
  int c_base = 32;        // embedding width
  HintMode mode = HintMode::kHintU;
  int max_tokens = 16384;        // attention is (h*w)^2; inputs above are rejected
  bool scale_by_c_base = false;  // attention scale sqrt(c_base) instead of sqrt(c_i)
  bool hinto_strict = false;     // HintO fusion drops the image branch too

  void validate() const;
};

// conv -> batch_norm -> relu
template <typename T>
struct ConvBlock {
  ConvBlock(int in_ch, int out_ch, int k, int pad)
      : conv(in_ch, out_ch, k, 1, pad), bn(out_ch), act(Act::kRelu) {}

  Tensor4<T> forward(const Tensor4<T>& x, Mode mode) {
    return act.forward(bn.forward(conv.forward(x), mode));
  }
  Tensor4<T> backward(const Tensor4<T>& gy) {
    return conv.backward(bn.backward(act.backward(gy)));
  }
  void register_into(ParamStore<T>& ps, const std::string& prefix) {
    conv.register_into(ps, prefix + ".conv");
    bn.register_into(ps, prefix + ".bn");
  }
  void init(Pcg32& rng) { conv.init_he(rng); }

  Conv2d<T> conv;
  BatchNorm<T> bn;
  Activation<T> act;
};

// Two-channel local residual map: per input channel,
// (center - window mean) then (center - window max), replicate padding.
// Pure function of the image; used by tests and the visualization CLI. The
// module below runs the same windows through cached layers for backward.
template <typename T>
Tensor4<T> hint_prior(const Tensor4<T>& image, int k);

// The hint stack: prior residuals, projection to c_base (M_a), per-pixel
// cross attention between the projected image (M_p) and the hint (Eq. 5
// layout: Q = V = flattened M_p output, K = flattened hint), then fusion
// with the widened image (M_x, M_f). HintO builds Q and V from the hint
// itself so no image information enters the hint path; Off reduces to the
// widened image.
template <typename T>
class HintModule {
 public:
  explicit HintModule(const HintConfig& cfg);

  void register_into(ParamStore<T>& ps, const std::string& prefix = "hint");
  void init(Pcg32& rng);

  Tensor4<T> forward(const Tensor4<T>& image, Mode mode);
  // Returns d(image); requires a preceding forward.
  Tensor4<T> backward(const Tensor4<T>& gx);

  const HintConfig& config() const { return cfg_; }

  // stage outputs retained by the last forward (tests and visualization)
  const Tensor4<T>& last_prior() const { return prior_; }       // H'
  const Tensor4<T>& last_hint() const { return hint_; }         // H
  const Tensor4<T>& last_projected() const { return qfeat_; }   // M_p output
  const Tensor4<T>& last_attn() const { return attn_; }         // pre-M_h
  const Tensor4<T>& last_embedded() const { return embedded_; } // H_e

 private:
  Tensor4<T> prior_forward(const Tensor4<T>& image);
  Tensor4<T> prior_backward(const Tensor4<T>& gy);
  void attention_forward(const Tensor4<T>& q_feat, const Tensor4<T>& k_feat,
                         Tensor4<T>& out);
  void attention_backward(const Tensor4<T>& g_out, Tensor4<T>& d_qv,
                          Tensor4<T>& d_k);

  HintConfig cfg_;
  WindowStat<T> ws_mean_, ws_max_;
  std::unique_ptr<ConvBlock<T>> ma1_, ma2_;  // M_a
  std::unique_ptr<ConvBlock<T>> mp_;         // M_p (HintO: c_base -> c_base)
  std::unique_ptr<ConvBlock<T>> mx_;         // M_x
  std::unique_ptr<ConvBlock<T>> mh_;         // M_h
  std::unique_ptr<ConvBlock<T>> mf1_, mf2_;  // M_f (1x1 blocks)

  Tensor4<T> image_, prior_, hint_, qfeat_, attn_, embedded_;
  // per-item flattened attention operands cached for backward, plus the
  // softmax row statistics so the block recompute skips the reductions
  std::vector<T> q_cache_, k_cache_, row_max_, row_inv_sum_;
  int tokens_ = 0;
  bool has_cache_ = false;
};

}  // namespace istd
