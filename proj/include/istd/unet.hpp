#pragma once

#include <memory>
#include <vector>

#include "istd/hint.hpp"
#include "istd/layers.hpp"

namespace istd {

struct UNetConfig {
  int levels = 5;       // encoder depth; tiny preset uses 3
  int base_width = 32;  // channels at level 1; tiny preset uses 8
  int in_channels = 32; // c_base when a hint module feeds the net, else c_i
  int out_channels = 1;

  // stage width doubles per level, capped at 512
  int width_at(int level) const {
    int64_t w = static_cast<int64_t>(base_width) << (level - 1);
    return static_cast<int>(std::min<int64_t>(w, 512));
  }
  void validate() const;
};

// Compact UNet: per level two conv blocks, 2x max pooling between encoder
// levels, bilinear x2 + skip concat + two conv blocks on the way up,
// 1x1 conv + sigmoid head.
template <typename T>
class UNet {
 public:
  explicit UNet(const UNetConfig& cfg);

  void register_into(ParamStore<T>& ps, const std::string& prefix = "unet");
  void init(Pcg32& rng);

  Tensor4<T> forward(const Tensor4<T>& x, Mode mode);
  Tensor4<T> backward(const Tensor4<T>& gy);

  const UNetConfig& config() const { return cfg_; }

 private:
  UNetConfig cfg_;
  std::vector<ConvBlock<T>> enc_b1_, enc_b2_;
  std::vector<MaxPool2x<T>> pools_;
  std::vector<ResizeBilinear<T>> ups_;
  std::vector<ConvBlock<T>> dec_b1_, dec_b2_;
  Conv2d<T> head_;
  Activation<T> sigmoid_;
  std::vector<std::pair<int, int>> skip_dims_;
  bool has_cache_ = false;
};

// hint front end + UNet. raw_baseline drops the hint module entirely and
// feeds the image straight into the UNet (in_channels = c_i).
struct ModelConfig {
  HintConfig hint;
  UNetConfig unet;
  bool raw_baseline = false;
  uint64_t seed = 0;
};

template <typename T>
class Model {
 public:
  explicit Model(const ModelConfig& cfg);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  Tensor4<T> forward(const Tensor4<T>& image, Mode mode);
  // Returns d(image).
  Tensor4<T> backward(const Tensor4<T>& gy);

  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }
  HintModule<T>* hint() { return hint_.get(); }
  UNet<T>& unet() { return *unet_; }
  const ModelConfig& config() const { return cfg_; }

 private:
  ModelConfig cfg_;
  std::unique_ptr<HintModule<T>> hint_;
  std::unique_ptr<UNet<T>> unet_;
  ParamStore<T> params_;
};

}  // namespace istd
