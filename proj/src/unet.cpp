#include "istd/unet.hpp"

namespace istd {

void UNetConfig::validate() const {
  if (levels < 2)
    throw ValueError("unet: levels must be >= 2, got " +
                     std::to_string(levels));
  if (base_width < 1) throw ValueError("unet: base_width must be >= 1");
  if (in_channels < 1) throw ValueError("unet: in_channels must be >= 1");
  if (out_channels != 1)
    throw ValueError("unet: only a single output channel is supported");
}

template <typename T>
UNet<T>::UNet(const UNetConfig& cfg)
    : cfg_(cfg), head_(cfg.width_at(1), cfg.out_channels, 1, 1, 0),
      sigmoid_(Act::kSigmoid) {
  cfg_.validate();
  enc_b1_.reserve(cfg_.levels);
  enc_b2_.reserve(cfg_.levels);
  for (int lvl = 1; lvl <= cfg_.levels; ++lvl) {
    int in_ch = lvl == 1 ? cfg_.in_channels : cfg_.width_at(lvl - 1);
    int out_ch = cfg_.width_at(lvl);
    enc_b1_.emplace_back(in_ch, out_ch, 3, 1);
    enc_b2_.emplace_back(out_ch, out_ch, 3, 1);
  }
  pools_.resize(cfg_.levels - 1);
  ups_.resize(cfg_.levels - 1);
  dec_b1_.reserve(cfg_.levels - 1);
  dec_b2_.reserve(cfg_.levels - 1);
  for (int lvl = cfg_.levels - 1; lvl >= 1; --lvl) {
    int in_ch = cfg_.width_at(lvl + 1) + cfg_.width_at(lvl);
    int out_ch = cfg_.width_at(lvl);
    dec_b1_.emplace_back(in_ch, out_ch, 3, 1);
    dec_b2_.emplace_back(out_ch, out_ch, 3, 1);
  }
}

template <typename T>
void UNet<T>::register_into(ParamStore<T>& ps, const std::string& prefix) {
  for (int lvl = 1; lvl <= cfg_.levels; ++lvl) {
    std::string stage = prefix + ".enc" + std::to_string(lvl);
    enc_b1_[lvl - 1].register_into(ps, stage + ".b1");
    enc_b2_[lvl - 1].register_into(ps, stage + ".b2");
  }
  for (int lvl = cfg_.levels - 1; lvl >= 1; --lvl) {
    std::string stage = prefix + ".dec" + std::to_string(lvl);
    int di = cfg_.levels - 1 - lvl;
    dec_b1_[di].register_into(ps, stage + ".b1");
    dec_b2_[di].register_into(ps, stage + ".b2");
  }
  head_.register_into(ps, prefix + ".head");
}

template <typename T>
void UNet<T>::init(Pcg32& rng) {
  for (auto& b : enc_b1_) b.init(rng);
  for (auto& b : enc_b2_) b.init(rng);
  for (auto& b : dec_b1_) b.init(rng);
  for (auto& b : dec_b2_) b.init(rng);
  head_.init_he(rng);
}

template <typename T>
Tensor4<T> UNet<T>::forward(const Tensor4<T>& x, Mode mode) {
  int div = 1 << (cfg_.levels - 1);
  if (x.h % div != 0 || x.w % div != 0)
    throw ValueError("unet: input " + x.dims_str() +
                     " spatial dims must be divisible by 2^(levels-1) = " +
                     std::to_string(div));

  std::vector<Tensor4<T>> skips;
  skips.reserve(cfg_.levels - 1);
  skip_dims_.clear();
  Tensor4<T> cur = x;
  for (int lvl = 1; lvl <= cfg_.levels; ++lvl) {
    cur = enc_b2_[lvl - 1].forward(enc_b1_[lvl - 1].forward(cur, mode), mode);
    if (lvl < cfg_.levels) {
      skips.push_back(cur);
      skip_dims_.emplace_back(cur.h, cur.w);
      cur = pools_[lvl - 1].forward(cur);
    }
  }
  for (int lvl = cfg_.levels - 1; lvl >= 1; --lvl) {
    int di = cfg_.levels - 1 - lvl;
    const Tensor4<T>& skip = skips[lvl - 1];
    cur = ups_[di].forward(cur, skip.h, skip.w);
    cur = concat_channels(cur, skip);
    cur = dec_b2_[di].forward(dec_b1_[di].forward(cur, mode), mode);
  }
  has_cache_ = true;
  return sigmoid_.forward(head_.forward(cur));
}

template <typename T>
Tensor4<T> UNet<T>::backward(const Tensor4<T>& gy) {
  if (!has_cache_) throw ValueError("unet: backward before forward");
  Tensor4<T> g = head_.backward(sigmoid_.backward(gy));
  std::vector<Tensor4<T>> skip_grads(cfg_.levels - 1);
  for (int lvl = 1; lvl <= cfg_.levels - 1; ++lvl) {
    int di = cfg_.levels - 1 - lvl;
    g = dec_b1_[di].backward(dec_b2_[di].backward(g));
    Tensor4<T> g_up;
    split_channels(g, cfg_.width_at(lvl + 1), g_up, skip_grads[lvl - 1]);
    g = ups_[di].backward(g_up);
  }
  for (int lvl = cfg_.levels; lvl >= 1; --lvl) {
    if (lvl < cfg_.levels) {
      g = pools_[lvl - 1].backward(g);
      for (size_t i = 0; i < g.v.size(); ++i)
        g.v[i] += skip_grads[lvl - 1].v[i];
    }
    g = enc_b1_[lvl - 1].backward(enc_b2_[lvl - 1].backward(g));
  }
  return g;
}

template <typename T>
Model<T>::Model(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.hint.validate();
  if (cfg_.raw_baseline) {
    cfg_.unet.in_channels = cfg_.hint.in_channels;
  } else {
    cfg_.unet.in_channels = cfg_.hint.c_base;
    hint_ = std::make_unique<HintModule<T>>(cfg_.hint);
  }
  unet_ = std::make_unique<UNet<T>>(cfg_.unet);
  if (hint_) hint_->register_into(params_);
  unet_->register_into(params_);
  Pcg32 rng(cfg_.seed);
  if (hint_) hint_->init(rng);
  unet_->init(rng);
}

template <typename T>
Tensor4<T> Model<T>::forward(const Tensor4<T>& image, Mode mode) {
  if (!hint_) return unet_->forward(image, mode);
  return unet_->forward(hint_->forward(image, mode), mode);
}

template <typename T>
Tensor4<T> Model<T>::backward(const Tensor4<T>& gy) {
  Tensor4<T> g = unet_->backward(gy);
  if (!hint_) return g;
  return hint_->backward(g);
}

template class UNet<float>;
template class UNet<double>;
template class Model<float>;
template class Model<double>;

}  // namespace istd
