#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "istd/layers.hpp"

namespace istd {

struct TrainConfig {
  double lr_max = 1e-3;
  double lr_min = 1e-6;
  int epochs = 300;
  int batch = 8;
  int train_res = 256;
  uint64_t seed = 0;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double bce_clamp = 1e-7;
  int val_interval = 1;     // epochs between validation passes
  double threshold = 0.5;   // binarization threshold for val IoU

  void validate() const;
};

// Cosine annealing over epochs: lr(0) = lr_max, lr(T) = lr_min exactly,
// clamped to lr_min past T.
double cosine_lr(int t, const TrainConfig& cfg);

// Mean binary cross-entropy with prediction clamping; returns the loss and
// d(loss)/d(pred). Targets must be exactly 0 or 1.
template <typename T>
std::pair<double, Tensor4<T>> bce_loss(const Tensor4<T>& pred,
                                       const Tensor4<T>& target,
                                       double clamp = 1e-7);

// Decoupled weight decay Adam over a ParamStore, bias-corrected moments.
template <typename T>
class AdamW {
 public:
  AdamW(ParamStore<T>& ps, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8, double weight_decay = 0.01);

  // One update with the given learning rate; rejects non-finite gradients.
  void step(double lr);

  int64_t step_count() const { return t_; }
  void set_step_count(int64_t t) { t_ = t; }
  std::vector<Tensor4<T>>& moment1() { return m_; }
  std::vector<Tensor4<T>>& moment2() { return v_; }

 private:
  ParamStore<T>* ps_;
  double beta1_, beta2_, eps_, weight_decay_;
  int64_t t_ = 0;
  std::vector<Tensor4<T>> m_, v_;
};

}  // namespace istd
