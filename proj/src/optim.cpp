#include "istd/optim.hpp"

#include <cmath>

namespace istd {

void TrainConfig::validate() const {
  if (!(lr_min > 0.0) || lr_min > lr_max)
    throw ValueError("train: need 0 < lr_min <= lr_max");
  if (epochs < 1) throw ValueError("train: epochs must be >= 1");
  if (batch < 1) throw ValueError("train: batch must be >= 1");
  if (train_res < 1) throw ValueError("train: train_res must be >= 1");
  if (val_interval < 1) throw ValueError("train: val_interval must be >= 1");
  if (!(bce_clamp > 0.0) || bce_clamp >= 0.5)
    throw ValueError("train: bce_clamp must be in (0, 0.5)");
}

double cosine_lr(int t, const TrainConfig& cfg) {
  if (t < 0) throw ValueError("cosine_lr: negative epoch index");
  // endpoints returned directly so they are exact; t past T clamps to lr_min
  if (t == 0) return cfg.lr_max;
  if (t >= cfg.epochs) return cfg.lr_min;
  double phase = M_PI * static_cast<double>(t) / cfg.epochs;
  return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + std::cos(phase));
}

template <typename T>
std::pair<double, Tensor4<T>> bce_loss(const Tensor4<T>& pred,
                                       const Tensor4<T>& target,
                                       double clamp) {
  if (!pred.same_dims(target))
    throw ValueError("bce: pred dims " + pred.dims_str() +
                     " != target dims " + target.dims_str());
  if (pred.empty()) throw ValueError("bce: empty tensors");
  const double lo = clamp, hi = 1.0 - clamp;
  const double inv_m = 1.0 / static_cast<double>(pred.size());
  double loss = 0.0;
  Tensor4<T> grad(pred.n, pred.c, pred.h, pred.w);
  for (size_t i = 0; i < pred.v.size(); ++i) {
    double y = static_cast<double>(target.v[i]);
    if (y != 0.0 && y != 1.0)
      throw ValueError("bce: target values must be exactly 0 or 1, got " +
                       std::to_string(y));
    double p = static_cast<double>(pred.v[i]);
    bool clamped = p < lo || p > hi;
    double pc = p < lo ? lo : (p > hi ? hi : p);
    loss += -(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
    grad.v[i] = clamped ? T(0)
                        : static_cast<T>((-y / pc + (1.0 - y) / (1.0 - pc)) *
                                         inv_m);
  }
  return {loss * inv_m, grad};
}

template <typename T>
AdamW<T>::AdamW(ParamStore<T>& ps, double beta1, double beta2, double eps,
                double weight_decay)
    : ps_(&ps), beta1_(beta1), beta2_(beta2), eps_(eps),
      weight_decay_(weight_decay) {
  m_.reserve(ps.params.size());
  v_.reserve(ps.params.size());
  for (const auto& slot : ps.params) {
    const Tensor4<T>& p = *slot.value;
    m_.emplace_back(p.n, p.c, p.h, p.w);
    v_.emplace_back(p.n, p.c, p.h, p.w);
  }
}

template <typename T>
void AdamW<T>::step(double lr) {
  for (const auto& slot : ps_->params) {
    if (!slot.grad->all_finite())
      throw ValueError("adamw: non-finite gradient in '" + slot.name +
                       "', step rejected");
  }
  ++t_;
  const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
  const T bc1 = static_cast<T>(1.0 - std::pow(beta1_, static_cast<double>(t_)));
  const T bc2 = static_cast<T>(1.0 - std::pow(beta2_, static_cast<double>(t_)));
  const T eps = static_cast<T>(eps_);
  const T wd = static_cast<T>(weight_decay_);
  const T lrt = static_cast<T>(lr);
  for (size_t s = 0; s < ps_->params.size(); ++s) {
    T* p = ps_->params[s].value->data();
    const T* g = ps_->params[s].grad->data();
    T* m = m_[s].data();
    T* v = v_[s].data();
    const size_t len = ps_->params[s].value->size();
    for (size_t i = 0; i < len; ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      T mhat = m[i] / bc1;
      T vhat = v[i] / bc2;
      p[i] -= lrt * (mhat / (std::sqrt(vhat) + eps) + wd * p[i]);
    }
  }
}

template std::pair<double, Tensor4<float>> bce_loss(const Tensor4<float>&,
                                                    const Tensor4<float>&,
                                                    double);
template std::pair<double, Tensor4<double>> bce_loss(const Tensor4<double>&,
                                                     const Tensor4<double>&,
                                                     double);
template class AdamW<float>;
template class AdamW<double>;

}  // namespace istd
