#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "istd/rng.hpp"
#include "istd/tensor.hpp"

namespace istd {

enum class Mode { kTrain, kEval };

// Ordered registry of named (parameter, gradient) pairs plus non-learned
// buffers (batch-norm running stats). Iteration order is insertion order,
// which fixes the optimizer update order and the checkpoint layout.
template <typename T>
struct ParamStore {
  struct Slot {
    std::string name;
    Tensor4<T>* value = nullptr;
    Tensor4<T>* grad = nullptr;
  };

  std::vector<Slot> params;
  std::vector<Slot> buffers;

  void add_param(const std::string& name, Tensor4<T>* value, Tensor4<T>* grad);
  void add_buffer(const std::string& name, Tensor4<T>* value);
  const Slot* find(const std::string& name) const;
  void zero_grads();
  int64_t param_count() const;

 private:
  std::unordered_map<std::string, int> seen_;
};

// 2D cross-correlation with zero padding, stride 1 or 2, square kernel.
template <typename T>
class Conv2d {
 public:
  Conv2d(int in_ch, int out_ch, int k, int stride = 1, int pad = 0);

  void init_he(Pcg32& rng);
  void register_into(ParamStore<T>& ps, const std::string& prefix);

  Tensor4<T> forward(const Tensor4<T>& x);
  // Returns d(input); accumulates into the weight/bias gradients.
  Tensor4<T> backward(const Tensor4<T>& gy);

  int in_channels() const { return ic_; }
  int out_channels() const { return oc_; }

  Tensor4<T> weight, wgrad;  // (oc, ic, k, k)
  Tensor4<T> bias, bgrad;    // (1, oc, 1, 1)

 private:
  int ic_, oc_, k_, stride_, pad_;
  Tensor4<T> x_;
  bool has_cache_ = false;
};

// Per-channel batch normalization over (n, h, w).
template <typename T>
class BatchNorm {
 public:
  explicit BatchNorm(int channels, T eps = T(1e-5), T momentum = T(0.1));

  void register_into(ParamStore<T>& ps, const std::string& prefix);

  Tensor4<T> forward(const Tensor4<T>& x, Mode mode);
  Tensor4<T> backward(const Tensor4<T>& gy);

  Tensor4<T> gamma, ggrad, beta, bgrad;      // (1, c, 1, 1)
  Tensor4<T> running_mean, running_var;      // (1, c, 1, 1)

 private:
  int c_;
  T eps_, momentum_;
  Mode mode_ = Mode::kTrain;
  Tensor4<T> xhat_;
  std::vector<T> inv_std_;
  bool has_cache_ = false;
};

enum class Act { kRelu, kSigmoid };

template <typename T>
class Activation {
 public:
  explicit Activation(Act kind) : kind_(kind) {}

  Tensor4<T> forward(const Tensor4<T>& x);
  Tensor4<T> backward(const Tensor4<T>& gy);

 private:
  Act kind_;
  Tensor4<T> y_;
  bool has_cache_ = false;
};

enum class WindowKind { kMax, kMean };

// Sliding k x k window max or mean, stride 1, replicate (edge-clamp)
// padding, output dims equal input dims. Differentiable: mean scatters the
// gradient uniformly, max routes it to the first-in-row-major-order argmax.
template <typename T>
class WindowStat {
 public:
  WindowStat(int k, WindowKind kind);

  Tensor4<T> forward(const Tensor4<T>& x);
  Tensor4<T> backward(const Tensor4<T>& gy);

 private:
  int k_;
  WindowKind kind_;
  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  std::vector<int32_t> src_y_, src_x_;  // max: routed source per output cell
  bool has_cache_ = false;
};

// Non-overlapping 2x2 max pooling; requires even spatial dims.
template <typename T>
class MaxPool2x {
 public:
  Tensor4<T> forward(const Tensor4<T>& x);
  Tensor4<T> backward(const Tensor4<T>& gy);

 private:
  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  std::vector<int8_t> arg_;  // 0..3, row-major position inside the 2x2 block
  bool has_cache_ = false;
};

// Bilinear resize with half-pixel centers and edge clamping. Identity
// (bitwise) when the dims already match.
template <typename T>
class ResizeBilinear {
 public:
  Tensor4<T> forward(const Tensor4<T>& x, int out_h, int out_w);
  Tensor4<T> backward(const Tensor4<T>& gy);

 private:
  int n_ = 0, c_ = 0, in_h_ = 0, in_w_ = 0, out_h_ = 0, out_w_ = 0;
  bool has_cache_ = false;
};

// Forward-only convenience (evaluation-time resampling).
template <typename T>
Tensor4<T> resize_bilinear(const Tensor4<T>& x, int out_h, int out_w);

template <typename T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b);

template <typename T>
void split_channels(const Tensor4<T>& g, int c_first, Tensor4<T>& ga,
                    Tensor4<T>& gb);

// Dense matrix product with dimension validation.
template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b);

// Row softmax with row-max subtraction; rows sum to 1.
template <typename T>
void softmax_rows_inplace(T* m, int rows, int cols);

template <typename T>
Matrix<T> softmax_rows(const Matrix<T>& m);

}  // namespace istd
