#include "istd/gradsuite.hpp"

#include "istd/hint.hpp"
#include "istd/mathkit.hpp"
#include "istd/optim.hpp"
#include "istd/unet.hpp"

namespace istd {

namespace {

Tensor4d random_tensor(int n, int c, int h, int w, Pcg32& rng,
                       double lo = -1.0, double hi = 1.0) {
  Tensor4d t(n, c, h, w);
  for (auto& v : t.v) v = rng.uniform(lo, hi);
  return t;
}

// Weighted-sum loss: fixed random weights make the check sensitive to every
// output element (a plain sum has zero gradient through softmax).
struct WeightedSum {
  Tensor4d weights;
  double loss(const Tensor4d& y) const {
    return dot_lanes(weights.data(), y.data(),
                     static_cast<int64_t>(y.size()));
  }
  Tensor4d grad() const { return weights; }
};

WeightedSum make_weights(int n, int c, int h, int w, Pcg32& rng) {
  return {random_tensor(n, c, h, w, rng, -1.0, 1.0)};
}

SuiteCheck check_conv(Pcg32& rng, int stride, bool corrupt) {
  Conv2d<double> conv(2, 3, 3, stride, 1);
  conv.init_he(rng);
  ParamStore<double> ps;
  conv.register_into(ps, "conv");
  Tensor4d input = random_tensor(1, 2, 6, 6, rng);
  Tensor4d y0 = conv.forward(input);
  WeightedSum ws = make_weights(y0.n, y0.c, y0.h, y0.w, rng);
  Tensor4d input_grad(1, 2, 6, 6);
  GradCheckProblem problem;
  problem.forward = [&]() { return ws.loss(conv.forward(input)); };
  problem.backward = [&]() {
    conv.forward(input);
    ps.zero_grads();
    input_grad = conv.backward(ws.grad());
    if (corrupt)
      for (auto& v : conv.wgrad.v) v *= 2.0;
  };
  problem.slots.push_back({"input", &input, &input_grad});
  for (auto& slot : ps.params)
    problem.slots.push_back({slot.name, slot.value, slot.grad});
  SuiteCheck check;
  check.name = corrupt ? "conv2d_negative_control"
                       : (stride == 1 ? "conv2d" : "conv2d_stride2");
  check.expect_fail = corrupt;
  check.result = grad_check(problem);
  return check;
}

SuiteCheck check_batchnorm(Pcg32& rng, Mode mode) {
  BatchNorm<double> bn(3);
  for (auto& v : bn.gamma.v) v = rng.uniform(0.5, 1.5);
  for (auto& v : bn.beta.v) v = rng.uniform(-0.5, 0.5);
  for (auto& v : bn.running_mean.v) v = rng.uniform(-0.2, 0.2);
  for (auto& v : bn.running_var.v) v = rng.uniform(0.5, 1.5);
  ParamStore<double> ps;
  bn.register_into(ps, "bn");
  Tensor4d input = random_tensor(2, 3, 5, 5, rng);
  Tensor4d y0 = bn.forward(input, mode);
  WeightedSum ws = make_weights(y0.n, y0.c, y0.h, y0.w, rng);
  Tensor4d input_grad(2, 3, 5, 5);
  GradCheckProblem problem;
  problem.forward = [&]() { return ws.loss(bn.forward(input, mode)); };
  problem.backward = [&]() {
    bn.forward(input, mode);
    ps.zero_grads();
    input_grad = bn.backward(ws.grad());
  };
  problem.slots.push_back({"input", &input, &input_grad});
  for (auto& slot : ps.params)
    problem.slots.push_back({slot.name, slot.value, slot.grad});
  SuiteCheck check;
  check.name = mode == Mode::kTrain ? "batch_norm_train" : "batch_norm_eval";
  check.result = grad_check(problem);
  return check;
}

SuiteCheck check_activation(Pcg32& rng, Act kind) {
  Activation<double> act(kind);
  Tensor4d input = random_tensor(1, 2, 5, 5, rng);
  Tensor4d y0 = act.forward(input);
  WeightedSum ws = make_weights(y0.n, y0.c, y0.h, y0.w, rng);
  Tensor4d input_grad(1, 2, 5, 5);
  GradCheckProblem problem;
  problem.forward = [&]() { return ws.loss(act.forward(input)); };
  problem.backward = [&]() {
    act.forward(input);
    input_grad = act.backward(ws.grad());
  };
  problem.slots.push_back({"input", &input, &input_grad});
  SuiteCheck check;
  check.name = kind == Act::kRelu ? "activation_relu" : "activation_sigmoid";
  check.result = grad_check(problem);
  return check;
}

SuiteCheck check_window(Pcg32& rng, WindowKind kind) {
  WindowStat<double> win(3, kind);
  Tensor4d input = random_tensor(1, 2, 6, 6, rng);
  Tensor4d y0 = win.forward(input);
  WeightedSum ws = make_weights(y0.n, y0.c, y0.h, y0.w, rng);
  Tensor4d input_grad(1, 2, 6, 6);
  GradCheckProblem problem;
  problem.forward = [&]() { return ws.loss(win.forward(input)); };
  problem.backward = [&]() {
    win.forward(input);
    input_grad = win.backward(ws.grad());
  };
  problem.slots.push_back({"input", &input, &input_grad});
  SuiteCheck check;
  check.name =
      kind == WindowKind::kMean ? "window_stat_mean" : "window_stat_max";
  check.result = grad_check(problem);
  return check;
}

SuiteCheck check_maxpool(Pcg32& rng) {
  MaxPool2x<double> pool;
  Tensor4d input = random_tensor(1, 2, 6, 6, rng);
  Tensor4d y0 = pool.forward(input);
  WeightedSum ws = make_weights(y0.n, y0.c, y0.h, y0.w, rng);
  Tensor4d input_grad(1, 2, 6, 6);
  GradCheckProblem problem;
  problem.forward = [&]() { return ws.loss(pool.forward(input)); };
  problem.backward = [&]() {
    pool.forward(input);
    input_grad = pool.backward(ws.grad());
  };
  problem.slots.push_back({"input", &input, &input_grad});
  SuiteCheck check;
  check.name = "maxpool2x";
  check.result = grad_check(problem);
  return check;
}

SuiteCheck check_resize(Pcg32& rng, int out_h, int out_w,
                        const std::string& name) {
  ResizeBilinear<double> rz;
  Tensor4d input = random_tensor(1, 2, 6, 6, rng);
  Tensor4d y0 = rz.forward(input, out_h, out_w);
  WeightedSum ws = make_weights(y0.n, y0.c, y0.h, y0.w, rng);
  Tensor4d input_grad(1, 2, 6, 6);
  GradCheckProblem problem;
  problem.forward = [&]() { return ws.loss(rz.forward(input, out_h, out_w)); };
  problem.backward = [&]() {
    rz.forward(input, out_h, out_w);
    input_grad = rz.backward(ws.grad());
  };
  problem.slots.push_back({"input", &input, &input_grad});
  SuiteCheck check;
  check.name = name;
  check.result = grad_check(problem);
  return check;
}

SuiteCheck check_matmul(Pcg32& rng) {
  // loss = sum_ij W_ij (A B)_ij ; dA = W B^T, dB = A^T W
  Tensor4d a = random_tensor(1, 1, 4, 3, rng);
  Tensor4d b = random_tensor(1, 1, 3, 5, rng);
  Tensor4d w = random_tensor(1, 1, 4, 5, rng);
  Tensor4d ga(1, 1, 4, 3), gb(1, 1, 3, 5);
  GradCheckProblem problem;
  problem.forward = [&]() {
    std::vector<double> c(4 * 5);
    gemm_nn(a.data(), b.data(), c.data(), 4, 3, 5, 1.0, false);
    return dot_lanes(w.data(), c.data(), 20);
  };
  problem.backward = [&]() {
    ga.zero();
    gb.zero();
    std::vector<double> bt(5 * 3);
    transpose(b.data(), 3, 5, bt.data());
    gemm_nn(w.data(), bt.data(), ga.data(), 4, 5, 3, 1.0, false);
    gemm_tn_acc(a.data(), w.data(), gb.data(), 4, 3, 5, 1.0);
  };
  problem.slots.push_back({"A", &a, &ga});
  problem.slots.push_back({"B", &b, &gb});
  SuiteCheck check;
  check.name = "matmul";
  check.result = grad_check(problem);
  return check;
}

SuiteCheck check_softmax(Pcg32& rng) {
  Tensor4d x = random_tensor(1, 1, 3, 7, rng, -2.0, 2.0);
  Tensor4d w = random_tensor(1, 1, 3, 7, rng);
  Tensor4d gx(1, 1, 3, 7);
  GradCheckProblem problem;
  problem.forward = [&]() {
    Tensor4d y = x;
    softmax_rows_inplace(y.data(), 3, 7);
    return dot_lanes(w.data(), y.data(), 21);
  };
  problem.backward = [&]() {
    Tensor4d y = x;
    softmax_rows_inplace(y.data(), 3, 7);
    // dx_i = y_i (w_i - sum_j w_j y_j) per row
    for (int i = 0; i < 3; ++i) {
      const double* yr = y.data() + i * 7;
      const double* wr = w.data() + i * 7;
      double rd = dot_lanes(wr, yr, 7);
      for (int j = 0; j < 7; ++j) gx.v[i * 7 + j] = yr[j] * (wr[j] - rd);
    }
  };
  problem.slots.push_back({"input", &x, &gx});
  SuiteCheck check;
  check.name = "softmax_rows";
  check.result = grad_check(problem);
  return check;
}

SuiteCheck check_concat(Pcg32& rng) {
  Tensor4d a = random_tensor(1, 2, 3, 3, rng);
  Tensor4d b = random_tensor(1, 3, 3, 3, rng);
  Tensor4d ga(1, 2, 3, 3), gb(1, 3, 3, 3);
  Tensor4d w = random_tensor(1, 5, 3, 3, rng);
  GradCheckProblem problem;
  problem.forward = [&]() {
    Tensor4d y = concat_channels(a, b);
    return dot_lanes(w.data(), y.data(), static_cast<int64_t>(y.size()));
  };
  problem.backward = [&]() { split_channels(w, 2, ga, gb); };
  problem.slots.push_back({"a", &a, &ga});
  problem.slots.push_back({"b", &b, &gb});
  SuiteCheck check;
  check.name = "concat_channels";
  check.result = grad_check(problem);
  return check;
}

// Model-level checks run at fixed seeds verified to keep every probe away
// from ReLU/max ties at h=1e-5; central differences straddle those kinks
// otherwise (the analytic gradient is fine, confirmed at h=1e-6).
SuiteCheck check_hint_stack(uint64_t seed, int64_t max_probes) {
  HintConfig cfg;
  cfg.k = 3;
  cfg.c_base = 8;
  cfg.mode = HintMode::kHintU;
  HintModule<double> hint(cfg);
  ParamStore<double> ps;
  hint.register_into(ps);
  Pcg32 init_rng(seed);
  hint.init(init_rng);

  Pcg32 rng(seed * 7 + 1);
  Tensor4d input = random_tensor(1, 1, 12, 12, rng, 0.0, 1.0);
  Tensor4d y0 = hint.forward(input, Mode::kTrain);
  WeightedSum ws = make_weights(y0.n, y0.c, y0.h, y0.w, rng);
  Tensor4d input_grad(1, 1, 12, 12);
  GradCheckProblem problem;
  problem.forward = [&]() {
    return ws.loss(hint.forward(input, Mode::kTrain));
  };
  problem.backward = [&]() {
    hint.forward(input, Mode::kTrain);
    ps.zero_grads();
    input_grad = hint.backward(ws.grad());
  };
  problem.slots.push_back({"input", &input, &input_grad});
  for (auto& slot : ps.params)
    problem.slots.push_back({slot.name, slot.value, slot.grad});
  SuiteCheck check;
  check.name = "hint_stack_hintu_12x12";
  check.result = grad_check(problem, 1e-5, 1e-4, max_probes);
  return check;
}

SuiteCheck check_full_model(uint64_t seed, int64_t max_probes) {
  ModelConfig cfg;
  cfg.hint.k = 3;
  cfg.hint.c_base = 8;
  cfg.hint.mode = HintMode::kHintU;
  cfg.unet.levels = 3;
  cfg.unet.base_width = 8;
  cfg.seed = seed;
  Model<double> model(cfg);

  Pcg32 rng(seed * 7 + 1);
  Tensor4d input = random_tensor(1, 1, 16, 16, rng, 0.0, 1.0);
  Tensor4d target(1, 1, 16, 16);
  for (auto& v : target.v) v = rng.next_double() < 0.1 ? 1.0 : 0.0;

  Tensor4d input_grad(1, 1, 16, 16);
  GradCheckProblem problem;
  problem.forward = [&]() {
    Tensor4d y = model.forward(input, Mode::kTrain);
    return bce_loss(y, target).first;
  };
  problem.backward = [&]() {
    Tensor4d y = model.forward(input, Mode::kTrain);
    auto [loss, grad] = bce_loss(y, target);
    (void)loss;
    model.params().zero_grads();
    input_grad = model.backward(grad);
  };
  problem.slots.push_back({"input", &input, &input_grad});
  for (auto& slot : model.params().params)
    problem.slots.push_back({slot.name, slot.value, slot.grad});
  SuiteCheck check;
  check.name = "full_tiny_hintu_model_16x16_bce";
  check.result = grad_check(problem, 1e-5, 1e-4, max_probes);
  return check;
}

}  // namespace

std::vector<SuiteCheck> run_gradient_suite(int64_t max_probes) {
  Pcg32 rng(20240101);
  std::vector<SuiteCheck> checks;
  checks.push_back(check_conv(rng, 1, false));
  checks.push_back(check_conv(rng, 2, false));
  checks.push_back(check_batchnorm(rng, Mode::kTrain));
  checks.push_back(check_batchnorm(rng, Mode::kEval));
  checks.push_back(check_activation(rng, Act::kRelu));
  checks.push_back(check_activation(rng, Act::kSigmoid));
  checks.push_back(check_window(rng, WindowKind::kMean));
  checks.push_back(check_window(rng, WindowKind::kMax));
  checks.push_back(check_maxpool(rng));
  checks.push_back(check_resize(rng, 12, 12, "resize_bilinear_up"));
  checks.push_back(check_resize(rng, 4, 3, "resize_bilinear_down"));
  checks.push_back(check_matmul(rng));
  checks.push_back(check_softmax(rng));
  checks.push_back(check_concat(rng));
  checks.push_back(check_hint_stack(11, max_probes));
  checks.push_back(check_full_model(23, max_probes));
  checks.push_back(check_conv(rng, 1, true));  // negative control
  return checks;
}

}  // namespace istd
