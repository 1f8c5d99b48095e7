#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "istd/layers.hpp"
#include "istd/rng.hpp"
#include "oracles.hpp"

using namespace istd;

namespace {

Tensor4f random_tensor(int n, int c, int h, int w, Pcg32& rng, double lo = -1,
                       double hi = 1) {
  Tensor4f t(n, c, h, w);
  for (auto& v : t.v) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

double max_abs_diff(const Tensor4f& a, const Tensor4f& b) {
  REQUIRE(a.same_dims(b));
  double m = 0;
  for (size_t i = 0; i < a.v.size(); ++i)
    m = std::max(m, std::abs(double(a.v[i]) - double(b.v[i])));
  return m;
}

}  // namespace

TEST_CASE("conv2d scalar affine") {
  Conv2d<float> conv(1, 1, 1, 1, 0);
  conv.weight.v[0] = 3.0f;
  conv.bias.v[0] = 1.0f;
  Tensor4f x(1, 1, 1, 1);
  x.v[0] = 2.0f;
  Tensor4f y = conv.forward(x);
  CHECK(y.v[0] == 7.0f);
}

TEST_CASE("conv2d all-ones 3x3 with padding") {
  Conv2d<float> conv(1, 1, 3, 1, 1);
  conv.weight.fill(1.0f);
  Tensor4f x(1, 1, 2, 2);
  x.v = {1, 2, 3, 4};
  Tensor4f y = conv.forward(x);
  for (float v : y.v) CHECK(v == doctest::Approx(10.0f).epsilon(1e-6));
}

TEST_CASE("conv2d matches the nested-loop oracle") {
  Pcg32 rng(100);
  for (int stride : {1, 2}) {
    Conv2d<float> conv(3, 4, 3, stride, 1);
    conv.init_he(rng);
    for (auto& v : conv.bias.v) v = static_cast<float>(rng.uniform(-1, 1));
    Tensor4f x = random_tensor(2, 3, 9, 7, rng);
    Tensor4f got = conv.forward(x);
    std::vector<float> bias(conv.bias.v.begin(), conv.bias.v.end());
    Tensor4f want = oracle::conv2d_ref(x, conv.weight, bias, stride, 1);
    CHECK(max_abs_diff(got, want) < 1e-5);
  }
}

TEST_CASE("conv2d affinity: out(a+b) = out(a) + out(b) - out(0)") {
  Pcg32 rng(101);
  Conv2d<float> conv(2, 3, 3, 1, 1);
  conv.init_he(rng);
  for (auto& v : conv.bias.v) v = static_cast<float>(rng.uniform(-1, 1));
  Tensor4f a = random_tensor(1, 2, 8, 8, rng);
  Tensor4f b = random_tensor(1, 2, 8, 8, rng);
  Tensor4f ab(1, 2, 8, 8);
  for (size_t i = 0; i < ab.v.size(); ++i) ab.v[i] = a.v[i] + b.v[i];
  Tensor4f zero(1, 2, 8, 8);
  Tensor4f ya = conv.forward(a), yb = conv.forward(b), yz = conv.forward(zero);
  Tensor4f yab = conv.forward(ab);
  double worst = 0;
  for (size_t i = 0; i < yab.v.size(); ++i)
    worst = std::max(worst, std::abs(double(yab.v[i]) - double(ya.v[i]) -
                                     double(yb.v[i]) + double(yz.v[i])));
  CHECK(worst < 1e-5);
}

TEST_CASE("conv2d shape errors name the dims") {
  Conv2d<float> conv(2, 1, 3, 1, 0);
  Tensor4f wrong_c(1, 3, 8, 8);
  CHECK_THROWS_WITH_AS(conv.forward(wrong_c),
                       doctest::Contains("3 channels"), ValueError);
  Tensor4f too_small(1, 2, 2, 2);
  CHECK_THROWS_AS(conv.forward(too_small), ValueError);
}

TEST_CASE("conv2d deterministic") {
  Pcg32 rng(102);
  Conv2d<float> conv(2, 2, 3, 1, 1);
  conv.init_he(rng);
  Tensor4f x = random_tensor(1, 2, 6, 6, rng);
  Tensor4f y1 = conv.forward(x), y2 = conv.forward(x);
  CHECK(std::memcmp(y1.data(), y2.data(), y1.size() * 4) == 0);
}

TEST_CASE("batch_norm constant channel flows to beta") {
  BatchNorm<float> bn(1);
  bn.beta.v[0] = 0.5f;
  Tensor4f x = Tensor4f::full(1, 1, 3, 3, 2.25f);
  Tensor4f y = bn.forward(x, Mode::kTrain);
  for (float v : y.v) CHECK(v == doctest::Approx(0.5f).epsilon(1e-6));
}

TEST_CASE("batch_norm two-point channel") {
  BatchNorm<float> bn(1);
  Tensor4f x(1, 1, 1, 2);
  x.v = {-1.0f, 1.0f};
  Tensor4f y = bn.forward(x, Mode::kTrain);
  CHECK(y.v[0] == doctest::Approx(-0.999995).epsilon(1e-6));
  CHECK(y.v[1] == doctest::Approx(0.999995).epsilon(1e-6));
}

TEST_CASE("batch_norm eval with identity stats") {
  BatchNorm<float> bn(2);
  Pcg32 rng(5);
  Tensor4f x = random_tensor(1, 2, 4, 4, rng);
  Tensor4f y = bn.forward(x, Mode::kEval);
  CHECK(max_abs_diff(x, y) < 1e-4);  // eps effect only
}

TEST_CASE("batch_norm rejects degenerate train batches") {
  BatchNorm<float> bn(1);
  Tensor4f x(1, 1, 1, 1);
  CHECK_THROWS_AS(bn.forward(x, Mode::kTrain), ValueError);
}

TEST_CASE("activation examples") {
  Activation<float> relu(Act::kRelu);
  Tensor4f x(1, 1, 1, 3);
  x.v = {-2, 0, 3};
  Tensor4f y = relu.forward(x);
  CHECK(y.v[0] == 0.0f);
  CHECK(y.v[1] == 0.0f);
  CHECK(y.v[2] == 3.0f);

  Activation<float> sig(Act::kSigmoid);
  Tensor4f z(1, 1, 1, 4);
  z.v = {0.0f, std::log(3.0f), 100.0f, -100.0f};
  Tensor4f s = sig.forward(z);
  CHECK(s.v[0] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(s.v[1] == doctest::Approx(0.75).epsilon(1e-5));
  CHECK(std::isfinite(s.v[2]));
  CHECK(std::isfinite(s.v[3]));
  CHECK(s.v[2] > 0.999f);
  CHECK(s.v[3] < 1e-6f);
}

TEST_CASE("window_stat constants and the center peak") {
  WindowStat<float> wmax(3, WindowKind::kMax);
  WindowStat<float> wmean(3, WindowKind::kMean);

  Tensor4f flat = Tensor4f::full(1, 1, 5, 5, 0.75f);
  CHECK(max_abs_diff(wmax.forward(flat), flat) == 0.0);
  CHECK(max_abs_diff(wmean.forward(flat), flat) < 1e-6);

  Tensor4f peak(1, 1, 3, 3);
  peak.at(0, 0, 1, 1) = 1.0f;
  Tensor4f mx = wmax.forward(peak);
  for (float v : mx.v) CHECK(v == 1.0f);
  Tensor4f mn = wmean.forward(peak);
  for (float v : mn.v) CHECK(v == doctest::Approx(1.0 / 9).epsilon(1e-6));
}

TEST_CASE("window_stat matches the per-pixel oracle") {
  Pcg32 rng(7);
  Tensor4f x = random_tensor(2, 2, 9, 6, rng);
  for (int k : {3, 5}) {
    WindowStat<float> wmax(k, WindowKind::kMax);
    WindowStat<float> wmean(k, WindowKind::kMean);
    CHECK(max_abs_diff(wmax.forward(x), oracle::window_ref(x, k, true)) == 0.0);
    CHECK(max_abs_diff(wmean.forward(x), oracle::window_ref(x, k, false)) <
          1e-5);
  }
}

TEST_CASE("window max dominates window mean") {
  Pcg32 rng(8);
  Tensor4f x = random_tensor(1, 1, 12, 12, rng);
  WindowStat<float> wmax(3, WindowKind::kMax);
  WindowStat<float> wmean(3, WindowKind::kMean);
  Tensor4f mx = wmax.forward(x), mn = wmean.forward(x);
  for (size_t i = 0; i < mx.v.size(); ++i) CHECK(mx.v[i] >= mn.v[i] - 1e-6f);
}

TEST_CASE("window_stat rejects even k") {
  CHECK_THROWS_AS(WindowStat<float>(4, WindowKind::kMax), ValueError);
  CHECK_THROWS_AS(WindowStat<float>(1, WindowKind::kMean), ValueError);
}

TEST_CASE("maxpool2x examples") {
  MaxPool2x<float> pool;
  Tensor4f x(1, 1, 2, 2);
  x.v = {1, 2, 3, 4};
  Tensor4f y = pool.forward(x);
  CHECK(y.size() == 1u);
  CHECK(y.v[0] == 4.0f);

  Tensor4f flat = Tensor4f::full(1, 2, 4, 4, 0.3f);
  Tensor4f half = pool.forward(flat);
  CHECK(half.h == 2);
  CHECK(half.w == 2);
  for (float v : half.v) CHECK(v == 0.3f);

  Tensor4f odd(1, 1, 3, 4);
  CHECK_THROWS_AS(pool.forward(odd), ValueError);
}

TEST_CASE("resize identity is bitwise") {
  Pcg32 rng(9);
  Tensor4f x = random_tensor(1, 2, 5, 7, rng);
  Tensor4f y = resize_bilinear(x, 5, 7);
  CHECK(std::memcmp(x.data(), y.data(), x.size() * 4) == 0);
}

TEST_CASE("resize of a 1x1 input is constant") {
  Tensor4f x(1, 1, 1, 1);
  x.v[0] = 0.42f;
  Tensor4f y = resize_bilinear(x, 4, 6);
  for (float v : y.v) CHECK(v == 0.42f);
}

TEST_CASE("resize half-pixel mapping on a [0,1] row") {
  Tensor4f x(1, 1, 1, 2);
  x.v = {0.0f, 1.0f};
  Tensor4f y = resize_bilinear(x, 1, 4);
  CHECK(y.v[0] == doctest::Approx(0.0));
  CHECK(y.v[1] == doctest::Approx(0.25));
  CHECK(y.v[2] == doctest::Approx(0.75));
  CHECK(y.v[3] == doctest::Approx(1.0));
}

TEST_CASE("resize preserves constants") {
  Tensor4f x = Tensor4f::full(1, 1, 6, 6, 0.37f);
  Tensor4f up = resize_bilinear(x, 13, 9);
  for (float v : up.v) CHECK(v == doctest::Approx(0.37f).epsilon(1e-6));
}

TEST_CASE("matmul identity, dot and oracle") {
  Matrix<float> a(2, 2);
  a.v = {1, 2, 3, 4};
  Matrix<float> eye(2, 2);
  eye.v = {1, 0, 0, 1};
  Matrix<float> ai = matmul(a, eye);
  CHECK(ai.v == a.v);

  Matrix<float> row(1, 2), col(2, 1);
  row.v = {1, 2};
  col.v = {3, 4};
  CHECK(matmul(row, col).v[0] == 11.0f);

  Pcg32 rng(10);
  Matrix<float> p(7, 5), q(5, 3);
  for (auto& v : p.v) v = static_cast<float>(rng.uniform(-1, 1));
  for (auto& v : q.v) v = static_cast<float>(rng.uniform(-1, 1));
  Matrix<float> got = matmul(p, q);
  Matrix<float> want = oracle::matmul_ref(p, q);
  for (size_t i = 0; i < got.v.size(); ++i)
    CHECK(got.v[i] == doctest::Approx(want.v[i]).epsilon(1e-6));

  Matrix<float> bad(3, 3);
  CHECK_THROWS_AS(matmul(p, bad), ValueError);
}

TEST_CASE("softmax rows: symmetry, overflow, analytic value") {
  Matrix<float> m(3, 2);
  m.v = {0, 0, 1000, 1000, std::log(2.0f), 0};
  Matrix<float> s = softmax_rows(m);
  CHECK(s.at(0, 0) == doctest::Approx(0.5));
  CHECK(s.at(0, 1) == doctest::Approx(0.5));
  CHECK(s.at(1, 0) == doctest::Approx(0.5));
  CHECK(s.at(1, 1) == doctest::Approx(0.5));
  CHECK(s.at(2, 0) == doctest::Approx(2.0 / 3).epsilon(1e-5));
  CHECK(s.at(2, 1) == doctest::Approx(1.0 / 3).epsilon(1e-5));
}

TEST_CASE("softmax rows sum to one and shift-invariant") {
  Pcg32 rng(11);
  Matrix<float> m(8, 33);
  for (auto& v : m.v) v = static_cast<float>(rng.uniform(-4, 4));
  Matrix<float> s = softmax_rows(m);
  for (int i = 0; i < s.rows; ++i) {
    double sum = 0;
    for (int j = 0; j < s.cols; ++j) {
      sum += s.at(i, j);
      CHECK(s.at(i, j) >= 0.0f);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
  Matrix<float> shifted = m;
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) shifted.at(i, j) += 2.5f;
  Matrix<float> s2 = softmax_rows(shifted);
  for (size_t i = 0; i < s.v.size(); ++i)
    CHECK(s.v[i] == doctest::Approx(s2.v[i]).epsilon(1e-6));
}

TEST_CASE("concat stacks channels and splits back bitwise") {
  Pcg32 rng(12);
  Tensor4f a = random_tensor(1, 2, 4, 4, rng);
  Tensor4f b = random_tensor(1, 3, 4, 4, rng);
  Tensor4f cat = concat_channels(a, b);
  CHECK(cat.c == 5);
  CHECK(std::memcmp(cat.plane(0, 0), a.plane(0, 0), 16 * 4) == 0);
  CHECK(std::memcmp(cat.plane(0, 2), b.plane(0, 0), 16 * 4) == 0);

  Tensor4f ga, gb;
  split_channels(cat, 2, ga, gb);
  CHECK(std::memcmp(ga.data(), a.data(), a.size() * 4) == 0);
  CHECK(std::memcmp(gb.data(), b.data(), b.size() * 4) == 0);

  Tensor4f mismatched(1, 2, 5, 4);
  CHECK_THROWS_AS(concat_channels(a, mismatched), ValueError);
}
