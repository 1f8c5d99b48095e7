#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "istd/gradsuite.hpp"
#include "istd/optim.hpp"
#include "istd/rng.hpp"

using namespace istd;

TEST_CASE("gradient suite: every layer, the hint stack and the tiny model") {
  auto checks = run_gradient_suite(512);
  for (const auto& c : checks) {
    INFO(c.name, ": ", c.result.summary());
    CHECK(c.ok());
  }
}

TEST_CASE("grad_check aborts on non-finite values") {
  GradCheckProblem p;
  Tensor4d x(1, 1, 1, 2), g(1, 1, 1, 2);
  x.v = {1.0, 2.0};
  p.forward = [&]() { return x.v[0] / 0.0; };
  p.backward = [&]() {};
  p.slots.push_back({"x", &x, &g});
  CHECK_THROWS_AS(grad_check(p), ValueError);
}

TEST_CASE("bce gradient matches finite differences away from the clamp") {
  Pcg32 rng(33);
  Tensor4d pred(1, 1, 4, 4), target(1, 1, 4, 4);
  for (auto& v : pred.v) v = rng.uniform(0.05, 0.95);
  for (auto& v : target.v) v = rng.next_double() < 0.3 ? 1.0 : 0.0;
  auto [loss, grad] = bce_loss(pred, target);
  CHECK(loss >= 0.0);
  const double h = 1e-7;
  for (size_t i = 0; i < pred.v.size(); ++i) {
    double saved = pred.v[i];
    pred.v[i] = saved + h;
    double lp = bce_loss(pred, target).first;
    pred.v[i] = saved - h;
    double lm = bce_loss(pred, target).first;
    pred.v[i] = saved;
    double numeric = (lp - lm) / (2 * h);
    CHECK(std::abs(numeric - grad.v[i]) < 1e-6);
  }
}
