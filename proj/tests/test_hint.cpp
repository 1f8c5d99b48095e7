#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "istd/hint.hpp"
#include "istd/rng.hpp"
#include "oracles.hpp"

using namespace istd;

namespace {

Tensor4f random_image(int h, int w, Pcg32& rng) {
  Tensor4f t(1, 1, h, w);
  for (auto& v : t.v) v = static_cast<float>(rng.next_double());
  return t;
}

HintConfig tiny_config(HintMode mode) {
  HintConfig cfg;
  cfg.k = 3;
  cfg.c_base = 8;
  cfg.mode = mode;
  return cfg;
}

}  // namespace

TEST_CASE("hint_prior on a constant image is zero") {
  Tensor4f img = Tensor4f::full(1, 1, 7, 7, 0.31f);
  Tensor4f prior = hint_prior(img, 3);
  CHECK(prior.c == 2);
  for (float v : prior.v) CHECK(std::abs(v) < 1e-7f);
}

TEST_CASE("hint_prior around an isolated center peak") {
  Tensor4f img(1, 1, 3, 3);
  img.at(0, 0, 1, 1) = 1.0f;
  Tensor4f prior = hint_prior(img, 3);
  CHECK(prior.at(0, 0, 1, 1) == doctest::Approx(8.0 / 9).epsilon(1e-6));
  CHECK(prior.at(0, 1, 1, 1) == 0.0f);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x)
      if (y != 1 || x != 1) CHECK(prior.at(0, 1, y, x) == -1.0f);
}

TEST_CASE("hint_prior on the [0, 0.5, 1] row") {
  Tensor4f img(1, 1, 1, 3);
  img.v = {0.0f, 0.5f, 1.0f};
  Tensor4f prior = hint_prior(img, 3);
  CHECK(prior.at(0, 0, 0, 1) == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(prior.at(0, 1, 0, 1) == doctest::Approx(-0.5).epsilon(1e-6));
}

TEST_CASE("hint_prior equals the double-loop oracle on random images") {
  Pcg32 rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor4f img = random_image(16, 16, rng);
    Tensor4f got = hint_prior(img, 3);
    Tensor4f want = oracle::hint_prior_ref(img, 3);
    for (size_t i = 0; i < got.v.size(); ++i)
      CHECK(std::abs(got.v[i] - want.v[i]) <= 1e-6f);
  }
}

TEST_CASE("hint_prior max channel is non-positive, zero at window maxima") {
  Pcg32 rng(42);
  Tensor4f img = random_image(12, 12, rng);
  Tensor4f prior = hint_prior(img, 3);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 12; ++x) CHECK(prior.at(0, 1, y, x) <= 0.0f);
}

TEST_CASE("hint_prior shift invariance and positive homogeneity") {
  Pcg32 rng(43);
  Tensor4f img = random_image(14, 14, rng);
  Tensor4f base = hint_prior(img, 3);

  Tensor4f shifted = img;
  for (auto& v : shifted.v) v += 0.25f;
  Tensor4f prior_shift = hint_prior(shifted, 3);
  for (size_t i = 0; i < base.v.size(); ++i)
    CHECK(std::abs(base.v[i] - prior_shift.v[i]) <= 1e-6f);

  Tensor4f scaled = img;
  for (auto& v : scaled.v) v *= 1.7f;
  Tensor4f prior_scale = hint_prior(scaled, 3);
  for (size_t i = 0; i < base.v.size(); ++i)
    CHECK(std::abs(1.7f * base.v[i] - prior_scale.v[i]) <= 1e-5f);
}

TEST_CASE("hint projection keeps spatial dims and is deterministic") {
  HintModule<float> hint(tiny_config(HintMode::kHintU));
  ParamStore<float> ps;
  hint.register_into(ps);
  Pcg32 rng(44);
  hint.init(rng);
  Tensor4f img = random_image(16, 16, rng);
  Tensor4f x1 = hint.forward(img, Mode::kEval);
  CHECK(x1.n == 1);
  CHECK(x1.c == 8);
  CHECK(x1.h == 16);
  CHECK(x1.w == 16);
  CHECK(hint.last_hint().c == 8);
  CHECK(hint.last_prior().c == 2);
  Tensor4f x2 = hint.forward(img, Mode::kEval);
  CHECK(std::memcmp(x1.data(), x2.data(), x1.size() * 4) == 0);
}

TEST_CASE("single-token attention returns the projected image exactly") {
  HintConfig cfg = tiny_config(HintMode::kHintU);
  HintModule<float> hint(cfg);
  ParamStore<float> ps;
  hint.register_into(ps);
  Pcg32 rng(45);
  hint.init(rng);
  Tensor4f img(1, 1, 1, 1);
  img.v[0] = 0.73f;
  hint.forward(img, Mode::kEval);
  const Tensor4f& projected = hint.last_projected();
  const Tensor4f& attn = hint.last_attn();
  REQUIRE(projected.same_dims(attn));
  CHECK(std::memcmp(projected.data(), attn.data(), attn.size() * 4) == 0);
}

TEST_CASE("constant hint averages the projected image uniformly") {
  // constant image -> H' = 0 -> H = 0 (fresh beta), so every attention row
  // is uniform and the pre-M_h output equals the spatial mean of M_p(image)
  HintModule<float> hint(tiny_config(HintMode::kHintU));
  ParamStore<float> ps;
  hint.register_into(ps);
  Pcg32 rng(46);
  hint.init(rng);
  Tensor4f img = Tensor4f::full(1, 1, 12, 12, 0.4f);
  hint.forward(img, Mode::kEval);
  for (float v : hint.last_hint().v) CHECK(v == 0.0f);
  const Tensor4f& proj = hint.last_projected();
  const Tensor4f& attn = hint.last_attn();
  for (int ch = 0; ch < proj.c; ++ch) {
    double mean = 0;
    const float* p = proj.plane(0, ch);
    for (int i = 0; i < 144; ++i) mean += p[i];
    mean /= 144.0;
    const float* a = attn.plane(0, ch);
    for (int i = 0; i < 144; ++i)
      CHECK(std::abs(a[i] - mean) < 1e-5);
  }
}

TEST_CASE("token cap rejects oversized attention inputs") {
  HintConfig cfg = tiny_config(HintMode::kHintU);
  cfg.max_tokens = 100;
  HintModule<float> hint(cfg);
  ParamStore<float> ps;
  hint.register_into(ps);
  Pcg32 rng(47);
  hint.init(rng);
  Tensor4f img(1, 1, 16, 16);
  CHECK_THROWS_WITH_AS(hint.forward(img, Mode::kEval),
                       doctest::Contains("cap"), ValueError);
}

TEST_CASE("off mode is exactly the widened image path") {
  HintModule<float> hint(tiny_config(HintMode::kOff));
  ParamStore<float> ps;
  hint.register_into(ps);
  Pcg32 rng(48);
  hint.init(rng);
  // the Off module holds a single conv block; its registered tensors fully
  // determine the output, so a replayed block must agree bitwise
  Tensor4f img = random_image(16, 16, rng);
  Tensor4f x = hint.forward(img, Mode::kEval);

  ConvBlock<float> replay(1, 8, 3, 1);
  REQUIRE(ps.params.size() == 4u);  // conv w/b + bn gamma/beta
  replay.conv.weight = *ps.find("hint.mx.conv.weight")->value;
  replay.conv.bias = *ps.find("hint.mx.conv.bias")->value;
  replay.bn.gamma = *ps.find("hint.mx.bn.gamma")->value;
  replay.bn.beta = *ps.find("hint.mx.bn.beta")->value;
  replay.bn.running_mean = *ps.find("hint.mx.bn.running_mean")->value;
  replay.bn.running_var = *ps.find("hint.mx.bn.running_var")->value;
  Tensor4f want = replay.forward(img, Mode::kEval);
  CHECK(std::memcmp(x.data(), want.data(), x.size() * 4) == 0);
}

TEST_CASE("hintu and hinto produce different outputs on structured input") {
  Pcg32 rng(49);
  Tensor4f img = random_image(16, 16, rng);
  auto run = [&](HintMode mode) {
    HintModule<float> hint(tiny_config(mode));
    ParamStore<float> ps;
    hint.register_into(ps);
    Pcg32 init(50);
    hint.init(init);
    return hint.forward(img, Mode::kEval);
  };
  Tensor4f u = run(HintMode::kHintU);
  Tensor4f o = run(HintMode::kHintO);
  REQUIRE(u.same_dims(o));
  double worst = 0;
  for (size_t i = 0; i < u.v.size(); ++i)
    worst = std::max(worst, std::abs(double(u.v[i]) - double(o.v[i])));
  CHECK(worst > 1e-6);
}

TEST_CASE("constant image gives a spatially constant enhanced interior") {
  // H is exactly zero; zero-padded convs leave a one-pixel halo on the
  // image branch, so constancy is asserted on the interior
  HintModule<float> hint(tiny_config(HintMode::kHintU));
  ParamStore<float> ps;
  hint.register_into(ps);
  Pcg32 rng(51);
  hint.init(rng);
  Tensor4f img = Tensor4f::full(1, 1, 16, 16, 0.6f);
  Tensor4f x = hint.forward(img, Mode::kEval);
  for (float v : hint.last_prior().v) CHECK(v == 0.0f);
  for (float v : hint.last_hint().v) CHECK(v == 0.0f);
  for (int ch = 0; ch < x.c; ++ch) {
    float ref = x.at(0, ch, 8, 8);
    for (int y = 1; y < 15; ++y)
      for (int xx = 1; xx < 15; ++xx)
        CHECK(std::abs(x.at(0, ch, y, xx) - ref) < 1e-5f);
  }
}

TEST_CASE("hinto strict drops the image branch from fusion") {
  HintConfig cfg = tiny_config(HintMode::kHintO);
  cfg.hinto_strict = true;
  HintModule<float> hint(cfg);
  ParamStore<float> ps;
  hint.register_into(ps);
  CHECK(ps.find("hint.mx.conv.weight") == nullptr);
  Pcg32 rng(52);
  hint.init(rng);
  Tensor4f img = random_image(12, 12, rng);
  Tensor4f x = hint.forward(img, Mode::kEval);
  CHECK(x.c == 8);
}
