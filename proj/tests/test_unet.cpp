#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "istd/unet.hpp"

using namespace istd;

namespace {

ModelConfig tiny_model_config(HintMode mode, uint64_t seed) {
  ModelConfig cfg;
  cfg.hint.k = 3;
  cfg.hint.c_base = 8;
  cfg.hint.mode = mode;
  cfg.unet.levels = 3;
  cfg.unet.base_width = 8;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("tiny unet parameter count matches the analytic sum") {
  // levels 3, width 8, in 8: per-stage conv(w/b) + bn(gamma/beta) totals,
  // summed by hand once and frozen:
  //   enc1 1200, enc2 3552, enc3 14016, dec2 9312, dec1 2352, head 9
  UNetConfig cfg;
  cfg.levels = 3;
  cfg.base_width = 8;
  cfg.in_channels = 8;
  UNet<float> net(cfg);
  ParamStore<float> ps;
  net.register_into(ps);
  CHECK(ps.param_count() == 30441);
}

TEST_CASE("width cap holds at deep levels") {
  UNetConfig cfg;
  cfg.levels = 7;
  cfg.base_width = 32;
  CHECK(cfg.width_at(1) == 32);
  CHECK(cfg.width_at(5) == 512);
  CHECK(cfg.width_at(6) == 512);
  CHECK(cfg.width_at(7) == 512);
}

TEST_CASE("same seed gives bitwise-identical parameters, seeds differ") {
  Model<float> a(tiny_model_config(HintMode::kHintU, 5));
  Model<float> b(tiny_model_config(HintMode::kHintU, 5));
  Model<float> c(tiny_model_config(HintMode::kHintU, 6));
  REQUIRE(a.params().params.size() == b.params().params.size());
  for (size_t i = 0; i < a.params().params.size(); ++i) {
    const auto& pa = *a.params().params[i].value;
    const auto& pb = *b.params().params[i].value;
    CHECK(std::memcmp(pa.data(), pb.data(), pa.size() * 4) == 0);
  }
  bool any_diff = false;
  for (size_t i = 0; i < a.params().params.size() && !any_diff; ++i) {
    const auto& pa = *a.params().params[i].value;
    const auto& pc = *c.params().params[i].value;
    any_diff = std::memcmp(pa.data(), pc.data(), pa.size() * 4) != 0;
  }
  CHECK(any_diff);
}

TEST_CASE("forward contract: shape, range, eval determinism") {
  Model<float> model(tiny_model_config(HintMode::kHintU, 7));
  Pcg32 rng(8);
  Tensor4f img(2, 1, 64, 64);
  for (auto& v : img.v) v = static_cast<float>(rng.next_double());
  Tensor4f y = model.forward(img, Mode::kEval);
  CHECK(y.n == 2);
  CHECK(y.c == 1);
  CHECK(y.h == 64);
  CHECK(y.w == 64);
  for (float v : y.v) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }
  Tensor4f y2 = model.forward(img, Mode::kEval);
  CHECK(std::memcmp(y.data(), y2.data(), y.size() * 4) == 0);
}

TEST_CASE("indivisible input dims are rejected with the required multiple") {
  Model<float> model(tiny_model_config(HintMode::kOff, 9));
  Tensor4f img(1, 1, 66, 64);
  CHECK_THROWS_WITH_AS(model.forward(img, Mode::kEval),
                       doctest::Contains("2^(levels-1) = 4"), ValueError);
}

TEST_CASE("off mode equals the unet on the widened image bitwise") {
  Model<float> model(tiny_model_config(HintMode::kOff, 10));
  Pcg32 rng(11);
  Tensor4f img(1, 1, 32, 32);
  for (auto& v : img.v) v = static_cast<float>(rng.next_double());
  Tensor4f full = model.forward(img, Mode::kEval);
  Tensor4f widened = model.hint()->forward(img, Mode::kEval);
  Tensor4f direct = model.unet().forward(widened, Mode::kEval);
  CHECK(std::memcmp(full.data(), direct.data(), full.size() * 4) == 0);
}

TEST_CASE("raw baseline consumes the image directly") {
  ModelConfig cfg = tiny_model_config(HintMode::kOff, 12);
  cfg.raw_baseline = true;
  Model<float> model(cfg);
  CHECK(model.hint() == nullptr);
  CHECK(model.config().unet.in_channels == 1);
  Tensor4f img(1, 1, 16, 16);
  img.fill(0.4f);
  Tensor4f y = model.forward(img, Mode::kEval);
  CHECK(y.h == 16);
}

TEST_CASE("duplicating a batch item duplicates its output in eval mode") {
  Model<float> model(tiny_model_config(HintMode::kHintU, 13));
  Pcg32 rng(14);
  Tensor4f one(1, 1, 16, 16);
  for (auto& v : one.v) v = static_cast<float>(rng.next_double());
  Tensor4f two(2, 1, 16, 16);
  std::copy_n(one.data(), one.size(), two.plane(0, 0));
  std::copy_n(one.data(), one.size(), two.plane(1, 0));
  Tensor4f y1 = model.forward(one, Mode::kEval);
  Tensor4f y2 = model.forward(two, Mode::kEval);
  for (size_t i = 0; i < y1.size(); ++i) {
    CHECK(std::abs(y1.v[i] - y2.plane(0, 0)[i]) < 1e-5f);
    CHECK(std::abs(y1.v[i] - y2.plane(1, 0)[i]) < 1e-5f);
  }
}
