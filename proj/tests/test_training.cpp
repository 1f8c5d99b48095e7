#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>

#include "istd/train.hpp"

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

std::vector<SamplePair> tiny_synthetic_set(int count, int size,
                                           uint64_t seed) {
  std::vector<SamplePair> set;
  SceneSpec spec;
  spec.h = spec.w = size;
  spec.sigma_min = 0.8;
  spec.sigma_max = 1.6;
  for (int i = 0; i < count; ++i) {
    spec.seed = seed + static_cast<uint64_t>(i);
    SamplePair sp = generate_scene(spec);
    sp.id = "s" + std::to_string(i);
    set.push_back(std::move(sp));
  }
  return set;
}

}  // namespace

TEST_CASE("bce values from the definition") {
  Tensor4f half = Tensor4f::full(1, 1, 2, 2, 0.5f);
  Tensor4f y(1, 1, 2, 2);
  y.v = {0, 1, 0, 1};
  CHECK(bce_loss(half, y).first == doctest::Approx(std::log(2.0)).epsilon(1e-6));

  Tensor4f e1 = Tensor4f::full(1, 1, 1, 1, static_cast<float>(std::exp(-1.0)));
  Tensor4f ones = Tensor4f::full(1, 1, 1, 1, 1.0f);
  CHECK(bce_loss(e1, ones).first == doctest::Approx(1.0).epsilon(1e-5));

  Tensor4f zero_pred = Tensor4f::full(1, 1, 1, 1, 0.0f);
  Tensor4f zero_y = Tensor4f::full(1, 1, 1, 1, 0.0f);
  CHECK(bce_loss(zero_pred, zero_y).first ==
        doctest::Approx(0.0).epsilon(1e-6));
  CHECK(bce_loss(zero_pred, zero_y).first > 0.0);
}

TEST_CASE("bce validates inputs") {
  Tensor4f p = Tensor4f::full(1, 1, 1, 2, 0.5f);
  Tensor4f bad_y = Tensor4f::full(1, 1, 1, 2, 0.25f);
  CHECK_THROWS_AS(bce_loss(p, bad_y), ValueError);
  Tensor4f wrong(1, 1, 2, 2);
  CHECK_THROWS_AS(bce_loss(p, wrong), ValueError);
}

TEST_CASE("cosine schedule endpoints are exact, midpoint analytic") {
  TrainConfig cfg;
  cfg.lr_max = 1e-3;
  cfg.lr_min = 1e-6;
  cfg.epochs = 300;
  CHECK(cosine_lr(0, cfg) == 1e-3);
  CHECK(cosine_lr(300, cfg) == 1e-6);
  CHECK(cosine_lr(150, cfg) == doctest::Approx(5.005e-4).epsilon(1e-9));
  CHECK(cosine_lr(400, cfg) == 1e-6);  // clamped past T
  double prev = cosine_lr(0, cfg);
  for (int t = 1; t <= 300; ++t) {
    double lr = cosine_lr(t, cfg);
    CHECK(lr <= prev + 1e-15);
    prev = lr;
  }
}

TEST_CASE("adamw hand-computed single steps") {
  // case 1: zero grad, zero decay -> no change
  {
    Tensor4d p = Tensor4d::full(1, 1, 1, 1, 0.7);
    Tensor4d g(1, 1, 1, 1);
    ParamStore<double> ps;
    ps.add_param("p", &p, &g);
    AdamW<double> opt(ps, 0.9, 0.999, 1e-8, 0.0);
    opt.step(0.1);
    CHECK(p.v[0] == doctest::Approx(0.7).epsilon(1e-12));
  }
  // case 2: theta=0, g=1, lr=0.1, wd=0 -> theta = -0.1/(1+1e-8)
  {
    Tensor4d p(1, 1, 1, 1);
    Tensor4d g = Tensor4d::full(1, 1, 1, 1, 1.0);
    ParamStore<double> ps;
    ps.add_param("p", &p, &g);
    AdamW<double> opt(ps, 0.9, 0.999, 1e-8, 0.0);
    opt.step(0.1);
    CHECK(std::abs(p.v[0] - (-0.1 / (1.0 + 1e-8))) < 1e-12);
    CHECK(std::abs(p.v[0] - (-0.1)) <= 1e-9);
  }
  // case 3: theta=1, g=0, wd=0.01, lr=1e-3 -> decay only
  {
    Tensor4d p = Tensor4d::full(1, 1, 1, 1, 1.0);
    Tensor4d g(1, 1, 1, 1);
    ParamStore<double> ps;
    ps.add_param("p", &p, &g);
    AdamW<double> opt(ps, 0.9, 0.999, 1e-8, 0.01);
    opt.step(1e-3);
    CHECK(std::abs(p.v[0] - 0.99999) < 1e-9);
  }
}

TEST_CASE("adamw rejects non-finite gradients") {
  Tensor4f p(1, 1, 1, 1);
  Tensor4f g = Tensor4f::full(1, 1, 1, 1,
                              std::numeric_limits<float>::quiet_NaN());
  ParamStore<float> ps;
  ps.add_param("p", &p, &g);
  AdamW<float> opt(ps);
  CHECK_THROWS_WITH_AS(opt.step(1e-3), doctest::Contains("non-finite"),
                       ValueError);
}

TEST_CASE("train_loop is bitwise reproducible at a fixed seed") {
  auto data = tiny_synthetic_set(4, 32, 77);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch = 2;
  cfg.train_res = 32;
  cfg.seed = 5;
  cfg.val_interval = 3;
  auto run = [&]() {
    Model<float> model(tiny_model_config(HintMode::kHintU, cfg.seed));
    AdamW<float> opt(model.params(), cfg.beta1, cfg.beta2, cfg.adam_eps,
                     cfg.weight_decay);
    return train_loop(model, opt, data, data, cfg, TrainPaths{}, "");
  };
  TrainResult a = run(), b = run();
  REQUIRE(a.log.size() == b.log.size());
  for (size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].lr == b.log[i].lr);
    CHECK(a.log[i].train_loss == b.log[i].train_loss);
    CHECK(a.log[i].val_iou == b.log[i].val_iou);
  }
}

TEST_CASE("eight-image run: epoch-50 loss is below epoch-1 loss") {
  auto data = tiny_synthetic_set(8, 32, 99);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.batch = 8;
  cfg.train_res = 32;
  cfg.seed = 3;
  cfg.val_interval = 50;
  Model<float> model(tiny_model_config(HintMode::kOff, cfg.seed));
  AdamW<float> opt(model.params(), cfg.beta1, cfg.beta2, cfg.adam_eps,
                   cfg.weight_decay);
  TrainResult res = train_loop(model, opt, data, data, cfg, TrainPaths{}, "");
  CHECK(res.log.back().train_loss < res.log.front().train_loss);
}

TEST_CASE("single-image overfit reaches near-zero loss and perfect IoU") {
  auto data = tiny_synthetic_set(1, 64, 123);
  TrainConfig cfg;
  cfg.epochs = 2000;
  cfg.batch = 1;
  cfg.train_res = 64;
  cfg.seed = 9;
  cfg.val_interval = 2000;
  Model<float> model(tiny_model_config(HintMode::kOff, cfg.seed));
  AdamW<float> opt(model.params(), cfg.beta1, cfg.beta2, cfg.adam_eps,
                   cfg.weight_decay);
  TrainResult res = train_loop(model, opt, data, data, cfg, TrainPaths{}, "");
  CHECK(res.final_train_loss < 0.01);
  EvalOptions opts;
  opts.infer_res = 64;
  EvalReport rep = evaluate_dataset(model_predictor(model), data, opts);
  CHECK(rep.iou == 1.0);
}

TEST_CASE("checkpoint round-trips the forward bitwise") {
  auto data = tiny_synthetic_set(2, 32, 55);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch = 2;
  cfg.train_res = 32;
  cfg.seed = 6;
  cfg.val_interval = 2;
  ModelConfig mc = tiny_model_config(HintMode::kHintU, cfg.seed);
  Model<float> model(mc);
  AdamW<float> opt(model.params(), cfg.beta1, cfg.beta2, cfg.adam_eps,
                   cfg.weight_decay);
  train_loop(model, opt, data, data, cfg, TrainPaths{}, "");

  Pcg32 rng(7);
  Tensor4f img(1, 1, 32, 32);
  for (auto& v : img.v) v = static_cast<float>(rng.next_double());
  Tensor4f before = model.forward(img, Mode::kEval);

  save_checkpoint("ckpt_test.bin", model.params(), &opt, "note=test\n");
  Model<float> fresh(mc);
  AdamW<float> fresh_opt(fresh.params());
  CheckpointData loaded = load_checkpoint("ckpt_test.bin");
  CHECK(parse_kv(loaded.config_blob)["note"] == "test");
  apply_checkpoint(loaded, fresh.params(), &fresh_opt);
  CHECK(fresh_opt.step_count() == opt.step_count());
  Tensor4f after = fresh.forward(img, Mode::kEval);
  CHECK(std::memcmp(before.data(), after.data(), before.size() * 4) == 0);
  std::remove("ckpt_test.bin");
}

TEST_CASE("checkpoint header corruption yields distinct errors") {
  Tensor4f p(1, 1, 1, 1);
  Tensor4f g(1, 1, 1, 1);
  ParamStore<float> ps;
  ps.add_param("p", &p, &g);
  save_checkpoint("ckpt_hdr.bin", ps, nullptr, "x=1\n");

  auto clobber = [&](long offset, char value) {
    FILE* f = std::fopen("ckpt_hdr.bin", "rb+");
    REQUIRE(f);
    std::fseek(f, offset, SEEK_SET);
    std::fputc(value, f);
    std::fclose(f);
  };

  clobber(0, 'X');  // magic
  CHECK_THROWS_WITH_AS(load_checkpoint("ckpt_hdr.bin"),
                       doctest::Contains("bad magic"), IoError);
  clobber(0, 'H');
  clobber(4, 2);  // version
  CHECK_THROWS_WITH_AS(load_checkpoint("ckpt_hdr.bin"),
                       doctest::Contains("unsupported version"), IoError);
  clobber(4, 1);

  // truncate
  FILE* f = std::fopen("ckpt_hdr.bin", "rb");
  std::fseek(f, 0, SEEK_END);
  long size = std::ftell(f);
  std::fclose(f);
  std::filesystem::resize_file("ckpt_hdr.bin",
                               static_cast<uintmax_t>(size - 3));
  CHECK_THROWS_WITH_AS(load_checkpoint("ckpt_hdr.bin"),
                       doctest::Contains("truncated"), IoError);
  std::remove("ckpt_hdr.bin");

  CHECK_THROWS_AS(load_checkpoint("no_such_checkpoint.bin"), IoError);
}
