// istd: synthetic-scene generation, training, evaluation and verification
// for small-target segmentation on infrared-style imagery.

#include <CLI11.hpp>

#include <cstdio>
#include <string>
#include <vector>

#include "istd/checkpoint.hpp"
#include "istd/data.hpp"
#include "istd/eval.hpp"
#include "istd/gradsuite.hpp"
#include "istd/hint.hpp"
#include "istd/image_io.hpp"
#include "istd/parallel.hpp"
#include "istd/train.hpp"
#include "istd/unet.hpp"

using namespace istd;

namespace {

using KV = std::vector<std::pair<std::string, std::string>>;

void print_config(const KV& kv) {
  std::printf("resolved config:\n");
  for (const auto& [k, v] : kv) std::printf("  %s = %s\n", k.c_str(), v.c_str());
  std::fflush(stdout);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

// ------------------------------------------------------------- model flags

struct ModelFlags {
  std::string mode = "hintu";
  std::string preset = "paper";
  int levels = -1, width = -1, cbase = -1, k = -1, max_tokens = -1;
  bool raw_baseline = false, scale_cbase = false, hinto_strict = false;
};

void add_model_flags(CLI::App* sub, ModelFlags& mf) {
  sub->add_option("--mode", mf.mode, "hint mode: hintu|hinto|off")
      ->check(CLI::IsMember({"hintu", "hinto", "off"}));
  sub->add_option("--preset", mf.preset, "model preset: paper|tiny")
      ->check(CLI::IsMember({"paper", "tiny"}));
  sub->add_option("--levels", mf.levels, "UNet encoder levels");
  sub->add_option("--width", mf.width, "UNet base width");
  sub->add_option("--cbase", mf.cbase, "hint embedding width c_base");
  sub->add_option("--k", mf.k, "hint residual window size (odd)");
  sub->add_option("--max-tokens", mf.max_tokens, "attention token cap");
  sub->add_flag("--raw-baseline", mf.raw_baseline,
                "plain UNet on the raw image (no widening)");
  sub->add_flag("--scale-cbase", mf.scale_cbase,
                "attention scale sqrt(c_base) instead of sqrt(c_i)");
  sub->add_flag("--hinto-strict", mf.hinto_strict,
                "HintO variant that also drops the image from fusion");
}

ModelConfig resolve_model_config(const ModelFlags& mf, uint64_t seed) {
  ModelConfig cfg;
  if (mf.preset == "tiny") {
    cfg.unet.levels = 3;
    cfg.unet.base_width = 8;
    cfg.hint.c_base = 8;
  } else {
    cfg.unet.levels = 5;
    cfg.unet.base_width = 32;
    cfg.hint.c_base = 32;
  }
  cfg.hint.mode = hint_mode_from_string(mf.mode);
  if (mf.levels > 0) cfg.unet.levels = mf.levels;
  if (mf.width > 0) cfg.unet.base_width = mf.width;
  if (mf.cbase > 0) cfg.hint.c_base = mf.cbase;
  if (mf.k > 0) cfg.hint.k = mf.k;
  if (mf.max_tokens > 0) cfg.hint.max_tokens = mf.max_tokens;
  cfg.hint.scale_by_c_base = mf.scale_cbase;
  cfg.hint.hinto_strict = mf.hinto_strict;
  cfg.raw_baseline = mf.raw_baseline;
  cfg.seed = seed;
  return cfg;
}

KV model_config_kv(const ModelConfig& cfg) {
  return {
      {"mode", to_string(cfg.hint.mode)},
      {"k", std::to_string(cfg.hint.k)},
      {"ci", std::to_string(cfg.hint.in_channels)},
      {"cbase", std::to_string(cfg.hint.c_base)},
      {"max_tokens", std::to_string(cfg.hint.max_tokens)},
      {"scale_by_c_base", cfg.hint.scale_by_c_base ? "1" : "0"},
      {"hinto_strict", cfg.hint.hinto_strict ? "1" : "0"},
      {"raw_baseline", cfg.raw_baseline ? "1" : "0"},
      {"levels", std::to_string(cfg.unet.levels)},
      {"width", std::to_string(cfg.unet.base_width)},
      {"model_seed", std::to_string(cfg.seed)},
  };
}

ModelConfig model_config_from_blob(
    const std::map<std::string, std::string>& kv) {
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end())
      throw IoError("checkpoint: config blob is missing key '" + key + "'");
    return it->second;
  };
  ModelConfig cfg;
  cfg.hint.mode = hint_mode_from_string(need("mode"));
  cfg.hint.k = std::stoi(need("k"));
  cfg.hint.in_channels = std::stoi(need("ci"));
  cfg.hint.c_base = std::stoi(need("cbase"));
  cfg.hint.max_tokens = std::stoi(need("max_tokens"));
  cfg.hint.scale_by_c_base = need("scale_by_c_base") == "1";
  cfg.hint.hinto_strict = need("hinto_strict") == "1";
  cfg.raw_baseline = need("raw_baseline") == "1";
  cfg.unet.levels = std::stoi(need("levels"));
  cfg.unet.base_width = std::stoi(need("width"));
  cfg.seed = std::stoull(need("model_seed"));
  return cfg;
}

std::string blob_from_kv(const KV& kv) {
  std::string blob;
  for (const auto& [k, v] : kv) blob += k + "=" + v + "\n";
  return blob;
}

struct LoadedModel {
  std::unique_ptr<Model<float>> model;
  std::map<std::string, std::string> blob;
  int train_res = 256;
};

LoadedModel load_model(const std::string& ckpt_path) {
  CheckpointData data = load_checkpoint(ckpt_path);
  LoadedModel lm;
  lm.blob = parse_kv(data.config_blob);
  lm.model = std::make_unique<Model<float>>(model_config_from_blob(lm.blob));
  apply_checkpoint(data, lm.model->params(), nullptr);
  auto it = lm.blob.find("train_res");
  if (it != lm.blob.end()) lm.train_res = std::stoi(it->second);
  return lm;
}

// ------------------------------------------------------------- subcommands

int cmd_gen_data(const std::string& out_dir, int count, SceneSpec spec,
                 uint64_t seed) {
  print_config({{"out", out_dir},
                {"count", std::to_string(count)},
                {"size", std::to_string(spec.h)},
                {"min_targets", std::to_string(spec.min_targets)},
                {"max_targets", std::to_string(spec.max_targets)},
                {"sigma_min", fmt_double(spec.sigma_min)},
                {"sigma_max", fmt_double(spec.sigma_max)},
                {"contrast_min", fmt_double(spec.contrast_min)},
                {"contrast_max", fmt_double(spec.contrast_max)},
                {"clutter", fmt_double(spec.clutter)},
                {"max_blobs", std::to_string(spec.max_blobs)},
                {"seed", std::to_string(seed)}});
  auto manifest = generate_dataset(spec, count, out_dir, seed);
  std::printf("wrote %zu image/mask pairs under %s\n", manifest.size(),
              out_dir.c_str());
  return 0;
}

int cmd_train(const std::string& data_dir, const std::string& val_dir,
              const std::string& out_prefix, const ModelFlags& mf,
              TrainConfig tc) {
  ModelConfig mc = resolve_model_config(mf, tc.seed);
  KV kv = model_config_kv(mc);
  kv.emplace_back("train_res", std::to_string(tc.train_res));
  kv.emplace_back("epochs", std::to_string(tc.epochs));
  kv.emplace_back("batch", std::to_string(tc.batch));
  kv.emplace_back("lr_max", fmt_double(tc.lr_max));
  kv.emplace_back("lr_min", fmt_double(tc.lr_min));
  kv.emplace_back("weight_decay", fmt_double(tc.weight_decay));
  kv.emplace_back("seed", std::to_string(tc.seed));
  KV printed = kv;
  printed.emplace_back("data", data_dir);
  printed.emplace_back("val_data", val_dir.empty() ? data_dir : val_dir);
  printed.emplace_back("out", out_prefix);
  printed.emplace_back("threads", std::to_string(thread_count()));
  print_config(printed);

  auto train_set = load_dataset(data_dir + "/images", data_dir + "/masks");
  auto val_set = val_dir.empty()
                     ? train_set
                     : load_dataset(val_dir + "/images", val_dir + "/masks");

  Model<float> model(mc);
  std::printf("model parameters: %lld\n",
              static_cast<long long>(model.params().param_count()));
  AdamW<float> opt(model.params(), tc.beta1, tc.beta2, tc.adam_eps,
                   tc.weight_decay);
  TrainPaths paths;
  paths.log_csv = out_prefix + "_log.csv";
  paths.ckpt_last = out_prefix + "_last.bin";
  paths.ckpt_best = out_prefix + "_best.bin";
  paths.echo_stdout = true;
  TrainResult result =
      train_loop(model, opt, train_set, val_set, tc, paths, blob_from_kv(kv));
  std::printf("done: final_loss=%.6g best_val_iou=%.4f (epoch %d)\n",
              result.final_train_loss, result.best_val_iou,
              result.best_epoch);
  return 0;
}

int cmd_eval(const std::string& data_dir, const std::string& ckpt,
             double threshold, const std::string& out_csv,
             const std::string& pd_match, double pd_dist, int infer_res) {
  print_config({{"data", data_dir},
                {"ckpt", ckpt},
                {"threshold", fmt_double(threshold)},
                {"out", out_csv},
                {"pd_match", pd_match},
                {"pd_dist", fmt_double(pd_dist)}});
  LoadedModel lm = load_model(ckpt);
  auto dataset = load_dataset(data_dir + "/images", data_dir + "/masks");
  EvalOptions opts;
  opts.threshold = threshold;
  opts.infer_res = infer_res > 0 ? infer_res : lm.train_res;
  opts.pd_match =
      pd_match == "centroid" ? PdMatch::kCentroid : PdMatch::kOverlap;
  opts.pd_dist = pd_dist;
  EvalReport rep = evaluate_dataset(model_predictor(*lm.model), dataset, opts);
  if (!out_csv.empty()) write_report_csv(out_csv, rep);
  std::printf("images=%d IoU=%.6f nIoU=%.6f Fa=%.4f(x1e-6) Pd=%.6f\n",
              rep.n_images, rep.iou, rep.niou, rep.fa * 1e6, rep.pd);
  return 0;
}

int cmd_infer(const std::string& image_path, const std::string& ckpt,
              const std::string& out_prefix, double threshold) {
  print_config({{"image", image_path},
                {"ckpt", ckpt},
                {"out", out_prefix},
                {"threshold", fmt_double(threshold)}});
  LoadedModel lm = load_model(ckpt);
  GrayImage raw = read_gray_image(image_path);
  SamplePair sp;
  sp.id = image_path;
  sp.native_h = raw.h;
  sp.native_w = raw.w;
  sp.image = Tensor4f(1, 1, raw.h, raw.w);
  float inv = 1.0f / static_cast<float>(raw.max_value);
  for (size_t i = 0; i < raw.v.size(); ++i)
    sp.image.v[i] = static_cast<float>(raw.v[i]) * inv;
  Tensor4f prob =
      predict_native(model_predictor(*lm.model), sp, lm.train_res);
  save_gray_png(out_prefix + "_prob.png", prob.data(), prob.h, prob.w);
  BinaryMask mask = binarize(prob, threshold);
  std::vector<float> mk(mask.v.size());
  for (size_t i = 0; i < mk.size(); ++i) mk[i] = mask.v[i] ? 1.0f : 0.0f;
  save_gray_png(out_prefix + "_mask.png", mk.data(), mask.h, mask.w);
  std::printf("wrote %s_prob.png and %s_mask.png (%lld foreground px)\n",
              out_prefix.c_str(), out_prefix.c_str(),
              static_cast<long long>(mask.foreground()));
  return 0;
}

int cmd_hint_viz(const std::string& image_path, int k,
                 const std::string& out_prefix) {
  print_config({{"image", image_path},
                {"k", std::to_string(k)},
                {"out", out_prefix}});
  GrayImage raw = read_gray_image(image_path);
  Tensor4f img(1, 1, raw.h, raw.w);
  float inv = 1.0f / static_cast<float>(raw.max_value);
  for (size_t i = 0; i < raw.v.size(); ++i)
    img.v[i] = static_cast<float>(raw.v[i]) * inv;
  Tensor4f prior = hint_prior(img, k);
  save_normalized_png(out_prefix + "_mean_residual.png", prior.plane(0, 0),
                      raw.h, raw.w);
  save_normalized_png(out_prefix + "_max_residual.png", prior.plane(0, 1),
                      raw.h, raw.w);
  std::printf("wrote %s_mean_residual.png and %s_max_residual.png\n",
              out_prefix.c_str(), out_prefix.c_str());
  return 0;
}

int cmd_stats(const std::string& data_dir, double high_fraction,
              const std::string& out_csv) {
  print_config({{"data", data_dir},
                {"high_fraction", fmt_double(high_fraction)},
                {"out", out_csv}});
  auto dataset = load_dataset(data_dir + "/images", data_dir + "/masks");
  DatasetStats stats = compute_stats(dataset, high_fraction);
  write_stats_csv(out_csv, stats);
  std::printf("wrote %s (%d frames)\n", out_csv.c_str(),
              static_cast<int>(dataset.size()));
  return 0;
}

int cmd_curve(const std::string& data_dir, const std::string& ckpt,
              double t_min, double t_max, double t_step,
              const std::string& out_csv) {
  print_config({{"data", data_dir},
                {"ckpt", ckpt},
                {"t_min", fmt_double(t_min)},
                {"t_max", fmt_double(t_max)},
                {"t_step", fmt_double(t_step)},
                {"out", out_csv}});
  if (t_step <= 0 || t_max < t_min)
    throw ValueError("curve: need t_min <= t_max and t_step > 0");
  std::vector<double> thresholds;
  for (double t = t_min; t <= t_max + 1e-12; t += t_step)
    thresholds.push_back(t);
  LoadedModel lm = load_model(ckpt);
  auto dataset = load_dataset(data_dir + "/images", data_dir + "/masks");
  EvalOptions opts;
  opts.infer_res = lm.train_res;
  auto points =
      pd_fa_curve(model_predictor(*lm.model), dataset, thresholds, opts);
  write_curve_csv(out_csv, points);
  std::printf("wrote %s (%zu thresholds)\n", out_csv.c_str(), points.size());
  return 0;
}

int cmd_gradcheck(int64_t probes) {
  print_config({{"probes", std::to_string(probes)}});
  auto checks = run_gradient_suite(probes);
  bool all_ok = true;
  for (const auto& c : checks) {
    std::printf("[%s] %-32s %s%s\n", c.ok() ? "ok" : "FAIL", c.name.c_str(),
                c.result.summary().c_str(),
                c.expect_fail ? " (negative control)" : "");
    all_ok = all_ok && c.ok();
  }
  if (!all_ok) throw ValueError("gradient suite failed");
  std::printf("gradient suite: %zu checks passed\n", checks.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"small-target segmentation toolkit"};
  app.require_subcommand(1);

  int threads = 1;
  app.add_option("--threads", threads,
                 "worker cap for internal parallelism (1 = fully "
                 "deterministic reference order)")
      ->capture_default_str();

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  std::string gen_out = "data";
  int gen_count = 16, gen_size = 64;
  uint64_t gen_seed = 0;
  SceneSpec gen_spec;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--count", gen_count, "number of image/mask pairs");
  gen->add_option("--size", gen_size, "square frame size");
  gen->add_option("--min-targets", gen_spec.min_targets, "min targets/frame");
  gen->add_option("--max-targets", gen_spec.max_targets, "max targets/frame");
  gen->add_option("--sigma-min", gen_spec.sigma_min, "min target sigma (px)");
  gen->add_option("--sigma-max", gen_spec.sigma_max, "max target sigma (px)");
  gen->add_option("--contrast-min", gen_spec.contrast_min, "min contrast");
  gen->add_option("--contrast-max", gen_spec.contrast_max, "max contrast");
  gen->add_option("--clutter", gen_spec.clutter, "value-noise amplitude");
  gen->add_option("--max-blobs", gen_spec.max_blobs, "max background blobs");
  gen->add_option("--seed", gen_seed, "master seed");
  gen->set_config("--config");

  // train
  auto* train = app.add_subcommand("train", "train a model");
  std::string train_data, train_val, train_out = "run";
  ModelFlags train_mf;
  TrainConfig tc;
  tc.train_res = 256;
  train->add_option("--data", train_data, "dataset root (images/ masks/)")
      ->required();
  train->add_option("--val-data", train_val,
                    "validation root (defaults to --data)");
  train->add_option("--out", train_out, "output prefix");
  add_model_flags(train, train_mf);
  train->add_option("--epochs", tc.epochs, "epochs");
  train->add_option("--batch", tc.batch, "batch size");
  train->add_option("--lr-max", tc.lr_max, "peak learning rate");
  train->add_option("--lr-min", tc.lr_min, "final learning rate");
  train->add_option("--train-res", tc.train_res, "square train resolution");
  train->add_option("--weight-decay", tc.weight_decay, "AdamW weight decay");
  train->add_option("--val-interval", tc.val_interval,
                    "epochs between validation passes");
  train->add_option("--threshold", tc.threshold, "val binarize threshold");
  train->add_option("--seed", tc.seed, "seed (init + shuffling)");
  train->set_config("--config");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_data, eval_ckpt, eval_out = "report.csv";
  std::string eval_match = "overlap";
  double eval_thr = 0.5, eval_dist = 3.0;
  int eval_res = 0;
  eval->add_option("--data", eval_data, "dataset root")->required();
  eval->add_option("--ckpt", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--threshold", eval_thr, "binarize threshold");
  eval->add_option("--out", eval_out, "report CSV path");
  eval->add_option("--pd-match", eval_match, "overlap|centroid")
      ->check(CLI::IsMember({"overlap", "centroid"}));
  eval->add_option("--pd-dist", eval_dist, "centroid match distance (px)");
  eval->add_option("--infer-res", eval_res,
                   "inference resolution (default: checkpoint train_res)");
  eval->set_config("--config");

  // infer
  auto* infer = app.add_subcommand("infer", "run a checkpoint on one image");
  std::string infer_image, infer_ckpt, infer_out = "infer";
  double infer_thr = 0.5;
  infer->add_option("--image", infer_image, "input image")->required();
  infer->add_option("--ckpt", infer_ckpt, "checkpoint file")->required();
  infer->add_option("--out", infer_out, "output prefix");
  infer->add_option("--threshold", infer_thr, "mask threshold");
  infer->set_config("--config");

  // hint-viz
  auto* viz = app.add_subcommand(
      "hint-viz", "write the two residual channels as images");
  std::string viz_image, viz_out = "hint";
  int viz_k = 3;
  viz->add_option("--image", viz_image, "input image")->required();
  viz->add_option("--k", viz_k, "window size (odd)");
  viz->add_option("--out", viz_out, "output prefix");
  viz->set_config("--config");

  // stats
  auto* stats = app.add_subcommand("stats", "dataset statistics CSV");
  std::string stats_data, stats_out = "stats.csv";
  double stats_frac = 0.95;
  stats->add_option("--data", stats_data, "dataset root")->required();
  stats->add_option("--high-fraction", stats_frac,
                    "high-response cutoff as a fraction of the frame max");
  stats->add_option("--out", stats_out, "stats CSV path");
  stats->set_config("--config");

  // curve
  auto* curve = app.add_subcommand("curve", "Pd/Fa threshold sweep CSV");
  std::string curve_data, curve_ckpt, curve_out = "curve.csv";
  double curve_min = 0.05, curve_max = 0.95, curve_step = 0.05;
  curve->add_option("--data", curve_data, "dataset root")->required();
  curve->add_option("--ckpt", curve_ckpt, "checkpoint file")->required();
  curve->add_option("--t-min", curve_min, "first threshold");
  curve->add_option("--t-max", curve_max, "last threshold");
  curve->add_option("--t-step", curve_step, "threshold step");
  curve->add_option("--out", curve_out, "curve CSV path");
  curve->set_config("--config");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference suite");
  int64_t gc_probes = 4096;
  bool gc_quick = false;
  gc->add_option("--probes", gc_probes, "probe cap for the model checks");
  gc->add_flag("--quick", gc_quick, "probe cap 512");
  gc->set_config("--config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    std::fprintf(stderr, "%s", app.help().c_str());
    return 1;
  }

  set_thread_count(threads);
  try {
    if (*gen) {
      gen_spec.h = gen_spec.w = gen_size;
      return cmd_gen_data(gen_out, gen_count, gen_spec, gen_seed);
    }
    if (*train) return cmd_train(train_data, train_val, train_out, train_mf, tc);
    if (*eval)
      return cmd_eval(eval_data, eval_ckpt, eval_thr, eval_out, eval_match,
                      eval_dist, eval_res);
    if (*infer) return cmd_infer(infer_image, infer_ckpt, infer_out, infer_thr);
    if (*viz) return cmd_hint_viz(viz_image, viz_k, viz_out);
    if (*stats) return cmd_stats(stats_data, stats_frac, stats_out);
    if (*curve)
      return cmd_curve(curve_data, curve_ckpt, curve_min, curve_max,
                       curve_step, curve_out);
    if (*gc) return cmd_gradcheck(gc_quick ? 512 : gc_probes);
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 2;
  } catch (const ValueError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
