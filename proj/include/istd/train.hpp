#pragma once

#include <string>
#include <vector>

#include "istd/checkpoint.hpp"
#include "istd/data.hpp"
#include "istd/eval.hpp"
#include "istd/optim.hpp"
#include "istd/unet.hpp"

namespace istd {

struct EpochLog {
  int epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double val_iou = 0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  double best_val_iou = -1.0;
  int best_epoch = -1;
  double final_train_loss = 0.0;
};

struct TrainPaths {
  std::string log_csv;    // empty: no log file
  std::string ckpt_last;  // empty: no checkpoint
  std::string ckpt_best;
  bool echo_stdout = false;
};

// Seeded shuffling, fixed batches (last partial batch kept), per-epoch
// cosine learning rate, BCE + AdamW. Images/masks are standardized to the
// square train resolution up front; masks re-binarize at 0.5 after the
// resize. Validation IoU is computed every val_interval epochs and on the
// final epoch; other rows repeat the last value.
TrainResult train_loop(Model<float>& model, AdamW<float>& opt,
                       const std::vector<SamplePair>& train_set,
                       const std::vector<SamplePair>& val_set,
                       const TrainConfig& cfg, const TrainPaths& paths,
                       const std::string& config_blob);

// Model-backed predictor for the evaluation pipeline (eval mode forward).
Predictor model_predictor(Model<float>& model);

}  // namespace istd
