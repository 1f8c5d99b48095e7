#include "istd/train.hpp"

#include <cmath>
#include <cstdio>

namespace istd {

Predictor model_predictor(Model<float>& model) {
  return [&model](const Tensor4f& image) {
    return model.forward(image, Mode::kEval);
  };
}

namespace {

struct Prepared {
  Tensor4f image;  // (1,1,R,R)
  Tensor4f target; // (1,1,R,R), exact 0/1
};

Prepared prepare(const SamplePair& sp, int res) {
  Prepared p;
  p.image = resize_bilinear(sp.image, res, res);
  Tensor4f m(1, 1, sp.mask.h, sp.mask.w);
  for (size_t i = 0; i < m.v.size(); ++i)
    m.v[i] = sp.mask.v[i] ? 1.0f : 0.0f;
  m = resize_bilinear(m, res, res);
  p.target = Tensor4f(1, 1, res, res);
  for (size_t i = 0; i < p.target.v.size(); ++i)
    p.target.v[i] = m.v[i] >= 0.5f ? 1.0f : 0.0f;
  return p;
}

}  // namespace

TrainResult train_loop(Model<float>& model, AdamW<float>& opt,
                       const std::vector<SamplePair>& train_set,
                       const std::vector<SamplePair>& val_set,
                       const TrainConfig& cfg, const TrainPaths& paths,
                       const std::string& config_blob) {
  cfg.validate();
  if (train_set.empty()) throw ValueError("train: empty training set");
  if (val_set.empty()) throw ValueError("train: empty validation set");

  const int res = cfg.train_res;
  std::vector<Prepared> prepared;
  prepared.reserve(train_set.size());
  for (const auto& sp : train_set) prepared.push_back(prepare(sp, res));

  FILE* log_file = nullptr;
  if (!paths.log_csv.empty()) {
    log_file = std::fopen(paths.log_csv.c_str(), "wb");
    if (!log_file)
      throw IoError("train: cannot open log for write: " + paths.log_csv);
    std::fprintf(log_file, "epoch,lr,train_loss,val_iou\n");
  }

  Pcg32 shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  EvalOptions val_opts;
  val_opts.threshold = cfg.threshold;
  val_opts.infer_res = res;
  Predictor predictor = model_predictor(model);

  TrainResult result;
  double last_val = 0.0;
  std::vector<int> order(train_set.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr = cosine_lr(epoch, cfg);
    shuffle(order, shuffle_rng);

    double loss_sum = 0.0;
    int batches = 0;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(cfg.batch)) {
      size_t end = std::min(order.size(), start + cfg.batch);
      int bs = static_cast<int>(end - start);
      Tensor4f batch_in(bs, 1, res, res), batch_tgt(bs, 1, res, res);
      int64_t plane = static_cast<int64_t>(res) * res;
      for (int b = 0; b < bs; ++b) {
        const Prepared& p = prepared[static_cast<size_t>(order[start + b])];
        std::copy_n(p.image.data(), plane, batch_in.plane(b, 0));
        std::copy_n(p.target.data(), plane, batch_tgt.plane(b, 0));
      }
      Tensor4f pred = model.forward(batch_in, Mode::kTrain);
      auto [loss, grad] = bce_loss(pred, batch_tgt, cfg.bce_clamp);
      if (!std::isfinite(loss))
        throw ValueError("train: non-finite loss at epoch " +
                         std::to_string(epoch) + " batch " +
                         std::to_string(batches));
      model.params().zero_grads();
      model.backward(grad);
      opt.step(lr);
      loss_sum += loss;
      ++batches;
    }
    double mean_loss = loss_sum / batches;

    bool eval_now =
        epoch % cfg.val_interval == 0 || epoch == cfg.epochs - 1;
    if (eval_now) {
      EvalReport rep = evaluate_dataset(predictor, val_set, val_opts);
      last_val = rep.iou;
      if (!paths.ckpt_best.empty() && rep.iou > result.best_val_iou) {
        result.best_val_iou = rep.iou;
        result.best_epoch = epoch;
        std::string blob = config_blob + "epoch=" + std::to_string(epoch) +
                           "\nrng_state=" +
                           std::to_string(shuffle_rng.state()) +
                           "\nrng_inc=" + std::to_string(shuffle_rng.inc()) +
                           "\n";
        save_checkpoint(paths.ckpt_best, model.params(), &opt, blob);
      }
    }

    EpochLog row{epoch, lr, mean_loss, last_val};
    result.log.push_back(row);
    result.final_train_loss = mean_loss;
    if (log_file)
      std::fprintf(log_file, "%d,%.9g,%.9g,%.9g\n", row.epoch, row.lr,
                   row.train_loss, row.val_iou);
    if (paths.echo_stdout) {
      std::printf("epoch %d lr %.6g loss %.6g val_iou %.4f\n", row.epoch,
                  row.lr, row.train_loss, row.val_iou);
      std::fflush(stdout);
    }
  }

  if (log_file) std::fclose(log_file);
  if (!paths.ckpt_last.empty()) {
    std::string blob = config_blob + "epoch=" + std::to_string(cfg.epochs - 1) +
                       "\nrng_state=" + std::to_string(shuffle_rng.state()) +
                       "\nrng_inc=" + std::to_string(shuffle_rng.inc()) + "\n";
    save_checkpoint(paths.ckpt_last, model.params(), &opt, blob);
  }
  return result;
}

}  // namespace istd
