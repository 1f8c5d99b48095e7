#include "istd/eval.hpp"

#include "istd/layers.hpp"

namespace istd {

Tensor4f predict_native(const Predictor& predict, const SamplePair& sample,
                        int infer_res) {
  Tensor4f in = resize_bilinear(sample.image, infer_res, infer_res);
  Tensor4f prob = predict(in);
  if (prob.n != 1 || prob.c != 1)
    throw ValueError("eval: predictor must return a (1,1,h,w) map, got " +
                     prob.dims_str());
  return resize_bilinear(prob, sample.native_h, sample.native_w);
}

ImageEval evaluate_sample(const Tensor4f& prob_native,
                          const SamplePair& sample, double threshold,
                          PdMatch pd_match, double pd_dist) {
  BinaryMask pred = binarize(prob_native, threshold);
  ImageEval row;
  row.id = sample.id;
  row.counts = confusion_counts(pred, sample.mask);
  int64_t denom = row.counts.gp + row.counts.fp;
  // nothing to find and nothing claimed counts as a perfect image
  row.iou_i = denom > 0 ? static_cast<double>(row.counts.tp) / denom : 1.0;
  TargetMatch match = match_targets(pred, sample.mask, pd_match, pd_dist);
  row.detected = match.detected;
  row.total = match.total;
  return row;
}

EvalReport evaluate_dataset(const Predictor& predict,
                            const std::vector<SamplePair>& dataset,
                            const EvalOptions& opts) {
  if (dataset.empty()) throw ValueError("eval: empty dataset");
  std::vector<ImageEval> rows;
  rows.reserve(dataset.size());
  for (const auto& sample : dataset) {
    Tensor4f prob = predict_native(predict, sample, opts.infer_res);
    rows.push_back(evaluate_sample(prob, sample, opts.threshold,
                                   opts.pd_match, opts.pd_dist));
  }
  return aggregate_metrics(rows);
}

std::vector<CurvePoint> pd_fa_curve(const Predictor& predict,
                                    const std::vector<SamplePair>& dataset,
                                    const std::vector<double>& thresholds,
                                    const EvalOptions& opts) {
  if (thresholds.empty()) throw ValueError("curve: empty threshold list");
  for (size_t i = 1; i < thresholds.size(); ++i)
    if (thresholds[i] < thresholds[i - 1])
      throw ValueError("curve: thresholds must be sorted ascending");
  if (dataset.empty()) throw ValueError("curve: empty dataset");

  // cache probabilities once
  std::vector<Tensor4f> probs;
  probs.reserve(dataset.size());
  for (const auto& sample : dataset)
    probs.push_back(predict_native(predict, sample, opts.infer_res));

  std::vector<CurvePoint> points;
  points.reserve(thresholds.size());
  for (double thr : thresholds) {
    std::vector<ImageEval> rows;
    rows.reserve(dataset.size());
    for (size_t i = 0; i < dataset.size(); ++i)
      rows.push_back(evaluate_sample(probs[i], dataset[i], thr,
                                     opts.pd_match, opts.pd_dist));
    EvalReport rep = aggregate_metrics(rows);
    CurvePoint p;
    p.threshold = thr;
    p.pd = rep.pd;
    p.fa = rep.fa;
    for (const auto& row : rep.rows) {
      p.tp += row.counts.tp;
      p.fp += row.counts.fp;
    }
    points.push_back(p);
  }
  return points;
}

}  // namespace istd
