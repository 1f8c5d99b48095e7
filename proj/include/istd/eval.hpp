#pragma once

#include <functional>

#include "istd/data.hpp"
#include "istd/metrics.hpp"

namespace istd {

// Maps a (1,1,R,R) image at inference resolution to a (1,1,R,R) probability
// map. Decoupled from the model type so tests can plug in oracle predictors.
using Predictor = std::function<Tensor4f(const Tensor4f&)>;

struct EvalOptions {
  double threshold = 0.5;
  int infer_res = 256;  // images resize to this square resolution
  PdMatch pd_match = PdMatch::kOverlap;
  double pd_dist = 3.0;
};

// Per-sample probability map resized back to the native ground-truth dims.
Tensor4f predict_native(const Predictor& predict, const SamplePair& sample,
                        int infer_res);

ImageEval evaluate_sample(const Tensor4f& prob_native,
                          const SamplePair& sample, double threshold,
                          PdMatch pd_match, double pd_dist);

EvalReport evaluate_dataset(const Predictor& predict,
                            const std::vector<SamplePair>& dataset,
                            const EvalOptions& opts);

// One prediction pass, then per-threshold aggregation. Thresholds must be
// sorted ascending.
std::vector<CurvePoint> pd_fa_curve(const Predictor& predict,
                                    const std::vector<SamplePair>& dataset,
                                    const std::vector<double>& thresholds,
                                    const EvalOptions& opts);

}  // namespace istd
