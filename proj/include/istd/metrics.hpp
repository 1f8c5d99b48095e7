#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "istd/tensor.hpp"

namespace istd {

struct BinaryMask {
  int h = 0, w = 0;
  std::vector<uint8_t> v;

  BinaryMask() = default;
  BinaryMask(int h_, int w_)
      : h(h_), w(w_), v(static_cast<size_t>(h_) * w_, 0) {}

  bool at(int y, int x) const {
    return v[static_cast<size_t>(y) * w + x] != 0;
  }
  void set(int y, int x, bool on) {
    v[static_cast<size_t>(y) * w + x] = on ? 1 : 0;
  }
  int64_t foreground() const {
    int64_t s = 0;
    for (uint8_t b : v) s += b != 0;
    return s;
  }
};

struct Component {
  int label = 0;         // 1-based
  int64_t area = 0;
  int min_x = 0, min_y = 0, max_x = 0, max_y = 0;
  double cx = 0, cy = 0;  // centroid
};

// Moore (8-connectivity) partition of the foreground. Labels are assigned
// in first-seen row-major order.
struct LabeledComponents {
  int h = 0, w = 0;
  std::vector<int32_t> labels;  // 0 = background
  std::vector<Component> comps;
};

LabeledComponents label_components_moore(const BinaryMask& mask);

struct ConfusionCounts {
  int64_t tp = 0, fp = 0, fn = 0, gp = 0;  // gp = tp + fn
  int h = 0, w = 0;
};

ConfusionCounts confusion_counts(const BinaryMask& pred, const BinaryMask& gt);

enum class PdMatch { kOverlap, kCentroid };

// Detected/total ground-truth components. Overlap: a GT component is
// detected iff a predicted pixel lies inside it. Centroid: some predicted
// component centroid lies within dist of the GT centroid.
struct TargetMatch {
  int detected = 0;
  int total = 0;
};

TargetMatch match_targets(const BinaryMask& pred, const BinaryMask& gt,
                          PdMatch mode = PdMatch::kOverlap, double dist = 3.0);

struct ImageEval {
  std::string id;
  ConfusionCounts counts;
  double iou_i = 0.0;  // per-image TP/(GP+FP), 1 when GP+FP = 0
  int detected = 0, total = 0;
};

struct EvalReport {
  int n_images = 0;
  double iou = 0.0;
  double niou = 0.0;
  double fa = 0.0;      // raw ratio; times 1e6 in printed output
  double pd = 0.0;
  std::vector<ImageEval> rows;
};

// Per-threshold point of the detection/false-alarm sweep.
struct CurvePoint {
  double threshold = 0.0;
  double pd = 0.0;
  double fa = 0.0;
  int64_t tp = 0, fp = 0;
};

EvalReport aggregate_metrics(const std::vector<ImageEval>& rows);

BinaryMask binarize(const float* values, int h, int w, double threshold);
BinaryMask binarize(const Tensor4f& prob, double threshold);

void write_report_csv(const std::string& path, const EvalReport& report);
void write_curve_csv(const std::string& path,
                     const std::vector<CurvePoint>& points);

}  // namespace istd
