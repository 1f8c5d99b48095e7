#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "istd/metrics.hpp"
#include "istd/tensor.hpp"

namespace istd {

// One image/mask pair, intensities normalized to [0,1].
struct SamplePair {
  Tensor4f image;   // (1, 1, h, w)
  BinaryMask mask;
  int native_h = 0, native_w = 0;
  std::string id;
};

// Loads `<images_dir>/*.png|pgm` with masks matched by file stem in
// masks_dir. Deterministic lexicographic order; a missing mask is a hard
// error. Masks binarize at half of the sample maximum (128 for 8-bit).
std::vector<SamplePair> load_dataset(const std::string& images_dir,
                                     const std::string& masks_dir);

// Synthetic infrared scene: gradient + coarse value noise + dim blobs
// background with small Gaussian targets. Fully determined by the seed.
struct SceneSpec {
  int h = 64, w = 64;
  int min_targets = 1, max_targets = 3;
  double sigma_min = 0.5, sigma_max = 2.0;
  double contrast_min = 0.15, contrast_max = 0.40;
  double clutter = 0.15;   // value-noise amplitude
  int max_blobs = 3;       // large dim background blobs
  uint64_t seed = 0;

  void validate() const;
};

struct SceneTruth {
  int target_count = 0;
  std::vector<int> target_areas;
};

SamplePair generate_scene(const SceneSpec& spec, SceneTruth* truth = nullptr);

struct ManifestRow {
  std::string stem;
  int target_count = 0;
  std::vector<int> target_areas;
};

// Writes <out_dir>/images/*.png, <out_dir>/masks/*.png and a manifest CSV.
// Image i uses seed master_seed + i.
std::vector<ManifestRow> generate_dataset(const SceneSpec& spec_template,
                                          int count,
                                          const std::string& out_dir,
                                          uint64_t master_seed);

struct HistogramBin {
  double lo = 0, hi = 0, mass = 0;
};

struct DatasetStats {
  std::vector<HistogramBin> high_response;     // per-frame bright-pixel ratio
  std::vector<HistogramBin> target_ratio;      // per-target pixels / frame pixels
  std::vector<HistogramBin> targets_per_frame;
};

DatasetStats compute_stats(const std::vector<SamplePair>& dataset,
                           double high_response_fraction = 0.95);

void write_stats_csv(const std::string& path, const DatasetStats& stats);

// Float [0,1] plane to an 8-bit grayscale PNG.
void save_gray_png(const std::string& path, const float* values, int h, int w);

// Min-max normalizes a plane and writes it (visualization output).
void save_normalized_png(const std::string& path, const float* values, int h,
                         int w);

}  // namespace istd
