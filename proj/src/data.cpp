#include "istd/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>

#include "istd/image_io.hpp"
#include "istd/rng.hpp"

namespace fs = std::filesystem;

namespace istd {

std::vector<SamplePair> load_dataset(const std::string& images_dir,
                                     const std::string& masks_dir) {
  if (!fs::is_directory(images_dir))
    throw IoError("dataset: not a directory: " + images_dir);
  if (!fs::is_directory(masks_dir))
    throw IoError("dataset: not a directory: " + masks_dir);

  std::vector<fs::path> image_files;
  for (const auto& entry : fs::directory_iterator(images_dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    for (auto& ch : ext) ch = static_cast<char>(std::tolower(ch));
    if (ext == ".png" || ext == ".pgm") image_files.push_back(entry.path());
  }
  std::sort(image_files.begin(), image_files.end());
  if (image_files.empty())
    throw ValueError("dataset: no .png/.pgm images in " + images_dir);

  std::vector<std::string> missing;
  std::vector<SamplePair> out;
  out.reserve(image_files.size());
  for (const auto& img_path : image_files) {
    std::string stem = img_path.stem().string();
    fs::path mask_path = fs::path(masks_dir) / (stem + ".png");
    if (!fs::exists(mask_path)) {
      missing.push_back(stem);
      continue;
    }
    GrayImage img = read_gray_image(img_path.string());
    GrayImage msk = read_gray_image(mask_path.string());
    if (img.h != msk.h || img.w != msk.w)
      throw ValueError("dataset: image/mask dims differ for stem '" + stem +
                       "': " + std::to_string(img.h) + "x" +
                       std::to_string(img.w) + " vs " + std::to_string(msk.h) +
                       "x" + std::to_string(msk.w));
    SamplePair sp;
    sp.id = stem;
    sp.native_h = img.h;
    sp.native_w = img.w;
    sp.image = Tensor4f(1, 1, img.h, img.w);
    float inv = 1.0f / static_cast<float>(img.max_value);
    for (size_t i = 0; i < img.v.size(); ++i)
      sp.image.v[i] = static_cast<float>(img.v[i]) * inv;
    sp.mask = BinaryMask(msk.h, msk.w);
    int thr = (msk.max_value + 1) / 2;  // 128 in the 8-bit convention
    for (size_t i = 0; i < msk.v.size(); ++i)
      sp.mask.v[i] = msk.v[i] >= thr ? 1 : 0;
    out.push_back(std::move(sp));
  }
  if (!missing.empty()) {
    std::string names;
    for (const auto& s : missing) names += (names.empty() ? "" : ", ") + s;
    throw ValueError("dataset: images without masks: " + names);
  }
  return out;
}

void SceneSpec::validate() const {
  if (h < 8 || w < 8) throw ValueError("scene: frame must be at least 8x8");
  if (min_targets < 0 || max_targets < min_targets)
    throw ValueError("scene: bad target count range");
  if (!(sigma_min > 0) || sigma_max < sigma_min)
    throw ValueError("scene: bad sigma range");
  if (!(contrast_min > 0) || contrast_max < contrast_min ||
      contrast_max > 0.42)
    throw ValueError("scene: contrast range must lie in (0, 0.42]");
  if (clutter < 0 || clutter > 0.5) throw ValueError("scene: bad clutter");
  if (max_blobs < 0) throw ValueError("scene: bad blob count");
  double reach = std::ceil(1.1774 * sigma_max) + 2.0;
  if (2.0 * reach >= std::min(h, w))
    throw ValueError("scene: target sigma too large for the frame");
}

SamplePair generate_scene(const SceneSpec& spec, SceneTruth* truth) {
  spec.validate();
  Pcg32 rng(spec.seed);
  const int h = spec.h, w = spec.w;
  std::vector<double> bg(static_cast<size_t>(h) * w, 0.0);

  // linear gradient
  double base = rng.uniform(0.15, 0.35);
  double gx = rng.uniform(-0.15, 0.15), gy = rng.uniform(-0.15, 0.15);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      bg[static_cast<size_t>(y) * w + x] =
          base + gx * x / (w - 1.0) + gy * y / (h - 1.0);

  // coarse grid value noise, bilinear upsampled (cells of ~8 px)
  int cells_y = std::max(2, h / 8) + 1, cells_x = std::max(2, w / 8) + 1;
  std::vector<double> grid(static_cast<size_t>(cells_y) * cells_x);
  for (auto& g : grid) g = rng.next_double();
  for (int y = 0; y < h; ++y) {
    double fy = static_cast<double>(y) / h * (cells_y - 1);
    int y0 = static_cast<int>(fy);
    double ty = fy - y0;
    int y1 = std::min(y0 + 1, cells_y - 1);
    for (int x = 0; x < w; ++x) {
      double fx = static_cast<double>(x) / w * (cells_x - 1);
      int x0 = static_cast<int>(fx);
      double tx = fx - x0;
      int x1 = std::min(x0 + 1, cells_x - 1);
      double top = grid[static_cast<size_t>(y0) * cells_x + x0] * (1 - tx) +
                   grid[static_cast<size_t>(y0) * cells_x + x1] * tx;
      double bot = grid[static_cast<size_t>(y1) * cells_x + x0] * (1 - tx) +
                   grid[static_cast<size_t>(y1) * cells_x + x1] * tx;
      bg[static_cast<size_t>(y) * w + x] +=
          spec.clutter * (top * (1 - ty) + bot * ty);
    }
  }

  // large dim blobs
  int blobs = spec.max_blobs > 0
                  ? static_cast<int>(rng.next_below(
                        static_cast<uint32_t>(spec.max_blobs + 1)))
                  : 0;
  for (int b = 0; b < blobs; ++b) {
    double cx = rng.uniform(0, w - 1), cy = rng.uniform(0, h - 1);
    double sigma = rng.uniform(std::min(h, w) / 8.0, std::min(h, w) / 3.0);
    double amp = rng.uniform(0.05, 0.15);
    double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        bg[static_cast<size_t>(y) * w + x] += amp * std::exp(-d2 * inv2s2);
      }
  }

  for (auto& v : bg) v = std::clamp(v, 0.02, 0.58);

  // targets: sub-pixel jittered Gaussians with enforced separation
  int count = spec.min_targets +
              static_cast<int>(rng.next_below(static_cast<uint32_t>(
                  spec.max_targets - spec.min_targets + 1)));
  std::vector<double> img = bg;
  BinaryMask mask(h, w);
  SceneTruth local_truth;
  local_truth.target_count = count;
  struct Placed {
    double cx, cy, reach;
  };
  std::vector<Placed> placed;
  for (int t = 0; t < count; ++t) {
    double sigma = rng.uniform(spec.sigma_min, spec.sigma_max);
    double contrast = rng.uniform(spec.contrast_min, spec.contrast_max);
    double half_r = 1.1774 * sigma;  // sqrt(2 ln 2) sigma: half-peak radius
    int margin = static_cast<int>(std::ceil(half_r)) + 2;
    double cx = 0, cy = 0;
    bool ok = false;
    for (int attempt = 0; attempt < 1000 && !ok; ++attempt) {
      int px = margin + static_cast<int>(rng.next_below(
                            static_cast<uint32_t>(w - 2 * margin)));
      int py = margin + static_cast<int>(rng.next_below(
                            static_cast<uint32_t>(h - 2 * margin)));
      cx = px + rng.uniform(-0.3, 0.3);
      cy = py + rng.uniform(-0.3, 0.3);
      ok = true;
      for (const auto& other : placed) {
        double dx = cx - other.cx, dy = cy - other.cy;
        double need = std::ceil(half_r) + other.reach + 4.0;
        if (dx * dx + dy * dy < need * need) {
          ok = false;
          break;
        }
      }
    }
    if (!ok)
      throw ValueError(
          "scene: could not place " + std::to_string(count) +
          " separated targets in a " + std::to_string(h) + "x" +
          std::to_string(w) + " frame; reduce targets or sigma");
    placed.push_back({cx, cy, std::ceil(half_r)});

    double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    double half_r2 = 2.0 * std::log(2.0) * sigma * sigma;
    int box = static_cast<int>(std::ceil(4.0 * sigma)) + 1;
    int area = 0;
    for (int y = std::max(0, static_cast<int>(cy) - box);
         y <= std::min(h - 1, static_cast<int>(cy) + box); ++y) {
      for (int x = std::max(0, static_cast<int>(cx) - box);
           x <= std::min(w - 1, static_cast<int>(cx) + box); ++x) {
        double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        img[static_cast<size_t>(y) * w + x] +=
            contrast * std::exp(-d2 * inv2s2);
        if (d2 <= half_r2) {
          mask.set(y, x, true);
          ++area;
        }
      }
    }
    local_truth.target_areas.push_back(area);
  }

  SamplePair sp;
  sp.native_h = h;
  sp.native_w = w;
  sp.image = Tensor4f(1, 1, h, w);
  for (size_t i = 0; i < img.size(); ++i)
    sp.image.v[i] = static_cast<float>(img[i]);
  sp.mask = std::move(mask);
  if (truth) *truth = std::move(local_truth);
  return sp;
}

std::vector<ManifestRow> generate_dataset(const SceneSpec& spec_template,
                                          int count,
                                          const std::string& out_dir,
                                          uint64_t master_seed) {
  if (count < 1) throw ValueError("gen-data: count must be >= 1");
  fs::create_directories(fs::path(out_dir) / "images");
  fs::create_directories(fs::path(out_dir) / "masks");

  std::vector<ManifestRow> manifest;
  manifest.reserve(count);
  for (int i = 0; i < count; ++i) {
    SceneSpec spec = spec_template;
    spec.seed = master_seed + static_cast<uint64_t>(i);
    SceneTruth truth;
    SamplePair sp = generate_scene(spec, &truth);
    char stem[32];
    std::snprintf(stem, sizeof(stem), "scene_%05d", i);

    std::vector<uint8_t> img8(sp.image.size());
    for (size_t p = 0; p < img8.size(); ++p) {
      float v = sp.image.v[p];
      img8[p] = static_cast<uint8_t>(
          std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
    }
    std::vector<uint8_t> msk8(sp.mask.v.size());
    for (size_t p = 0; p < msk8.size(); ++p)
      msk8[p] = sp.mask.v[p] ? 255 : 0;
    write_gray8_png((fs::path(out_dir) / "images" / (std::string(stem) + ".png"))
                        .string(),
                    img8.data(), spec.h, spec.w);
    write_gray8_png((fs::path(out_dir) / "masks" / (std::string(stem) + ".png"))
                        .string(),
                    msk8.data(), spec.h, spec.w);
    manifest.push_back({stem, truth.target_count, truth.target_areas});
  }

  FILE* f = std::fopen((fs::path(out_dir) / "manifest.csv").string().c_str(),
                       "wb");
  if (!f) throw IoError("gen-data: cannot write manifest in " + out_dir);
  std::fprintf(f, "stem,target_count,target_areas\n");
  for (const auto& row : manifest) {
    std::string areas;
    for (size_t i = 0; i < row.target_areas.size(); ++i)
      areas += (i ? ";" : "") + std::to_string(row.target_areas[i]);
    std::fprintf(f, "%s,%d,%s\n", row.stem.c_str(), row.target_count,
                 areas.c_str());
  }
  std::fclose(f);
  return manifest;
}

namespace {

// log-spaced bins over [1e-5, 1] plus an underflow bin for zeros
std::vector<HistogramBin> log_histogram(const std::vector<double>& values) {
  const int kBins = 12;
  const double lo = 1e-5;
  std::vector<HistogramBin> bins(kBins + 1);
  bins[0] = {0.0, lo, 0.0};
  double step = std::pow(1.0 / lo, 1.0 / kBins);
  double edge = lo;
  for (int b = 1; b <= kBins; ++b) {
    bins[b].lo = edge;
    edge = b == kBins ? 1.0 : edge * step;
    bins[b].hi = edge;
  }
  bins[kBins].hi = 1.0 + 1e-12;  // include ratio == 1
  if (values.empty()) return bins;
  double mass = 1.0 / static_cast<double>(values.size());
  for (double v : values) {
    int target = kBins;
    for (int b = 0; b <= kBins; ++b) {
      if (v >= bins[b].lo && v < bins[b].hi) {
        target = b;
        break;
      }
    }
    bins[target].mass += mass;
  }
  return bins;
}

std::vector<HistogramBin> count_histogram(const std::vector<int>& counts) {
  int max_count = 0;
  for (int c : counts) max_count = std::max(max_count, c);
  std::vector<HistogramBin> bins(max_count + 1);
  double mass = counts.empty() ? 0.0 : 1.0 / static_cast<double>(counts.size());
  for (int b = 0; b <= max_count; ++b) {
    bins[b].lo = b;
    bins[b].hi = b + 1;
  }
  for (int c : counts) bins[c].mass += mass;
  return bins;
}

}  // namespace

DatasetStats compute_stats(const std::vector<SamplePair>& dataset,
                           double high_response_fraction) {
  if (dataset.empty()) throw ValueError("stats: empty dataset");
  std::vector<double> high_ratios, target_ratios;
  std::vector<int> frame_counts;
  for (const auto& sp : dataset) {
    const float* img = sp.image.data();
    int64_t total = static_cast<int64_t>(sp.image.h) * sp.image.w;
    float mx = img[0];
    for (int64_t i = 1; i < total; ++i) mx = std::max(mx, img[i]);
    double cutoff = high_response_fraction * static_cast<double>(mx);
    int64_t bright = 0;
    for (int64_t i = 0; i < total; ++i)
      bright += static_cast<double>(img[i]) >= cutoff;
    high_ratios.push_back(static_cast<double>(bright) / total);

    LabeledComponents comps = label_components_moore(sp.mask);
    frame_counts.push_back(static_cast<int>(comps.comps.size()));
    for (const auto& comp : comps.comps)
      target_ratios.push_back(static_cast<double>(comp.area) / total);
  }
  DatasetStats stats;
  stats.high_response = log_histogram(high_ratios);
  stats.target_ratio = log_histogram(target_ratios);
  stats.targets_per_frame = count_histogram(frame_counts);
  return stats;
}

void write_stats_csv(const std::string& path, const DatasetStats& stats) {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("stats: cannot open for write: " + path);
  std::fprintf(f, "histogram,bin_lo,bin_hi,mass\n");
  auto dump = [&](const char* name, const std::vector<HistogramBin>& bins) {
    for (const auto& b : bins)
      std::fprintf(f, "%s,%.9g,%.9g,%.9g\n", name, b.lo, b.hi, b.mass);
  };
  dump("high_response_ratio", stats.high_response);
  dump("target_pixel_ratio", stats.target_ratio);
  dump("targets_per_frame", stats.targets_per_frame);
  std::fclose(f);
}

void save_gray_png(const std::string& path, const float* values, int h,
                   int w) {
  std::vector<uint8_t> buf(static_cast<size_t>(h) * w);
  for (size_t i = 0; i < buf.size(); ++i)
    buf[i] = static_cast<uint8_t>(
        std::lround(std::clamp(values[i], 0.0f, 1.0f) * 255.0f));
  write_gray8_png(path, buf.data(), h, w);
}

void save_normalized_png(const std::string& path, const float* values, int h,
                         int w) {
  int64_t total = static_cast<int64_t>(h) * w;
  float lo = values[0], hi = values[0];
  for (int64_t i = 1; i < total; ++i) {
    lo = std::min(lo, values[i]);
    hi = std::max(hi, values[i]);
  }
  float range = hi - lo;
  std::vector<uint8_t> buf(static_cast<size_t>(total));
  for (int64_t i = 0; i < total; ++i) {
    float t = range > 0 ? (values[i] - lo) / range : 0.0f;
    buf[i] = static_cast<uint8_t>(std::lround(t * 255.0f));
  }
  write_gray8_png(path, buf.data(), h, w);
}

}  // namespace istd
