#include "istd/metrics.hpp"

#include <cmath>
#include <cstdio>

namespace istd {

LabeledComponents label_components_moore(const BinaryMask& mask) {
  LabeledComponents out;
  out.h = mask.h;
  out.w = mask.w;
  out.labels.assign(static_cast<size_t>(mask.h) * mask.w, 0);
  static const int dy[8] = {-1, -1, -1, 0, 0, 1, 1, 1};
  static const int dx[8] = {-1, 0, 1, -1, 1, -1, 0, 1};
  std::vector<int64_t> queue;
  int next = 0;
  for (int y = 0; y < mask.h; ++y) {
    for (int x = 0; x < mask.w; ++x) {
      int64_t p = static_cast<int64_t>(y) * mask.w + x;
      if (!mask.v[p] || out.labels[p]) continue;
      ++next;
      Component comp;
      comp.label = next;
      comp.min_x = comp.max_x = x;
      comp.min_y = comp.max_y = y;
      double sx = 0, sy = 0;
      queue.clear();
      queue.push_back(p);
      out.labels[p] = next;
      while (!queue.empty()) {
        int64_t q = queue.back();
        queue.pop_back();
        int qy = static_cast<int>(q / mask.w), qx = static_cast<int>(q % mask.w);
        ++comp.area;
        sx += qx;
        sy += qy;
        comp.min_x = std::min(comp.min_x, qx);
        comp.max_x = std::max(comp.max_x, qx);
        comp.min_y = std::min(comp.min_y, qy);
        comp.max_y = std::max(comp.max_y, qy);
        for (int d = 0; d < 8; ++d) {
          int ny = qy + dy[d], nx = qx + dx[d];
          if (ny < 0 || ny >= mask.h || nx < 0 || nx >= mask.w) continue;
          int64_t np = static_cast<int64_t>(ny) * mask.w + nx;
          if (mask.v[np] && !out.labels[np]) {
            out.labels[np] = next;
            queue.push_back(np);
          }
        }
      }
      comp.cx = sx / static_cast<double>(comp.area);
      comp.cy = sy / static_cast<double>(comp.area);
      out.comps.push_back(comp);
    }
  }
  return out;
}

ConfusionCounts confusion_counts(const BinaryMask& pred,
                                 const BinaryMask& gt) {
  if (pred.h != gt.h || pred.w != gt.w)
    throw ValueError("confusion: mask dims differ: " + std::to_string(pred.h) +
                     "x" + std::to_string(pred.w) + " vs " +
                     std::to_string(gt.h) + "x" + std::to_string(gt.w));
  ConfusionCounts c;
  c.h = pred.h;
  c.w = pred.w;
  for (size_t i = 0; i < pred.v.size(); ++i) {
    bool p = pred.v[i] != 0, g = gt.v[i] != 0;
    c.tp += p && g;
    c.fp += p && !g;
    c.fn += !p && g;
  }
  c.gp = c.tp + c.fn;
  return c;
}

TargetMatch match_targets(const BinaryMask& pred, const BinaryMask& gt,
                          PdMatch mode, double dist) {
  LabeledComponents gt_comps = label_components_moore(gt);
  TargetMatch m;
  m.total = static_cast<int>(gt_comps.comps.size());
  if (mode == PdMatch::kOverlap) {
    std::vector<uint8_t> hit(gt_comps.comps.size() + 1, 0);
    for (size_t i = 0; i < pred.v.size(); ++i)
      if (pred.v[i] && gt_comps.labels[i]) hit[gt_comps.labels[i]] = 1;
    for (size_t k = 1; k < hit.size(); ++k) m.detected += hit[k];
  } else {
    LabeledComponents pred_comps = label_components_moore(pred);
    for (const auto& g : gt_comps.comps) {
      for (const auto& p : pred_comps.comps) {
        double ddx = g.cx - p.cx, ddy = g.cy - p.cy;
        if (std::sqrt(ddx * ddx + ddy * ddy) <= dist) {
          ++m.detected;
          break;
        }
      }
    }
  }
  return m;
}

EvalReport aggregate_metrics(const std::vector<ImageEval>& rows) {
  if (rows.empty()) throw ValueError("metrics: empty evaluation list");
  EvalReport r;
  r.n_images = static_cast<int>(rows.size());
  r.rows = rows;
  int64_t sum_tp = 0, sum_fp = 0, sum_gp = 0, sum_px = 0;
  int64_t sum_detected = 0, sum_total = 0;
  double sum_iou_i = 0.0;
  for (const auto& row : rows) {
    sum_tp += row.counts.tp;
    sum_fp += row.counts.fp;
    sum_gp += row.counts.gp;
    sum_px += static_cast<int64_t>(row.counts.h) * row.counts.w;
    sum_detected += row.detected;
    sum_total += row.total;
    sum_iou_i += row.iou_i;
  }
  int64_t denom = sum_gp + sum_fp;
  r.iou = denom > 0 ? static_cast<double>(sum_tp) / denom : 1.0;
  r.niou = sum_iou_i / rows.size();
  r.fa = sum_px > 0 ? static_cast<double>(sum_fp) / sum_px : 0.0;
  r.pd = sum_total > 0 ? static_cast<double>(sum_detected) / sum_total : 1.0;
  return r;
}

BinaryMask binarize(const float* values, int h, int w, double threshold) {
  BinaryMask m(h, w);
  for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i)
    m.v[i] = static_cast<double>(values[i]) >= threshold ? 1 : 0;
  return m;
}

BinaryMask binarize(const Tensor4f& prob, double threshold) {
  if (prob.n != 1 || prob.c != 1)
    throw ValueError("binarize: expected a (1,1,h,w) tensor, got " +
                     prob.dims_str());
  return binarize(prob.data(), prob.h, prob.w, threshold);
}

void write_report_csv(const std::string& path, const EvalReport& report) {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("report: cannot open for write: " + path);
  std::fprintf(f, "image,tp,fp,fn,gp,iou_i,detected,total\n");
  for (const auto& row : report.rows) {
    std::fprintf(f, "%s,%lld,%lld,%lld,%lld,%.9g,%d,%d\n", row.id.c_str(),
                 static_cast<long long>(row.counts.tp),
                 static_cast<long long>(row.counts.fp),
                 static_cast<long long>(row.counts.fn),
                 static_cast<long long>(row.counts.gp), row.iou_i,
                 row.detected, row.total);
  }
  std::fprintf(f, "# summary images=%d iou=%.9g niou=%.9g fa_e6=%.9g pd=%.9g\n",
               report.n_images, report.iou, report.niou, report.fa * 1e6,
               report.pd);
  std::fclose(f);
}

void write_curve_csv(const std::string& path,
                     const std::vector<CurvePoint>& points) {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("curve: cannot open for write: " + path);
  std::fprintf(f, "threshold,pd,fa_e6,tp,fp\n");
  for (const auto& p : points)
    std::fprintf(f, "%.9g,%.9g,%.9g,%lld,%lld\n", p.threshold, p.pd,
                 p.fa * 1e6, static_cast<long long>(p.tp),
                 static_cast<long long>(p.fp));
  std::fclose(f);
}

}  // namespace istd
