#pragma once

// Evaluation metrics: the seven depth criteria, SSIM summaries, mask
// overlap, and Euclidean point errors with R2.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "probesense/error.hpp"
#include "probesense/geomcore.hpp"
#include "probesense/image.hpp"
#include "probesense/losses.hpp"

namespace probesense {

struct DepthEvalReport {
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double rmse = 0.0;
  double rmse_log = 0.0;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
};

/// Compares depths on pixels valid in both maps (all pixels when a mask is
/// empty).
inline DepthEvalReport depth_metrics(const ImageGray& pred, const ImageGray& gt, const Mask& pred_valid = {},
                                     const Mask& gt_valid = {}) {
  require_same_shape(pred, gt, "depth maps differ in size");
  if (!pred_valid.empty()) require_same_shape(pred, pred_valid, "prediction mask size");
  if (!gt_valid.empty()) require_same_shape(gt, gt_valid, "ground-truth mask size");
  std::vector<double> ar, sr, se, sl, d1, d2, d3;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if ((!pred_valid.empty() && !pred_valid.data[i]) || (!gt_valid.empty() && !gt_valid.data[i])) continue;
    const double p = pred.data[i];
    const double g = gt.data[i];
    if (!(p > 0) || !(g > 0)) fail(Errc::NonPositiveValue, "compared depths must be positive");
    const double e = p - g;
    ar.push_back(std::abs(e) / g);
    sr.push_back(e * e / g);
    se.push_back(e * e);
    const double le = std::log(p) - std::log(g);
    sl.push_back(le * le);
    const double ratio = std::max(p / g, g / p);
    d1.push_back(ratio < 1.25 ? 1.0 : 0.0);
    d2.push_back(ratio < 1.25 * 1.25 ? 1.0 : 0.0);
    d3.push_back(ratio < 1.25 * 1.25 * 1.25 ? 1.0 : 0.0);
  }
  if (ar.empty()) fail(Errc::EmptyOverlap, "no pixel is valid in both maps");
  DepthEvalReport r;
  r.abs_rel = pairwise_mean(ar);
  r.sq_rel = pairwise_mean(sr);
  r.rmse = std::sqrt(pairwise_mean(se));
  r.rmse_log = std::sqrt(pairwise_mean(sl));
  r.delta1 = pairwise_mean(d1);
  r.delta2 = pairwise_mean(d2);
  r.delta3 = pairwise_mean(d3);
  return r;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population
};

inline MeanStd mean_std(std::span<const double> v) {
  if (v.empty()) fail(Errc::EmptyInput, "no values");
  MeanStd r;
  r.mean = pairwise_mean(v);
  std::vector<double> sq;
  sq.reserve(v.size());
  for (double x : v) sq.push_back((x - r.mean) * (x - r.mean));
  r.std = std::sqrt(pairwise_mean(sq));
  return r;
}

/// Mean SSIM of each (reconstruction, original) pair, summarised across
/// pairs.
inline MeanStd ssim_summary(std::span<const std::pair<ImageGray, ImageGray>> pairs) {
  if (pairs.empty()) fail(Errc::EmptyInput, "no image pairs");
  std::vector<double> per_pair;
  for (const auto& [recon, orig] : pairs) {
    const ImageGray s = ssim_block3(recon, orig);
    per_pair.push_back(pairwise_mean(s.data));
  }
  return mean_std(per_pair);
}

struct Overlap {
  double iou = 1.0;
  double dice = 1.0;
};

/// Jaccard index and Dice score; both are 1 when the masks are empty.
inline Overlap iou_dice(const Mask& pred, const Mask& gt) {
  require_same_shape(pred, gt, "masks differ in size");
  std::size_t inter = 0, uni = 0, np = 0, ng = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool a = pred.data[i] != 0;
    const bool b = gt.data[i] != 0;
    inter += a && b;
    uni += a || b;
    np += a;
    ng += b;
  }
  if (uni == 0) return {};
  return {static_cast<double>(inter) / static_cast<double>(uni),
          2.0 * static_cast<double>(inter) / static_cast<double>(np + ng)};
}

struct PointErrorStats {
  double mean = 0.0;
  double std = 0.0;
  double median = 0.0;
  double r2 = 1.0;
};

inline double median_of(std::vector<double> v) {
  if (v.empty()) fail(Errc::EmptyInput, "no values");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Euclidean error summary and R2 = 1 - SS_res / SS_tot per coordinate,
/// averaged over x and y. A coordinate with zero variance contributes 1 when
/// predicted exactly and 0 otherwise.
inline PointErrorStats point_error_stats(std::span<const Vec2> pred, std::span<const Vec2> gt) {
  if (pred.size() != gt.size()) fail(Errc::LengthMismatch, "prediction and ground truth lengths differ");
  if (pred.empty()) fail(Errc::EmptyInput, "no points");
  std::vector<double> err;
  for (std::size_t i = 0; i < pred.size(); ++i) err.push_back((pred[i] - gt[i]).norm());
  const MeanStd ms = mean_std(err);
  PointErrorStats s;
  s.mean = ms.mean;
  s.std = ms.std;
  s.median = median_of(err);
  double r2 = 0.0;
  for (int c = 0; c < 2; ++c) {
    std::vector<double> g, res, tot;
    for (const auto& p : gt) g.push_back(p(c));
    const double m = pairwise_mean(g);
    for (std::size_t i = 0; i < gt.size(); ++i) {
      res.push_back((pred[i](c) - gt[i](c)) * (pred[i](c) - gt[i](c)));
      tot.push_back((gt[i](c) - m) * (gt[i](c) - m));
    }
    const double ss_res = pairwise_sum(res);
    const double ss_tot = pairwise_sum(tot);
    r2 += ss_tot > 0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : 0.0);
  }
  s.r2 = 0.5 * r2;
  return s;
}

inline std::string report_csv(const std::vector<std::pair<std::string, double>>& rows) {
  std::string out = "metric,value\n";
  char buf[64];
  for (const auto& [k, v] : rows) {
    std::snprintf(buf, sizeof buf, "%.9g", v);
    out += k + "," + buf + "\n";
  }
  return out;
}

inline std::vector<std::pair<std::string, double>> report_rows(const DepthEvalReport& r) {
  return {{"abs_rel", r.abs_rel}, {"sq_rel", r.sq_rel}, {"rmse", r.rmse},     {"rmse_log", r.rmse_log},
          {"delta1", r.delta1},   {"delta2", r.delta2}, {"delta3", r.delta3}};
}

}  // namespace probesense
