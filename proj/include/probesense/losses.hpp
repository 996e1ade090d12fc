#pragma once

// Self-supervised depth loss kernels: disparity/depth conversion, disparity
// warping, 3x3 SSIM, appearance matching, edge-aware smoothness, left-right
// consistency, adversarial and segmentation terms, and the weighted totals.
//
// Stereo convention: a left pixel at column x sees the same surface point as
// the right pixel at x - d. All means exclude pixels without coverage and
// reduce with pairwise summation so results do not depend on loop order.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "probesense/error.hpp"
#include "probesense/geomcore.hpp"
#include "probesense/image.hpp"

namespace probesense {

struct LossWeights {
  double gamma = 0.85;     // SSIM share of the appearance term
  double alpha_ds = 0.001; // smoothness inside the reconstruction loss
  // multi-task stereo total
  double w_ap = 1.0;
  double w_ds = 0.5;
  double w_lr = 1.0;
  double w_gc3d = 0.001;
  // segmentation + depth total
  double alpha_dp = 10.0;
  double alpha_sg = 1.0;
  // generator / adversarial blend
  double alpha = 0.5;
  double beta = 0.5;
  int m_scales = 4;

  void validate() const {
    for (double w : {gamma, alpha_ds, w_ap, w_ds, w_lr, w_gc3d, alpha_dp, alpha_sg, alpha, beta})
      if (!(w >= 0)) fail(Errc::DegenerateInput, "loss weights must be nonnegative");
    if (gamma > 1) fail(Errc::DegenerateInput, "gamma must lie in [0, 1]");
    if (m_scales < 1 || m_scales > 4) fail(Errc::DegenerateInput, "m_scales must be in 1..4");
  }
};

constexpr double kDisparityEps = 1e-6;
constexpr double kProbabilityFloor = 1e-7;

namespace detail {

inline double pairwise_sum(const double* v, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += v[i];
    return s;
  }
  const std::size_t h = n / 2;
  return pairwise_sum(v, h) + pairwise_sum(v + h, n - h);
}

}  // namespace detail

inline double pairwise_sum(std::span<const double> v) { return detail::pairwise_sum(v.data(), v.size()); }

inline double pairwise_mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return pairwise_sum(v) / static_cast<double>(v.size());
}

// ---------------------------------------------------------------------------
// Conversions

struct DepthMap {
  ImageGray depth;  // mm; 0 where invalid
  Mask valid;
};

inline DepthMap disparity_to_depth(const ImageGray& d, const StereoRig& rig) {
  const double bf = rig.bf();
  if (!(bf > 0)) fail(Errc::DegenerateInput, "baseline and focal length must be positive");
  DepthMap out{ImageGray(d.width, d.height), Mask(d.width, d.height)};
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.data[i] > kDisparityEps) {
      out.depth.data[i] = bf / d.data[i];
      out.valid.data[i] = 1;
    }
  }
  return out;
}

/// Inverse of disparity_to_depth on valid pixels; invalid pixels get 0.
inline ImageGray depth_to_disparity(const DepthMap& z, const StereoRig& rig) {
  require_same_shape(z.depth, z.valid, "depth and validity differ in size");
  ImageGray d(z.depth.width, z.depth.height);
  for (std::size_t i = 0; i < d.size(); ++i)
    if (z.valid.data[i] && z.depth.data[i] > 0) d.data[i] = rig.bf() / z.depth.data[i];
  return d;
}

/// Maps a sigmoid output to depth through D = 1 / (a s + b), so s = 0 gives
/// d_max and s = 1 gives d_min.
inline double sigmoid_to_depth(double s, double d_min, double d_max) {
  if (!(s >= 0.0 && s <= 1.0)) fail(Errc::DegenerateInput, "sigmoid value outside [0, 1]");
  if (!(d_min > 0 && d_min < d_max)) fail(Errc::DegenerateInput, "need 0 < d_min < d_max");
  const double b = 1.0 / d_max;
  const double a = 1.0 / d_min - 1.0 / d_max;
  return 1.0 / (a * s + b);
}

// ---------------------------------------------------------------------------
// Warping

template <class T>
struct Warped {
  Image<T> image;
  Mask coverage;
};

/// out(x, y) = source(x - d(x, y), y), sampled bilinearly. Reconstructs the
/// left view from the right image with the left disparity; pass a negated
/// right disparity to go the other way.
template <class T>
inline Warped<T> warp_by_disparity(const Image<T>& source, const ImageGray& d) {
  require_same_shape(source, d, "source and disparity differ in size");
  Warped<T> out{Image<T>(source.width, source.height), Mask(source.width, source.height)};
  for (int y = 0; y < source.height; ++y) {
    for (int x = 0; x < source.width; ++x) {
      if (const auto v = sample_bilinear(source, x - d(x, y), static_cast<double>(y))) {
        out.image(x, y) = *v;
        out.coverage(x, y) = 1;
      }
    }
  }
  return out;
}

inline ImageGray negated(const ImageGray& d) {
  ImageGray out = d;
  for (double& v : out.data) v = -v;
  return out;
}

// ---------------------------------------------------------------------------
// SSIM and appearance

namespace detail {

/// Mirror index without repeating the edge sample: -1 -> 1, n -> n - 2.
inline int reflect(int i, int n) {
  if (n == 1) return 0;
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}

}  // namespace detail

constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

/// Per-pixel SSIM over 3x3 windows with uniform weights; windows at the
/// border are completed by reflection.
inline ImageGray ssim_block3(const ImageGray& a, const ImageGray& b) {
  require_same_shape(a, b, "SSIM inputs differ in size");
  ImageGray out(a.width, a.height);
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = detail::reflect(x + dx, a.width);
          const int yy = detail::reflect(y + dy, a.height);
          const double va = a(xx, yy);
          const double vb = b(xx, yy);
          ma += va;
          mb += vb;
          saa += va * va;
          sbb += vb * vb;
          sab += va * vb;
        }
      }
      ma /= 9.0;
      mb /= 9.0;
      const double var_a = saa / 9.0 - ma * ma;
      const double var_b = sbb / 9.0 - mb * mb;
      const double cov = sab / 9.0 - ma * mb;
      const double num = (2.0 * ma * mb + kSsimC1) * (2.0 * cov + kSsimC2);
      const double den = (ma * ma + mb * mb + kSsimC1) * (var_a + var_b + kSsimC2);
      out(x, y) = std::clamp(num / den, -1.0, 1.0);
    }
  }
  return out;
}

/// Mean of (gamma/2)(1 - SSIM) + (1 - gamma)|orig - recon| over the pixels
/// in `coverage` (all pixels when it is empty).
inline double appearance_loss(const ImageGray& orig, const ImageGray& recon, double gamma,
                              const Mask& coverage = {}) {
  require_same_shape(orig, recon, "appearance inputs differ in size");
  if (!coverage.empty()) require_same_shape(orig, coverage, "coverage mask size");
  const ImageGray s = ssim_block3(orig, recon);
  std::vector<double> terms;
  terms.reserve(orig.size());
  for (std::size_t i = 0; i < orig.size(); ++i) {
    if (!coverage.empty() && !coverage.data[i]) continue;
    terms.push_back(0.5 * gamma * (1.0 - s.data[i]) + (1.0 - gamma) * std::abs(orig.data[i] - recon.data[i]));
  }
  return pairwise_mean(terms);
}

/// Edge-aware first-order smoothness with forward differences; the gradient
/// past the last column (row) is zero.
inline double smoothness_loss(const ImageGray& d, const ImageGray& img) {
  require_same_shape(d, img, "disparity and image differ in size");
  std::vector<double> terms(d.size(), 0.0);
  for (int y = 0; y < d.height; ++y) {
    for (int x = 0; x < d.width; ++x) {
      double t = 0.0;
      if (x + 1 < d.width)
        t += std::abs(d(x + 1, y) - d(x, y)) * std::exp(-std::abs(img(x + 1, y) - img(x, y)));
      if (y + 1 < d.height)
        t += std::abs(d(x, y + 1) - d(x, y)) * std::exp(-std::abs(img(x, y + 1) - img(x, y)));
      terms[static_cast<std::size_t>(y) * d.width + x] = t;
    }
  }
  return pairwise_mean(terms);
}

/// Mean over right pixels of |d_r(i, j) + d_l(i, j + d_r(i, j))|, with d_l
/// sampled bilinearly. Samples that leave the image are excluded.
///
/// Both maps are signed column shifts towards the other view: d_r moves a
/// right pixel onto its left match (+disparity) and d_l moves a left pixel
/// onto its right match (-disparity). A consistent pair therefore cancels.
/// Pass negated(d) for a nonnegative left disparity map.
inline double lr_consistency_loss(const ImageGray& d_l, const ImageGray& d_r) {
  require_same_shape(d_l, d_r, "disparity maps differ in size");
  std::vector<double> terms;
  terms.reserve(d_r.size());
  for (int y = 0; y < d_r.height; ++y) {
    for (int x = 0; x < d_r.width; ++x) {
      const double dr = d_r(x, y);
      if (const auto dl = sample_bilinear(d_l, x + dr, static_cast<double>(y))) terms.push_back(std::abs(dr + *dl));
    }
  }
  return pairwise_mean(terms);
}

// ---------------------------------------------------------------------------
// Adversarial and segmentation

/// E[log D(real)] + E[log(1 - D(fake))], scores clamped into
/// [1e-7, 1 - 1e-7]. Always <= 0.
inline double adversarial_objective(std::span<const double> real, std::span<const double> fake) {
  if (real.empty() || fake.empty()) fail(Errc::EmptyInput, "adversarial objective needs both score sets");
  auto clamp = [](double s) { return std::clamp(s, kProbabilityFloor, 1.0 - kProbabilityFloor); };
  std::vector<double> lr, lf;
  lr.reserve(real.size());
  lf.reserve(fake.size());
  for (double s : real) lr.push_back(std::log(clamp(s)));
  for (double s : fake) lf.push_back(std::log(1.0 - clamp(s)));
  return pairwise_mean(lr) + pairwise_mean(lf);
}

/// Pixel-wise cross-entropy between predicted class probabilities (one image
/// per class) and one-hot targets, -(1/N) sum_c t_c log max(p_c, 1e-7).
inline double segmentation_ce(std::span<const ImageGray> pred, std::span<const ImageGray> target) {
  if (pred.empty() || pred.size() != target.size()) fail(Errc::DimensionMismatch, "class count mismatch");
  for (std::size_t c = 0; c < pred.size(); ++c) {
    require_same_shape(pred[c], pred[0], "class maps differ in size");
    require_same_shape(target[c], pred[0], "target maps differ in size");
  }
  const std::size_t n = pred[0].size();
  std::vector<double> terms(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    double t = 0.0;
    for (std::size_t c = 0; c < pred.size(); ++c) {
      const double p = pred[c].data[i];
      sum += p;
      if (target[c].data[i] != 0.0) t -= target[c].data[i] * std::log(std::max(p, kProbabilityFloor));
    }
    if (std::abs(sum - 1.0) > 1e-6) fail(Errc::NotNormalized, "class probabilities do not sum to 1");
    terms[i] = t;
  }
  return pairwise_mean(terms);
}

// ---------------------------------------------------------------------------
// Totals

struct GanSide {
  double ap = 0.0;
  double ds = 0.0;
  double gan = 0.0;
};

struct GanScale {
  GanSide left;
  GanSide right;
};

/// (1/m) sum_s (L_s^l + L_s^r) / 2 with L = alpha (ap + alpha_ds ds) + beta gan.
inline double total_sadepth(std::span<const GanScale> scales, const LossWeights& w = {}) {
  w.validate();
  if (scales.empty() || scales.size() > 4) fail(Errc::DegenerateInput, "need 1..4 scales");
  auto side = [&](const GanSide& s) { return w.alpha * (s.ap + w.alpha_ds * s.ds) + w.beta * s.gan; };
  std::vector<double> per_scale;
  for (const auto& s : scales) per_scale.push_back(0.5 * (side(s.left) + side(s.right)));
  return pairwise_sum(per_scale) / static_cast<double>(scales.size());
}

struct StereoComponents {
  double ap_l = 0.0, ap_r = 0.0;
  double ds_l = 0.0, ds_r = 0.0;
  double lr_l = 0.0, lr_r = 0.0;
  double gc3d = 0.0;
};

inline double total_m3depth(const StereoComponents& c, const LossWeights& w = {}) {
  w.validate();
  return w.w_ap * (c.ap_r + c.ap_l) + w.w_ds * (c.ds_r + c.ds_l) + w.w_lr * (c.lr_r + c.lr_l) + w.w_gc3d * c.gc3d;
}

struct DepthScale {
  double ap = 0.0;
  double ds = 0.0;
};

/// alpha_dp * sum_s (ap + alpha_ds ds) + alpha_sg * seg_ce over four scales.
inline double total_sdsnet(std::span<const DepthScale> scales, double seg_ce, const LossWeights& w = {}) {
  w.validate();
  if (scales.size() != 4) fail(Errc::DegenerateInput, "the segmentation total uses exactly four scales");
  std::vector<double> per_scale;
  for (const auto& s : scales) per_scale.push_back(s.ap + w.alpha_ds * s.ds);
  return w.alpha_dp * pairwise_sum(per_scale) + w.alpha_sg * seg_ce;
}

// ---------------------------------------------------------------------------
// Multi-scale evaluation

/// Bilinear upsampling of a low-resolution disparity map to width x height,
/// with values multiplied by the width ratio so they remain in target pixels.
inline ImageGray upsample_disparity(const ImageGray& low, int width, int height) {
  if (low.empty() || width < 1 || height < 1) fail(Errc::DegenerateInput, "empty disparity map");
  ImageGray out(width, height);
  const double sx = static_cast<double>(low.width) / width;
  const double sy = static_cast<double>(low.height) / height;
  const double ratio = static_cast<double>(width) / low.width;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double u = std::clamp((x + 0.5) * sx - 0.5, 0.0, low.width - 1.0);
      const double v = std::clamp((y + 0.5) * sy - 0.5, 0.0, low.height - 1.0);
      out(x, y) = ratio * *sample_bilinear(low, u, v);
    }
  }
  return out;
}

/// Appearance and smoothness terms of one scale, evaluated at full
/// resolution after upsampling both disparity maps.
inline GanScale scale_components(const ImageGray& left, const ImageGray& right, const ImageGray& d_l_low,
                                 const ImageGray& d_r_low, const LossWeights& w = {}) {
  require_same_shape(left, right, "stereo images differ in size");
  const ImageGray d_l = upsample_disparity(d_l_low, left.width, left.height);
  const ImageGray d_r = upsample_disparity(d_r_low, left.width, left.height);
  const auto rec_l = warp_by_disparity(right, d_l);
  const auto rec_r = warp_by_disparity(left, negated(d_r));
  GanScale s;
  s.left.ap = appearance_loss(left, rec_l.image, w.gamma, rec_l.coverage);
  s.right.ap = appearance_loss(right, rec_r.image, w.gamma, rec_r.coverage);
  s.left.ds = smoothness_loss(d_l, left);
  s.right.ds = smoothness_loss(d_r, right);
  return s;
}

}  // namespace probesense
