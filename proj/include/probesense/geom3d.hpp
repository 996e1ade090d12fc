#pragma once

// Point-cloud geometry for stereo depth: blind masks of co-visible pixels,
// masked backprojection with seeded subsampling, point-to-point ICP, the ICP
// residual between left and right clouds, and the probe-axis / surface
// intersection.

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include "probesense/error.hpp"
#include "probesense/geomcore.hpp"
#include "probesense/image.hpp"
#include "probesense/losses.hpp"

namespace probesense {

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec2> pixels;  // source pixel per point, empty when unknown

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

enum class Side { Left, Right };

/// 1 where the disparity-shifted column stays inside the counterpart image:
/// left pixels move to j - d, right pixels to j + d.
inline Mask blind_mask(const ImageGray& d, Side side) {
  Mask m(d.width, d.height);
  const double hi = d.width - 1;
  for (int y = 0; y < d.height; ++y) {
    for (int x = 0; x < d.width; ++x) {
      const double j = side == Side::Left ? x - d(x, y) : x + d(x, y);
      m(x, y) = (j >= 0.0 && j <= hi) ? 1 : 0;
    }
  }
  return m;
}

/// Backprojects `sample_n` pixels drawn uniformly (seeded) from those inside
/// the mask with positive disparity. Points keep row-major pixel order.
inline PointCloud masked_backproject(const ImageGray& d, const CameraIntrinsics& k, double bf, const Mask& mask,
                                     std::size_t sample_n, std::uint64_t seed) {
  require_same_shape(d, mask, "disparity and mask differ in size");
  std::vector<std::size_t> valid;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (mask.data[i] && d.data[i] > kDisparityEps) valid.push_back(i);
  if (sample_n > valid.size())
    fail(Errc::NotEnoughValidPixels,
         "requested " + std::to_string(sample_n) + " points but only " + std::to_string(valid.size()) + " are valid");
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < sample_n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, valid.size() - 1);
    std::swap(valid[i], valid[pick(rng)]);
  }
  valid.resize(sample_n);
  std::sort(valid.begin(), valid.end());
  PointCloud cloud;
  cloud.points.reserve(sample_n);
  cloud.pixels.reserve(sample_n);
  for (std::size_t i : valid) {
    const Vec2 px(static_cast<double>(i % static_cast<std::size_t>(d.width)),
                  static_cast<double>(i / static_cast<std::size_t>(d.width)));
    cloud.points.push_back(backproject(k, px, bf / d.data[i]));
    cloud.pixels.push_back(px);
  }
  return cloud;
}

inline PointCloud masked_backproject(const ImageGray& d, const StereoRig& rig, Side side, const Mask& mask,
                                     std::size_t sample_n, std::uint64_t seed) {
  return masked_backproject(d, side == Side::Left ? rig.left : rig.right, rig.bf(), mask, sample_n, seed);
}

// ---------------------------------------------------------------------------
// ICP

struct IcpResult {
  Pose transform;               // maps source into target
  double residual = 0.0;        // RMS nearest-neighbour distance, mm
  int iterations = 0;
  std::vector<double> history;  // residual before the first and after every iteration
};

namespace detail {

inline void require_nondegenerate(const std::vector<Vec3>& pts, const char* which) {
  if (pts.size() < 3) fail(Errc::DegenerateCloud, std::string(which) + " cloud has fewer than 3 points");
  Vec3 c = Vec3::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : pts) cov += (p - c) * (p - c).transpose();
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  const double largest = eig.eigenvalues()(2);
  if (!(largest > 0) || eig.eigenvalues()(1) <= 1e-12 * largest)
    fail(Errc::DegenerateCloud, std::string(which) + " cloud is collinear");
}

/// Index of the nearest target point for every transformed source point;
/// ties go to the lower index.
inline std::vector<std::size_t> nearest(const std::vector<Vec3>& src, const std::vector<Vec3>& dst,
                                        std::vector<double>* sq) {
  std::vector<std::size_t> idx(src.size());
  if (sq) sq->assign(src.size(), 0.0);
  for (std::size_t i = 0; i < src.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t j = 0; j < dst.size(); ++j) {
      const double d2 = (src[i] - dst[j]).squaredNorm();
      if (d2 < best) {
        best = d2;
        arg = j;
      }
    }
    idx[i] = arg;
    if (sq) (*sq)[i] = best;
  }
  return idx;
}

/// Least-squares rigid transform taking a[i] onto b[i].
inline Pose kabsch(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  Vec3 ca = Vec3::Zero(), cb = Vec3::Zero();
  for (std::size_t i = 0; i < a.size(); ++i) {
    ca += a[i];
    cb += b[i];
  }
  ca /= static_cast<double>(a.size());
  cb /= static_cast<double>(b.size());
  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < a.size(); ++i) h += (a[i] - ca) * (b[i] - cb).transpose();
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 s = Mat3::Identity();
  if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0) s(2, 2) = -1.0;
  Pose p;
  p.rotation = svd.matrixV() * s * svd.matrixU().transpose();
  p.translation = cb - p.rotation * ca;
  return p;
}

inline std::vector<Vec3> transformed(const Pose& t, const std::vector<Vec3>& pts) {
  std::vector<Vec3> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back(t.apply(p));
  return out;
}

inline double rms(const std::vector<double>& sq) { return std::sqrt(pairwise_mean(sq)); }

}  // namespace detail

/// Point-to-point ICP from the identity. Each iteration matches every source
/// point to its nearest target point and solves the rigid update in closed
/// form. A step that would raise the residual is rejected, so the recorded
/// residuals never increase.
inline IcpResult icp(const PointCloud& source, const PointCloud& target, int max_iter = 50, double tol = 1e-12) {
  detail::require_nondegenerate(source.points, "source");
  detail::require_nondegenerate(target.points, "target");
  if (max_iter < 1) fail(Errc::DegenerateInput, "max_iter must be positive");
  IcpResult r;
  std::vector<double> sq;
  auto match = detail::nearest(source.points, target.points, &sq);
  r.residual = detail::rms(sq);
  r.history.push_back(r.residual);
  std::vector<Vec3> matched(source.size());
  for (int it = 0; it < max_iter; ++it) {
    for (std::size_t i = 0; i < matched.size(); ++i) matched[i] = target.points[match[i]];
    const Pose next = detail::kabsch(source.points, matched);
    std::vector<double> next_sq;
    auto next_match = detail::nearest(detail::transformed(next, source.points), target.points, &next_sq);
    const double next_res = detail::rms(next_sq);
    ++r.iterations;
    if (next_res > r.residual) break;
    const double gain = r.residual - next_res;
    r.transform = next;
    r.residual = next_res;
    r.history.push_back(next_res);
    match = std::move(next_match);
    if (gain < tol) break;
  }
  return r;
}

/// ICP residual between the left cloud and the right cloud moved into the
/// left camera frame, each built from `n_points` seeded samples of its blind
/// mask.
inline double gc3d_loss(const ImageGray& d_l, const ImageGray& d_r, const StereoRig& rig, std::uint64_t seed,
                        std::size_t n_points = 1000, int max_iter = 50) {
  require_same_shape(d_l, d_r, "disparity maps differ in size");
  const PointCloud left = masked_backproject(d_l, rig, Side::Left, blind_mask(d_l, Side::Left), n_points, seed);
  PointCloud right = masked_backproject(d_r, rig, Side::Right, blind_mask(d_r, Side::Right), n_points, seed);
  for (auto& p : right.points) p.x() += rig.baseline;
  return icp(right, left, max_iter).residual;
}

// ---------------------------------------------------------------------------
// Probe axis and surface

/// Median nearest-neighbour distance, estimated on at most `max_probes`
/// evenly strided points.
inline double median_spacing(const PointCloud& cloud, std::size_t max_probes = 400) {
  if (cloud.size() < 2) fail(Errc::DegenerateCloud, "need at least two points for a spacing");
  const std::size_t stride = std::max<std::size_t>(1, cloud.size() / max_probes);
  std::vector<double> d;
  for (std::size_t i = 0; i < cloud.size(); i += stride) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cloud.size(); ++j)
      if (j != i) best = std::min(best, (cloud.points[i] - cloud.points[j]).squaredNorm());
    d.push_back(std::sqrt(best));
  }
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2), d.end());
  return d[d.size() / 2];
}

/// Centroid of the (up to) five cloud points closest to the axis line among
/// those within `radius` of it and further than `tip_distance` along it.
/// A nonpositive radius selects three times the median point spacing.
inline Vec3 axis_surface_intersection(const PointCloud& cloud, const Vec3& origin, const Vec3& direction,
                                      double tip_distance, double radius = 0.0, std::size_t top_k = 5) {
  if (cloud.empty()) fail(Errc::NoCandidate, "empty cloud");
  if (std::abs(direction.norm() - 1.0) > 1e-6) fail(Errc::DegenerateInput, "axis direction must be unit length");
  if (!(radius > 0)) radius = 3.0 * median_spacing(cloud);
  std::vector<std::pair<double, std::size_t>> cand;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3 v = cloud.points[i] - origin;
    const double along = v.dot(direction);
    if (!(along > tip_distance)) continue;
    const double dist = (v - along * direction).norm();
    if (dist <= radius) cand.emplace_back(dist, i);
  }
  if (cand.empty()) fail(Errc::NoCandidate, "no cloud point near the axis beyond the tip");
  const std::size_t k = std::min(top_k, cand.size());
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
  Vec3 c = Vec3::Zero();
  for (std::size_t i = 0; i < k; ++i) c += cloud.points[cand[i].second];
  return c / static_cast<double>(k);
}

}  // namespace probesense
