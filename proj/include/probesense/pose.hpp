#pragma once

// Planar pose machinery: normalized DLT homography, IPPE two-solution pose,
// pattern selection by reprojection error, relative pose error, projection
// error and the AX = YB calibration solver.

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "probesense/error.hpp"
#include "probesense/geomcore.hpp"

namespace probesense::pose {

struct Correspondence {
  Vec2 model;
  Vec2 image;
};

namespace detail {

/// Similarity moving the centroid to the origin and the mean distance to sqrt(2).
inline Mat3 hartley_normalizer(std::span<const Vec2> pts) {
  Vec2 c = Vec2::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  double mean_dist = 0.0;
  for (const auto& p : pts) mean_dist += (p - c).norm();
  mean_dist /= static_cast<double>(pts.size());
  const double s = mean_dist > 0 ? std::sqrt(2.0) / mean_dist : 1.0;
  Mat3 t;
  t << s, 0, -s * c.x(), 0, s, -s * c.y(), 0, 0, 1;
  return t;
}

/// Smallest-to-largest covariance eigenvalue ratio; ~0 for collinear sets.
inline double spread_ratio(std::span<const Vec2> pts) {
  Vec2 c = Vec2::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& p : pts) cov += (p - c) * (p - c).transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
  const double big = eig.eigenvalues()(1);
  return big > 0 ? eig.eigenvalues()(0) / big : 0.0;
}

}  // namespace detail

inline bool collinear(std::span<const Vec2> pts, double tol = 1e-10) {
  return pts.size() < 3 || detail::spread_ratio(pts) < tol;
}

/// Normalized DLT: Hartley-conditioned, null vector from the SVD.
inline Homography estimate_homography(std::span<const Correspondence> pairs) {
  if (pairs.size() < 4) fail(Errc::Degenerate, "homography needs >= 4 pairs");
  std::vector<Vec2> model;
  std::vector<Vec2> image;
  for (const auto& c : pairs) {
    model.push_back(c.model);
    image.push_back(c.image);
  }
  if (collinear(model) || collinear(image)) fail(Errc::Degenerate, "points are collinear");
  const Mat3 tm = detail::hartley_normalizer(model);
  const Mat3 ti = detail::hartley_normalizer(image);

  const auto n = static_cast<Eigen::Index>(pairs.size());
  Eigen::MatrixXd a(2 * n, 9);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 m = tm * model[i].homogeneous();
    const Vec3 p = ti * image[i].homogeneous();
    const double x = m.x(), y = m.y(), u = p.x(), v = p.y();
    a.row(2 * i) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    a.row(2 * i + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv.size() >= 8 && sv(7) <= 1e-12 * sv(0)) fail(Errc::Degenerate, "rank-deficient DLT system");
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Mat3 hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  return Homography::from_matrix(ti.inverse() * hn * tm);
}

inline double reprojection_rms(const CameraIntrinsics& k, const Pose& p, std::span<const Vec3> model,
                               std::span<const Vec2> image) {
  double s = 0.0;
  for (std::size_t i = 0; i < model.size(); ++i) {
    const Vec3 c = p.apply(model[i]);
    if (!(c.z() > 0)) return std::numeric_limits<double>::infinity();
    const Vec2 uv(k.fx * c.x() / c.z() + k.cx, k.fy * c.y() / c.z() + k.cy);
    s += (uv - image[i]).squaredNorm();
  }
  return std::sqrt(s / static_cast<double>(model.size()));
}

struct PoseSolutionPair {
  Pose best;
  Pose alternate;
  double reproj_best = 0.0;
  double reproj_alt = 0.0;

  /// reproj_best / reproj_alt; 1 when both vanish.
  double ambiguity_ratio() const {
    if (!(reproj_alt > 0)) return 1.0;
    return reproj_best / reproj_alt;
  }
  bool ambiguous(double threshold = 0.9) const { return ambiguity_ratio() > threshold; }
};

struct IppeOptions {
  double ambiguity_threshold = 0.9;
  int refine_iterations = 20;
  double refine_tolerance = 1e-10;
};

namespace detail {

/// Rotation taking the unit vector along `a` onto +z.
inline Mat3 rotate_onto_z(const Vec3& a) {
  const Vec3 n = a.normalized();
  const double c = n.z();
  Mat3 r;
  if (std::abs(1.0 + c) < 1e-12) {
    r = Eigen::Vector3d(1, 1, -1).asDiagonal();
    return r;
  }
  const double d = 1.0 / (1.0 + c);
  r << 1 - n.x() * n.x() * d, -n.x() * n.y() * d, -n.x(),  //
      -n.x() * n.y() * d, 1 - n.y() * n.y() * d, -n.y(),   //
      n.x(), n.y(), 1 - (n.x() * n.x() + n.y() * n.y()) * d;
  return r;
}

/// The two IPPE rotations from the homography Jacobian `j` at a model point
/// that maps to normalized image point `v`.
inline std::pair<Mat3, Mat3> ippe_rotations(const Eigen::Matrix2d& j, const Vec2& v) {
  const Mat3 rv = rotate_onto_z(Vec3(v.x(), v.y(), 1.0)).transpose();
  Eigen::Matrix2d b;
  b << rv(0, 0) - v.x() * rv(2, 0), rv(0, 1) - v.x() * rv(2, 1),  //
      rv(1, 0) - v.y() * rv(2, 0), rv(1, 1) - v.y() * rv(2, 1);
  const Eigen::Matrix2d a = b.inverse() * j;
  const Eigen::Matrix2d ata = a * a.transpose();
  const double gamma = std::sqrt(
      0.5 * (ata(0, 0) + ata(1, 1) +
             std::sqrt((ata(0, 0) - ata(1, 1)) * (ata(0, 0) - ata(1, 1)) + 4.0 * ata(0, 1) * ata(0, 1))));
  const Eigen::Matrix2d rt = a / gamma;
  const double b0 = std::sqrt(std::max(0.0, 1.0 - rt(0, 0) * rt(0, 0) - rt(1, 0) * rt(1, 0)));
  double b1 = std::sqrt(std::max(0.0, 1.0 - rt(0, 1) * rt(0, 1) - rt(1, 1) * rt(1, 1)));
  if (-rt(0, 0) * rt(0, 1) - rt(1, 0) * rt(1, 1) < 0) b1 = -b1;

  auto assemble = [&](double s) {
    Mat3 m;
    m.col(0) = Vec3(rt(0, 0), rt(1, 0), s * b0);
    m.col(1) = Vec3(rt(0, 1), rt(1, 1), s * b1);
    m.col(2) = m.col(0).cross(m.col(1));
    return Mat3(rv * m);
  };
  return {project_to_so3(assemble(1.0)), project_to_so3(assemble(-1.0))};
}

/// Least-squares translation for a fixed rotation (algebraic, normalized image).
inline Vec3 ippe_translation(const Mat3& r, std::span<const Vec2> model, std::span<const Vec2> normalized) {
  Eigen::MatrixXd a(2 * model.size(), 3);
  Eigen::VectorXd b(2 * model.size());
  for (std::size_t i = 0; i < model.size(); ++i) {
    const Vec3 q = r * Vec3(model[i].x(), model[i].y(), 0.0);
    const double u = normalized[i].x(), v = normalized[i].y();
    const auto row = static_cast<Eigen::Index>(2 * i);
    a.row(row) << 1, 0, -u;
    a.row(row + 1) << 0, 1, -v;
    b(row) = u * q.z() - q.x();
    b(row + 1) = v * q.z() - q.y();
  }
  return a.colPivHouseholderQr().solve(b);
}

}  // namespace detail

/// Gauss-Newton on pixel reprojection error with a left-multiplied rotation
/// update.
inline Pose refine_pose(const CameraIntrinsics& k, const Pose& init, std::span<const Vec3> model,
                        std::span<const Vec2> image, int max_iter = 20, double tol = 1e-10) {
  Pose p = init;
  double prev = reprojection_rms(k, p, model, image);
  for (int it = 0; it < max_iter; ++it) {
    Eigen::Matrix<double, 6, 6> jtj = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> jtr = Eigen::Matrix<double, 6, 1>::Zero();
    for (std::size_t i = 0; i < model.size(); ++i) {
      const Vec3 rx = p.rotation * model[i];
      const Vec3 c = rx + p.translation;
      if (!(c.z() > 0)) return init;
      const double iz = 1.0 / c.z();
      Eigen::Matrix<double, 2, 3> dproj;
      dproj << k.fx * iz, 0, -k.fx * c.x() * iz * iz, 0, k.fy * iz, -k.fy * c.y() * iz * iz;
      Mat3 skew;
      skew << 0, -rx.z(), rx.y(), rx.z(), 0, -rx.x(), -rx.y(), rx.x(), 0;
      Eigen::Matrix<double, 2, 6> jac;
      jac.leftCols<3>() = -dproj * skew;
      jac.rightCols<3>() = dproj;
      const Vec2 r = Vec2(k.fx * c.x() * iz + k.cx, k.fy * c.y() * iz + k.cy) - image[i];
      jtj += jac.transpose() * jac;
      jtr += jac.transpose() * r;
    }
    const Eigen::Matrix<double, 6, 1> delta = -jtj.ldlt().solve(jtr);
    if (!delta.allFinite()) break;
    Pose next = p;
    next.rotation = Pose::from_axis_angle(delta.head<3>()).rotation * p.rotation;
    next.rotation = project_to_so3(next.rotation);
    next.translation = p.translation + delta.tail<3>();
    const double err = reprojection_rms(k, next, model, image);
    if (!(err <= prev)) break;
    p = next;
    const bool converged = prev - err < tol || delta.norm() < tol;
    prev = err;
    if (converged) break;
  }
  return p;
}

/// Infinitesimal plane-based pose: two closed-form candidates from the
/// homography Jacobian at the model centroid, ordered by reprojection RMS.
/// Model points must lie on z = 0.
inline PoseSolutionPair ippe_pose(const CameraIntrinsics& k, std::span<const Vec3> model,
                                  std::span<const Vec2> image, const IppeOptions& opt = {}) {
  if (model.size() != image.size()) fail(Errc::Degenerate, "model/image size mismatch");
  if (model.size() < 4) fail(Errc::Degenerate, "IPPE needs >= 4 correspondences");
  Vec2 centroid = Vec2::Zero();
  for (const auto& m : model) {
    if (std::abs(m.z()) > 1e-9) fail(Errc::Degenerate, "model points must satisfy z = 0");
    centroid += m.head<2>();
  }
  centroid /= static_cast<double>(model.size());

  std::vector<Vec2> canonical;
  std::vector<Vec2> normalized;
  std::vector<Correspondence> pairs;
  for (std::size_t i = 0; i < model.size(); ++i) {
    canonical.push_back(model[i].head<2>() - centroid);
    normalized.emplace_back((image[i].x() - k.cx) / k.fx, (image[i].y() - k.cy) / k.fy);
    pairs.push_back({canonical.back(), normalized.back()});
  }
  const Homography hom = estimate_homography(pairs);
  if (!hom.normalized) fail(Errc::Degenerate, "model centroid maps to infinity");
  const Mat3& h = hom.h;
  Eigen::Matrix2d j;
  j << h(0, 0) - h(2, 0) * h(0, 2), h(0, 1) - h(2, 1) * h(0, 2),  //
      h(1, 0) - h(2, 0) * h(1, 2), h(1, 1) - h(2, 1) * h(1, 2);
  const auto [ra, rb] = detail::ippe_rotations(j, Vec2(h(0, 2), h(1, 2)));

  const Vec3 offset(centroid.x(), centroid.y(), 0.0);
  auto to_model_frame = [&](const Mat3& r) {
    Pose p;
    p.rotation = r;
    p.translation = detail::ippe_translation(r, canonical, normalized) - r * offset;
    return p;
  };
  std::array<Pose, 2> cand{to_model_frame(ra), to_model_frame(rb)};
  std::array<double, 2> err{reprojection_rms(k, cand[0], model, image),
                            reprojection_rms(k, cand[1], model, image)};
  if (!std::isfinite(err[0]) && !std::isfinite(err[1]))
    fail(Errc::CheiralityFailure, "no solution places the points in front of the camera");

  auto order = [&]() {
    PoseSolutionPair out;
    const bool swap = err[1] < err[0];
    out.best = cand[swap ? 1 : 0];
    out.alternate = cand[swap ? 0 : 1];
    out.reproj_best = err[swap ? 1 : 0];
    out.reproj_alt = err[swap ? 0 : 1];
    return out;
  };
  PoseSolutionPair out = order();
  if (out.ambiguous(opt.ambiguity_threshold)) {
    for (int i = 0; i < 2; ++i) {
      if (!std::isfinite(err[i])) continue;
      cand[i] = refine_pose(k, cand[i], model, image, opt.refine_iterations, opt.refine_tolerance);
      err[i] = reprojection_rms(k, cand[i], model, image);
    }
    out = order();
  }
  return out;
}

enum class PatternKind { Dots, Vertices };

struct SelectedPose {
  Pose pose;
  double reproj = 0.0;
  PatternKind source = PatternKind::Dots;
  bool alternate = false;  // true when IPPE's second solution won
};

/// Smallest reprojection RMS among the (up to four) candidates.
inline SelectedPose select_pose(const std::optional<PoseSolutionPair>& dots,
                                const std::optional<PoseSolutionPair>& vertices) {
  std::optional<SelectedPose> best;
  auto consider = [&](const Pose& p, double err, PatternKind kind, bool alt) {
    if (!std::isfinite(err)) return;
    if (!best || err < best->reproj) best = SelectedPose{p, err, kind, alt};
  };
  if (dots) {
    consider(dots->best, dots->reproj_best, PatternKind::Dots, false);
    consider(dots->alternate, dots->reproj_alt, PatternKind::Dots, true);
  }
  if (vertices) {
    consider(vertices->best, vertices->reproj_best, PatternKind::Vertices, false);
    consider(vertices->alternate, vertices->reproj_alt, PatternKind::Vertices, true);
  }
  if (!best) fail(Errc::NoSolution, "no pose candidates");
  return *best;
}

struct PoseError {
  double translation = 0.0;  // mm
  double rotation_deg = 0.0;
};

/// Error of `estimated` against ground truth `truth`, both mapping the same
/// frames. The Euclidean norm of the residual translation is reported.
inline PoseError pose_error(const Pose& truth, const Pose& estimated) {
  const Pose rel = truth.inverse() * estimated;
  return {rel.translation.norm(), rad2deg(rotation_angle(rel.rotation))};
}

struct CalibrationChain {
  Pose tracker_in_camera;   // T_O^L
  Pose sensor_in_tracker;   // T_S^O
  Pose sensor_in_marker;    // T_S^M
};

/// Relative pose (T_S^M)^-1 (T_M^L)^-1 T_O^L T_S^O, which is the identity for a
/// perfect estimate. Translation error is the Euclidean norm of its
/// translation, rotation error its axis-angle magnitude in degrees.
inline PoseError relative_pose_error(const CalibrationChain& gt, const Pose& marker_in_camera) {
  const Pose rel = gt.sensor_in_marker.inverse() * marker_in_camera.inverse() * gt.tracker_in_camera *
                   gt.sensor_in_tracker;
  return {rel.translation.norm(), rad2deg(rotation_angle(rel.rotation))};
}

struct AxybPair {
  Pose a;
  Pose b;
};

struct AxybSolution {
  Pose x;
  Pose y;
  double residual = 0.0;  // sum of squared Frobenius norms of A X - Y B
};

inline double axyb_residual(std::span<const AxybPair> pairs, const Pose& x, const Pose& y) {
  double s = 0.0;
  for (const auto& p : pairs) s += ((p.a * x).matrix() - (y * p.b).matrix()).squaredNorm();
  return s;
}

/// Simultaneous hand-eye / robot-world calibration A_i X = Y B_i: rotations
/// from the Kronecker null space, then translations by linear least squares.
inline AxybSolution solve_axyb(std::span<const AxybPair> pairs) {
  if (pairs.size() < 3) fail(Errc::InsufficientExcitation, "need >= 3 pairs");
  Eigen::MatrixXd axes(3, static_cast<Eigen::Index>(pairs.size()));
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    Eigen::AngleAxisd aa(pairs[i].a.rotation);
    axes.col(static_cast<Eigen::Index>(i)) = aa.angle() > 1e-9 ? Vec3(aa.axis()) : Vec3::Zero();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> axes_svd(axes);
  const auto& asv = axes_svd.singularValues();
  if (asv.size() < 3 || asv(2) <= 1e-6 * std::max(asv(0), 1e-300))
    fail(Errc::InsufficientExcitation, "rotation axes do not span 3D");

  // vec() is column-major: vec(A X) = (I kron A) vec(X), vec(Y B) = (B^T kron I) vec(Y).
  const auto n = static_cast<Eigen::Index>(pairs.size());
  Eigen::MatrixXd m(9 * n, 18);
  const Eigen::Matrix3d eye = Eigen::Matrix3d::Identity();
  for (Eigen::Index i = 0; i < n; ++i) {
    const Mat3& ra = pairs[i].a.rotation;
    const Mat3& rb = pairs[i].b.rotation;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        m.block<3, 3>(9 * i + 3 * r, 3 * c) = eye(r, c) * ra;
        m.block<3, 3>(9 * i + 3 * r, 9 + 3 * c) = -rb(c, r) * eye;
      }
    }
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullV);
  const Eigen::VectorXd v = svd.matrixV().col(17);
  Mat3 rx = Eigen::Map<const Mat3>(v.data());
  Mat3 ry = Eigen::Map<const Mat3>(v.data() + 9);
  const double det = rx.determinant();
  if (std::abs(det) < 1e-300) fail(Errc::InsufficientExcitation, "degenerate rotation null space");
  const double scale = std::copysign(1.0 / std::cbrt(std::abs(det)), det);
  rx *= scale;
  ry *= scale;

  AxybSolution out;
  out.x.rotation = project_to_so3(rx);
  out.y.rotation = project_to_so3(ry);

  // R_A t_X - t_Y = R_Y t_B - t_A
  Eigen::MatrixXd a(3 * n, 6);
  Eigen::VectorXd b(3 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    a.block<3, 3>(3 * i, 0) = pairs[i].a.rotation;
    a.block<3, 3>(3 * i, 3) = -eye;
    b.segment<3>(3 * i) = out.y.rotation * pairs[i].b.translation - pairs[i].a.translation;
  }
  const Eigen::VectorXd t = a.colPivHouseholderQr().solve(b);
  out.x.translation = t.head<3>();
  out.y.translation = t.tail<3>();
  out.residual = axyb_residual(pairs, out.x, out.y);
  return out;
}

struct ProjectionErrorStats {
  double mean = 0.0;
  double std = 0.0;
  double max = 0.0;
  double min = 0.0;
};

/// Distances between consecutive 3D tip positions, summarized
/// (population standard deviation).
inline ProjectionErrorStats projection_error(std::span<const Vec3> tips) {
  if (tips.size() < 2) fail(Errc::DegenerateInput, "need >= 2 tip positions");
  std::vector<double> d;
  for (std::size_t i = 1; i < tips.size(); ++i) d.push_back((tips[i] - tips[i - 1]).norm());
  ProjectionErrorStats s;
  s.min = *std::min_element(d.begin(), d.end());
  s.max = *std::max_element(d.begin(), d.end());
  for (double v : d) s.mean += v;
  s.mean /= static_cast<double>(d.size());
  for (double v : d) s.std += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(s.std / static_cast<double>(d.size()));
  return s;
}

}  // namespace probesense::pose
