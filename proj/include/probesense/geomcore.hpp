#pragma once

// Camera model, rigid transforms, homographies and PCA line fitting shared by
// every other module.
//
// Conventions:
//  * Rectified stereo: the right camera sits at +baseline along the left
//    camera's x axis, so a scene point at left column u appears in the right
//    image at column u - d with d = baseline * fx / Z.
//  * Angles are radians internally.

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "probesense/error.hpp"

namespace probesense {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

constexpr double kPi = std::numbers::pi;

inline double deg2rad(double deg) { return deg * kPi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / kPi; }

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  bool valid() const {
    return fx > 0 && fy > 0 && width > 0 && height > 0 && cx >= 0 && cx < width && cy >= 0 &&
           cy < height;
  }

  Mat3 matrix() const {
    Mat3 k;
    k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    return k;
  }
};

struct StereoRig {
  CameraIntrinsics left;
  CameraIntrinsics right;
  double baseline = 1.0;  // mm

  double focal() const { return left.fx; }
  double bf() const { return baseline * left.fx; }
};

struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }

  static Pose from_axis_angle(const Vec3& axis_angle, const Vec3& t = Vec3::Zero()) {
    Pose p;
    const double angle = axis_angle.norm();
    if (angle > 0) p.rotation = Eigen::AngleAxisd(angle, axis_angle / angle).toRotationMatrix();
    p.translation = t;
    return p;
  }

  Vec3 apply(const Vec3& x) const { return rotation * x + translation; }

  Pose operator*(const Pose& b) const {
    return {rotation * b.rotation, rotation * b.translation + translation};
  }

  Pose inverse() const {
    Pose p;
    p.rotation = rotation.transpose();
    p.translation = -(p.rotation * translation);
    return p;
  }

  /// Rotation as an axis-angle vector (radians).
  Vec3 axis_angle() const {
    Eigen::AngleAxisd aa(rotation);
    return aa.axis() * aa.angle();
  }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
  }
};

inline Pose compose(const Pose& a, const Pose& b) { return a * b; }
inline Pose invert(const Pose& a) { return a.inverse(); }

inline bool is_rotation(const Mat3& r, double tol = 1e-9) {
  return (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
         std::abs(r.determinant() - 1.0) <= tol;
}

/// Angle of a rotation matrix in radians, robust near 0 and pi.
inline double rotation_angle(const Mat3& r) {
  const double c = std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0);
  const double s = 0.5 * Vec3(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1)).norm();
  return std::atan2(s, c);
}

/// Nearest rotation in the Frobenius sense.
inline Mat3 project_to_so3(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0 ? -1.0 : 1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

inline Vec2 project(const CameraIntrinsics& k, const Pose& pose, const Vec3& point) {
  const Vec3 p = pose.apply(point);
  if (!(p.z() > 0)) fail(Errc::NonPositiveDepth, "point behind camera");
  return {k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy};
}

inline Vec2 project(const CameraIntrinsics& k, const Vec3& camera_point) {
  return project(k, Pose::identity(), camera_point);
}

inline Vec3 backproject(const CameraIntrinsics& k, const Vec2& pixel, double depth) {
  if (!(depth > 0)) fail(Errc::NonPositiveDepth, "depth must be positive");
  return {(pixel.x() - k.cx) / k.fx * depth, (pixel.y() - k.cy) / k.fy * depth, depth};
}

/// Unit-free viewing ray through a pixel (z component 1).
inline Vec3 pixel_ray(const CameraIntrinsics& k, const Vec2& pixel) {
  return {(pixel.x() - k.cx) / k.fx, (pixel.y() - k.cy) / k.fy, 1.0};
}

struct Homography {
  Mat3 h = Mat3::Identity();
  bool normalized = true;  // false when h(2,2) == 0 and no rescaling was possible

  static Homography from_matrix(const Mat3& m) {
    Homography out;
    if (m(2, 2) != 0.0) {
      out.h = m / m(2, 2);
      out.normalized = true;
    } else {
      out.h = m;
      out.normalized = false;
    }
    return out;
  }

  Homography inverse() const { return from_matrix(h.inverse()); }
};

inline Vec2 apply_homography(const Homography& hom, const Vec2& p) {
  const Vec3 q = hom.h * Vec3(p.x(), p.y(), 1.0);
  if (std::abs(q.z()) < 1e-12) fail(Errc::PointAtInfinity, "homogeneous coordinate vanished");
  return q.head<2>() / q.z();
}

struct PrincipalAxis {
  Vec2 centroid = Vec2::Zero();
  Vec2 direction = Vec2::UnitX();
  double major_variance = 0.0;
  double minor_variance = 0.0;
};

/// Principal axis of a 2D point set, with the sign fixed so direction.x >= 0
/// (ties broken by direction.y >= 0).
inline PrincipalAxis pca_axis(std::span<const Vec2> points) {
  if (points.size() < 2) fail(Errc::DegenerateInput, "need at least two points");
  PrincipalAxis out;
  for (const auto& p : points) out.centroid += p;
  out.centroid /= static_cast<double>(points.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& p : points) {
    const Vec2 d = p - out.centroid;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(points.size());
  if (cov.trace() <= 0.0) fail(Errc::DegenerateInput, "all points coincide");
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
  Vec2 dir = eig.eigenvectors().col(1).normalized();
  if (dir.x() < 0 || (dir.x() == 0 && dir.y() < 0)) dir = -dir;
  out.direction = dir;
  out.major_variance = eig.eigenvalues()(1);
  out.minor_variance = std::max(0.0, eig.eigenvalues()(0));
  return out;
}

// Text serialization: poses as 12 decimals (row-major 3x4), homographies as 9.

inline std::string format_number(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline std::string serialize(const Pose& p) {
  std::string out;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) {
      if (!out.empty()) out += ' ';
      out += format_number(c < 3 ? p.rotation(r, c) : p.translation(r));
    }
  }
  return out;
}

inline std::string serialize(const Homography& h) {
  std::string out;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      if (!out.empty()) out += ' ';
      out += format_number(h.h(r, c));
    }
  }
  return out;
}

inline Pose parse_pose(const std::string& text) {
  std::istringstream is(text);
  Pose p;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) {
      double v = 0;
      if (!(is >> v)) fail(Errc::Parse, "pose needs 12 numbers");
      if (c < 3)
        p.rotation(r, c) = v;
      else
        p.translation(r) = v;
    }
  }
  return p;
}

inline Homography parse_homography(const std::string& text) {
  std::istringstream is(text);
  Mat3 m;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      if (!(is >> m(r, c))) fail(Errc::Parse, "homography needs 9 numbers");
    }
  }
  return Homography::from_matrix(m);
}

}  // namespace probesense
