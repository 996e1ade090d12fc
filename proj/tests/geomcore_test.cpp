#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "probesense/geomcore.hpp"

using namespace probesense;

namespace {

CameraIntrinsics simple_camera(double f, double cx = 0, double cy = 0) {
  CameraIntrinsics k;
  k.fx = k.fy = f;
  k.cx = cx;
  k.cy = cy;
  k.width = 640;
  k.height = 480;
  return k;
}

}  // namespace

TEST(Project, DirectSubstitution) {
  const Vec2 p = project(simple_camera(100), Pose::identity(), Vec3(1, 0, 10));
  EXPECT_DOUBLE_EQ(p.x(), 10.0);
  EXPECT_DOUBLE_EQ(p.y(), 0.0);
}

TEST(Project, OpticalAxisHitsPrincipalPoint) {
  const auto k = simple_camera(321, 300.5, 211.25);
  const Vec2 p = project(k, Pose::identity(), Vec3(0, 0, 42));
  EXPECT_DOUBLE_EQ(p.x(), 300.5);
  EXPECT_DOUBLE_EQ(p.y(), 211.25);
}

TEST(Project, MatchesHighPrecisionEvaluation) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-50, 50);
  const auto k = simple_camera(512.3, 320.1, 240.7);
  for (int i = 0; i < 500; ++i) {
    const Pose pose = oracle::random_pose(rng, 1.0, 20.0);
    const Vec3 x = pose.inverse().apply(Vec3(u(rng), u(rng), 80 + std::abs(u(rng))));
    const Vec2 got = project(k, pose, x);
    const Vec2 want = oracle::project_big(k.fx, k.fy, k.cx, k.cy, pose, x);
    EXPECT_LT((got - want).norm(), 1e-9);
  }
}

TEST(Project, RejectsPointsBehindCamera) {
  try {
    project(simple_camera(100), Pose::identity(), Vec3(0, 0, -1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NonPositiveDepth);
  }
  EXPECT_THROW(project(simple_camera(100), Pose::identity(), Vec3(0, 0, 0)), Error);
}

TEST(Backproject, KnownValues) {
  const auto k = simple_camera(100, 12, 7);
  const Vec3 a = backproject(k, Vec2(12, 7), 50);
  EXPECT_EQ(a, Vec3(0, 0, 50));
  const Vec3 b = backproject(simple_camera(100), Vec2(10, 0), 10);
  EXPECT_NEAR((b - Vec3(1, 0, 10)).norm(), 0, 1e-15);
  EXPECT_THROW(backproject(k, Vec2(1, 1), 0.0), Error);
}

TEST(Backproject, RoundTripProperty) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> px(0, 640), depth(0.5, 500);
  const auto k = simple_camera(700, 319.5, 239.5);
  double worst = 0;
  for (int i = 0; i < 10000; ++i) {
    const Vec2 p(px(rng), px(rng) * 0.75);
    const double d = depth(rng);
    const Vec3 x = backproject(k, p, d);
    EXPECT_EQ(x.z(), d);
    worst = std::max(worst, (project(k, x) - p).norm());
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(PoseAlgebra, IdentityAndInverse) {
  const Pose ii = compose(Pose::identity(), Pose::identity());
  EXPECT_TRUE(ii.rotation.isIdentity(0));
  EXPECT_TRUE(ii.translation.isZero(0));
  Pose t;
  t.translation = Vec3(1, 2, 3);
  EXPECT_EQ(invert(t).translation, Vec3(-1, -2, -3));
  EXPECT_TRUE(invert(t).rotation.isIdentity(0));
}

TEST(PoseAlgebra, ChainFoldThenInvert) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    Pose acc;
    for (int i = 0; i < 10; ++i) acc = compose(acc, oracle::random_pose(rng, kPi, 100));
    const Pose id = compose(acc, invert(acc));
    EXPECT_LT((id.rotation - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT(id.translation.norm(), 1e-9);
    EXPECT_TRUE(is_rotation(acc.rotation));
  }
}

TEST(RotationAngle, StableNearZeroAndPi) {
  EXPECT_NEAR(rotation_angle(Pose::from_axis_angle(Vec3(0, 0, 1e-7)).rotation), 1e-7, 1e-15);
  EXPECT_NEAR(rotation_angle(Pose::from_axis_angle(Vec3(0, kPi - 1e-6, 0)).rotation), kPi - 1e-6, 1e-9);
}

TEST(PcaAxis, CollinearPoints) {
  const std::vector<Vec2> pts{{0, 0}, {1, 2}, {2, 4}};
  const auto a = pca_axis(pts);
  EXPECT_NEAR((a.centroid - Vec2(1, 2)).norm(), 0, 1e-12);
  EXPECT_NEAR((a.direction - Vec2(1, 2) / std::sqrt(5.0)).norm(), 0, 1e-12);
}

TEST(PcaAxis, TwoPointsAndSignRule) {
  const std::vector<Vec2> two{{0, 0}, {1, 0}};
  EXPECT_NEAR((pca_axis(two).direction - Vec2(1, 0)).norm(), 0, 1e-12);
  const std::vector<Vec2> vertical{{0, 3}, {0, -1}, {0, 8}};
  EXPECT_NEAR((pca_axis(vertical).direction - Vec2(0, 1)).norm(), 0, 1e-12);
  const std::vector<Vec2> backwards{{4, -4}, {0, 0}, {-4, 4}};
  EXPECT_GE(pca_axis(backwards).direction.x(), 0.0);
}

TEST(PcaAxis, CoincidentPointsAreDegenerate) {
  const std::vector<Vec2> pts(5, Vec2(3, 3));
  try {
    pca_axis(pts);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DegenerateInput);
  }
}

TEST(PcaAxis, NoisyLineAgreesWithTotalLeastSquares) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-1, 1);
  std::normal_distribution<double> noise(0, 0.01);
  for (int trial = 0; trial < 20; ++trial) {
    const double theta = kPi * u(rng);
    const Vec2 dir(std::cos(theta), std::sin(theta));
    const Vec2 origin(5 * u(rng), 5 * u(rng));
    std::vector<Vec2> pts;
    for (int i = 0; i < 500; ++i) pts.push_back(origin + dir * u(rng) + Vec2(noise(rng), noise(rng)));
    const auto a = pca_axis(pts);
    EXPECT_LT(rad2deg(oracle::angle_between_lines(a.direction, dir)), 0.5);
    EXPECT_LT(oracle::angle_between_lines(a.direction, oracle::tls_direction(pts)), 1e-9);
  }
}

TEST(PcaAxis, InvariantUnderTranslationAndScale) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0, 1);
  std::vector<Vec2> pts;
  for (int i = 0; i < 50; ++i) pts.emplace_back(3 * n(rng), n(rng));
  const Vec2 ref = pca_axis(pts).direction;
  for (auto& p : pts) p = 7.5 * p + Vec2(-100, 42);
  EXPECT_LT((pca_axis(pts).direction - ref).norm(), 1e-9);
}

TEST(Homography, KnownMappings) {
  EXPECT_EQ(apply_homography(Homography{}, Vec2(3, 4)), Vec2(3, 4));
  const auto h = Homography::from_matrix(Eigen::Vector3d(2, 2, 1).asDiagonal().toDenseMatrix());
  EXPECT_EQ(apply_homography(h, Vec2(1, 1)), Vec2(2, 2));
}

TEST(Homography, NormalizationAndFlag) {
  Mat3 m;
  m << 2, 0, 0, 0, 2, 0, 0, 0, 4;
  const auto h = Homography::from_matrix(m);
  EXPECT_TRUE(h.normalized);
  EXPECT_DOUBLE_EQ(h.h(2, 2), 1.0);
  m(2, 2) = 0;
  m(2, 0) = 1;
  EXPECT_FALSE(Homography::from_matrix(m).normalized);
}

TEST(Homography, PointAtInfinity) {
  Mat3 m = Mat3::Identity();
  m(2, 0) = 1;
  m(2, 2) = 1;
  try {
    apply_homography(Homography::from_matrix(m), Vec2(-1, 0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::PointAtInfinity);
  }
}

TEST(Homography, InverseRoundTrip) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 100; ++trial) {
    Mat3 m = Mat3::Identity() + 0.3 * Mat3::NullaryExpr([&]() { return u(rng); });
    m.row(2) *= 0.01;
    m(2, 2) = 1;
    const auto h = Homography::from_matrix(m);
    const auto hi = h.inverse();
    for (int i = 0; i < 100; ++i) {
      const Vec2 p(10 * u(rng), 10 * u(rng));
      EXPECT_LT((apply_homography(hi, apply_homography(h, p)) - p).norm(), 1e-9);
    }
  }
}

TEST(Serialization, PoseAndHomographyRoundTrip) {
  std::mt19937_64 rng(1);
  const Pose p = oracle::random_pose(rng, 2.0, 30.0);
  const Pose q = parse_pose(serialize(p));
  EXPECT_EQ(p.rotation, q.rotation);
  EXPECT_EQ(p.translation, q.translation);
  Mat3 m;
  m << 1.5, 0.1, 3, -0.2, 0.9, 4, 1e-3, 2e-3, 1;
  EXPECT_EQ(parse_homography(serialize(Homography::from_matrix(m))).h, m);
  EXPECT_THROW(parse_pose("1 2 3"), Error);
}
