#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "probesense/sim.hpp"
#include "probesense/track.hpp"

using namespace probesense;

namespace {

marker::FeatureSet exact_features(const sim::SceneConfig& cfg, const Pose& pose) {
  marker::FeatureSet fs;
  const auto ids = sim::unit_feature_ids(cfg.geometry.marker);
  for (const auto& f : sim::project_features(cfg.geometry, pose, cfg.rig.left)) {
    if (!f.visible || std::find(ids.begin(), ids.end(), f.id) == ids.end()) continue;
    (f.kind == marker::FeatureKind::Dot ? fs.dots : fs.vertices).push_back({f.id, f.image});
  }
  return fs;
}

// Paints every stripe pixel with the neighbouring probe grey.
ImageRgb without_stripe(const ImageRgb& img) {
  ImageRgb out = img;
  const auto s = marker::detect_stripe(img, 1);
  for (std::size_t i = 0; i < out.size(); ++i)
    if (s.mask.data[i]) out.data[i] = sim::kProbeGray;
  return out;
}

}  // namespace

TEST(PoseFromFeatures, ExactOnNoiselessProjections) {
  sim::SceneConfig cfg;
  for (const Pose& truth : sim::random_poses(cfg, 30, 71)) {
    const auto fs = exact_features(cfg, truth);
    for (bool joint : {false, true}) {
      const auto sel = track::pose_from_features(cfg.rig.left, cfg.geometry.marker, fs, joint);
      const auto e = pose::pose_error(truth, sel.pose);
      EXPECT_LT(e.rotation_deg, 1e-8);
      EXPECT_LT(e.translation, 1e-8);
      EXPECT_LT(sel.reproj, 1e-8);
    }
  }
}

TEST(PoseFromFeatures, OneUnitIsEnough) {
  sim::SceneConfig cfg;
  const Pose truth = sim::random_poses(cfg, 1, 72)[0];
  auto fs = exact_features(cfg, truth);
  fs.dots.clear();
  const auto sel = track::pose_from_features(cfg.rig.left, cfg.geometry.marker, fs);
  EXPECT_EQ(sel.source, pose::PatternKind::Vertices);
  EXPECT_LT(pose::pose_error(truth, sel.pose).rotation_deg, 1e-8);
  fs.vertices.resize(3);
  try {
    track::pose_from_features(cfg.rig.left, cfg.geometry.marker, fs);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NoSolution);
  }
}

TEST(NeutralOnly, DropsColouredNeighbourhoods) {
  ImageRgb img(10, 10, Rgb(0.4, 0.4, 0.4));
  img(7, 7) = Rgb(0.8, 0.3, 0.3);
  const std::vector<Vec2> pts{Vec2(2, 2), Vec2(6.6, 6.6), Vec2(7.2, 7.4)};
  const auto out = track::neutral_only(img, pts, 0.12);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0], Vec2(2, 2));
}

TEST(Tracker, RenderedFramesGiveAccuratePoses) {
  sim::SceneConfig cfg;
  cfg.render_right = false;
  cfg.trajectory = sim::random_poses(cfg, 12, 73);
  track::Tracker tracker(cfg.rig.left, cfg.geometry.marker);
  for (int i = 0; i < 12; ++i) {
    const auto f = sim::render_scene(cfg, i);
    tracker.reset();
    const auto r = tracker.process(f.left);
    ASSERT_TRUE(r.ok) << "frame " << i << ": " << r.failure;
    EXPECT_FALSE(r.from_fallback);
    const auto e = pose::pose_error(f.probe.marker_pose, r.pose);
    EXPECT_LT(e.rotation_deg, 1.5) << "frame " << i;
    EXPECT_LT(e.translation, 0.02 * f.probe.marker_pose.translation.norm()) << "frame " << i;
    // Every label agrees with the ground-truth projection of that id.
    for (const auto* list : {&r.features.dots, &r.features.vertices})
      for (const auto& feat : *list)
        EXPECT_LT((f.features[static_cast<std::size_t>(feat.id)].image - feat.position).norm(), 1.5)
            << "frame " << i << " id " << feat.id;
  }
}

TEST(Tracker, FallbackFollowsFeaturesWhenTheStripeIsHidden) {
  sim::SceneConfig cfg;
  cfg.render_right = false;
  cfg.trajectory = sim::smooth_trajectory(cfg, 3, 74);
  const auto f0 = sim::render_scene(cfg, 0);
  const auto f1 = sim::render_scene(cfg, 1);
  const ImageRgb hidden = without_stripe(f1.left);
  ASSERT_FALSE(marker::detect_stripe(hidden).found);

  track::Tracker cold(cfg.rig.left, cfg.geometry.marker);
  const auto c = cold.process(hidden);
  EXPECT_FALSE(c.ok);
  EXPECT_NE(c.failure.find("stripe"), std::string::npos);

  track::Tracker warm(cfg.rig.left, cfg.geometry.marker);
  ASSERT_TRUE(warm.process(f0.left).ok);
  const auto w = warm.process(hidden);
  ASSERT_TRUE(w.ok) << w.failure;
  EXPECT_TRUE(w.from_fallback);
  EXPECT_LT(pose::pose_error(f1.probe.marker_pose, w.pose).rotation_deg, 1.5);

  warm.reset();
  EXPECT_FALSE(warm.process(hidden).ok);
}

TEST(Tracker, OccludedSequenceKeepsThePose) {
  sim::SceneConfig cfg;
  cfg.render_right = false;
  cfg.erase_fraction = 0.5;
  cfg.seed = 11;
  cfg.trajectory = sim::smooth_trajectory(cfg, 15, 75);
  track::Tracker tracker(cfg.rig.left, cfg.geometry.marker);
  int ok = 0;
  for (int i = 0; i < 15; ++i) {
    const auto f = sim::render_scene(cfg, i);
    const auto r = tracker.process(f.left);
    if (!r.ok) continue;
    ++ok;
    EXPECT_LT(pose::pose_error(f.probe.marker_pose, r.pose).rotation_deg, 2.0) << "frame " << i;
  }
  EXPECT_GE(ok, 14);
}
