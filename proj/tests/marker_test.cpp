#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "probesense/marker.hpp"
#include "probesense/sim.hpp"
#include "probesense/track.hpp"

using namespace probesense;
using namespace probesense::marker;

namespace {

MarkerSpec two_by_three() {
  MarkerSpec s;
  s.n_columns = 2;
  s.n_rows = 3;
  s.pitch_circumferential = 2.0 * kPi * s.radius / 2.0;
  return s;
}

struct SyntheticView {
  Candidates candidates;
  Vec2 stripe = Vec2::Zero();
  std::map<std::pair<long, long>, int> truth;  // rounded position -> id
};

std::pair<long, long> key_of(const Vec2& p) { return {std::lround(p.x() * 1e6), std::lround(p.y() * 1e6)}; }

// Candidates are the exact projections of the visible features of both
// canonical units; the stripe centroid is the one predicted by the pose.
SyntheticView synthetic_view(const sim::SceneConfig& cfg, const Pose& pose) {
  SyntheticView v;
  const auto ids = sim::unit_feature_ids(cfg.geometry.marker);
  for (const auto& f : sim::project_features(cfg.geometry, pose, cfg.rig.left)) {
    if (!f.visible || std::find(ids.begin(), ids.end(), f.id) == ids.end()) continue;
    (f.kind == FeatureKind::Dot ? v.candidates.dots : v.candidates.vertices).push_back(f.image);
    v.truth[key_of(f.image)] = f.id;
  }
  v.stripe = *track::predicted_stripe_centroid(cfg.rig.left, pose, cfg.geometry.marker);
  return v;
}

// Id of the same physical feature once the marker is turned end for end
// within its unit: rows reverse and the two unit columns swap.
int half_turn(const MarkerSpec& s, int id) {
  const int c = id / s.n_rows, r = id % s.n_rows;
  const UnitFrame u = unit_frame(s, column_kind(c));
  return feature_id(s, u.column_a + u.column_b - c, s.n_rows - 1 - r);
}

}  // namespace

TEST(Layout, CountsIdsAndAlternatingKinds) {
  const auto layout = flatten_layout(two_by_three());
  ASSERT_EQ(layout.size(), 6u);
  for (int i = 0; i < 6; ++i) {
    EXPECT_EQ(layout[static_cast<std::size_t>(i)].id, i);
    EXPECT_EQ(layout[static_cast<std::size_t>(i)].kind, i < 3 ? FeatureKind::Dot : FeatureKind::Vertex);
  }
}

TEST(Layout, AxialPitch) {
  MarkerSpec s;
  s.pitch_axial = 4.0;
  const auto layout = flatten_layout(s);
  for (std::size_t i = 0; i + 1 < layout.size(); ++i) {
    if (layout[i].column != layout[i + 1].column) continue;
    EXPECT_DOUBLE_EQ(layout[i + 1].flat.x() - layout[i].flat.x(), 4.0);
    EXPECT_DOUBLE_EQ(layout[i + 1].flat.y(), layout[i].flat.y());
  }
}

TEST(Layout, DefaultSpecHandTable) {
  const MarkerSpec s;
  const auto layout = flatten_layout(s);
  ASSERT_EQ(layout.size(), 60u);
  const double pitch = 2.0 * kPi * 6.0 / 10.0;
  // First column, tip to tail.
  const double xs[] = {0.0, 5.0, 10.0, 15.0, 20.0, 25.0};
  for (int r = 0; r < 6; ++r) {
    EXPECT_EQ(layout[static_cast<std::size_t>(r)].kind, FeatureKind::Dot);
    EXPECT_DOUBLE_EQ(layout[static_cast<std::size_t>(r)].flat.x(), xs[r]);
    EXPECT_DOUBLE_EQ(layout[static_cast<std::size_t>(r)].flat.y(), 0.0);
  }
  EXPECT_NEAR(layout[6].flat.y(), pitch, 1e-12);
  EXPECT_NEAR(layout[5 * 6].flat.y(), 5.0 * pitch, 1e-12);       // exactly half a turn stays positive
  EXPECT_NEAR(layout[6 * 6].flat.y(), 6.0 * pitch - 12.0 * kPi, 1e-12);  // wraps to the negative side
  EXPECT_EQ(layout[7 * 6].kind, FeatureKind::Vertex);
}

TEST(Layout, CsvDump) {
  const std::string csv = layout_csv(flatten_layout(two_by_three()));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "id,kind,x,y");
  EXPECT_NE(csv.find("\n0,dot,0,0\n"), std::string::npos);
  EXPECT_NE(csv.find("\n4,vertex,5,"), std::string::npos);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
}

TEST(Spec, TextRoundTripAndValidation) {
  MarkerSpec s;
  s.stripe_end = StripeEnd::FarTip;
  s.pitch_axial = 4.5;
  const MarkerSpec back = parse_marker_spec(format_marker_spec(s));
  EXPECT_EQ(back.stripe_end, StripeEnd::FarTip);
  EXPECT_EQ(back.pitch_axial, 4.5);
  EXPECT_EQ(back.n_columns, s.n_columns);
  EXPECT_NEAR(back.pitch_circumferential, s.pitch_circumferential, 1e-12);
  EXPECT_THROW(parse_marker_spec("n_columns=7\n"), Error);  // odd count cannot alternate
  EXPECT_THROW(parse_marker_spec("radius=6\npitch_circumferential=3\n"), Error);
  try {
    parse_marker_spec("radius=6\n\ncolour=green\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line(), 3);
    EXPECT_EQ(e.key(), "colour");
  }
}

TEST(CylinderLift, WorkedValues) {
  const MarkerSpec s;
  const Vec3 a = cylinder_lift(s, Vec2(10, 0));
  EXPECT_EQ(a, Vec3(10, 0, 0));
  const Vec3 b = cylinder_lift(s, Vec2(10, 3.0 * kPi));
  EXPECT_NEAR((b - Vec3(10, 6, 6)).norm(), 0.0, 1e-12);
  try {
    cylinder_lift(s, Vec2(0, 6.0 * kPi + 0.01));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::OutOfWrapRange);
  }
}

TEST(CylinderLift, PointsStayOnTheCylinder) {
  std::mt19937_64 rng(61);
  const MarkerSpec s;
  std::uniform_real_distribution<double> x(-50, 50), y(-kPi * s.radius, kPi * s.radius);
  for (int i = 0; i < 1000; ++i) {
    const Vec2 flat(x(rng), y(rng));
    const Vec3 p = cylinder_lift(s, flat);
    EXPECT_NEAR(p.y() * p.y() + (p.z() - s.radius) * (p.z() - s.radius), s.radius * s.radius, 1e-9);
    EXPECT_EQ(p.x(), flat.x());
  }
}

TEST(Identify, SimulatedPosesMatchGroundTruth) {
  sim::SceneConfig cfg;
  const auto poses = sim::random_poses(cfg, 120, 62);
  int frames = 0;
  for (const Pose& pose : poses) {
    const SyntheticView v = synthetic_view(cfg, pose);
    const FeatureSet fs = identify(v.candidates, v.stripe, cfg.geometry.marker);
    int labelled = 0;
    for (const auto* list : {&fs.dots, &fs.vertices})
      for (const auto& f : *list) {
        ASSERT_EQ(f.id, v.truth.at(key_of(f.position)));
        ++labelled;
      }
    EXPECT_GE(labelled, 8);
    ++frames;
  }
  EXPECT_EQ(frames, 120);
}

TEST(Identify, FlippedStripeGivesTheHalfTurnLabels) {
  sim::SceneConfig cfg;
  MarkerSpec flipped = cfg.geometry.marker;
  flipped.stripe_end = StripeEnd::FarTip;
  for (const Pose& pose : sim::random_poses(cfg, 20, 63)) {
    const SyntheticView v = synthetic_view(cfg, pose);
    const FeatureSet a = identify(v.candidates, v.stripe, cfg.geometry.marker);
    const FeatureSet b = identify(v.candidates, v.stripe, flipped);
    std::map<std::pair<long, long>, int> by_pos;
    for (const auto* list : {&b.dots, &b.vertices})
      for (const auto& f : *list) by_pos[key_of(f.position)] = f.id;
    int compared = 0;
    for (const auto* list : {&a.dots, &a.vertices})
      for (const auto& f : *list) {
        const auto it = by_pos.find(key_of(f.position));
        if (it == by_pos.end()) continue;
        EXPECT_EQ(it->second, half_turn(flipped, f.id));
        ++compared;
      }
    EXPECT_GE(compared, 8);
  }
}

TEST(Identify, TranslationEquivariant) {
  sim::SceneConfig cfg;
  const Vec2 shift(-37.25, 18.5);
  for (const Pose& pose : sim::random_poses(cfg, 20, 64)) {
    SyntheticView v = synthetic_view(cfg, pose);
    const FeatureSet a = identify(v.candidates, v.stripe, cfg.geometry.marker);
    for (auto* list : {&v.candidates.dots, &v.candidates.vertices})
      for (auto& p : *list) p += shift;
    const FeatureSet b = identify(v.candidates, Vec2(v.stripe + shift), cfg.geometry.marker);
    ASSERT_EQ(a.dots.size(), b.dots.size());
    ASSERT_EQ(a.vertices.size(), b.vertices.size());
    for (std::size_t i = 0; i < a.dots.size(); ++i) EXPECT_EQ(a.dots[i].id, b.dots[i].id);
    for (std::size_t i = 0; i < a.vertices.size(); ++i) EXPECT_EQ(a.vertices[i].id, b.vertices[i].id);
  }
}

TEST(Identify, Preconditions) {
  Candidates c;
  c.dots = {Vec2(0, 0), Vec2(10, 0), Vec2(0, 10)};
  c.vertices = {Vec2(5, 5)};
  try {
    identify(c, Vec2(0, 0), MarkerSpec{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NotEnoughFeatures);
  }
  c.dots.push_back(Vec2(10, 10));
  try {
    identify(c, std::nullopt, MarkerSpec{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::AmbiguousWithoutStripe);
  }
}

TEST(Stripe, GreenBandOnly) {
  ImageRgb img(20, 10, Rgb(0.5, 0.5, 0.5));
  for (int y = 2; y < 6; ++y)
    for (int x = 4; x < 12; ++x) img(x, y) = sim::kStripeGreen;
  img(0, 0) = Rgb(0.8, 0.1, 0.1);  // red
  img(1, 0) = Rgb(0.1, 0.1, 0.8);  // blue
  const StripeDetection s = detect_stripe(img);
  ASSERT_TRUE(s.found);
  EXPECT_EQ(s.pixels, 32);
  EXPECT_NEAR((s.centroid - Vec2(7.5, 3.5)).norm(), 0.0, 1e-12);
  EXPECT_FALSE(detect_stripe(ImageRgb(20, 10, Rgb(0.5, 0.5, 0.5))).found);
}

TEST(Complete, IdentityHomography) {
  const std::vector<pose::Correspondence> known{{Vec2(0, 0), Vec2(0, 0)},
                                                {Vec2(10, 0), Vec2(10, 0)},
                                                {Vec2(10, 10), Vec2(10, 10)},
                                                {Vec2(0, 10), Vec2(0, 10)}};
  const std::vector<Vec2> missing{Vec2(5, 5)};
  const auto out = complete_by_homography(known, missing);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_NEAR((out[0] - Vec2(5, 5)).norm(), 0.0, 1e-12);
}

TEST(Complete, CollinearPairsRejected) {
  std::vector<pose::Correspondence> known;
  for (int i = 0; i < 4; ++i) known.push_back({Vec2(i, 2 * i), Vec2(i, 2 * i)});
  try {
    complete_by_homography(known, std::vector<Vec2>{Vec2(1, 1)});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::CollinearPairs);
  }
}

TEST(Complete, HalfOccludedUnitsAreRecoveredExactly) {
  sim::SceneConfig cfg;
  const MarkerSpec& spec = cfg.geometry.marker;
  std::mt19937_64 rng(65);
  double worst = 0;
  for (const Pose& pose : sim::random_poses(cfg, 50, 66)) {
    for (FeatureKind kind : {FeatureKind::Dot, FeatureKind::Vertex}) {
      const UnitFrame u = unit_frame(spec, kind);
      auto points = unit_points(spec, u);
      // Half the features are hidden, but each line keeps two so that the
      // four-point homography stays determined.
      auto per_line = [&](int column) {
        return std::count_if(points.begin(), points.begin() + static_cast<std::ptrdiff_t>(points.size() / 2),
                             [&](const UnitPoint& p) { return p.column == column; });
      };
      do std::shuffle(points.begin(), points.end(), rng);
      while (per_line(u.column_a) < 2 || per_line(u.column_b) < 2);
      std::vector<pose::Correspondence> known;
      std::vector<Vec2> missing, truth;
      for (std::size_t i = 0; i < points.size(); ++i) {
        const Vec2 image = project(cfg.rig.left, pose, points[i].marker);
        if (i < points.size() / 2)
          known.push_back({points[i].plane.head<2>(), image});
        else {
          missing.push_back(points[i].plane.head<2>());
          truth.push_back(image);
        }
      }
      const auto out = complete_by_homography(known, missing);
      for (std::size_t i = 0; i < out.size(); ++i) worst = std::max(worst, (out[i] - truth[i]).norm());
    }
  }
  EXPECT_LT(worst, 1e-9);
}
