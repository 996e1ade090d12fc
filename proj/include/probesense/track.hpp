#pragma once

// Per-frame marker tracking: stripe detection, feature candidates, id
// assignment, per-unit planar pose and selection of the best candidate.
// When identification fails, features from the previous good frame are
// followed by template matching.

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "probesense/detect.hpp"
#include "probesense/error.hpp"
#include "probesense/geomcore.hpp"
#include "probesense/image.hpp"
#include "probesense/marker.hpp"
#include "probesense/pose.hpp"

namespace probesense::track {

struct TrackerOptions {
  detect::DetectorParams detector;
  double max_chroma = 0.12;           // marker print is neutral; tissue is not
  double suppress_spacing_ratio = 0.4;
  marker::IdentifyOptions identify;
  pose::IppeOptions ippe;
  bool refine_jointly = false;        // polish the winner on every identified feature
  int dot_bias_iterations = 2;        // perspective/curvature correction of dot centroids
  bool fallback = true;
  int template_radius = 3;
  int search_radius = 8;
  double match_gate = 3.0;            // px between a predicted position and a candidate
  double max_consistency_px = 2.5;    // reprojection RMS over every labelled feature
  double stripe_tolerance = 0.4;      // stripe centroid error, in projected row pitches
};

struct FrameResult {
  bool ok = false;
  Pose pose;                 // marker -> camera
  double reproj = 0.0;
  pose::PatternKind source = pose::PatternKind::Dots;
  bool from_fallback = false;
  marker::FeatureSet features;
  marker::Candidates candidates;
  std::vector<marker::IdentifiedFeature> completed;  // unit features predicted by homography
  std::string failure;
};

/// Candidates whose 3x3 neighbourhood is close to neutral grey.
inline std::vector<Vec2> neutral_only(const ImageRgb& img, std::span<const Vec2> pts, double max_chroma) {
  std::vector<Vec2> out;
  for (const auto& p : pts) {
    const int cx = static_cast<int>(std::lround(p.x()));
    const int cy = static_cast<int>(std::lround(p.y()));
    double worst = 0.0;
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        if (!img.contains(cx + dx, cy + dy)) continue;
        const Rgb& c = img(cx + dx, cy + dy);
        worst = std::max(worst, c.maxCoeff() - c.minCoeff());
      }
    if (worst <= max_chroma) out.push_back(p);
  }
  return out;
}

inline double median_nn_spacing(std::span<const Vec2> pts) {
  std::vector<double> nn;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < pts.size(); ++j)
      if (i != j) best = std::min(best, (pts[i] - pts[j]).norm());
    if (std::isfinite(best)) nn.push_back(best);
  }
  return marker::detail::median(nn);
}

/// Feature candidates on a colour frame. Stripe pixels are painted over
/// before detection so the ring edge cannot masquerade as dots.
inline marker::Candidates find_candidates(const ImageRgb& img, const Mask& stripe, const TrackerOptions& opt) {
  ImageGray gray = to_gray(img);
  if (!stripe.empty())
    for (std::size_t i = 0; i < gray.size(); ++i)
      if (stripe.data[i]) gray.data[i] = 0.92;
  const ImageGray smooth = detect::gaussian_blur(gray);
  const ImageGray response = detect::vertex_response(smooth);
  std::vector<Vec2> vertices;
  for (const Vec2& p : detect::non_max_suppress(response, opt.detector.nms_radius, opt.detector.nms_threshold))
    vertices.push_back(detect::refine_peak(response, p));
  std::vector<Vec2> dots;
  for (const auto& b : detect::detect_blobs(gray, opt.detector.blobs)) dots.push_back(b.centroid);

  marker::Candidates c;
  c.vertices = neutral_only(img, vertices, opt.max_chroma);
  dots = neutral_only(img, dots, opt.max_chroma);
  const double spacing = c.vertices.size() >= 2 ? median_nn_spacing(c.vertices) : 0.0;
  const double radius = std::max(opt.detector.suppress_radius, opt.suppress_spacing_ratio * spacing);
  c.dots = detect::suppress_false_dots(dots, c.vertices, radius);
  return c;
}

struct UnitPose {
  marker::FeatureKind kind;
  pose::PoseSolutionPair planar;  // plane -> camera
};

/// IPPE on one identified unit.
inline std::optional<UnitPose> unit_pose(const CameraIntrinsics& k, const marker::MarkerSpec& spec,
                                         marker::FeatureKind kind, std::span<const marker::IdentifiedFeature> feats,
                                         const pose::IppeOptions& opt) {
  if (feats.size() < 4) return std::nullopt;
  const auto points = marker::unit_points(spec, marker::unit_frame(spec, kind));
  std::vector<Vec3> model;
  std::vector<Vec2> image;
  for (const auto& f : feats) {
    const auto it = std::find_if(points.begin(), points.end(), [&](const auto& p) { return p.id == f.id; });
    if (it == points.end()) continue;
    model.push_back(it->plane);
    image.push_back(f.position);
  }
  std::vector<Vec2> flat;
  for (const auto& m : model) flat.push_back(m.head<2>());
  if (model.size() < 4 || pose::collinear(flat, 1e-6)) return std::nullopt;
  try {
    return UnitPose{kind, pose::ippe_pose(k, model, image, opt)};
  } catch (const Error&) {
    return std::nullopt;
  }
}

/// Offset between the area centroid of a printed dot's image and the image
/// of its centre, under a pose. Oblique dots on the cylinder are imaged as
/// asymmetric blobs whose centroid drifts towards the nearer side.
inline Vec2 dot_centroid_bias(const CameraIntrinsics& k, const Pose& pose, const marker::MarkerSpec& spec,
                              const Vec2& flat_centre, int rim_samples = 64) {
  const Vec3 c3 = pose.apply(marker::cylinder_lift(spec, flat_centre));
  if (!(c3.z() > spec.dot_radius)) return Vec2::Zero();
  const Vec2 centre = project(k, pose, marker::cylinder_lift(spec, flat_centre));
  std::vector<Vec2> rim;
  rim.reserve(static_cast<std::size_t>(rim_samples));
  for (int i = 0; i < rim_samples; ++i) {
    const double a = 2.0 * kPi * i / rim_samples;
    const Vec2 f = flat_centre + spec.dot_radius * Vec2(std::cos(a), std::sin(a));
    rim.push_back(project(k, pose, marker::cylinder_lift(spec, f)) - centre);
  }
  double area = 0.0;
  Vec2 c = Vec2::Zero();
  for (int i = 0; i < rim_samples; ++i) {
    const Vec2& p = rim[static_cast<std::size_t>(i)];
    const Vec2& q = rim[static_cast<std::size_t>((i + 1) % rim_samples)];
    const double cr = marker::detail::cross2(p, q);
    area += cr;
    c += cr * (p + q);
  }
  if (std::abs(area) < 1e-12) return Vec2::Zero();
  return c / (3.0 * area);
}

/// Marker-frame 3D points of identified features, with their image positions.
inline std::pair<std::vector<Vec3>, std::vector<Vec2>> marker_correspondences(const marker::MarkerSpec& spec,
                                                                              const marker::FeatureSet& fs) {
  std::vector<Vec3> model;
  std::vector<Vec2> image;
  const auto layout = marker::flatten_layout(spec);
  for (const auto* list : {&fs.dots, &fs.vertices})
    for (const auto& f : *list) {
      model.push_back(marker::cylinder_lift(spec, layout[static_cast<std::size_t>(f.id)].flat));
      image.push_back(f.position);
    }
  return {model, image};
}

/// Image centroid of the visible part of the stripe ring under a pose.
inline std::optional<Vec2> predicted_stripe_centroid(const CameraIntrinsics& k, const Pose& pose,
                                                     const marker::MarkerSpec& spec, int samples = 180) {
  const auto [s0, s1] = spec.stripe_span();
  const double x = 0.5 * (s0 + s1);
  Vec2 acc = Vec2::Zero();
  double wsum = 0.0;
  for (int i = 0; i < samples; ++i) {
    const double theta = -kPi + 2.0 * kPi * (i + 0.5) / samples;
    const Vec3 p = pose.apply(marker::cylinder_lift(spec, Vec2(x, spec.radius * theta)));
    if (!(p.z() > 0)) continue;
    const Vec3 n = pose.rotation * marker::outward_normal(spec, theta);
    const double facing = n.dot(-p.normalized());
    if (facing <= 0) continue;
    const double w = facing / p.z();  // projected width of the strip element
    acc += w * project(k, p);
    wsum += w;
  }
  if (wsum <= 0) return std::nullopt;
  return Vec2(acc / wsum);
}

/// Marker pose from already labelled features: IPPE on each unit, selection
/// by reprojection error, then (optionally) Gauss-Newton over every label.
/// Throws NoSolution when neither unit has four usable features.
inline pose::SelectedPose pose_from_features(const CameraIntrinsics& k, const marker::MarkerSpec& spec,
                                             const marker::FeatureSet& fs, bool refine_jointly = true,
                                             const pose::IppeOptions& opt = {}) {
  const auto dots = unit_pose(k, spec, marker::FeatureKind::Dot, fs.dots, opt);
  const auto verts = unit_pose(k, spec, marker::FeatureKind::Vertex, fs.vertices, opt);
  pose::SelectedPose sel = pose::select_pose(dots ? std::optional(dots->planar) : std::nullopt,
                                             verts ? std::optional(verts->planar) : std::nullopt);
  const auto kind = sel.source == pose::PatternKind::Dots ? marker::FeatureKind::Dot : marker::FeatureKind::Vertex;
  sel.pose = marker::marker_pose_from_plane(marker::unit_frame(spec, kind), sel.pose);
  if (refine_jointly) {
    const auto [model, image] = marker_correspondences(spec, fs);
    sel.pose = pose::refine_pose(k, sel.pose, model, image, 20, 1e-12);
    sel.reproj = pose::reprojection_rms(k, sel.pose, model, image);
  }
  return sel;
}

/// Stateful tracker over a frame sequence.
class Tracker {
 public:
  Tracker(const CameraIntrinsics& camera, const marker::MarkerSpec& spec, TrackerOptions opt = {})
      : k_(camera), spec_(spec), opt_(std::move(opt)) {
    spec_.validate();
  }

  FrameResult process(const ImageRgb& img) {
    FrameResult r;
    const auto stripe = marker::detect_stripe(img);
    r.candidates = find_candidates(img, stripe.mask, opt_);
    const ImageGray gray = to_gray(img);

    bool ok = false;
    if (stripe.found) {
      ok = identify_verified(r, stripe);
    } else {
      r.failure = "stripe not found";
    }
    if (!ok && opt_.fallback && !tracked_.empty()) {
      const marker::FeatureSet followed = follow(gray, r.candidates);
      marker::FeatureSet dots_only;
      dots_only.dots = followed.dots;
      marker::FeatureSet vertices_only;
      vertices_only.vertices = followed.vertices;
      FrameResult f;
      f.candidates = r.candidates;
      if (pick({followed, dots_only, vertices_only}, f, stripe)) {
        f.from_fallback = true;
        r = std::move(f);
        ok = true;
      } else {
        r.failure += "; tracking: " + f.failure;
      }
    }
    r.ok = ok;
    if (ok) {
      r.failure.clear();
      r.completed = complete_units(r.features);
      remember(gray, r.features, r.completed);
    }
    return r;
  }

  void reset() { tracked_.clear(); }

 private:
  struct Tracked {
    int id;
    marker::FeatureKind kind;
    Vec2 position;
    bool observed;
    std::vector<double> patch;
  };

  /// Tries unit labellings in order of total support and keeps the first
  /// whose pose explains every label and the stripe.
  bool identify_verified(FrameResult& r, const marker::StripeDetection& stripe) const {
    if (r.candidates.dots.size() < 4 && r.candidates.vertices.size() < 4) {
      r.failure = "fewer than four candidates of either kind";
      return false;
    }
    using Hyps = std::vector<marker::UnitHypothesis>;
    const Hyps dh = marker::identify_unit_hypotheses(r.candidates, stripe.centroid, spec_,
                                                     marker::FeatureKind::Dot, opt_.identify);
    const Hyps vh = marker::identify_unit_hypotheses(r.candidates, stripe.centroid, spec_,
                                                     marker::FeatureKind::Vertex, opt_.identify);
    struct Combo {
      int d;
      int v;
      int inliers;
      double stripe_error;
    };
    std::vector<Combo> combos;
    for (int d = -1; d < static_cast<int>(dh.size()); ++d)
      for (int v = -1; v < static_cast<int>(vh.size()); ++v) {
        if (d < 0 && v < 0) continue;
        int inl = 0;
        double se = 0.0;
        if (d >= 0) inl += dh[static_cast<std::size_t>(d)].inliers, se += dh[static_cast<std::size_t>(d)].stripe_error;
        if (v >= 0) inl += vh[static_cast<std::size_t>(v)].inliers, se += vh[static_cast<std::size_t>(v)].stripe_error;
        combos.push_back({d, v, inl, se});
      }
    std::stable_sort(combos.begin(), combos.end(), [](const Combo& a, const Combo& b) {
      if (a.inliers != b.inliers) return a.inliers > b.inliers;
      return a.stripe_error < b.stripe_error;
    });
    if (combos.empty()) {
      r.failure = "no planar unit could be identified";
      return false;
    }
    std::vector<marker::FeatureSet> options;
    for (const auto& c : combos) {
      marker::FeatureSet fs;
      if (c.d >= 0) fs.dots = dh[static_cast<std::size_t>(c.d)].features;
      if (c.v >= 0) fs.vertices = vh[static_cast<std::size_t>(c.v)].features;
      options.push_back(std::move(fs));
    }
    return pick(options, r, stripe);
  }

  /// Solves each labelling, relabels the candidates from its pose, and keeps
  /// the consistent result that explains the most candidates.
  bool pick(const std::vector<marker::FeatureSet>& options, FrameResult& r,
            const marker::StripeDetection& stripe) const {
    const std::size_t complete = 2u * static_cast<std::size_t>(spec_.n_rows) * 2u;
    std::optional<FrameResult> best;
    std::size_t best_support = 0;
    std::string first_failure;
    for (const auto& fs : options) {
      FrameResult t;
      t.features = fs;
      t.features.stripe_detected = stripe.found;
      t.features.stripe_centroid = stripe.centroid;
      if (!solve(t)) continue;
      relabel(t, r.candidates);
      if (!solve(t) || !consistent(t, stripe)) {
        if (first_failure.empty()) first_failure = t.failure;
        continue;
      }
      const std::size_t support = t.features.dots.size() + t.features.vertices.size();
      if (!best || support > best_support || (support == best_support && t.reproj < best->reproj)) {
        best = std::move(t);
        best_support = support;
        if (best_support == complete) break;
      }
    }
    if (!best) {
      r.failure = first_failure.empty() ? "no consistent labelling" : first_failure;
      return false;
    }
    best->candidates = std::move(r.candidates);
    r = std::move(*best);
    return true;
  }

  /// Image positions of every unit feature predicted by a marker pose.
  std::vector<std::pair<int, Vec2>> predict_units(const Pose& pose, marker::FeatureKind kind) const {
    std::vector<std::pair<int, Vec2>> out;
    const auto layout = marker::flatten_layout(spec_);
    for (const auto& p : marker::unit_points(spec_, marker::unit_frame(spec_, kind))) {
      const Vec3 c = pose.apply(p.marker);
      if (!(c.z() > 0)) continue;
      Vec2 img = project(k_, c);
      if (kind == marker::FeatureKind::Dot)
        img += dot_centroid_bias(k_, pose, spec_, layout[static_cast<std::size_t>(p.id)].flat);
      out.emplace_back(p.id, img);
    }
    return out;
  }

  /// Replaces the labels with the candidates found where the pose predicts
  /// the unit features.
  void relabel(FrameResult& t, const marker::Candidates& cands) const {
    marker::FeatureSet fs = t.features;
    for (auto kind : {marker::FeatureKind::Dot, marker::FeatureKind::Vertex})
      fs.of(kind) = snap(predict_units(t.pose, kind), cands.of(kind));
    if (fs.dots.size() >= 4 || fs.vertices.size() >= 4) t.features = std::move(fs);
  }

  bool solve(FrameResult& r) const {
    std::optional<UnitPose> dots = unit_pose(k_, spec_, marker::FeatureKind::Dot, r.features.dots, opt_.ippe);
    std::optional<UnitPose> verts =
        unit_pose(k_, spec_, marker::FeatureKind::Vertex, r.features.vertices, opt_.ippe);
    if (!dots && !verts) {
      if (r.failure.empty()) r.failure = "no unit with four usable features";
      return false;
    }
    auto choose = [&] {
      const auto sel = pose::select_pose(dots ? std::optional(dots->planar) : std::nullopt,
                                         verts ? std::optional(verts->planar) : std::nullopt);
      const auto kind =
          sel.source == pose::PatternKind::Dots ? marker::FeatureKind::Dot : marker::FeatureKind::Vertex;
      r.pose = marker::marker_pose_from_plane(marker::unit_frame(spec_, kind), sel.pose);
      r.reproj = sel.reproj;
      r.source = sel.source;
    };
    try {
      choose();
    } catch (const Error& e) {
      r.failure = e.what();
      return false;
    }
    if (opt_.dot_bias_iterations > 0 && r.features.dots.size() >= 4) {
      const auto layout = marker::flatten_layout(spec_);
      const auto measured = r.features.dots;
      for (int it = 0; it < opt_.dot_bias_iterations; ++it) {
        for (std::size_t i = 0; i < measured.size(); ++i) {
          const Vec2 bias = dot_centroid_bias(k_, r.pose, spec_, layout[static_cast<std::size_t>(measured[i].id)].flat);
          r.features.dots[i].position = measured[i].position - bias;
        }
        dots = unit_pose(k_, spec_, marker::FeatureKind::Dot, r.features.dots, opt_.ippe);
        try {
          choose();
        } catch (const Error&) {
          break;
        }
      }
    }
    if (opt_.refine_jointly) {
      const auto [model, image] = marker_correspondences(spec_, r.features);
      r.pose = pose::refine_pose(k_, r.pose, model, image, 20, 1e-12);
      r.reproj = pose::reprojection_rms(k_, r.pose, model, image);
    }
    return true;
  }

  /// Mislabelled units shift by whole rows or columns, which shows up either
  /// as disagreement between the two units or as a misplaced stripe.
  bool consistent(FrameResult& r, const marker::StripeDetection& stripe) const {
    const auto [model, image] = marker_correspondences(spec_, r.features);
    const double rms = pose::reprojection_rms(k_, r.pose, model, image);
    if (!(rms <= opt_.max_consistency_px)) {
      r.failure = "feature reprojection " + format_number(rms) + " px exceeds the consistency limit";
      return false;
    }
    if (stripe.found) {
      const auto predicted = predicted_stripe_centroid(k_, r.pose, spec_);
      const Vec3 mid = r.pose.apply(Vec3(0.5 * spec_.length(), 0.0, 0.0));
      const double pitch_px = k_.fx * spec_.pitch_axial / std::max(mid.z(), 1e-9);
      if (!predicted || (*predicted - stripe.centroid).norm() > opt_.stripe_tolerance * pitch_px) {
        r.failure = "stripe does not match the estimated pose";
        return false;
      }
    }
    return true;
  }

  /// Every feature of each unit that has at least four labels, mapped into the
  /// image by the unit homography.
  std::vector<marker::IdentifiedFeature> complete_units(const marker::FeatureSet& fs) const {
    std::vector<marker::IdentifiedFeature> out;
    for (auto kind : {marker::FeatureKind::Dot, marker::FeatureKind::Vertex}) {
      const auto points = marker::unit_points(spec_, marker::unit_frame(spec_, kind));
      std::vector<pose::Correspondence> known;
      for (const auto& f : fs.of(kind))
        for (const auto& p : points)
          if (p.id == f.id) known.push_back({p.plane.head<2>(), f.position});
      std::vector<Vec2> model;
      for (const auto& p : points) model.push_back(p.plane.head<2>());
      try {
        const auto img = marker::complete_by_homography(known, model);
        for (std::size_t i = 0; i < points.size(); ++i) out.push_back({points[i].id, img[i]});
      } catch (const Error&) {
      }
    }
    return out;
  }

  std::vector<double> patch(const ImageGray& g, const Vec2& c) const {
    const int rad = opt_.template_radius;
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>((2 * rad + 1) * (2 * rad + 1)));
    const int cx = static_cast<int>(std::lround(c.x()));
    const int cy = static_cast<int>(std::lround(c.y()));
    for (int dy = -rad; dy <= rad; ++dy)
      for (int dx = -rad; dx <= rad; ++dx) {
        const int x = std::clamp(cx + dx, 0, g.width - 1);
        const int y = std::clamp(cy + dy, 0, g.height - 1);
        out.push_back(g(x, y));
      }
    return out;
  }

  void remember(const ImageGray& g, const marker::FeatureSet& fs, const std::vector<marker::IdentifiedFeature>& completed) {
    tracked_.clear();
    const auto layout = marker::flatten_layout(spec_);
    auto add = [&](const marker::IdentifiedFeature& f, bool observed) {
      for (const auto& t : tracked_)
        if (t.id == f.id) return;
      const auto kind = layout[static_cast<std::size_t>(f.id)].kind;
      tracked_.push_back({f.id, kind, f.position, observed, observed ? patch(g, f.position) : std::vector<double>{}});
    };
    for (const auto* list : {&fs.dots, &fs.vertices})
      for (const auto& f : *list) add(f, true);
    for (const auto& f : completed) add(f, false);
  }

  /// Labels candidates from the previous frame: the median SSD displacement of
  /// the observed templates moves every tracked position, candidates are
  /// snapped to the moved positions, and each unit is then completed by its
  /// homography to pick up features that reappeared.
  marker::FeatureSet follow(const ImageGray& g, const marker::Candidates& cands) const {
    const int sr = opt_.search_radius;
    std::vector<double> mx;
    std::vector<double> my;
    for (const auto& t : tracked_) {
      if (!t.observed) continue;
      double best = std::numeric_limits<double>::infinity();
      Vec2 shift = Vec2::Zero();
      for (int dy = -sr; dy <= sr; ++dy)
        for (int dx = -sr; dx <= sr; ++dx) {
          const auto p = patch(g, t.position + Vec2(dx, dy));
          double ssd = 0.0;
          for (std::size_t i = 0; i < p.size(); ++i) ssd += (p[i] - t.patch[i]) * (p[i] - t.patch[i]);
          if (ssd < best) {
            best = ssd;
            shift = Vec2(dx, dy);
          }
        }
      mx.push_back(shift.x());
      my.push_back(shift.y());
    }
    const Vec2 motion(marker::detail::median(mx), marker::detail::median(my));

    marker::FeatureSet out;
    for (auto kind : {marker::FeatureKind::Dot, marker::FeatureKind::Vertex}) {
      std::vector<std::pair<int, Vec2>> predicted;
      for (const auto& t : tracked_)
        if (t.kind == kind) predicted.emplace_back(t.id, t.position + motion);
      auto labels = snap(predicted, cands.of(kind));
      if (labels.size() >= 4) {
        const auto points = marker::unit_points(spec_, marker::unit_frame(spec_, kind));
        std::vector<pose::Correspondence> known;
        for (const auto& f : labels)
          for (const auto& p : points)
            if (p.id == f.id) known.push_back({p.plane.head<2>(), f.position});
        std::vector<Vec2> model;
        for (const auto& p : points) model.push_back(p.plane.head<2>());
        try {
          const auto img = marker::complete_by_homography(known, model);
          predicted.clear();
          for (std::size_t i = 0; i < points.size(); ++i) predicted.emplace_back(points[i].id, img[i]);
          labels = snap(predicted, cands.of(kind));
        } catch (const Error&) {
        }
      }
      out.of(kind) = std::move(labels);
    }
    return out;
  }

  /// Greedy one-to-one assignment of candidates to predicted positions.
  std::vector<marker::IdentifiedFeature> snap(const std::vector<std::pair<int, Vec2>>& predicted,
                                              const std::vector<Vec2>& candidates) const {
    struct Pair {
      double d;
      std::size_t p;
      std::size_t c;
    };
    std::vector<Pair> pairs;
    for (std::size_t i = 0; i < predicted.size(); ++i)
      for (std::size_t j = 0; j < candidates.size(); ++j) {
        const double d = (predicted[i].second - candidates[j]).norm();
        if (d <= opt_.match_gate) pairs.push_back({d, i, j});
      }
    std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
      return a.d < b.d || (a.d == b.d && (a.p < b.p || (a.p == b.p && a.c < b.c)));
    });
    std::vector<bool> used_p(predicted.size(), false);
    std::vector<bool> used_c(candidates.size(), false);
    std::vector<marker::IdentifiedFeature> out;
    for (const auto& pr : pairs) {
      if (used_p[pr.p] || used_c[pr.c]) continue;
      used_p[pr.p] = used_c[pr.c] = true;
      out.push_back({predicted[pr.p].first, candidates[pr.c]});
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return out;
  }

  CameraIntrinsics k_;
  marker::MarkerSpec spec_;
  TrackerOptions opt_;
  std::vector<Tracked> tracked_;
};

}  // namespace probesense::track
