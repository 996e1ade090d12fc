#pragma once

// Dual-pattern cylindrical marker: alternating lines of circular dots (even
// columns) and chessboard vertices (odd columns) wrapped around the probe,
// with a green stripe ring at one end to break the symmetry.
//
// Marker frame: X runs along the probe axis from the tip end towards the
// tail, the origin sits on the surface at theta = 0 and the axis is the line
// (s, 0, radius). Feature ids are column-major, id = column * n_rows + row,
// with row 0 nearest the tip.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "probesense/config.hpp"
#include "probesense/error.hpp"
#include "probesense/geomcore.hpp"
#include "probesense/image.hpp"
#include "probesense/imageio.hpp"
#include "probesense/pose.hpp"

namespace probesense::marker {

enum class FeatureKind { Dot, Vertex };
enum class StripeEnd { NearTip, FarTip };

inline const char* kind_name(FeatureKind k) { return k == FeatureKind::Dot ? "dot" : "vertex"; }

struct MarkerSpec {
  double radius = 6.0;
  int n_columns = 10;
  int n_rows = 6;
  double pitch_axial = 5.0;
  double pitch_circumferential = 2.0 * kPi * 6.0 / 10.0;
  double dot_radius = 1.2;
  double square_size = 1.4;  // side of one checker square in a vertex tile
  StripeEnd stripe_end = StripeEnd::NearTip;
  double stripe_gap = 1.5;    // distance from the outermost row to the stripe
  double stripe_width = 2.5;

  double length() const { return (n_rows - 1) * pitch_axial; }

  /// Axial extent [begin, end] of the stripe ring.
  std::pair<double, double> stripe_span() const {
    if (stripe_end == StripeEnd::NearTip) return {-stripe_gap - stripe_width, -stripe_gap};
    return {length() + stripe_gap, length() + stripe_gap + stripe_width};
  }

  void validate() const {
    if (!(radius > 0) || n_columns < 2 || n_columns % 2 != 0 || n_rows < 2 || !(pitch_axial > 0) ||
        !(dot_radius > 0) || !(square_size > 0) || !(stripe_width > 0) || stripe_gap < 0)
      fail(Errc::DegenerateInput, "invalid marker spec");
    if (std::abs(n_columns * pitch_circumferential - 2.0 * kPi * radius) > 1e-6)
      fail(Errc::DegenerateInput, "columns must tile the circumference");
  }
};

inline MarkerSpec parse_marker_spec(std::string_view text) {
  const auto kv = KeyValues::parse(text);
  kv.require_known({"radius", "n_columns", "n_rows", "pitch_axial", "pitch_circumferential", "dot_radius",
                    "square_size", "stripe_end", "stripe_gap", "stripe_width"});
  MarkerSpec s;
  s.radius = kv.get_double("radius", s.radius);
  s.n_columns = static_cast<int>(kv.get_int("n_columns", s.n_columns));
  s.n_rows = static_cast<int>(kv.get_int("n_rows", s.n_rows));
  s.pitch_axial = kv.get_double("pitch_axial", s.pitch_axial);
  s.pitch_circumferential = kv.get_double("pitch_circumferential", 2.0 * kPi * s.radius / s.n_columns);
  s.dot_radius = kv.get_double("dot_radius", s.dot_radius);
  s.square_size = kv.get_double("square_size", s.square_size);
  s.stripe_gap = kv.get_double("stripe_gap", s.stripe_gap);
  s.stripe_width = kv.get_double("stripe_width", s.stripe_width);
  const auto end = kv.get_string("stripe_end", "near_tip");
  if (end == "near_tip") {
    s.stripe_end = StripeEnd::NearTip;
  } else if (end == "far_tip") {
    s.stripe_end = StripeEnd::FarTip;
  } else {
    throw ConfigError("stripe_end must be near_tip or far_tip", kv.line_of("stripe_end"), "stripe_end");
  }
  s.validate();
  return s;
}

inline std::string format_marker_spec(const MarkerSpec& s) {
  std::string out;
  auto put = [&](const std::string& k, const std::string& v) { out += k + "=" + v + "\n"; };
  put("radius", format_number(s.radius));
  put("n_columns", std::to_string(s.n_columns));
  put("n_rows", std::to_string(s.n_rows));
  put("pitch_axial", format_number(s.pitch_axial));
  put("pitch_circumferential", format_number(s.pitch_circumferential));
  put("dot_radius", format_number(s.dot_radius));
  put("square_size", format_number(s.square_size));
  put("stripe_end", s.stripe_end == StripeEnd::NearTip ? "near_tip" : "far_tip");
  put("stripe_gap", format_number(s.stripe_gap));
  put("stripe_width", format_number(s.stripe_width));
  return out;
}

inline MarkerSpec read_marker_spec(const std::filesystem::path& p) { return parse_marker_spec(io::read_file(p)); }

inline FeatureKind column_kind(int column) { return column % 2 == 0 ? FeatureKind::Dot : FeatureKind::Vertex; }

/// Circumferential flat coordinate of a column, wrapped into (-pi r, pi r].
inline double column_offset(const MarkerSpec& s, int column) {
  double y = column * s.pitch_circumferential;
  const double half = kPi * s.radius;
  while (y > half + 1e-12) y -= 2.0 * half;
  return y;
}

struct LayoutEntry {
  int id = 0;
  FeatureKind kind = FeatureKind::Dot;
  int column = 0;
  int row = 0;
  Vec2 flat = Vec2::Zero();  // (axial, circumferential) mm
};

inline int feature_id(const MarkerSpec& s, int column, int row) { return column * s.n_rows + row; }

inline std::vector<LayoutEntry> flatten_layout(const MarkerSpec& s) {
  std::vector<LayoutEntry> out;
  out.reserve(static_cast<std::size_t>(s.n_columns * s.n_rows));
  for (int c = 0; c < s.n_columns; ++c) {
    for (int r = 0; r < s.n_rows; ++r)
      out.push_back({feature_id(s, c, r), column_kind(c), c, r, Vec2(r * s.pitch_axial, column_offset(s, c))});
  }
  return out;
}

inline std::string layout_csv(std::span<const LayoutEntry> layout) {
  std::string out = "id,kind,x,y\n";
  for (const auto& e : layout)
    out += std::to_string(e.id) + "," + kind_name(e.kind) + "," + format_number(e.flat.x()) + "," +
           format_number(e.flat.y()) + "\n";
  return out;
}

/// Wraps a flat marker point onto the cylinder.
inline Vec3 cylinder_lift(const MarkerSpec& s, const Vec2& flat) {
  if (std::abs(flat.y()) > kPi * s.radius * (1.0 + 1e-12))
    fail(Errc::OutOfWrapRange, "circumferential coordinate beyond half a turn");
  const double theta = flat.y() / s.radius;
  return {flat.x(), s.radius * std::sin(theta), s.radius * (1.0 - std::cos(theta))};
}

inline Vec3 outward_normal(const MarkerSpec& s, double theta) {
  (void)s;
  return {0.0, std::sin(theta), -std::cos(theta)};
}

/// The two same-kind columns that form the visible planar unit: a chord plane
/// through two parallel feature lines two column pitches apart.
struct UnitFrame {
  FeatureKind kind = FeatureKind::Dot;
  int column_a = 0;
  int column_b = 2;
  Pose plane_in_marker;  // plane coordinates (z = 0 on the unit) -> marker frame
};

inline UnitFrame unit_frame(const MarkerSpec& s, FeatureKind kind) {
  if (s.n_columns < 4) fail(Errc::DegenerateInput, "a planar unit needs at least four columns");
  UnitFrame u;
  u.kind = kind;
  u.column_a = kind == FeatureKind::Dot ? 0 : 1;
  u.column_b = u.column_a + 2;
  const double mid_x = 0.5 * s.length();
  const Vec3 pa = cylinder_lift(s, Vec2(mid_x, column_offset(s, u.column_a)));
  const Vec3 pb = cylinder_lift(s, Vec2(mid_x, column_offset(s, u.column_b)));
  const Vec3 e1 = Vec3::UnitX();
  const Vec3 e2 = (pb - pa).normalized();
  u.plane_in_marker.rotation.col(0) = e1;
  u.plane_in_marker.rotation.col(1) = e2;
  u.plane_in_marker.rotation.col(2) = e1.cross(e2);
  u.plane_in_marker.translation = 0.5 * (pa + pb);
  return u;
}

struct UnitPoint {
  int id = 0;
  int column = 0;
  int row = 0;
  Vec3 plane;   // z == 0
  Vec3 marker;  // on the cylinder
};

inline std::vector<UnitPoint> unit_points(const MarkerSpec& s, const UnitFrame& u) {
  std::vector<UnitPoint> out;
  const Pose to_plane = u.plane_in_marker.inverse();
  for (int c : {u.column_a, u.column_b}) {
    for (int r = 0; r < s.n_rows; ++r) {
      const Vec3 m = cylinder_lift(s, Vec2(r * s.pitch_axial, column_offset(s, c)));
      Vec3 q = to_plane.apply(m);
      q.z() = 0.0;
      out.push_back({feature_id(s, c, r), c, r, q, m});
    }
  }
  return out;
}

/// Marker pose from the pose of a unit plane.
inline Pose marker_pose_from_plane(const UnitFrame& u, const Pose& plane_in_camera) {
  return plane_in_camera * u.plane_in_marker.inverse();
}

struct IdentifiedFeature {
  int id = 0;
  Vec2 position = Vec2::Zero();
};

struct FeatureSet {
  std::vector<IdentifiedFeature> dots;
  std::vector<IdentifiedFeature> vertices;
  bool stripe_detected = false;
  Vec2 stripe_centroid = Vec2::Zero();

  const std::vector<IdentifiedFeature>& of(FeatureKind k) const { return k == FeatureKind::Dot ? dots : vertices; }
  std::vector<IdentifiedFeature>& of(FeatureKind k) { return k == FeatureKind::Dot ? dots : vertices; }
};

struct Candidates {
  std::vector<Vec2> dots;
  std::vector<Vec2> vertices;

  const std::vector<Vec2>& of(FeatureKind k) const { return k == FeatureKind::Dot ? dots : vertices; }
};

struct StripeDetection {
  bool found = false;
  Vec2 centroid = Vec2::Zero();
  int pixels = 0;
  Mask mask;
};

/// Green stripe pixels: hue within [90, 150] degrees with clear saturation.
inline StripeDetection detect_stripe(const ImageRgb& img, int min_pixels = 12, double min_saturation = 0.35,
                                     double min_value = 0.15) {
  StripeDetection out;
  out.mask = Mask(img.width, img.height);
  Vec2 acc = Vec2::Zero();
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const Rgb& p = img(x, y);
      const auto [hue, sat] = hue_saturation(p);
      if (hue >= 90.0 && hue <= 150.0 && sat >= min_saturation && p.maxCoeff() >= min_value) {
        out.mask(x, y) = 1;
        acc += Vec2(x, y);
        ++out.pixels;
      }
    }
  }
  if (out.pixels >= min_pixels) {
    out.found = true;
    out.centroid = acc / out.pixels;
  }
  return out;
}

/// Maps model points through the homography fitted to the known pairs.
inline std::vector<Vec2> complete_by_homography(std::span<const pose::Correspondence> known,
                                                std::span<const Vec2> missing_model) {
  if (known.size() < 4) fail(Errc::CollinearPairs, "need at least four known pairs");
  std::vector<Vec2> model;
  std::vector<Vec2> image;
  for (const auto& k : known) {
    model.push_back(k.model);
    image.push_back(k.image);
  }
  if (pose::collinear(model) || pose::collinear(image)) fail(Errc::CollinearPairs, "known pairs are collinear");
  const Homography h = pose::estimate_homography(known);
  std::vector<Vec2> out;
  out.reserve(missing_model.size());
  for (const auto& m : missing_model) out.push_back(apply_homography(h, m));
  return out;
}

namespace detail {

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

/// Indices of the largest single-linkage cluster at 2.5x the median
/// nearest-neighbour spacing; also returns that spacing.
inline std::pair<std::vector<int>, double> largest_cluster(std::span<const Vec2> pts) {
  const int n = static_cast<int>(pts.size());
  std::vector<double> nn(n, std::numeric_limits<double>::infinity());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) nn[i] = std::min(nn[i], (pts[i] - pts[j]).norm());
  const double spacing = median(nn);
  const double link = 2.5 * spacing;

  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if ((pts[i] - pts[j]).norm() <= link) parent[find(i)] = find(j);

  std::vector<int> size(n, 0);
  for (int i = 0; i < n; ++i) ++size[find(i)];
  int best_root = -1;
  for (int i = 0; i < n; ++i) {
    const int r = find(i);
    if (best_root < 0 || size[r] > size[best_root]) best_root = r;
  }
  std::vector<int> members;
  for (int i = 0; i < n; ++i)
    if (find(i) == best_root) members.push_back(i);
  return {members, spacing};
}

inline double line_angle(const Vec2& a, const Vec2& b) {
  const double c = std::abs(a.normalized().dot(b.normalized()));
  return std::acos(std::min(1.0, c));
}

inline double segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double t = std::clamp((p - a).dot(ab) / std::max(ab.squaredNorm(), 1e-300), 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

/// Median nearest-neighbour distance within a subset.
inline double subset_spacing(std::span<const Vec2> pts, const std::vector<int>& subset) {
  std::vector<double> nn;
  for (int i : subset) {
    double best = std::numeric_limits<double>::infinity();
    for (int j : subset)
      if (i != j) best = std::min(best, (pts[i] - pts[j]).norm());
    if (std::isfinite(best)) nn.push_back(best);
  }
  return median(nn);
}

/// A feature line: candidate indices ordered along `direction`.
struct FeatureLine {
  std::vector<int> members;
  Vec2 direction = Vec2::UnitX();
  double offset = 0.0;  // signed distance of the line from the origin along the common normal
};

/// Greedy extraction of collinear groups (at least two points each): the
/// line through the pair of points that gathers most others within `tol`
/// wins, its points are removed, and the search repeats. Lines that are not
/// near-parallel to the best-supported one are discarded, the rest are
/// sorted across the common direction.
inline std::vector<FeatureLine> extract_lines(std::span<const Vec2> pts, const std::vector<int>& subset, double tol,
                                              double max_angle = deg2rad(10.0)) {
  std::vector<int> left = subset;
  std::vector<FeatureLine> lines;
  while (left.size() >= 2) {
    int best_n = 0;
    double best_res = std::numeric_limits<double>::infinity();
    std::vector<int> best_members;
    Vec2 best_dir = Vec2::UnitX();
    for (std::size_t a = 0; a < left.size(); ++a)
      for (std::size_t b = a + 1; b < left.size(); ++b) {
        const Vec2 pa = pts[left[a]];
        const Vec2 d = (pts[left[b]] - pa).normalized();
        const Vec2 n(-d.y(), d.x());
        std::vector<int> in;
        double res = 0.0;
        for (int i : left) {
          const double dist = std::abs(n.dot(pts[i] - pa));
          if (dist <= tol) {
            in.push_back(i);
            res += dist;
          }
        }
        const int cnt = static_cast<int>(in.size());
        if (cnt > best_n || (cnt == best_n && res < best_res)) {
          best_n = cnt;
          best_res = res;
          best_members = std::move(in);
          best_dir = d;
        }
      }
    if (best_n < 2) break;
    FeatureLine line;
    line.members = best_members;
    line.direction = best_dir;
    lines.push_back(std::move(line));
    std::erase_if(left, [&](int i) {
      return std::find(best_members.begin(), best_members.end(), i) != best_members.end();
    });
  }
  if (lines.empty()) return lines;

  Vec2 dir = lines.front().direction;
  std::erase_if(lines, [&](const FeatureLine& l) { return line_angle(l.direction, dir) > max_angle; });
  const Vec2 normal(-dir.y(), dir.x());
  for (auto& l : lines) {
    if (l.direction.dot(dir) < 0) l.direction = -l.direction;
    std::sort(l.members.begin(), l.members.end(),
              [&](int a, int b) { return pts[a].dot(dir) < pts[b].dot(dir); });
    double off = 0.0;
    for (int i : l.members) off += normal.dot(pts[i]);
    l.offset = off / static_cast<double>(l.members.size());
  }
  std::sort(lines.begin(), lines.end(), [](const FeatureLine& a, const FeatureLine& b) { return a.offset < b.offset; });
  return lines;
}

}  // namespace detail

struct IdentifyOptions {
  double max_residual = 0.25;  // fraction of the local model spacing in the image
  std::size_t max_hypotheses = 12;
};

/// One labelling of a unit with its support.
struct UnitHypothesis {
  std::vector<IdentifiedFeature> features;  // sorted by id
  int inliers = 0;
  double stripe_error = 0.0;  // stripe offset along the axis from its model position, in row pitches
  double residual = 0.0;      // mean assignment distance, px
};

namespace detail {

/// Nearest projected model point per candidate, refitted once on all labels.
inline std::optional<UnitHypothesis> assign_unit(std::span<const Vec2> candidates, const std::vector<int>& members,
                                                 const std::vector<UnitPoint>& points, Homography h,
                                                 const IdentifyOptions& opt) {
  UnitHypothesis hyp;
  for (int pass = 0; pass < 2; ++pass) {
    std::vector<Vec2> projected;
    try {
      for (const auto& p : points) projected.push_back(apply_homography(h, p.plane.head<2>()));
    } catch (const Error&) {
      return std::nullopt;
    }
    std::vector<double> local(points.size(), std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < points.size(); ++i)
      for (std::size_t j = 0; j < points.size(); ++j)
        if (i != j) local[i] = std::min(local[i], (projected[i] - projected[j]).norm());

    std::vector<int> owner(points.size(), -1);
    std::vector<double> owner_dist(points.size(), std::numeric_limits<double>::infinity());
    for (int ci : members) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < points.size(); ++k) {
        const double d = (candidates[ci] - projected[k]).norm();
        if (d < best_d) {
          best_d = d;
          best = k;
        }
      }
      if (best_d < opt.max_residual * local[best] && best_d < owner_dist[best]) {
        owner[best] = ci;
        owner_dist[best] = best_d;
      }
    }
    hyp.features.clear();
    hyp.residual = 0.0;
    std::vector<pose::Correspondence> pairs;
    for (std::size_t k = 0; k < points.size(); ++k) {
      if (owner[k] < 0) continue;
      hyp.features.push_back({points[k].id, candidates[owner[k]]});
      hyp.residual += owner_dist[k];
      pairs.push_back({points[k].plane.head<2>(), candidates[owner[k]]});
    }
    if (hyp.features.size() < 4) return std::nullopt;
    hyp.residual /= static_cast<double>(hyp.features.size());
    try {
      h = pose::estimate_homography(pairs);
    } catch (const Error&) {
      return std::nullopt;
    }
  }
  hyp.inliers = static_cast<int>(hyp.features.size());
  std::sort(hyp.features.begin(), hyp.features.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return hyp;
}

}  // namespace detail

/// Ranked labellings of one planar unit, best first.
///
/// Feature lines are extracted from the largest vicinity cluster; each pair
/// of neighbouring lines spans a trapezoid whose long edges carry the two
/// columns of the unit. The stripe orients the rows, and the image
/// handedness of the (axial, chord) basis, which is preserved when the
/// cylinder is viewed from outside, tells the columns apart. Because
/// features may be missing, the rows of the trapezoid corners are not
/// assumed: every ordered choice is tried, the candidates are labelled by
/// nearest projected model point, and hypotheses are ranked by the number of
/// labels and then by how well the stripe lands at its model position.
inline std::vector<UnitHypothesis> identify_unit_hypotheses(const Candidates& all, const Vec2& stripe,
                                                            const MarkerSpec& spec, FeatureKind kind,
                                                            const IdentifyOptions& opt = {}) {
  const std::vector<Vec2>& candidates = all.of(kind);
  if (candidates.size() < 4) return {};
  // Dots and vertices interleave, so the vicinity clustering runs on both.
  std::vector<Vec2> pooled = all.dots;
  pooled.insert(pooled.end(), all.vertices.begin(), all.vertices.end());
  const int offset = kind == FeatureKind::Dot ? 0 : static_cast<int>(all.dots.size());
  const auto [pooled_members, pooled_spacing] = detail::largest_cluster(pooled);
  std::vector<int> members;
  for (int i : pooled_members)
    if (i >= offset && i < offset + static_cast<int>(candidates.size())) members.push_back(i - offset);
  if (members.size() < 4) return {};
  const double spacing = detail::subset_spacing(candidates, members);
  if (!(spacing > 0)) return {};
  const auto lines = detail::extract_lines(candidates, members, std::max(1.0, 0.2 * spacing));

  const UnitFrame unit = unit_frame(spec, kind);
  const auto points = unit_points(spec, unit);
  auto plane_of = [&](int column, int row) {
    for (const auto& p : points)
      if (p.column == column && p.row == row) return Vec2(p.plane.head<2>());
    return Vec2(Vec2::Zero());
  };
  const auto [s0, s1] = spec.stripe_span();
  const double stripe_model_x = 0.5 * (s0 + s1) - 0.5 * spec.length();
  const int n = spec.n_rows;

  std::vector<UnitHypothesis> hyps;
  for (std::size_t li = 0; li + 1 < lines.size(); ++li) {
    const auto& la = lines[li];
    const auto& lb = lines[li + 1];
    std::vector<int> pair_members = la.members;
    pair_members.insert(pair_members.end(), lb.members.begin(), lb.members.end());
    // Line A runs q0 -> q1, line B runs q3 -> q2, both in the same direction.
    std::array<Vec2, 4> q{candidates[la.members.front()], candidates[la.members.back()],
                          candidates[lb.members.back()], candidates[lb.members.front()]};

    const double d_start = (stripe - 0.5 * (q[0] + q[3])).norm();
    const double d_end = (stripe - 0.5 * (q[1] + q[2])).norm();
    const bool stripe_at_start = d_start <= d_end;
    const bool row0_at_start = stripe_at_start == (spec.stripe_end == StripeEnd::NearTip);
    if (!row0_at_start) q = {q[1], q[0], q[3], q[2]};

    const Vec2 axial = (q[1] - q[0]) + (q[2] - q[3]);
    const Vec2 chord = (q[3] - q[0]) + (q[2] - q[1]);
    const bool a_is_first = detail::cross2(axial, chord) > 0;
    const int col_line_a = a_is_first ? unit.column_a : unit.column_b;
    const int col_line_b = a_is_first ? unit.column_b : unit.column_a;

    for (int i0 = 0; i0 < n; ++i0)
      for (int i1 = i0 + 1; i1 < n; ++i1)
        for (int j0 = 0; j0 < n; ++j0)
          for (int j1 = j0 + 1; j1 < n; ++j1) {
            const std::vector<pose::Correspondence> corners{{plane_of(col_line_a, i0), q[0]},
                                                            {plane_of(col_line_a, i1), q[1]},
                                                            {plane_of(col_line_b, j1), q[2]},
                                                            {plane_of(col_line_b, j0), q[3]}};
            Homography h;
            try {
              h = pose::estimate_homography(corners);
            } catch (const Error&) {
              continue;
            }
            auto hyp = detail::assign_unit(candidates, pair_members, points, h, opt);
            if (!hyp) continue;
            std::vector<pose::Correspondence> pairs;
            for (const auto& f : hyp->features)
              for (const auto& p : points)
                if (p.id == f.id) pairs.push_back({p.plane.head<2>(), f.position});
            try {
              const Vec2 st = apply_homography(pose::estimate_homography(pairs).inverse(), stripe);
              hyp->stripe_error = std::abs(st.x() - stripe_model_x) / spec.pitch_axial;
            } catch (const Error&) {
              continue;
            }
            const bool duplicate = std::any_of(hyps.begin(), hyps.end(), [&](const UnitHypothesis& o) {
              if (o.features.size() != hyp->features.size()) return false;
              for (std::size_t k = 0; k < o.features.size(); ++k)
                if (o.features[k].id != hyp->features[k].id || o.features[k].position != hyp->features[k].position)
                  return false;
              return true;
            });
            if (!duplicate) hyps.push_back(std::move(*hyp));
          }
  }
  std::stable_sort(hyps.begin(), hyps.end(), [](const UnitHypothesis& a, const UnitHypothesis& b) {
    if (a.inliers != b.inliers) return a.inliers > b.inliers;
    return a.stripe_error < b.stripe_error;
  });
  if (hyps.size() > opt.max_hypotheses) hyps.resize(opt.max_hypotheses);
  return hyps;
}

/// Best labelling of one planar unit, or an empty list when the candidates
/// do not support one.
inline std::vector<IdentifiedFeature> identify_unit(const Candidates& candidates, const Vec2& stripe,
                                                    const MarkerSpec& spec, FeatureKind kind,
                                                    const IdentifyOptions& opt = {}) {
  auto hyps = identify_unit_hypotheses(candidates, stripe, spec, kind, opt);
  if (hyps.empty()) return {};
  return std::move(hyps.front().features);
}

/// Assigns marker ids to unlabelled candidates of both kinds. The stripe
/// centroid (if seen) resolves the half-turn ambiguity of each unit.
inline FeatureSet identify(const Candidates& candidates, const std::optional<Vec2>& stripe, const MarkerSpec& spec,
                           const IdentifyOptions& opt = {}) {
  if (candidates.dots.size() < 4 && candidates.vertices.size() < 4)
    fail(Errc::NotEnoughFeatures, "fewer than four candidates of either kind");
  if (!stripe) fail(Errc::AmbiguousWithoutStripe, "no stripe evidence to orient the marker");
  FeatureSet out;
  out.stripe_detected = true;
  out.stripe_centroid = *stripe;
  out.dots = identify_unit(candidates, *stripe, spec, FeatureKind::Dot, opt);
  out.vertices = identify_unit(candidates, *stripe, spec, FeatureKind::Vertex, opt);
  if (out.dots.empty() && out.vertices.empty())
    fail(Errc::NotEnoughFeatures, "no planar unit could be identified");
  return out;
}

}  // namespace probesense::marker
