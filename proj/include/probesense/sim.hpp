#pragma once

// Deterministic synthetic scenes: a value-noise heightfield of textured
// tissue seen by a rectified stereo pair, a cylindrical probe carrying the
// dual-pattern marker, the probe-axis / tissue intersection, and
// structured-light pattern sequences. Every random quantity is derived from
// explicit seeds so renders are bit-reproducible.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "probesense/config.hpp"
#include "probesense/error.hpp"
#include "probesense/geomcore.hpp"
#include "probesense/image.hpp"
#include "probesense/imageio.hpp"
#include "probesense/marker.hpp"
#include "probesense/structlight.hpp"

namespace probesense::sim {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Generator state for one frame, independent of rendering order.
inline std::uint64_t frame_seed(std::uint64_t seed, std::uint64_t frame) {
  return splitmix64(seed ^ splitmix64(frame + 0x632be59bd9b4e019ULL));
}

inline double hash01(std::uint64_t seed, std::int64_t ix, std::int64_t iy) {
  const std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(ix) * 0x9e3779b97f4a7c15ULL +
                                                       static_cast<std::uint64_t>(iy)));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

/// Smoothstep-interpolated lattice noise in [0, 1].
inline double smooth_noise(double u, double v, std::uint64_t seed) {
  const double fu = std::floor(u);
  const double fv = std::floor(v);
  const auto i = static_cast<std::int64_t>(fu);
  const auto j = static_cast<std::int64_t>(fv);
  double a = u - fu;
  double b = v - fv;
  a = a * a * (3.0 - 2.0 * a);
  b = b * b * (3.0 - 2.0 * b);
  const double v00 = hash01(seed, i, j), v10 = hash01(seed, i + 1, j);
  const double v01 = hash01(seed, i, j + 1), v11 = hash01(seed, i + 1, j + 1);
  return (v00 * (1 - a) + v10 * a) * (1 - b) + (v01 * (1 - a) + v11 * a) * b;
}

struct HeightfieldParams {
  double base = 160.0;       // mm, depth of the mean surface
  double amplitude = 6.0;    // mm
  double frequency = 1.0 / 15.0;  // lattice nodes per mm
  std::uint64_t seed = 1;
};

/// Z = base + amplitude * n(X, Y) with n bilinear over an 8x8 lattice of
/// values in [-1, 1], clamped beyond the lattice.
class Heightfield {
 public:
  static constexpr int kNodes = 8;

  explicit Heightfield(const HeightfieldParams& p = {}, const Vec2& centre = Vec2::Zero()) : p_(p) {
    if (!(p.frequency > 0)) fail(Errc::DegenerateInput, "heightfield frequency must be positive");
    cell_ = 1.0 / p.frequency;
    origin_ = centre - Vec2::Constant(0.5 * (kNodes - 1) * cell_);
    double lo = 1.0, hi = -1.0;
    for (int j = 0; j < kNodes; ++j) {
      for (int i = 0; i < kNodes; ++i) {
        const double v = 2.0 * hash01(p.seed, i, j) - 1.0;
        values_[j * kNodes + i] = v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    zmin_ = p.base + p.amplitude * std::min(lo, hi);
    zmax_ = p.base + p.amplitude * std::max(lo, hi);
    if (p.amplitude < 0) std::swap(zmin_, zmax_);
  }

  double height(double x, double y) const {
    const auto [i, j, a, b] = cell_coords(x, y);
    return p_.base + p_.amplitude * lerp2(i, j, a, b);
  }

  Vec2 gradient(double x, double y) const {
    const double u = (x - origin_.x()) / cell_;
    const double v = (y - origin_.y()) / cell_;
    const auto [i, j, a, b] = cell_coords(x, y);
    const double v00 = at(i, j), v10 = at(i + 1, j), v01 = at(i, j + 1), v11 = at(i + 1, j + 1);
    double gx = ((v10 - v00) * (1 - b) + (v11 - v01) * b) / cell_;
    double gy = ((v01 - v00) * (1 - a) + (v11 - v10) * a) / cell_;
    if (u < 0 || u > kNodes - 1) gx = 0;
    if (v < 0 || v > kNodes - 1) gy = 0;
    return p_.amplitude * Vec2(gx, gy);
  }

  double min_height() const { return zmin_; }
  double max_height() const { return zmax_; }
  const HeightfieldParams& params() const { return p_; }

 private:
  struct Cell {
    int i, j;
    double a, b;
  };

  Cell cell_coords(double x, double y) const {
    const double u = std::clamp((x - origin_.x()) / cell_, 0.0, double(kNodes - 1));
    const double v = std::clamp((y - origin_.y()) / cell_, 0.0, double(kNodes - 1));
    const int i = std::min(static_cast<int>(u), kNodes - 2);
    const int j = std::min(static_cast<int>(v), kNodes - 2);
    return {i, j, u - i, v - j};
  }

  double at(int i, int j) const { return values_[j * kNodes + i]; }

  double lerp2(int i, int j, double a, double b) const {
    return (at(i, j) * (1 - a) + at(i + 1, j) * a) * (1 - b) + (at(i, j + 1) * (1 - a) + at(i + 1, j + 1) * a) * b;
  }

  HeightfieldParams p_;
  double cell_ = 15.0;
  Vec2 origin_;
  std::array<double, kNodes * kNodes> values_{};
  double zmin_ = 0.0;
  double zmax_ = 0.0;
};

/// First intersection of the ray o + t d (d.z > 0) with the surface, by
/// Newton steps safeguarded with bisection.
inline std::optional<double> intersect_heightfield(const Heightfield& hf, const Vec3& o, const Vec3& d) {
  if (!(d.z() > 0)) return std::nullopt;
  auto f = [&](double t) { return o.z() + t * d.z() - hf.height(o.x() + t * d.x(), o.y() + t * d.y()); };
  double lo = std::max(0.0, (hf.min_height() - 1.0 - o.z()) / d.z());
  double hi = (hf.max_height() + 1.0 - o.z()) / d.z();
  if (!(hi > lo) || f(lo) > 0 || f(hi) < 0) return std::nullopt;
  double t = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double ft = f(t);
    if (ft == 0.0) return t;
    if (ft < 0)
      lo = t;
    else
      hi = t;
    if (hi - lo < 1e-12) break;
    const Vec2 g = hf.gradient(o.x() + t * d.x(), o.y() + t * d.y());
    const double slope = d.z() - g.dot(d.head<2>());
    double next = slope > 0 ? t - ft / slope : lo - 1.0;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - t) < 1e-13) {
      t = next;
      break;
    }
    t = next;
  }
  return t;
}

/// Tissue albedo: multi-octave value noise mapped onto a red-pink palette.
struct Texture {
  std::uint64_t seed = 2;
  double scale = 8.0;  // mm, coarsest octave
  int octaves = 3;

  double value(double x, double y) const {
    double acc = 0.0, norm = 0.0, w = 1.0, s = scale;
    for (int k = 0; k < octaves; ++k) {
      acc += w * smooth_noise(x / s, y / s, seed + 7919ULL * static_cast<std::uint64_t>(k));
      norm += w;
      w *= 0.5;
      s *= 0.5;
    }
    return acc / norm;
  }

  Rgb color(double x, double y) const {
    const double t = value(x, y);
    const Rgb dark(0.72, 0.30, 0.34);
    const Rgb light(0.97, 0.66, 0.66);
    return dark + t * (light - dark);
  }
};

struct ProbeGeometry {
  marker::MarkerSpec marker;
  double tip_offset = 30.0;   // marker origin to tip along the axis, mm
  double cone_length = 20.0;  // conical front end
  double length = 160.0;      // axial position of the tail end
  double marker_margin = 3.0; // printed area beyond the last row
};

enum class ProbePart { Cylinder, Cone, Cap };

struct ProbeHit {
  double t = 0.0;
  Vec3 local = Vec3::Zero();  // marker frame
  ProbePart part = ProbePart::Cylinder;
};

/// Ray (camera frame) against the probe: cylinder body, conical front end and
/// a flat tail cap.
inline std::optional<ProbeHit> intersect_probe(const ProbeGeometry& g, const Pose& marker_in_camera, const Vec3& o,
                                               const Vec3& d) {
  const Mat3 rt = marker_in_camera.rotation.transpose();
  const Vec3 om = rt * (o - marker_in_camera.translation);
  const Vec3 dm = rt * d;
  const double r = g.marker.radius;
  const double oy = om.y(), oz = om.z() - r, dy = dm.y(), dz = dm.z();
  const double x_tip = -g.tip_offset;
  const double x_base = x_tip + g.cone_length;

  std::optional<ProbeHit> best;
  auto consider = [&](double s, ProbePart part) {
    if (!(s > 1e-9)) return;
    if (best && s >= best->t) return;
    best = ProbeHit{s, om + s * dm, part};
  };
  auto roots = [](double a, double b, double c, double& s0, double& s1) {
    if (std::abs(a) < 1e-15) return false;
    const double disc = b * b - 4 * a * c;
    if (disc < 0) return false;
    const double q = -0.5 * (b + std::copysign(std::sqrt(disc), b));
    s0 = q / a;
    s1 = q != 0.0 ? c / q : s0;
    if (s0 > s1) std::swap(s0, s1);
    return true;
  };

  double s0 = 0, s1 = 0;
  if (roots(dy * dy + dz * dz, 2 * (oy * dy + oz * dz), oy * oy + oz * oz - r * r, s0, s1)) {
    for (double s : {s0, s1}) {
      const double x = om.x() + s * dm.x();
      if (x >= x_base && x <= g.length) consider(s, ProbePart::Cylinder);
    }
  }
  const double k = r / g.cone_length;
  const double ex = om.x() - x_tip;
  if (roots(dy * dy + dz * dz - k * k * dm.x() * dm.x(), 2 * (oy * dy + oz * dz - k * k * ex * dm.x()),
            oy * oy + oz * oz - k * k * ex * ex, s0, s1)) {
    for (double s : {s0, s1}) {
      const double x = om.x() + s * dm.x();
      if (x >= x_tip && x <= x_base) consider(s, ProbePart::Cone);
    }
  }
  if (std::abs(dm.x()) > 1e-15) {
    const double s = (g.length - om.x()) / dm.x();
    const Vec3 p = om + s * dm;
    if (p.y() * p.y() + (p.z() - r) * (p.z() - r) <= r * r) consider(s, ProbePart::Cap);
  }
  return best;
}

inline const Rgb kMarkerWhite(0.92, 0.92, 0.92);
inline const Rgb kMarkerBlack(0.08, 0.08, 0.08);
inline const Rgb kStripeGreen(0.12, 0.70, 0.25);
inline const Rgb kProbeGray(0.85, 0.85, 0.85);

/// Printed marker colour at flat coordinates; erased features read as paper.
inline Rgb marker_albedo(const marker::MarkerSpec& spec, const Vec2& flat, const std::set<int>& erased) {
  const auto [s0, s1] = spec.stripe_span();
  if (flat.x() >= s0 && flat.x() <= s1) return kStripeGreen;
  const int row = static_cast<int>(std::lround(flat.x() / spec.pitch_axial));
  if (row < 0 || row >= spec.n_rows) return kMarkerWhite;
  const double dx = flat.x() - row * spec.pitch_axial;
  const double cy = flat.y() / spec.pitch_circumferential;
  const long ci = std::lround(cy);
  const double dy = (cy - static_cast<double>(ci)) * spec.pitch_circumferential;
  const int column = static_cast<int>(((ci % spec.n_columns) + spec.n_columns) % spec.n_columns);
  if (erased.count(marker::feature_id(spec, column, row))) return kMarkerWhite;
  if (marker::column_kind(column) == marker::FeatureKind::Dot) {
    return dx * dx + dy * dy <= spec.dot_radius * spec.dot_radius ? kMarkerBlack : kMarkerWhite;
  }
  const double s = spec.square_size;
  if (std::abs(dx) < s && std::abs(dy) < s) return (dx > 0) == (dy > 0) ? kMarkerBlack : kMarkerWhite;
  return kMarkerWhite;
}

inline Rgb probe_albedo(const ProbeGeometry& g, const ProbeHit& hit, const std::set<int>& erased) {
  if (hit.part != ProbePart::Cylinder) return kProbeGray;
  const double r = g.marker.radius;
  const auto [stripe_lo, stripe_hi] = g.marker.stripe_span();
  const double x = hit.local.x();
  if (x < std::min(stripe_lo, 0.0) - g.marker_margin || x > std::max(stripe_hi, g.marker.length()) + g.marker_margin)
    return kProbeGray;
  const double theta = std::atan2(hit.local.y(), r - hit.local.z());
  return marker_albedo(g.marker, Vec2(x, r * theta), erased);
}

inline StereoRig default_rig() {
  StereoRig rig;
  rig.left.fx = rig.left.fy = 700.0;
  rig.left.width = 512;
  rig.left.height = 384;
  rig.left.cx = 255.5;
  rig.left.cy = 191.5;
  rig.right = rig.left;
  rig.baseline = 5.0;
  return rig;
}

/// Scales a rig to a new width, keeping the field of view.
inline StereoRig scaled_rig(const StereoRig& rig, int width) {
  StereoRig out = rig;
  const double s = static_cast<double>(width) / rig.left.width;
  for (CameraIntrinsics* k : {&out.left, &out.right}) {
    k->width = width;
    k->height = static_cast<int>(std::lround(k->height * s));
    k->fx *= s;
    k->fy *= s;
    k->cx = (k->cx + 0.5) * s - 0.5;
    k->cy = (k->cy + 0.5) * s - 0.5;
  }
  return out;
}

struct SceneConfig {
  StereoRig rig = default_rig();
  HeightfieldParams heightfield;
  std::uint64_t texture_seed = 2;
  bool probe = true;
  bool laser = false;
  double laser_sigma = 1.5;  // px
  ProbeGeometry geometry;
  std::vector<Pose> trajectory;  // marker -> left camera, one per frame
  double erase_fraction = 0.0;   // share of visible unit features erased per frame
  std::uint64_t seed = 0;        // per-frame randomness (erasure)
  int supersample = 3;
  bool render_right = true;
};

/// Points of the probe in the camera frame.
struct ProbeState {
  Pose marker_pose;
  Vec3 tip = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();  // unit, from tail towards tip
};

inline ProbeState probe_state(const ProbeGeometry& g, const Pose& marker_pose) {
  ProbeState s;
  s.marker_pose = marker_pose;
  s.tip = marker_pose.apply(Vec3(-g.tip_offset, 0.0, g.marker.radius));
  s.direction = -marker_pose.rotation.col(0);
  return s;
}

/// Where the probe axis, continued beyond the tip, meets the tissue: a march
/// in 0.5 mm steps brackets the first crossing, then bisection to 1e-9 mm.
inline std::optional<Vec3> axis_tissue_intersection(const Heightfield& hf, const Vec3& tip, const Vec3& dir,
                                                    double max_distance = 600.0) {
  auto g = [&](double s) {
    const Vec3 p = tip + s * dir;
    return p.z() - hf.height(p.x(), p.y());
  };
  if (g(0.0) >= 0) return std::nullopt;
  double lo = 0.0;
  double hi = -1.0;
  for (double s = 0.5; s <= max_distance; s += 0.5) {
    if (g(s) >= 0) {
      hi = s;
      break;
    }
    lo = s;
  }
  if (hi < 0) return std::nullopt;
  while (hi - lo > 1e-9) {
    const double mid = 0.5 * (lo + hi);
    if (g(mid) < 0)
      lo = mid;
    else
      hi = mid;
  }
  return tip + (0.5 * (lo + hi)) * dir;
}

struct GtFeature {
  int id = 0;
  marker::FeatureKind kind = marker::FeatureKind::Dot;
  int column = 0;
  int row = 0;
  Vec3 camera = Vec3::Zero();
  Vec2 image = Vec2::Zero();
  bool visible = false;  // faces the camera and projects inside the image
  bool erased = false;
};

/// Exact projections of every marker feature under a pose.
inline std::vector<GtFeature> project_features(const ProbeGeometry& g, const Pose& pose, const CameraIntrinsics& k,
                                               double min_facing = 0.15) {
  std::vector<GtFeature> out;
  for (const auto& e : marker::flatten_layout(g.marker)) {
    GtFeature f;
    f.id = e.id;
    f.kind = e.kind;
    f.column = e.column;
    f.row = e.row;
    f.camera = pose.apply(marker::cylinder_lift(g.marker, e.flat));
    const Vec3 n = pose.rotation * marker::outward_normal(g.marker, e.flat.y() / g.marker.radius);
    const bool facing = f.camera.z() > 0 && n.dot(-f.camera.normalized()) > min_facing;
    if (f.camera.z() > 0) f.image = project(k, f.camera);
    f.visible = facing && f.image.x() >= 0 && f.image.y() >= 0 && f.image.x() <= k.width - 1 &&
                f.image.y() <= k.height - 1;
    out.push_back(f);
  }
  return out;
}

/// Ids of the features that belong to the two canonical planar units.
inline std::vector<int> unit_feature_ids(const marker::MarkerSpec& spec) {
  std::vector<int> ids;
  for (auto kind : {marker::FeatureKind::Dot, marker::FeatureKind::Vertex})
    for (const auto& p : marker::unit_points(spec, marker::unit_frame(spec, kind))) ids.push_back(p.id);
  return ids;
}

struct FrameBundle {
  ImageRgb left;
  ImageRgb right;
  ImageGray disparity;        // left frame, px
  ImageGray disparity_right;  // right frame, px
  ImageGray depth;            // left frame, mm
  Mask probe_mask;
  ProbeState probe;
  bool has_intersection = false;
  Vec3 intersection3 = Vec3::Zero();
  Vec2 intersection2 = Vec2::Zero();
  std::vector<GtFeature> features;
};

namespace detail {

struct View {
  ImageRgb image;
  ImageGray depth;
  Mask probe;         // centre ray hits the probe
  Mask probe_touch;   // any supersample hits the probe
};

inline View render_view(const SceneConfig& cfg, const CameraIntrinsics& k, const Vec3& origin, const Heightfield& hf,
                        const Texture& tex, const std::optional<Pose>& pose, const std::set<int>& erased) {
  View v{ImageRgb(k.width, k.height), ImageGray(k.width, k.height), Mask(k.width, k.height),
         Mask(k.width, k.height)};
  const auto& g = cfg.geometry;
  auto tissue = [&](const Vec3& d, double* depth) {
    const auto t = intersect_heightfield(hf, origin, d);
    if (!t) {
      if (depth) *depth = 0.0;
      return Rgb(Rgb::Zero());
    }
    const Vec3 p = origin + *t * d;
    if (depth) *depth = p.z();
    return tex.color(p.x(), p.y());
  };

  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      const Vec3 d = pixel_ray(k, Vec2(x, y));
      if (pose) {
        if (const auto hit = intersect_probe(g, *pose, origin, d)) {
          v.probe(x, y) = 1;
          v.depth(x, y) = origin.z() + hit->t * d.z();
          continue;
        }
      }
      double depth = 0.0;
      v.image(x, y) = tissue(d, &depth);
      v.depth(x, y) = depth;
    }
  }
  if (!pose) return v;

  const int ss = std::max(1, cfg.supersample);
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      bool near_probe = false;
      for (int dy = -1; dy <= 1 && !near_probe; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          if (v.probe.contains(x + dx, y + dy) && v.probe(x + dx, y + dy)) {
            near_probe = true;
            break;
          }
      if (!near_probe) continue;
      Rgb acc = Rgb::Zero();
      bool touched = false;
      for (int sy = 0; sy < ss; ++sy) {
        for (int sx = 0; sx < ss; ++sx) {
          const Vec2 sub(x - 0.5 + (sx + 0.5) / ss, y - 0.5 + (sy + 0.5) / ss);
          const Vec3 d = pixel_ray(k, sub);
          if (const auto hit = intersect_probe(g, *pose, origin, d)) {
            acc += probe_albedo(g, *hit, erased);
            touched = true;
          } else {
            acc += tissue(d, nullptr);
          }
        }
      }
      v.image(x, y) = acc / static_cast<double>(ss * ss);
      v.probe_touch(x, y) = touched ? 1 : 0;
    }
  }
  return v;
}

inline void add_laser(ImageRgb& img, const Mask& probe_touch, const Vec2& centre, double sigma) {
  const double support = 4.0 * sigma;
  const int x0 = static_cast<int>(std::floor(centre.x() - support));
  const int x1 = static_cast<int>(std::ceil(centre.x() + support));
  const int y0 = static_cast<int>(std::floor(centre.y() - support));
  const int y1 = static_cast<int>(std::ceil(centre.y() + support));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      if (!img.contains(x, y) || probe_touch(x, y)) continue;
      const double d2 = (Vec2(x, y) - centre).squaredNorm();
      if (d2 > support * support) continue;
      auto& p = img(x, y);
      p.x() = std::min(1.0, p.x() + std::exp(-0.5 * d2 / (sigma * sigma)));
    }
  }
}

inline Vec2 heightfield_centre(const StereoRig& rig) { return Vec2(0.5 * rig.baseline, 0.0); }

}  // namespace detail

inline Heightfield scene_heightfield(const SceneConfig& cfg) {
  return Heightfield(cfg.heightfield, detail::heightfield_centre(cfg.rig));
}

inline Pose frame_pose(const SceneConfig& cfg, int frame_index) {
  if (cfg.trajectory.empty()) fail(Errc::DegenerateInput, "scene has no probe trajectory");
  if (frame_index < 0 || frame_index >= static_cast<int>(cfg.trajectory.size()))
    fail(Errc::DegenerateInput, "frame index beyond trajectory");
  return cfg.trajectory[static_cast<std::size_t>(frame_index)];
}

/// Features erased in a frame: a seeded random subset of the visible unit
/// features.
inline std::set<int> erased_features(const SceneConfig& cfg, const std::vector<GtFeature>& features,
                                     int frame_index) {
  std::set<int> erased;
  if (!(cfg.erase_fraction > 0)) return erased;
  const auto unit_ids = unit_feature_ids(cfg.geometry.marker);
  std::vector<int> candidates;
  for (const auto& f : features)
    if (f.visible && std::find(unit_ids.begin(), unit_ids.end(), f.id) != unit_ids.end())
      candidates.push_back(f.id);
  std::mt19937_64 rng(frame_seed(cfg.seed, static_cast<std::uint64_t>(frame_index)));
  std::shuffle(candidates.begin(), candidates.end(), rng);
  const auto n = static_cast<std::size_t>(std::floor(cfg.erase_fraction * static_cast<double>(candidates.size())));
  erased.insert(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(std::min(n, candidates.size())));
  return erased;
}

inline FrameBundle render_scene(const SceneConfig& cfg, int frame_index) {
  const Heightfield hf = scene_heightfield(cfg);
  const Texture tex{cfg.texture_seed};
  const auto& k = cfg.rig.left;
  const auto& kr = cfg.rig.right;
  FrameBundle out;

  std::optional<Pose> pose;
  std::set<int> erased;
  if (cfg.probe) {
    pose = frame_pose(cfg, frame_index);
    out.probe = probe_state(cfg.geometry, *pose);
    const Vec3 centre = pose->apply(Vec3(0.5 * cfg.geometry.marker.length(), 0.0, cfg.geometry.marker.radius));
    if (!(centre.z() > 0)) fail(Errc::ProbeOutOfView, "probe behind the camera");
    const Vec2 c = project(k, centre);
    if (c.x() < 0 || c.y() < 0 || c.x() > k.width - 1 || c.y() > k.height - 1)
      fail(Errc::ProbeOutOfView, "marker centre outside the image");
    out.features = project_features(cfg.geometry, *pose, k);
    erased = erased_features(cfg, out.features, frame_index);
    for (auto& f : out.features) f.erased = erased.count(f.id) != 0;
    if (const auto hit = axis_tissue_intersection(hf, out.probe.tip, out.probe.direction)) {
      out.has_intersection = true;
      out.intersection3 = *hit;
      out.intersection2 = project(k, *hit);
    }
  }

  const Vec3 right_origin(cfg.rig.baseline, 0.0, 0.0);
  detail::View lv = detail::render_view(cfg, k, Vec3::Zero(), hf, tex, pose, erased);
  detail::View rv = cfg.render_right ? detail::render_view(cfg, kr, right_origin, hf, tex, pose, erased) : detail::View{};
  if (cfg.laser && out.has_intersection) {
    detail::add_laser(lv.image, lv.probe_touch, out.intersection2, cfg.laser_sigma);
    const Vec3 pr = out.intersection3 - right_origin;
    if (cfg.render_right && pr.z() > 0) detail::add_laser(rv.image, rv.probe_touch, project(kr, pr), cfg.laser_sigma);
  }

  const double bf = cfg.rig.bf();
  out.disparity = ImageGray(k.width, k.height);
  out.disparity_right = ImageGray(rv.depth.width, rv.depth.height);
  for (std::size_t i = 0; i < lv.depth.size(); ++i)
    out.disparity.data[i] = lv.depth.data[i] > 0 ? bf / lv.depth.data[i] : 0.0;
  for (std::size_t i = 0; i < rv.depth.size(); ++i)
    out.disparity_right.data[i] = rv.depth.data[i] > 0 ? bf / rv.depth.data[i] : 0.0;
  out.left = std::move(lv.image);
  out.right = std::move(rv.image);
  out.depth = std::move(lv.depth);
  out.probe_mask = std::move(lv.probe);
  return out;
}

// ---------------------------------------------------------------------------
// Probe pose sampling

struct PoseSampling {
  double depth_min = 60.0;  // marker centre, mm along the optical axis
  double depth_max = 140.0;
  double tilt_min_deg = 35.0;  // angle between tip direction and optical axis
  double tilt_max_deg = 60.0;
  double facing_jitter_deg = 4.0;
  double centre_region = 0.5;  // marker centre within this central fraction of the image
  double tip_clearance = 5.0;  // mm between tip and tissue
  double feature_margin = 10.0;  // px
  double min_incidence_cos = 0.35;  // unit features must face the camera at least this much
  bool require_intersection = true;
};

/// Roll angle at which the camera looks straight at the middle of the two
/// canonical units (columns 0..3).
inline double canonical_facing(const marker::MarkerSpec& spec) { return 1.5 * 2.0 * kPi / spec.n_columns; }

/// Marker pose from the axis point at mid-marker, the tip direction and the
/// roll angle `facing` (circumferential angle that faces the camera).
inline Pose pose_from_axis(const ProbeGeometry& g, const Vec3& axis_centre, const Vec3& tip_direction,
                           double facing) {
  const Vec3 xm = -tip_direction.normalized();
  const Vec3 v = -axis_centre.normalized();
  Vec3 w = v - v.dot(xm) * xm;
  if (w.norm() < 1e-9) fail(Errc::DegenerateInput, "probe axis points at the camera");
  w.normalize();
  const Vec3 u = xm.cross(w);
  Pose p;
  p.rotation.col(0) = xm;
  p.rotation.col(1) = std::sin(facing) * w + std::cos(facing) * u;
  p.rotation.col(2) = -std::cos(facing) * w + std::sin(facing) * u;
  p.translation = axis_centre - 0.5 * g.marker.length() * xm - g.marker.radius * p.rotation.col(2);
  return p;
}

struct PoseParams {
  Vec2 centre_px = Vec2::Zero();
  double depth = 100.0;
  double tilt = deg2rad(45.0);
  double azimuth = 0.0;
  double facing_offset = 0.0;
};

inline Pose pose_from_params(const SceneConfig& cfg, const PoseParams& p) {
  const Vec3 centre = backproject(cfg.rig.left, p.centre_px, p.depth);
  const Vec3 dir(std::sin(p.tilt) * std::cos(p.azimuth), std::sin(p.tilt) * std::sin(p.azimuth), std::cos(p.tilt));
  return pose_from_axis(cfg.geometry, centre, dir, canonical_facing(cfg.geometry.marker) + p.facing_offset);
}

/// Checks that a pose gives a usable frame: unit features and stripe in view,
/// tip above the tissue, intersection inside both images.
inline bool pose_acceptable(const SceneConfig& cfg, const Pose& pose, const PoseSampling& s) {
  const auto& k = cfg.rig.left;
  const Heightfield hf = scene_heightfield(cfg);
  const auto ids = unit_feature_ids(cfg.geometry.marker);
  const auto features = project_features(cfg.geometry, pose, k, s.min_incidence_cos);
  auto inside = [&](const Vec2& p, double m) {
    return p.x() >= m && p.y() >= m && p.x() <= k.width - 1 - m && p.y() <= k.height - 1 - m;
  };
  for (const auto& f : features) {
    if (std::find(ids.begin(), ids.end(), f.id) == ids.end()) continue;
    if (!f.visible || !inside(f.image, s.feature_margin)) return false;
  }
  const auto [s0, s1] = cfg.geometry.marker.stripe_span();
  const double facing = canonical_facing(cfg.geometry.marker);
  const Vec3 stripe = pose.apply(marker::cylinder_lift(cfg.geometry.marker,
                                                       Vec2(0.5 * (s0 + s1), facing * cfg.geometry.marker.radius)));
  if (!(stripe.z() > 0) || !inside(project(k, stripe), s.feature_margin)) return false;

  const ProbeState st = probe_state(cfg.geometry, pose);
  if (!(st.tip.z() + s.tip_clearance < hf.height(st.tip.x(), st.tip.y()))) return false;
  if (s.require_intersection) {
    const auto hit = axis_tissue_intersection(hf, st.tip, st.direction);
    if (!hit) return false;
    if (!inside(project(k, *hit), 8.0)) return false;
    const Vec3 pr = *hit - Vec3(cfg.rig.baseline, 0, 0);
    if (!(pr.z() > 0) || !inside(project(cfg.rig.right, pr), 8.0)) return false;
  }
  return true;
}

namespace detail {

inline PoseParams draw_params(const CameraIntrinsics& k, std::mt19937_64& rng, const PoseSampling& s) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  PoseParams p;
  const double lo = 0.5 - 0.5 * s.centre_region;
  p.centre_px = Vec2((lo + s.centre_region * unit(rng)) * (k.width - 1), (lo + s.centre_region * unit(rng)) * (k.height - 1));
  p.depth = s.depth_min + (s.depth_max - s.depth_min) * unit(rng);
  p.tilt = deg2rad(s.tilt_min_deg + (s.tilt_max_deg - s.tilt_min_deg) * unit(rng));
  p.azimuth = 2.0 * kPi * unit(rng);
  p.facing_offset = deg2rad(s.facing_jitter_deg) * (2.0 * unit(rng) - 1.0);
  return p;
}

}  // namespace detail

/// Rejection-samples one acceptable pose.
inline Pose sample_pose(const SceneConfig& cfg, std::mt19937_64& rng, const PoseSampling& s) {
  for (int attempt = 0; attempt < 10000; ++attempt) {
    const Pose pose = pose_from_params(cfg, detail::draw_params(cfg.rig.left, rng, s));
    if (pose_acceptable(cfg, pose, s)) return pose;
  }
  fail(Errc::ProbeOutOfView, "could not sample an acceptable probe pose");
}

inline std::vector<Pose> random_poses(const SceneConfig& cfg, int n, std::uint64_t seed, const PoseSampling& s = {}) {
  std::vector<Pose> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    std::mt19937_64 rng(frame_seed(seed, static_cast<std::uint64_t>(i)));
    out.push_back(sample_pose(cfg, rng, s));
  }
  return out;
}

/// Slowly varying trajectory: every pose parameter follows its own sinusoid
/// around an acceptable starting pose, so inter-frame motion stays at a few
/// pixels.
inline std::vector<Pose> smooth_trajectory(const SceneConfig& cfg, int n, std::uint64_t seed,
                                           const PoseSampling& s = {}) {
  std::mt19937_64 rng(frame_seed(seed, 0x5eed));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto& k = cfg.rig.left;
  for (int attempt = 0; attempt < 2000; ++attempt) {
    const PoseParams base = detail::draw_params(k, rng, s);
    if (!pose_acceptable(cfg, pose_from_params(cfg, base), s)) continue;
    std::array<double, 6> phase{};
    for (double& ph : phase) ph = 2.0 * kPi * unit(rng);
    const double period = std::max(40.0, static_cast<double>(n));
    std::vector<Pose> out;
    bool ok = true;
    for (int i = 0; i < n && ok; ++i) {
      const double w = 2.0 * kPi * i / period;
      PoseParams p = base;
      p.centre_px += Vec2(0.04 * k.width * std::sin(w + phase[0]), 0.04 * k.height * std::sin(w + phase[1]));
      p.depth += 0.05 * (s.depth_max - s.depth_min) * std::sin(w + phase[2]);
      p.tilt += deg2rad(3.0) * std::sin(w + phase[3]);
      p.azimuth += deg2rad(10.0) * std::sin(w + phase[4]);
      p.facing_offset += deg2rad(1.0) * std::sin(w + phase[5]);
      const Pose pose = pose_from_params(cfg, p);
      ok = pose_acceptable(cfg, pose, s);
      out.push_back(pose);
    }
    if (ok) return out;
  }
  fail(Errc::ProbeOutOfView, "could not build an acceptable smooth trajectory");
}

// ---------------------------------------------------------------------------
// Structured light

struct SlConfig {
  CameraIntrinsics camera;
  structlight::Projector projector;
  HeightfieldParams heightfield;
  std::uint64_t texture_seed = 3;
  int n_bits = 11;
  double ambient = 0.05;
  double phase_periods = 8.0;

  SlConfig() {
    camera.fx = camera.fy = 128.0;
    camera.cx = camera.cy = 63.5;
    camera.width = camera.height = 128;
    projector.intrinsics.fx = projector.intrinsics.fy = 1024.0;
    projector.intrinsics.cx = 1800.5;
    projector.intrinsics.cy = 511.5;
    projector.intrinsics.width = 2048;
    projector.intrinsics.height = 1024;
    projector.pose.translation = Vec3(100.0, 0.0, 0.0);
    heightfield.base = 100.0;
    heightfield.amplitude = 4.0;
  }
};

struct SlBundle {
  structlight::PatternStack stack;  // camera images
  ImageGray depth;                  // ground truth, mm
  ImageGray projector_u;            // continuous projector column, -1 outside the projector view
  Mask in_view;
  ImageGray albedo;
};

inline SlBundle render_sl_sequence(const SlConfig& cfg) {
  const auto& k = cfg.camera;
  const auto& kp = cfg.projector.intrinsics;
  if ((1LL << cfg.n_bits) < kp.width) fail(Errc::DegenerateInput, "n_bits too small for the projector");
  const Heightfield hf(cfg.heightfield, Vec2(0.5 * cfg.projector.pose.translation.x(), 0.0));
  const Texture tex{cfg.texture_seed};
  const Pose cam_to_proj = cfg.projector.pose.inverse();

  SlBundle out;
  out.depth = ImageGray(k.width, k.height);
  out.projector_u = ImageGray(k.width, k.height, -1.0);
  out.in_view = Mask(k.width, k.height);
  out.albedo = ImageGray(k.width, k.height);
  Image<std::int32_t> column(k.width, k.height, -1);
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      const Vec3 d = pixel_ray(k, Vec2(x, y));
      const auto t = intersect_heightfield(hf, Vec3::Zero(), d);
      if (!t) continue;
      const Vec3 p = *t * d;
      out.depth(x, y) = p.z();
      out.albedo(x, y) = tex.color(p.x(), p.y()).mean();
      const Vec3 q = cam_to_proj.apply(p);
      if (!(q.z() > 0)) continue;
      const double u = kp.fx * q.x() / q.z() + kp.cx;
      const double v = kp.fy * q.y() / q.z() + kp.cy;
      if (u < 0 || u >= kp.width || v < 0 || v >= kp.height) continue;
      out.projector_u(x, y) = u;
      out.in_view(x, y) = 1;
      column(x, y) = static_cast<std::int32_t>(std::floor(u));
    }
  }

  out.stack.n_bits = cfg.n_bits;
  for (int b = 0; b < cfg.n_bits; ++b) {
    ImageGray pat(k.width, k.height, cfg.ambient);
    ImageGray inv(k.width, k.height, cfg.ambient);
    for (std::size_t i = 0; i < pat.size(); ++i) {
      if (!out.in_view.data[i]) continue;
      const bool bit = structlight::gray_bit(static_cast<std::uint32_t>(column.data[i]), b, cfg.n_bits);
      pat.data[i] += out.albedo.data[i] * (bit ? 1.0 : 0.0);
      inv.data[i] += out.albedo.data[i] * (bit ? 0.0 : 1.0);
    }
    out.stack.gray_bits.emplace_back(std::move(pat), std::move(inv));
  }
  for (double shift : {0.0, kPi / 3.0, 2.0 * kPi / 3.0}) {
    ImageGray img(k.width, k.height, cfg.ambient);
    for (std::size_t i = 0; i < img.size(); ++i) {
      if (!out.in_view.data[i]) continue;
      const double phase = 2.0 * kPi * cfg.phase_periods * out.projector_u.data[i] / kp.width + shift;
      img.data[i] += out.albedo.data[i] * (0.5 + 0.5 * std::cos(phase));
    }
    out.stack.phase_images.push_back(std::move(img));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Datasets on disk

inline std::string format_rig(const StereoRig& rig) {
  const auto& k = rig.left;
  std::string out;
  auto put = [&](const std::string& key, const std::string& v) { out += key + "=" + v + "\n"; };
  put("fx", format_number(k.fx));
  put("fy", format_number(k.fy));
  put("cx", format_number(k.cx));
  put("cy", format_number(k.cy));
  put("width", std::to_string(k.width));
  put("height", std::to_string(k.height));
  put("baseline", format_number(rig.baseline));
  return out;
}

/// Both cameras share intrinsics in a rectified rig.
inline StereoRig parse_rig(std::string_view text) {
  const auto kv = KeyValues::parse(text);
  kv.require_known({"fx", "fy", "cx", "cy", "width", "height", "baseline"});
  StereoRig rig = default_rig();
  auto& k = rig.left;
  k.width = static_cast<int>(kv.get_int("width", k.width));
  k.height = static_cast<int>(kv.get_int("height", k.height));
  k.fx = kv.get_double("fx", k.fx);
  k.fy = kv.get_double("fy", k.fx);
  k.cx = kv.get_double("cx", 0.5 * (k.width - 1));
  k.cy = kv.get_double("cy", 0.5 * (k.height - 1));
  rig.baseline = kv.get_double("baseline", rig.baseline);
  if (!k.valid() || !(rig.baseline > 0)) fail(Errc::DegenerateInput, "invalid stereo rig");
  rig.right = k;
  return rig;
}

inline std::string format_geometry(const ProbeGeometry& g) {
  std::string out;
  out += "tip_offset=" + format_number(g.tip_offset) + "\n";
  out += "cone_length=" + format_number(g.cone_length) + "\n";
  out += "length=" + format_number(g.length) + "\n";
  out += "marker_margin=" + format_number(g.marker_margin) + "\n";
  return out;
}

inline ProbeGeometry parse_geometry(std::string_view text, const marker::MarkerSpec& spec) {
  const auto kv = KeyValues::parse(text);
  kv.require_known({"tip_offset", "cone_length", "length", "marker_margin"});
  ProbeGeometry g;
  g.marker = spec;
  g.tip_offset = kv.get_double("tip_offset", g.tip_offset);
  g.cone_length = kv.get_double("cone_length", g.cone_length);
  g.length = kv.get_double("length", g.length);
  g.marker_margin = kv.get_double("marker_margin", g.marker_margin);
  if (!(g.cone_length > 0) || !(g.tip_offset > g.cone_length) || !(g.length > g.marker.length()))
    fail(Errc::DegenerateInput, "invalid probe geometry");
  return g;
}

/// Frames per split by sequential rounding of the cumulative fractions, so
/// the counts always add up to n.
inline std::array<int, 3> split_counts(int n, const std::array<double, 3>& fractions) {
  double sum = 0.0;
  for (double f : fractions) {
    if (!(f >= 0)) fail(Errc::DegenerateInput, "split fractions must be nonnegative");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) fail(Errc::DegenerateInput, "split fractions must sum to 1");
  std::array<int, 3> out{};
  double cum = 0.0;
  long prev = 0;
  for (int i = 0; i < 3; ++i) {
    cum += fractions[static_cast<std::size_t>(i)];
    const long upto = i == 2 ? n : std::lround(cum * n);
    out[static_cast<std::size_t>(i)] = static_cast<int>(upto - prev);
    prev = upto;
  }
  return out;
}

inline const char* split_name(int s) {
  static const char* names[] = {"train", "val", "test"};
  return names[s];
}

struct DatasetSpec {
  SceneConfig scene;        // an explicit trajectory is used as given on one surface
  int n_frames = 10;
  int n_surfaces = 1;       // heightfield seeds scene.heightfield.seed + 0 .. n_surfaces - 1
  bool smooth = false;      // sampled trajectories: smooth sequence instead of independent poses
  std::uint64_t pose_seed = 1;
  PoseSampling sampling;
  std::array<double, 3> split{0.8, 0.1, 0.1};
};

/// A dataset resolved into concrete scenes: frame i renders
/// scenes[frames[i].first] at trajectory index frames[i].second.
struct DatasetPlan {
  std::vector<SceneConfig> scenes;
  std::vector<std::pair<int, int>> frames;
  std::vector<int> split;  // 0 train, 1 val, 2 test
};

/// Surfaces are interleaved (frame i uses surface i mod n_surfaces) so that
/// every split sees every surface.
inline DatasetPlan plan_dataset(const DatasetSpec& spec) {
  if (spec.n_frames < 1 || spec.n_surfaces < 1) fail(Errc::DegenerateInput, "dataset needs frames and surfaces");
  const auto counts = split_counts(spec.n_frames, spec.split);
  DatasetPlan plan;
  if (!spec.scene.trajectory.empty()) {
    if (spec.n_surfaces != 1) fail(Errc::DegenerateInput, "an explicit trajectory uses a single surface");
    if (static_cast<int>(spec.scene.trajectory.size()) < spec.n_frames)
      fail(Errc::DegenerateInput, "trajectory shorter than the requested frame count");
    plan.scenes.push_back(spec.scene);
    for (int i = 0; i < spec.n_frames; ++i) plan.frames.emplace_back(0, i);
  } else {
    std::vector<int> per_surface(static_cast<std::size_t>(spec.n_surfaces), 0);
    for (int i = 0; i < spec.n_frames; ++i) ++per_surface[static_cast<std::size_t>(i % spec.n_surfaces)];
    std::vector<int> next(static_cast<std::size_t>(spec.n_surfaces), 0);
    for (int s = 0; s < spec.n_surfaces; ++s) {
      SceneConfig sc = spec.scene;
      sc.heightfield.seed = spec.scene.heightfield.seed + static_cast<std::uint64_t>(s);
      const int n = per_surface[static_cast<std::size_t>(s)];
      const std::uint64_t seed = frame_seed(spec.pose_seed, static_cast<std::uint64_t>(s));
      if (n > 0) sc.trajectory = spec.smooth ? smooth_trajectory(sc, n, seed, spec.sampling)
                                             : random_poses(sc, n, seed, spec.sampling);
      plan.scenes.push_back(std::move(sc));
    }
    for (int i = 0; i < spec.n_frames; ++i) {
      const int s = i % spec.n_surfaces;
      plan.frames.emplace_back(s, next[static_cast<std::size_t>(s)]++);
    }
  }
  for (int s = 0; s < 3; ++s)
    for (int j = 0; j < counts[static_cast<std::size_t>(s)]; ++j) plan.split.push_back(s);
  return plan;
}

inline FrameBundle render_planned(const DatasetPlan& plan, int frame) {
  const auto [scene, index] = plan.frames.at(static_cast<std::size_t>(frame));
  return render_scene(plan.scenes[static_cast<std::size_t>(scene)], index);
}

struct ManifestRow {
  int frame = 0;
  std::string split;
  int surface = 0;
  std::string path_left, path_right, path_disparity, path_disparity_right, path_mask, path_features;
  bool has_gt = false;
  Vec2 gt2 = Vec2::Zero();
  Vec3 gt3 = Vec3::Zero();
  Pose pose;  // marker -> left camera
};

inline const char* manifest_header() {
  return "frame,split,surface,path_left,path_right,path_disparity,path_disparity_right,path_mask,path_features,"
         "has_gt,gt_u,gt_v,gt_X,gt_Y,gt_Z,pose_tx,pose_ty,pose_tz,pose_rx,pose_ry,pose_rz";
}

inline std::string manifest_line(const ManifestRow& r) {
  const Vec3 aa = r.pose.axis_angle();
  std::string out = std::to_string(r.frame) + "," + r.split + "," + std::to_string(r.surface);
  for (const auto* p : {&r.path_left, &r.path_right, &r.path_disparity, &r.path_disparity_right, &r.path_mask,
                        &r.path_features})
    out += "," + *p;
  out += r.has_gt ? ",1" : ",0";
  for (double v : {r.gt2.x(), r.gt2.y(), r.gt3.x(), r.gt3.y(), r.gt3.z(), r.pose.translation.x(),
                   r.pose.translation.y(), r.pose.translation.z(), aa.x(), aa.y(), aa.z()})
    out += "," + format_number(v);
  return out;
}

inline std::vector<ManifestRow> parse_manifest(const std::string& text) {
  std::vector<ManifestRow> rows;
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != manifest_header()) fail(Errc::Parse, "manifest header mismatch");
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string item;
    while (std::getline(ls, item, ',')) f.push_back(item);
    if (f.size() != 21) fail(Errc::Parse, "manifest line " + std::to_string(line_no) + ": expected 21 fields");
    try {
      ManifestRow r;
      r.frame = std::stoi(f[0]);
      r.split = f[1];
      r.surface = std::stoi(f[2]);
      r.path_left = f[3];
      r.path_right = f[4];
      r.path_disparity = f[5];
      r.path_disparity_right = f[6];
      r.path_mask = f[7];
      r.path_features = f[8];
      r.has_gt = f[9] == "1";
      r.gt2 = Vec2(std::stod(f[10]), std::stod(f[11]));
      r.gt3 = Vec3(std::stod(f[12]), std::stod(f[13]), std::stod(f[14]));
      r.pose = Pose::from_axis_angle(Vec3(std::stod(f[18]), std::stod(f[19]), std::stod(f[20])),
                                     Vec3(std::stod(f[15]), std::stod(f[16]), std::stod(f[17])));
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      fail(Errc::Parse, "manifest line " + std::to_string(line_no) + ": malformed number");
    }
  }
  return rows;
}

inline std::string features_csv(const std::vector<GtFeature>& features) {
  std::string out = "id,kind,column,row,u,v,visible,erased\n";
  for (const auto& f : features) {
    out += std::to_string(f.id) + "," + marker::kind_name(f.kind) + "," + std::to_string(f.column) + "," +
           std::to_string(f.row) + "," + format_number(f.image.x()) + "," + format_number(f.image.y()) + "," +
           (f.visible ? "1" : "0") + "," + (f.erased ? "1" : "0") + "\n";
  }
  return out;
}

/// Renders every planned frame into `dir` and writes manifest.csv plus the
/// rig, marker and probe descriptions needed to interpret the images.
inline std::vector<ManifestRow> make_dataset(const DatasetSpec& spec, const std::filesystem::path& dir) {
  const DatasetPlan plan = plan_dataset(spec);
  std::filesystem::create_directories(dir);
  io::write_file_atomic(dir / "rig.txt", format_rig(spec.scene.rig));
  io::write_file_atomic(dir / "marker.txt", marker::format_marker_spec(spec.scene.geometry.marker));
  io::write_file_atomic(dir / "probe.txt", format_geometry(spec.scene.geometry));
  std::vector<ManifestRow> rows;
  std::string manifest = std::string(manifest_header()) + "\n";
  for (int i = 0; i < static_cast<int>(plan.frames.size()); ++i) {
    const FrameBundle b = render_planned(plan, i);
    char stem[32];
    std::snprintf(stem, sizeof stem, "frame_%05d", i);
    const std::string st(stem);
    ManifestRow r;
    r.frame = i;
    r.split = split_name(plan.split[static_cast<std::size_t>(i)]);
    r.surface = plan.frames[static_cast<std::size_t>(i)].first;
    r.path_left = st + "_left.ppm";
    r.path_right = spec.scene.render_right ? st + "_right.ppm" : "";
    r.path_disparity = st + "_disparity.pfm";
    r.path_disparity_right = spec.scene.render_right ? st + "_disparity_right.pfm" : "";
    r.path_mask = st + "_mask.pgm";
    r.path_features = st + "_features.csv";
    r.has_gt = b.has_intersection;
    r.gt2 = b.intersection2;
    r.gt3 = b.intersection3;
    r.pose = b.probe.marker_pose;
    io::write_ppm(dir / r.path_left, b.left);
    if (spec.scene.render_right) {
      io::write_ppm(dir / r.path_right, b.right);
      io::write_pfm(dir / r.path_disparity_right, b.disparity_right);
    }
    io::write_pfm(dir / r.path_disparity, b.disparity);
    io::write_mask(dir / r.path_mask, b.probe_mask);
    io::write_file_atomic(dir / r.path_features, features_csv(b.features));
    manifest += manifest_line(r) + "\n";
    rows.push_back(std::move(r));
  }
  io::write_file_atomic(dir / "manifest.csv", manifest);
  return rows;
}

}  // namespace probesense::sim
