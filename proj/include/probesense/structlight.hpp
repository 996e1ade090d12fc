#pragma once

// Structured-light ground truth: gray-code column patterns with inverses,
// per-bit decoding, three-phase modulation depth for masking unreliable
// pixels, and camera-ray / projector-column-plane triangulation.

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "probesense/error.hpp"
#include "probesense/geomcore.hpp"
#include "probesense/image.hpp"

namespace probesense::structlight {

inline std::uint32_t gray_encode(std::uint32_t c) { return c ^ (c >> 1); }

inline std::uint32_t gray_decode(std::uint32_t g) {
  std::uint32_t c = g;
  for (std::uint32_t shift = 1; shift < 32; shift <<= 1) c ^= c >> shift;
  return c;
}

struct PatternStack {
  // gray_bits[k] = (pattern, inverse) for bit k, most significant bit first.
  std::vector<std::pair<ImageGray, ImageGray>> gray_bits;
  std::vector<ImageGray> phase_images;  // I1, I2, I3 when present
  int n_bits = 0;
};

/// Bit k (0 = most significant of n_bits) of the gray code of `column`.
inline bool gray_bit(std::uint32_t column, int k, int n_bits) {
  return (gray_encode(column) >> (n_bits - 1 - k)) & 1u;
}

/// Projector-space patterns, one row high; callers render them onto a scene.
inline PatternStack generate_patterns(int proj_width, int n_bits) {
  if (proj_width < 1 || n_bits < 1 || n_bits > 30 || (1LL << n_bits) < proj_width)
    fail(Errc::DegenerateInput, "2^n_bits must cover the projector width");
  PatternStack s;
  s.n_bits = n_bits;
  for (int k = 0; k < n_bits; ++k) {
    ImageGray p(proj_width, 1);
    ImageGray inv(proj_width, 1);
    for (int c = 0; c < proj_width; ++c) {
      const bool bit = gray_bit(static_cast<std::uint32_t>(c), k, n_bits);
      p(c, 0) = bit ? 1.0 : 0.0;
      inv(c, 0) = bit ? 0.0 : 1.0;
    }
    s.gray_bits.emplace_back(std::move(p), std::move(inv));
  }
  return s;
}

struct DecodeResult {
  Image<std::int32_t> columns;  // -1 where undecided
  Mask confident;
};

/// Per-bit comparison of pattern against inverse; any bit within `margin` of
/// its inverse leaves the pixel undecided.
inline DecodeResult decode_gray(const PatternStack& stack, double margin = 0.05) {
  if (stack.gray_bits.empty() || static_cast<int>(stack.gray_bits.size()) != stack.n_bits)
    fail(Errc::DegenerateInput, "incomplete pattern stack");
  const int w = stack.gray_bits[0].first.width;
  const int h = stack.gray_bits[0].first.height;
  for (const auto& [p, inv] : stack.gray_bits) {
    require_same_shape(p, stack.gray_bits[0].first, "gray pattern size");
    require_same_shape(inv, stack.gray_bits[0].first, "gray inverse size");
  }
  DecodeResult out{Image<std::int32_t>(w, h, -1), Mask(w, h)};
  for (std::size_t i = 0; i < out.columns.size(); ++i) {
    std::uint32_t code = 0;
    bool ok = true;
    for (const auto& [p, inv] : stack.gray_bits) {
      const double diff = p.data[i] - inv.data[i];
      if (std::abs(diff) <= margin) {
        ok = false;
        break;
      }
      code = (code << 1) | (diff > 0 ? 1u : 0u);
    }
    if (ok) {
      out.columns.data[i] = static_cast<std::int32_t>(gray_decode(code));
      out.confident.data[i] = 1;
    }
  }
  return out;
}

/// Modulation depth of three phase-shifted images.
inline ImageGray modulation_depth(const ImageGray& i1, const ImageGray& i2, const ImageGray& i3) {
  require_same_shape(i1, i2, "phase images differ in size");
  require_same_shape(i1, i3, "phase images differ in size");
  const double k = 2.0 * std::sqrt(2.0) / 3.0;
  ImageGray t(i1.width, i1.height);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double a = i1.data[i] - i2.data[i];
    const double b = i2.data[i] - i3.data[i];
    const double c = i1.data[i] - i3.data[i];
    t.data[i] = k * std::sqrt(a * a + b * b + c * c);
  }
  return t;
}

inline Mask uncertainty_mask(const ImageGray& t, double threshold) {
  Mask m(t.width, t.height);
  for (std::size_t i = 0; i < t.size(); ++i) m.data[i] = t.data[i] >= threshold ? 1 : 0;
  return m;
}

struct Projector {
  CameraIntrinsics intrinsics;
  Pose pose;  // projector frame -> camera frame
};

struct DepthResult {
  ImageGray depth;  // mm along the camera z axis, 0 where invalid
  Mask valid;
};

/// Intersects each camera ray with the plane of its decoded projector column
/// (through the column centre, c + 0.5).
inline DepthResult triangulate(const Image<std::int32_t>& columns, const Mask& mask, const CameraIntrinsics& camera,
                               const Projector& projector, double min_angle_deg = 0.5) {
  require_same_shape(columns, mask, "column map and mask differ in size");
  if (columns.width != camera.width || columns.height != camera.height)
    fail(Errc::DimensionMismatch, "column map does not match the camera");
  DepthResult out{ImageGray(columns.width, columns.height), Mask(columns.width, columns.height)};
  const Mat3& r = projector.pose.rotation;
  const Vec3& t = projector.pose.translation;
  const double sin_min = std::sin(deg2rad(min_angle_deg));
  const auto& kp = projector.intrinsics;
  for (int y = 0; y < columns.height; ++y) {
    for (int x = 0; x < columns.width; ++x) {
      const std::int32_t c = columns(x, y);
      if (!mask(x, y) || c < 0) continue;
      const double u = c + 0.5;
      const Vec3 n = r * Vec3(1.0, 0.0, -(u - kp.cx) / kp.fx);
      const Vec3 ray = pixel_ray(camera, Vec2(x, y));
      const double denom = n.dot(ray);
      if (std::abs(denom) < sin_min * n.norm() * ray.norm())
        fail(Errc::NonConvergingRays, "camera ray nearly parallel to projector plane");
      const double s = n.dot(t) / denom;
      if (!(s > 0)) continue;
      out.depth(x, y) = s * ray.z();
      out.valid(x, y) = 1;
    }
  }
  return out;
}

}  // namespace probesense::structlight
