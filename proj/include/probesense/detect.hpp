#pragma once

// Low-level marker feature extraction: dark blob centroids and ChESS-style
// chessboard vertex responses with non-maximum suppression.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "probesense/error.hpp"
#include "probesense/geomcore.hpp"
#include "probesense/image.hpp"

namespace probesense::detect {

inline ImageGray convolve_separable(const ImageGray& img, std::span<const double> kernel) {
  const int r = static_cast<int>(kernel.size() / 2);
  ImageGray tmp(img.width, img.height);
  ImageGray out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double s = 0.0;
      for (int k = -r; k <= r; ++k) s += kernel[k + r] * img(std::clamp(x + k, 0, img.width - 1), y);
      tmp(x, y) = s;
    }
  }
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double s = 0.0;
      for (int k = -r; k <= r; ++k) s += kernel[k + r] * tmp(x, std::clamp(y + k, 0, img.height - 1));
      out(x, y) = s;
    }
  }
  return out;
}

/// 5x5 Gaussian, sigma 1, replicated borders.
inline ImageGray gaussian_blur(const ImageGray& img) {
  std::array<double, 5> k{};
  double sum = 0.0;
  for (int i = -2; i <= 2; ++i) sum += (k[i + 2] = std::exp(-0.5 * i * i));
  for (double& v : k) v /= sum;
  return convolve_separable(img, k);
}

/// Mean over a (2r+1)^2 window clipped to the image.
inline ImageGray box_mean(const ImageGray& img, int r) {
  const int w = img.width;
  const int h = img.height;
  std::vector<double> integral(static_cast<std::size_t>(w + 1) * (h + 1), 0.0);
  auto at = [&](int x, int y) -> double& { return integral[static_cast<std::size_t>(y) * (w + 1) + x]; };
  for (int y = 0; y < h; ++y) {
    double row = 0.0;
    for (int x = 0; x < w; ++x) {
      row += img(x, y);
      at(x + 1, y + 1) = at(x + 1, y) + row;
    }
  }
  ImageGray out(w, h);
  for (int y = 0; y < h; ++y) {
    const int y0 = std::max(0, y - r);
    const int y1 = std::min(h, y + r + 1);
    for (int x = 0; x < w; ++x) {
      const int x0 = std::max(0, x - r);
      const int x1 = std::min(w, x + r + 1);
      const double s = at(x1, y1) - at(x0, y1) - at(x1, y0) + at(x0, y0);
      out(x, y) = s / ((x1 - x0) * (y1 - y0));
    }
  }
  return out;
}

struct Blob {
  Vec2 centroid;
  double area = 0.0;
  double circularity = 0.0;
};

struct BlobParams {
  double min_area = 4.0;
  double max_area = 2000.0;
  double min_circularity = 0.6;
  double min_inertia_ratio = 0.05;  // minor/major second moment; rejects slivers
  int window_radius = 7;          // 15x15 adaptive-threshold window
  double threshold_offset = 0.02; // fraction of the image's intensity range
};

/// Dark-on-light blobs: adaptive threshold, 8-connected components, area and
/// circularity filtering, intensity-weighted centroids.
///
/// Circularity is the ratio between the component area and the area of its
/// second-moment ellipse, which is 1 for filled ellipses (obliquely viewed
/// dots) and drops for ragged or branching shapes.
inline std::vector<Blob> detect_blobs(const ImageGray& img, const BlobParams& params = {}) {
  std::vector<Blob> blobs;
  if (img.empty()) return blobs;
  const ImageGray smooth = gaussian_blur(img);
  const auto [lo, hi] = std::minmax_element(smooth.data.begin(), smooth.data.end());
  const double range = *hi - *lo;
  if (range <= 1e-12) return blobs;
  const ImageGray mean = box_mean(smooth, params.window_radius);
  const double offset = params.threshold_offset * range;

  const int w = img.width;
  const int h = img.height;
  std::vector<std::uint8_t> fg(img.size(), 0);
  for (std::size_t i = 0; i < img.size(); ++i) fg[i] = smooth.data[i] < mean.data[i] - offset;

  std::vector<std::uint8_t> seen(img.size(), 0);
  std::vector<int> stack;
  std::vector<int> component;
  for (int start = 0; start < static_cast<int>(img.size()); ++start) {
    if (!fg[start] || seen[start]) continue;
    component.clear();
    stack.assign(1, start);
    seen[start] = 1;
    while (!stack.empty()) {
      const int idx = stack.back();
      stack.pop_back();
      component.push_back(idx);
      const int cx = idx % w;
      const int cy = idx / w;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = cx + dx;
          const int ny = cy + dy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          const int n = ny * w + nx;
          if (fg[n] && !seen[n]) {
            seen[n] = 1;
            stack.push_back(n);
          }
        }
      }
    }
    const double area = static_cast<double>(component.size());
    if (area < params.min_area || area > params.max_area) continue;

    Vec2 c = Vec2::Zero();
    for (int idx : component) c += Vec2(idx % w, idx / w);
    c /= area;
    Eigen::Matrix2d cov = Eigen::Matrix2d::Identity() / 12.0;  // pixel footprint
    for (int idx : component) {
      const Vec2 d = Vec2(idx % w, idx / w) - c;
      cov += d * d.transpose() / area;
    }
    const double ellipse_area = 4.0 * kPi * std::sqrt(std::max(cov.determinant(), 1e-12));
    const double circularity = area / ellipse_area;
    if (circularity < params.min_circularity) continue;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> inertia(cov);
    if (inertia.eigenvalues()(0) < params.min_inertia_ratio * inertia.eigenvalues()(1)) continue;

    Vec2 wc = Vec2::Zero();
    double wsum = 0.0;
    for (int idx : component) {
      const double weight = mean.data[idx] - smooth.data[idx];
      wc += weight * Vec2(idx % w, idx / w);
      wsum += weight;
    }
    blobs.push_back({wsum > 0 ? Vec2(wc / wsum) : c, area, circularity});
  }
  return blobs;
}

// 16-pixel Bresenham circle of radius 3, clockwise from 12 o'clock.
inline constexpr std::array<std::array<int, 2>, 16> kRing{{{0, -3},
                                                          {1, -3},
                                                          {2, -2},
                                                          {3, -1},
                                                          {3, 0},
                                                          {3, 1},
                                                          {2, 2},
                                                          {1, 3},
                                                          {0, 3},
                                                          {-1, 3},
                                                          {-2, 2},
                                                          {-3, 1},
                                                          {-3, 0},
                                                          {-3, -1},
                                                          {-2, -2},
                                                          {-1, -3}}};

inline constexpr int kResponseBorder = 5;

/// ChESS response: sum response minus diff response minus 16x mean response,
/// clamped at zero. Saddles score high; edges, blobs and flat areas score ~0.
inline ImageGray vertex_response(const ImageGray& img) {
  if (img.width < 11 || img.height < 11) fail(Errc::ImageTooSmall, "vertex response needs >= 11x11");
  ImageGray out(img.width, img.height);
  std::array<double, 16> s{};
  for (int y = kResponseBorder; y < img.height - kResponseBorder; ++y) {
    for (int x = kResponseBorder; x < img.width - kResponseBorder; ++x) {
      double ring_mean = 0.0;
      for (int n = 0; n < 16; ++n) {
        s[n] = img(x + kRing[n][0], y + kRing[n][1]);
        ring_mean += s[n];
      }
      ring_mean /= 16.0;
      double sum_resp = 0.0;
      for (int n = 0; n < 4; ++n) sum_resp += std::abs((s[n] + s[n + 8]) - (s[n + 4] + s[n + 12]));
      double diff_resp = 0.0;
      for (int n = 0; n < 8; ++n) diff_resp += std::abs(s[n] - s[n + 8]);
      double local = 0.0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) local += img(x + dx, y + dy);
      local /= 9.0;
      const double r = sum_resp - diff_resp - 16.0 * std::abs(ring_mean - local);
      out(x, y) = std::max(0.0, r);
    }
  }
  return out;
}

/// Strict local maxima within a Euclidean radius that reach `threshold` times
/// the global maximum. Equal values are ordered row-major, earlier wins.
/// Result sorted by response descending.
inline std::vector<Vec2> non_max_suppress(const ImageGray& response, int radius, double threshold) {
  if (radius < 1) fail(Errc::DegenerateInput, "radius must be >= 1");
  std::vector<Vec2> out;
  if (response.empty()) return out;
  const double gmax = *std::max_element(response.data.begin(), response.data.end());
  if (!(gmax > 0)) return out;
  const double floor_value = threshold * gmax;
  const int r2 = radius * radius;
  std::vector<std::pair<double, int>> survivors;
  for (int y = 0; y < response.height; ++y) {
    for (int x = 0; x < response.width; ++x) {
      const double v = response(x, y);
      if (v <= 0 || v < floor_value) continue;
      bool is_max = true;
      for (int dy = -radius; dy <= radius && is_max; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
          if ((dx == 0 && dy == 0) || dx * dx + dy * dy > r2) continue;
          const int nx = x + dx;
          const int ny = y + dy;
          if (!response.contains(nx, ny)) continue;
          const double u = response(nx, ny);
          const bool earlier = dy < 0 || (dy == 0 && dx < 0);
          if (u > v || (u == v && earlier)) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) survivors.emplace_back(v, y * response.width + x);
    }
  }
  std::stable_sort(survivors.begin(), survivors.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  out.reserve(survivors.size());
  for (const auto& [v, idx] : survivors) out.emplace_back(idx % response.width, idx / response.width);
  return out;
}

/// Subpixel peak from a least-squares quadratic over the 3x3 neighbourhood.
inline Vec2 refine_peak(const ImageGray& response, const Vec2& peak) {
  const int x = static_cast<int>(peak.x());
  const int y = static_cast<int>(peak.y());
  if (x < 1 || y < 1 || x >= response.width - 1 || y >= response.height - 1) return peak;
  Eigen::Matrix<double, 9, 6> a;
  Eigen::Matrix<double, 9, 1> b;
  int row = 0;
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      a.row(row) << 1, dx, dy, dx * dx, dx * dy, dy * dy;
      b(row) = response(x + dx, y + dy);
      ++row;
    }
  }
  const Eigen::Matrix<double, 6, 1> c = a.colPivHouseholderQr().solve(b);
  Eigen::Matrix2d hess;
  hess << 2 * c(3), c(4), c(4), 2 * c(5);
  if (hess.determinant() <= 0 || hess.trace() >= 0) return peak;  // not a maximum
  const Vec2 offset = -hess.inverse() * Vec2(c(1), c(2));
  if (offset.cwiseAbs().maxCoeff() > 1.0) return peak;
  return peak + offset;
}

/// Drops dots lying within `radius` of a confirmed vertex (the crossing of a
/// chessboard vertex is easily mistaken for a dot).
inline std::vector<Vec2> suppress_false_dots(std::span<const Vec2> dots, std::span<const Vec2> vertices,
                                             double radius) {
  std::vector<Vec2> kept;
  for (const auto& d : dots) {
    const bool near_vertex = std::any_of(vertices.begin(), vertices.end(),
                                         [&](const Vec2& v) { return (d - v).norm() <= radius; });
    if (!near_vertex) kept.push_back(d);
  }
  return kept;
}

struct DetectorParams {
  BlobParams blobs;
  int nms_radius = 4;
  double nms_threshold = 0.25;
  double suppress_radius = 3.0;  // pixels
};

struct Detections {
  std::vector<Vec2> dots;
  std::vector<Vec2> vertices;
};

/// Full per-frame feature extraction on a grayscale image.
inline Detections detect_features(const ImageGray& gray, const DetectorParams& params = {}) {
  Detections out;
  const ImageGray smooth = gaussian_blur(gray);
  const ImageGray response = vertex_response(smooth);
  for (const Vec2& p : non_max_suppress(response, params.nms_radius, params.nms_threshold))
    out.vertices.push_back(refine_peak(response, p));
  std::vector<Vec2> dots;
  for (const Blob& b : detect_blobs(gray, params.blobs)) dots.push_back(b.centroid);
  out.dots = suppress_false_dots(dots, out.vertices, params.suppress_radius);
  return out;
}

}  // namespace probesense::detect
