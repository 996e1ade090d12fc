#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "probesense/error.hpp"

namespace probesense {

using Rgb = Eigen::Vector3d;

template <class T>
inline T zero_pixel() {
  if constexpr (std::is_arithmetic_v<T>) {
    return T{0};
  } else {
    return T::Zero();
  }
}

/// Dense row-major raster.
template <class T>
struct Image {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h) : Image(w, h, zero_pixel<T>()) {}
  Image(int w, int h, const T& fill)
      : width(w), height(h), data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }

  T& operator()(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  const T& operator()(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }

  template <class U>
  bool same_shape(const Image<U>& o) const {
    return width == o.width && height == o.height;
  }
};

using ImageGray = Image<double>;
using ImageRgb = Image<Rgb>;
using Mask = Image<std::uint8_t>;

template <class A, class B>
inline void require_same_shape(const Image<A>& a, const Image<B>& b, const char* what) {
  if (!a.same_shape(b)) fail(Errc::DimensionMismatch, what);
}

/// Bilinear sample; std::nullopt when (x, y) falls outside [0, w-1] x [0, h-1].
template <class T>
inline std::optional<T> sample_bilinear(const Image<T>& img, double x, double y) {
  if (!(x >= 0.0 && y >= 0.0 && x <= img.width - 1 && y <= img.height - 1)) return std::nullopt;
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double ax = x - x0;
  const double ay = y - y0;
  const int x1 = std::min(x0 + 1, img.width - 1);
  const int y1 = std::min(y0 + 1, img.height - 1);
  if (ax == 0.0 && ay == 0.0) return img(x0, y0);
  const T top = img(x0, y0) * (1.0 - ax) + img(x1, y0) * ax;
  const T bottom = img(x0, y1) * (1.0 - ax) + img(x1, y1) * ax;
  return T(top * (1.0 - ay) + bottom * ay);
}

inline ImageGray to_gray(const ImageRgb& img) {
  ImageGray out(img.width, img.height);
  for (std::size_t i = 0; i < img.size(); ++i) out.data[i] = img.data[i].mean();
  return out;
}

/// Grayscale from green and blue only; the red channel carries the laser
/// spot and is excluded from learned descriptors.
inline ImageGray to_gray_no_red(const ImageRgb& img) {
  ImageGray out(img.width, img.height);
  for (std::size_t i = 0; i < img.size(); ++i) out.data[i] = 0.5 * (img.data[i].y() + img.data[i].z());
  return out;
}

/// Hue in degrees [0, 360) and saturation of an RGB pixel.
inline std::pair<double, double> hue_saturation(const Rgb& p) {
  const double mx = p.maxCoeff();
  const double mn = p.minCoeff();
  const double delta = mx - mn;
  if (delta <= 0.0 || mx <= 0.0) return {0.0, 0.0};
  double h = 0.0;
  if (mx == p.x()) {
    h = 60.0 * std::fmod((p.y() - p.z()) / delta, 6.0);
  } else if (mx == p.y()) {
    h = 60.0 * ((p.z() - p.x()) / delta + 2.0);
  } else {
    h = 60.0 * ((p.x() - p.y()) / delta + 4.0);
  }
  if (h < 0) h += 360.0;
  return {h, delta / mx};
}

}  // namespace probesense
