#pragma once

// Binary PGM/PPM and little-endian PFM codecs. Intensities map linearly
// between [0,1] doubles and [0,maxval] integers.

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "probesense/error.hpp"
#include "probesense/image.hpp"

namespace probesense::io {

/// Writes through a sibling temp file and renames, so readers never see a
/// partially written file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) fail(Errc::Io, "cannot open " + tmp.string());
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) fail(Errc::Io, "write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(Errc::Io, "rename failed: " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(Errc::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

namespace detail {

inline std::uint8_t quantize8(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

struct NetpbmHeader {
  std::string magic;
  int width = 0;
  int height = 0;
  int maxval = 0;
  std::size_t offset = 0;
};

inline NetpbmHeader parse_netpbm_header(const std::string& bytes) {
  NetpbmHeader h;
  std::size_t pos = 0;
  auto next_token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return bytes.substr(start, pos - start);
  };
  h.magic = next_token();
  try {
    h.width = std::stoi(next_token());
    h.height = std::stoi(next_token());
    h.maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    fail(Errc::Parse, "malformed netpbm header");
  }
  h.offset = pos + 1;  // single whitespace byte after maxval
  if (h.width <= 0 || h.height <= 0 || h.maxval <= 0 || h.maxval > 65535)
    fail(Errc::Parse, "bad netpbm dimensions");
  return h;
}

}  // namespace detail

inline std::string encode_pgm(const ImageGray& img) {
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.reserve(out.size() + img.size());
  for (double v : img.data) out.push_back(static_cast<char>(detail::quantize8(v)));
  return out;
}

inline std::string encode_pgm16(const Image<std::uint16_t>& img) {
  std::string out =
      "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n65535\n";
  for (std::uint16_t v : img.data) {
    out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v & 0xff));
  }
  return out;
}

inline std::string encode_ppm(const ImageRgb& img) {
  std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  for (const Rgb& p : img.data) {
    for (int c = 0; c < 3; ++c) out.push_back(static_cast<char>(detail::quantize8(p(c))));
  }
  return out;
}

inline std::string encode_mask(const Mask& m) {
  std::string out = "P5\n" + std::to_string(m.width) + " " + std::to_string(m.height) + "\n255\n";
  for (auto v : m.data) out.push_back(static_cast<char>(v ? 255 : 0));
  return out;
}

/// PFM, single channel, little-endian (scale -1), rows stored bottom-up.
inline std::string encode_pfm(const ImageGray& img) {
  std::string out = "Pf\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n-1.0\n";
  for (int y = img.height - 1; y >= 0; --y) {
    for (int x = 0; x < img.width; ++x) {
      const float f = static_cast<float>(img(x, y));
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
    }
  }
  return out;
}

inline ImageGray decode_pgm(const std::string& bytes) {
  const auto h = detail::parse_netpbm_header(bytes);
  if (h.magic != "P5") fail(Errc::Parse, "not a binary PGM");
  const int bpp = h.maxval > 255 ? 2 : 1;
  if (bytes.size() < h.offset + static_cast<std::size_t>(h.width) * h.height * bpp)
    fail(Errc::Parse, "truncated PGM");
  ImageGray img(h.width, h.height);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + h.offset;
  for (std::size_t i = 0; i < img.size(); ++i) {
    const unsigned v = bpp == 1 ? p[i] : (static_cast<unsigned>(p[2 * i]) << 8) | p[2 * i + 1];
    img.data[i] = static_cast<double>(v) / h.maxval;
  }
  return img;
}

inline Image<std::uint16_t> decode_pgm16(const std::string& bytes) {
  const auto h = detail::parse_netpbm_header(bytes);
  if (h.magic != "P5" || h.maxval <= 255) fail(Errc::Parse, "not a 16-bit PGM");
  if (bytes.size() < h.offset + static_cast<std::size_t>(h.width) * h.height * 2)
    fail(Errc::Parse, "truncated PGM");
  Image<std::uint16_t> img(h.width, h.height);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + h.offset;
  for (std::size_t i = 0; i < img.size(); ++i)
    img.data[i] = static_cast<std::uint16_t>((p[2 * i] << 8) | p[2 * i + 1]);
  return img;
}

inline ImageRgb decode_ppm(const std::string& bytes) {
  const auto h = detail::parse_netpbm_header(bytes);
  if (h.magic != "P6" || h.maxval > 255) fail(Errc::Parse, "not an 8-bit binary PPM");
  if (bytes.size() < h.offset + static_cast<std::size_t>(h.width) * h.height * 3)
    fail(Errc::Parse, "truncated PPM");
  ImageRgb img(h.width, h.height);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + h.offset;
  for (std::size_t i = 0; i < img.size(); ++i)
    img.data[i] = Rgb(p[3 * i], p[3 * i + 1], p[3 * i + 2]) / h.maxval;
  return img;
}

inline Mask decode_mask(const std::string& bytes) {
  const ImageGray g = decode_pgm(bytes);
  Mask m(g.width, g.height);
  for (std::size_t i = 0; i < g.size(); ++i) m.data[i] = g.data[i] >= 0.5 ? 1 : 0;
  return m;
}

inline ImageGray decode_pfm(const std::string& bytes) {
  std::istringstream is(bytes);
  std::string magic;
  int w = 0;
  int h = 0;
  double scale = 0;
  if (!(is >> magic >> w >> h >> scale) || magic != "Pf" || w <= 0 || h <= 0)
    fail(Errc::Parse, "malformed PFM header");
  const auto offset = static_cast<std::size_t>(is.tellg()) + 1;
  if (bytes.size() < offset + static_cast<std::size_t>(w) * h * 4) fail(Errc::Parse, "truncated PFM");
  const bool little = scale < 0;
  ImageGray img(w, h);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + offset;
  for (int y = h - 1; y >= 0; --y) {
    for (int x = 0; x < w; ++x) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) {
        const int shift = little ? 8 * b : 8 * (3 - b);
        bits |= static_cast<std::uint32_t>(p[b]) << shift;
      }
      p += 4;
      float f;
      std::memcpy(&f, &bits, 4);
      img(x, y) = f;
    }
  }
  return img;
}

inline ImageGray read_pgm(const std::filesystem::path& p) { return decode_pgm(read_file(p)); }
inline ImageRgb read_ppm(const std::filesystem::path& p) { return decode_ppm(read_file(p)); }
inline ImageGray read_pfm(const std::filesystem::path& p) { return decode_pfm(read_file(p)); }
inline Mask read_mask(const std::filesystem::path& p) { return decode_mask(read_file(p)); }

inline void write_pgm(const std::filesystem::path& p, const ImageGray& img) {
  write_file_atomic(p, encode_pgm(img));
}
inline void write_ppm(const std::filesystem::path& p, const ImageRgb& img) {
  write_file_atomic(p, encode_ppm(img));
}
inline void write_pfm(const std::filesystem::path& p, const ImageGray& img) {
  write_file_atomic(p, encode_pfm(img));
}
inline void write_mask(const std::filesystem::path& p, const Mask& m) {
  write_file_atomic(p, encode_mask(m));
}

}  // namespace probesense::io
