#pragma once

// Dense float images (row-major, channels interleaved) and PFM persistence.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "besplat/errors.hpp"

namespace besplat {

struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  std::size_t pixels() const { return static_cast<std::size_t>(width) * height; }
  std::size_t size() const { return data.size(); }
  double& at(int x, int y, int c = 0) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  double at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool same_shape(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
};

// Values are stored as 32-bit floats, little-endian, bottom row first.
inline void write_pfm(const std::string& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3) throw InvalidArgument("write_pfm: 1 or 3 channels required");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << (img.channels == 3 ? "PF" : "Pf") << "\n" << img.width << " " << img.height << "\n-1.0\n";
  std::vector<float> row(static_cast<std::size_t>(img.width) * img.channels);
  for (int y = img.height - 1; y >= 0; --y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        row[static_cast<std::size_t>(x) * img.channels + c] = static_cast<float>(img.at(x, y, c));
    if constexpr (std::endian::native == std::endian::big)
      for (float& f : row) {
        std::uint32_t u;
        std::memcpy(&u, &f, 4);
        u = __builtin_bswap32(u);
        std::memcpy(&f, &u, 4);
      }
    os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!os) throw IoError("write failed for '" + path + "'");
}

inline Image read_pfm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  std::string magic;
  int w = 0, h = 0;
  double scale = 0.0;
  is >> magic >> w >> h >> scale;
  is.get();
  if (!is || (magic != "PF" && magic != "Pf") || w <= 0 || h <= 0 || scale == 0.0)
    throw IoError("'" + path + "' is not a PFM file");
  const int channels = magic == "PF" ? 3 : 1;
  const bool little = scale < 0.0;
  Image img(w, h, channels);
  std::vector<float> row(static_cast<std::size_t>(w) * channels);
  for (int y = h - 1; y >= 0; --y) {
    is.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!is) throw IoError("'" + path + "' is truncated");
    const bool swap = little != (std::endian::native == std::endian::little);
    for (std::size_t i = 0; i < row.size(); ++i) {
      float f = row[i];
      if (swap) {
        std::uint32_t u;
        std::memcpy(&u, &f, 4);
        u = __builtin_bswap32(u);
        std::memcpy(&f, &u, 4);
      }
      img.data[(static_cast<std::size_t>(y) * w) * channels + i] = f;
    }
  }
  return img;
}

inline double max_abs_diff(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw InvalidArgument("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

} // namespace besplat
