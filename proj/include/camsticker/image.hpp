#pragma once

#include <array>
#include <cstddef>
#include <vector>

namespace camsticker {

using Color = std::array<double, 3>;

/// H x W x 3 raster of doubles, row-major, interleaved RGB.
///
/// Pixel (i, j) samples at integer coordinates: i is the row counted from the
/// top, j the column counted from the left. Image-valued data keeps every
/// channel in [0, 1]; the same container is reused for per-pixel gradient
/// fields, which are unconstrained.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Image() = default;
  Image(int h, int w, double fill = 0.0)
      : height(h), width(w), data(static_cast<std::size_t>(h) * w * 3, fill) {}

  double& at(int i, int j, int c) {
    return data[(static_cast<std::size_t>(i) * width + j) * 3 + c];
  }
  double at(int i, int j, int c) const {
    return data[(static_cast<std::size_t>(i) * width + j) * 3 + c];
  }

  Color pixel(int i, int j) const {
    std::size_t o = (static_cast<std::size_t>(i) * width + j) * 3;
    return {data[o], data[o + 1], data[o + 2]};
  }
  void set_pixel(int i, int j, const Color& c) {
    std::size_t o = (static_cast<std::size_t>(i) * width + j) * 3;
    data[o] = c[0];
    data[o + 1] = c[1];
    data[o + 2] = c[2];
  }

  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width;
  }
  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
};

/// Per-pixel RGB field with the same layout as Image (values unconstrained).
using PixelField = Image;

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

/// Largest absolute per-channel difference between two same-shape rasters.
double max_abs_diff(const Image& a, const Image& b);

/// True if every entry is finite.
bool all_finite(const Image& x);

}  // namespace camsticker
