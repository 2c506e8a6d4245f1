#pragma once

#include <string>

#include "camsticker/image.hpp"

namespace camsticker {

/// Loads an 8-bit PNG or JPEG (by extension) into linear [0,1] doubles.
/// Grayscale and paletted inputs are expanded to RGB; alpha is dropped.
Image load_image(const std::string& path);

/// Writes an image as 8-bit RGB PNG or JPEG (by extension), quantizing with
/// round-half-to-even.
void save_image(const Image& img, const std::string& path);

/// [0,1] double -> 8-bit channel value, round-half-to-even.
unsigned char quantize8(double v);

}  // namespace camsticker
