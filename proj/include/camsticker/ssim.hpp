#pragma once

#include "camsticker/image.hpp"

namespace camsticker {

// Windowed SSIM over [0,1] images: 11x11 Gaussian window (sigma 1.5),
// stabilizers C1 = (0.01*L)^2, C2 = (0.03*L)^2 with dynamic range L = 1,
// averaged over the three channels and all fully-interior window positions.
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 1.0e-4;
inline constexpr double kSsimC2 = 9.0e-4;

/// Mean SSIM of two same-shape images (at least 11x11). Symmetric in its
/// arguments; 1.0 for identical images. Throws std::invalid_argument on
/// shape mismatch or images smaller than the window.
double ssim(const Image& a, const Image& b);

/// Gradient of ssim(a, b) with respect to the pixels of `a`.
PixelField ssim_pixel_gradient(const Image& a, const Image& b);

namespace reference {

/// Direct per-window evaluation (no separable filtering), serial. Oracle for
/// the fast kernel.
double ssim(const Image& a, const Image& b);
PixelField ssim_pixel_gradient(const Image& a, const Image& b);

}  // namespace reference

}  // namespace camsticker
