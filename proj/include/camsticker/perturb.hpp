#pragma once

#include <vector>

#include "camsticker/image.hpp"

namespace camsticker {

/// Parameters of one translucent dot overlay.
///
/// The dot blends a solid color into the image through a radial alpha mask
///   alpha(i, j) = alpha_max * exp(-d(i, j)^beta),
///   d(i, j)     = ((i - center_i)^2 + (j - center_j)^2) / radius^2.
/// The center is real-valued and may lie outside the image bounds, in which
/// case only the overlapping part of the dot is visible.
struct DotParams {
  Color color{0.0, 0.0, 0.0};  // RGB in [0,1]^3
  double center_i = 0.0;       // row coordinate, pixels
  double center_j = 0.0;       // column coordinate, pixels
  double radius = 1.0;         // effective radius, pixels, > 0
  double alpha_max = 0.0;      // peak blend weight in [0,1]
  double beta = 1.0;           // dropoff exponent, > 0
};

/// Ordered composition of up to max_dots dots; dot 0 is applied first.
struct StickerPattern {
  std::vector<DotParams> dots;
};

/// Partial derivatives of a scalar objective w.r.t. one dot's parameters.
struct DotGradient {
  Color d_color{0.0, 0.0, 0.0};
  double d_center_i = 0.0;
  double d_center_j = 0.0;
  double d_radius = 0.0;
  double d_alpha_max = 0.0;
  double d_beta = 0.0;
};

/// d is clamped to at least this value before exponentiation; keeps the
/// beta-gradient term d^beta * ln d finite at the dot center (its analytic
/// limit there is 0 for beta > 0).
inline constexpr double kDistClamp = 1e-12;

/// Pixels where alpha would fall below this are passed through untouched.
/// The bounding box derived from it keeps the blend and its finite-difference
/// checks consistent to well below the gradient-test tolerance.
inline constexpr double kAlphaSupportEps = 1e-12;

/// Inclusive pixel bounding box of a dot's numerically visible support.
struct DotBox {
  int i0 = 0, i1 = -1, j0 = 0, j1 = -1;
  bool empty() const { return i1 < i0 || j1 < j0; }
};

/// Support box for alpha >= kAlphaSupportEps, computed as if the dot had peak
/// alpha `alpha_ref` (pass 1.0 to cover the support of d(alpha)/d(alpha_max)).
DotBox support_box(const DotParams& dot, int height, int width,
                   double alpha_ref);

/// Alpha value of one dot at real coordinates (i, j).
double dot_alpha(const DotParams& dot, double i, double j);

/// Full H*W alpha field of one dot (row-major). Values outside the support
/// box are exactly zero.
std::vector<double> alpha_mask(const DotParams& dot, int height, int width);

/// Alpha-blends one dot into the image: (1-alpha) * x + alpha * color.
Image apply_dot(const Image& x, const DotParams& dot);
void apply_dot_inplace(Image& x, const DotParams& dot);

/// Applies all dots of the pattern in order; the empty pattern is identity.
Image apply_pattern(const Image& x, const StickerPattern& pattern);
void apply_pattern_inplace(Image& x, const StickerPattern& pattern);

/// Gradient of a scalar objective L w.r.t. every dot parameter, where
/// `upstream` holds dL/d(output pixel). Chains through the sequential
/// composition, including the (1-alpha) attenuation later dots apply to
/// earlier ones. Throws std::invalid_argument on shape mismatch or
/// non-finite upstream entries.
std::vector<DotGradient> pattern_gradient(const Image& x,
                                          const StickerPattern& pattern,
                                          const PixelField& upstream);

/// Pattern applied over a background image (for human inspection).
Image render_preview(const StickerPattern& pattern, const Image& background);

/// Pattern over an all-white canvas of the given size.
Image render_preview(const StickerPattern& pattern, int height, int width);

namespace reference {

/// Serial reference blend: evaluates the alpha mask at every pixel with no
/// support-box shortcut. Kept as the oracle for the fast kernels.
Image apply_dot(const Image& x, const DotParams& dot);
Image apply_pattern(const Image& x, const StickerPattern& pattern);

}  // namespace reference

}  // namespace camsticker
