#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "camsticker/image.hpp"
#include "camsticker/perturb.hpp"
#include "camsticker/rng.hpp"

namespace testutil {

using camsticker::Color;
using camsticker::DotParams;
using camsticker::Image;
using camsticker::PixelField;
using camsticker::Rng;
using camsticker::StickerPattern;

inline Image random_image(int h, int w, Rng& rng) {
  Image img(h, w);
  for (double& v : img.data) v = rng.uniform();
  return img;
}

// Smooth low-frequency background plus mild per-pixel noise; enough texture
// for SSIM fitting without being pathological.
inline Image textured_image(int h, int w, Rng& rng) {
  Image img(h, w);
  double fi = rng.uniform(0.02, 0.09), fj = rng.uniform(0.02, 0.09);
  double pi_ = rng.uniform(0.0, 6.28), pj = rng.uniform(0.0, 6.28);
  Color base = {rng.uniform(0.3, 0.6), rng.uniform(0.3, 0.6),
                rng.uniform(0.3, 0.6)};
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      double wave = 0.12 * std::sin(fi * i + pi_) * std::cos(fj * j + pj);
      for (int c = 0; c < 3; ++c) {
        img.at(i, j, c) = camsticker::clamp01(base[c] + wave +
                                              rng.uniform(-0.02, 0.02));
      }
    }
  }
  return img;
}

inline PixelField random_field(int h, int w, Rng& rng) {
  PixelField f(h, w);
  for (double& v : f.data) v = rng.uniform(-1.0, 1.0);
  return f;
}

inline double dot_field(const PixelField& u, const Image& x) {
  double s = 0.0;
  for (std::size_t k = 0; k < u.data.size(); ++k) s += u.data[k] * x.data[k];
  return s;
}

// Central finite difference of f along one scalar.
inline double central_diff(const std::function<double(double)>& f, double x0,
                           double step) {
  return (f(x0 + step) - f(x0 - step)) / (2.0 * step);
}

inline double rel_err(double a, double b, double floor = 1e-7) {
  double denom = std::max({std::fabs(a), std::fabs(b), floor});
  return std::fabs(a - b) / denom;
}

// All 8 scalars of one dot, for finite-difference sweeps.
inline double* dot_param(DotParams& d, int q) {
  switch (q) {
    case 0: return &d.color[0];
    case 1: return &d.color[1];
    case 2: return &d.color[2];
    case 3: return &d.center_i;
    case 4: return &d.center_j;
    case 5: return &d.radius;
    case 6: return &d.alpha_max;
    default: return &d.beta;
  }
}

inline double dot_gradient_component(const camsticker::DotGradient& g, int q) {
  switch (q) {
    case 0: return g.d_color[0];
    case 1: return g.d_color[1];
    case 2: return g.d_color[2];
    case 3: return g.d_center_i;
    case 4: return g.d_center_j;
    case 5: return g.d_radius;
    case 6: return g.d_alpha_max;
    default: return g.d_beta;
  }
}

}  // namespace testutil
