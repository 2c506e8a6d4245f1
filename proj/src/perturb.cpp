#include "camsticker/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace camsticker {

namespace {

// Distance-squared-over-r^2 term, clamped away from zero.
inline double dist_term(const DotParams& dot, double i, double j) {
  double di = i - dot.center_i;
  double dj = j - dot.center_j;
  double d = (di * di + dj * dj) / (dot.radius * dot.radius);
  return std::max(d, kDistClamp);
}

}  // namespace

DotBox support_box(const DotParams& dot, int height, int width,
                   double alpha_ref) {
  DotBox box;
  if (alpha_ref <= kAlphaSupportEps) return box;  // empty
  // alpha_ref * exp(-d^beta) >= eps  <=>  d <= (ln(alpha_ref/eps))^(1/beta)
  double dmax = std::pow(std::log(alpha_ref / kAlphaSupportEps), 1.0 / dot.beta);
  double reach = dot.radius * std::sqrt(dmax);
  box.i0 = std::max(0, static_cast<int>(std::floor(dot.center_i - reach)));
  box.i1 = std::min(height - 1, static_cast<int>(std::ceil(dot.center_i + reach)));
  box.j0 = std::max(0, static_cast<int>(std::floor(dot.center_j - reach)));
  box.j1 = std::min(width - 1, static_cast<int>(std::ceil(dot.center_j + reach)));
  return box;
}

double dot_alpha(const DotParams& dot, double i, double j) {
  double d = dist_term(dot, i, j);
  return dot.alpha_max * std::exp(-std::pow(d, dot.beta));
}

std::vector<double> alpha_mask(const DotParams& dot, int height, int width) {
  std::vector<double> mask(static_cast<std::size_t>(height) * width, 0.0);
  DotBox box = support_box(dot, height, width, dot.alpha_max);
  if (box.empty()) return mask;
#pragma omp parallel for schedule(static)
  for (int i = box.i0; i <= box.i1; ++i) {
    for (int j = box.j0; j <= box.j1; ++j) {
      mask[static_cast<std::size_t>(i) * width + j] = dot_alpha(dot, i, j);
    }
  }
  return mask;
}

void apply_dot_inplace(Image& x, const DotParams& dot) {
  DotBox box = support_box(dot, x.height, x.width, dot.alpha_max);
  if (box.empty()) return;
#pragma omp parallel for schedule(static)
  for (int i = box.i0; i <= box.i1; ++i) {
    for (int j = box.j0; j <= box.j1; ++j) {
      double a = dot_alpha(dot, i, j);
      std::size_t o = (static_cast<std::size_t>(i) * x.width + j) * 3;
      x.data[o] += a * (dot.color[0] - x.data[o]);
      x.data[o + 1] += a * (dot.color[1] - x.data[o + 1]);
      x.data[o + 2] += a * (dot.color[2] - x.data[o + 2]);
    }
  }
}

Image apply_dot(const Image& x, const DotParams& dot) {
  Image out = x;
  apply_dot_inplace(out, dot);
  return out;
}

void apply_pattern_inplace(Image& x, const StickerPattern& pattern) {
  for (const DotParams& dot : pattern.dots) {
    apply_dot_inplace(x, dot);
  }
}

Image apply_pattern(const Image& x, const StickerPattern& pattern) {
  Image out = x;
  apply_pattern_inplace(out, pattern);
  return out;
}

std::vector<DotGradient> pattern_gradient(const Image& x,
                                          const StickerPattern& pattern,
                                          const PixelField& upstream) {
  if (!x.same_shape(upstream)) {
    throw std::invalid_argument("pattern_gradient: upstream shape mismatch");
  }
  if (!all_finite(upstream)) {
    throw std::invalid_argument(
        "pattern_gradient: upstream gradient field has non-finite entries");
  }

  const int K = static_cast<int>(pattern.dots.size());
  std::vector<DotGradient> grads(K);
  if (K == 0) return grads;

  // Forward pass storing every intermediate composite (x_0 .. x_{K-1}).
  std::vector<Image> composites;
  composites.reserve(K);
  composites.push_back(x);
  for (int k = 0; k + 1 < K; ++k) {
    composites.push_back(apply_dot(composites.back(), pattern.dots[k]));
  }

  PixelField g = upstream;  // dL/d(x_k), walked backwards
  const int w = x.width;

  for (int k = K - 1; k >= 0; --k) {
    const DotParams& dot = pattern.dots[k];
    const Image& below = composites[k];
    // alpha_ref = 1 so the box also covers d(alpha)/d(alpha_max) when
    // alpha_max is 0.
    DotBox box = support_box(dot, x.height, x.width, 1.0);
    if (box.empty()) continue;

    const int rows = box.i1 - box.i0 + 1;
    // Fixed-order reduction: per-row partials summed serially so results do
    // not depend on the thread count.
    std::vector<DotGradient> row_part(rows);

#pragma omp parallel for schedule(static)
    for (int ri = 0; ri < rows; ++ri) {
      const int i = box.i0 + ri;
      DotGradient acc;
      for (int j = box.j0; j <= box.j1; ++j) {
        double di = i - dot.center_i;
        double dj = j - dot.center_j;
        double r2 = dot.radius * dot.radius;
        double d = std::max((di * di + dj * dj) / r2, kDistClamp);
        double dbeta = std::pow(d, dot.beta);
        double e = std::exp(-dbeta);
        double a = dot.alpha_max * e;

        std::size_t o = (static_cast<std::size_t>(i) * w + j) * 3;
        double dl_da = 0.0;
        for (int c = 0; c < 3; ++c) {
          double gc = g.data[o + c];
          dl_da += gc * (dot.color[c] - below.data[o + c]);
          acc.d_color[c] += gc * a;
          g.data[o + c] = gc * (1.0 - a);
        }

        double da_dd = -a * dot.beta * std::pow(d, dot.beta - 1.0);
        acc.d_alpha_max += dl_da * e;
        acc.d_center_i += dl_da * da_dd * (-2.0 * di / r2);
        acc.d_center_j += dl_da * da_dd * (-2.0 * dj / r2);
        acc.d_radius += dl_da * da_dd * (-2.0 * d / dot.radius);
        acc.d_beta += dl_da * (-a * dbeta * std::log(d));
      }
      row_part[ri] = acc;
    }

    DotGradient total;
    for (const DotGradient& p : row_part) {
      for (int c = 0; c < 3; ++c) total.d_color[c] += p.d_color[c];
      total.d_center_i += p.d_center_i;
      total.d_center_j += p.d_center_j;
      total.d_radius += p.d_radius;
      total.d_alpha_max += p.d_alpha_max;
      total.d_beta += p.d_beta;
    }
    grads[k] = total;
  }
  return grads;
}

Image render_preview(const StickerPattern& pattern, const Image& background) {
  return apply_pattern(background, pattern);
}

Image render_preview(const StickerPattern& pattern, int height, int width) {
  Image white(height, width, 1.0);
  return apply_pattern(white, pattern);
}

namespace reference {

Image apply_dot(const Image& x, const DotParams& dot) {
  Image out = x;
  for (int i = 0; i < x.height; ++i) {
    for (int j = 0; j < x.width; ++j) {
      double di = i - dot.center_i;
      double dj = j - dot.center_j;
      double d = (di * di + dj * dj) / (dot.radius * dot.radius);
      d = std::max(d, kDistClamp);
      double a = dot.alpha_max * std::exp(-std::pow(d, dot.beta));
      for (int c = 0; c < 3; ++c) {
        out.at(i, j, c) = (1.0 - a) * x.at(i, j, c) + a * dot.color[c];
      }
    }
  }
  return out;
}

Image apply_pattern(const Image& x, const StickerPattern& pattern) {
  Image out = x;
  for (const DotParams& dot : pattern.dots) {
    out = reference::apply_dot(out, dot);
  }
  return out;
}

}  // namespace reference

}  // namespace camsticker
