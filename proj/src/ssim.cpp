#include "camsticker/ssim.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace camsticker {

namespace {

constexpr int kHalf = kSsimWindow / 2;

const std::vector<double>& window_1d() {
  static const std::vector<double> w = [] {
    std::vector<double> v(kSsimWindow);
    double sum = 0.0;
    for (int u = 0; u < kSsimWindow; ++u) {
      double x = u - kHalf;
      v[u] = std::exp(-x * x / (2.0 * kSsimSigma * kSsimSigma));
      sum += v[u];
    }
    for (double& e : v) e /= sum;
    return v;
  }();
  return w;
}

void check_inputs(const Image& a, const Image& b) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument("ssim: image dimensions differ");
  }
  if (a.height < kSsimWindow || a.width < kSsimWindow) {
    throw std::invalid_argument("ssim: images must be at least 11x11");
  }
}

// Scalar plane of one channel.
std::vector<double> extract_channel(const Image& img, int c) {
  std::vector<double> p(static_cast<std::size_t>(img.height) * img.width);
  const std::size_t n = p.size();
  for (std::size_t k = 0; k < n; ++k) p[k] = img.data[k * 3 + c];
  return p;
}

// Horizontal valid filter: (H x W) -> (H x vw), vw = W - 10.
std::vector<double> filter_h(const std::vector<double>& p, int h, int w) {
  const auto& g = window_1d();
  const int vw = w - 2 * kHalf;
  std::vector<double> out(static_cast<std::size_t>(h) * vw);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < h; ++i) {
    const double* row = p.data() + static_cast<std::size_t>(i) * w;
    double* orow = out.data() + static_cast<std::size_t>(i) * vw;
    for (int q = 0; q < vw; ++q) {
      double s = 0.0;
      for (int u = 0; u < kSsimWindow; ++u) s += g[u] * row[q + u];
      orow[q] = s;
    }
  }
  return out;
}

// Vertical valid filter: (H x vw) -> (vh x vw).
std::vector<double> filter_v(const std::vector<double>& p, int h, int vw) {
  const auto& g = window_1d();
  const int vh = h - 2 * kHalf;
  std::vector<double> out(static_cast<std::size_t>(vh) * vw);
#pragma omp parallel for schedule(static)
  for (int q = 0; q < vh; ++q) {
    double* orow = out.data() + static_cast<std::size_t>(q) * vw;
    for (int j = 0; j < vw; ++j) orow[j] = 0.0;
    for (int u = 0; u < kSsimWindow; ++u) {
      const double* row = p.data() + static_cast<std::size_t>(q + u) * vw;
      for (int j = 0; j < vw; ++j) orow[j] += g[u] * row[j];
    }
  }
  return out;
}

std::vector<double> filter_valid(const std::vector<double>& p, int h, int w) {
  return filter_v(filter_h(p, h, w), h, w - 2 * kHalf);
}

// Scatter window-centered maps back to pixel space: same-size separable
// convolution of the zero-padded valid map with the (symmetric) window.
std::vector<double> scatter_full(const std::vector<double>& m, int vh, int vw,
                                 int h, int w) {
  const auto& g = window_1d();
  // Zero-pad to H x W with the window-center offset.
  std::vector<double> pad(static_cast<std::size_t>(h) * w, 0.0);
#pragma omp parallel for schedule(static)
  for (int q = 0; q < vh; ++q) {
    for (int j = 0; j < vw; ++j) {
      pad[static_cast<std::size_t>(q + kHalf) * w + (j + kHalf)] =
          m[static_cast<std::size_t>(q) * vw + j];
    }
  }
  // Horizontal same-size pass with zero boundary.
  std::vector<double> tmp(static_cast<std::size_t>(h) * w, 0.0);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < h; ++i) {
    const double* row = pad.data() + static_cast<std::size_t>(i) * w;
    double* orow = tmp.data() + static_cast<std::size_t>(i) * w;
    for (int j = 0; j < w; ++j) {
      double s = 0.0;
      for (int u = 0; u < kSsimWindow; ++u) {
        int jj = j + u - kHalf;
        if (jj >= 0 && jj < w) s += g[u] * row[jj];
      }
      orow[j] = s;
    }
  }
  // Vertical same-size pass.
  std::vector<double> out(static_cast<std::size_t>(h) * w, 0.0);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < h; ++i) {
    double* orow = out.data() + static_cast<std::size_t>(i) * w;
    for (int u = 0; u < kSsimWindow; ++u) {
      int ii = i + u - kHalf;
      if (ii < 0 || ii >= h) continue;
      const double* row = tmp.data() + static_cast<std::size_t>(ii) * w;
      for (int j = 0; j < w; ++j) orow[j] += g[u] * row[j];
    }
  }
  return out;
}

struct WindowMaps {
  int vh = 0, vw = 0;
  std::vector<double> mu_a, mu_b, saa, sbb, sab;
};

WindowMaps window_maps(const std::vector<double>& a,
                       const std::vector<double>& b, int h, int w) {
  WindowMaps m;
  m.vh = h - 2 * kHalf;
  m.vw = w - 2 * kHalf;
  const std::size_t n = a.size();
  std::vector<double> aa(n), bb(n), ab(n);
  for (std::size_t k = 0; k < n; ++k) {
    aa[k] = a[k] * a[k];
    bb[k] = b[k] * b[k];
    ab[k] = a[k] * b[k];
  }
  m.mu_a = filter_valid(a, h, w);
  m.mu_b = filter_valid(b, h, w);
  m.saa = filter_valid(aa, h, w);
  m.sbb = filter_valid(bb, h, w);
  m.sab = filter_valid(ab, h, w);
  return m;
}

inline double window_ssim(double mu_a, double mu_b, double saa, double sbb,
                          double sab) {
  double va = saa - mu_a * mu_a;
  double vb = sbb - mu_b * mu_b;
  double cov = sab - mu_a * mu_b;
  double num = (2.0 * mu_a * mu_b + kSsimC1) * (2.0 * cov + kSsimC2);
  double den = (mu_a * mu_a + mu_b * mu_b + kSsimC1) * (va + vb + kSsimC2);
  return num / den;
}

}  // namespace

double ssim(const Image& a, const Image& b) {
  check_inputs(a, b);
  const int h = a.height, w = a.width;
  double total = 0.0;
  std::size_t n_windows = 0;
  for (int c = 0; c < 3; ++c) {
    auto pa = extract_channel(a, c);
    auto pb = extract_channel(b, c);
    WindowMaps m = window_maps(pa, pb, h, w);
    const std::size_t nw = m.mu_a.size();
    n_windows += nw;
    // Fixed-order per-row reduction keeps the result thread-count invariant.
    std::vector<double> row_sum(m.vh, 0.0);
#pragma omp parallel for schedule(static)
    for (int q = 0; q < m.vh; ++q) {
      double s = 0.0;
      for (int j = 0; j < m.vw; ++j) {
        std::size_t k = static_cast<std::size_t>(q) * m.vw + j;
        s += window_ssim(m.mu_a[k], m.mu_b[k], m.saa[k], m.sbb[k], m.sab[k]);
      }
      row_sum[q] = s;
    }
    for (double s : row_sum) total += s;
  }
  return total / static_cast<double>(n_windows);
}

PixelField ssim_pixel_gradient(const Image& a, const Image& b) {
  check_inputs(a, b);
  const int h = a.height, w = a.width;
  PixelField grad(h, w, 0.0);
  const double norm =
      1.0 / (3.0 * static_cast<double>(h - 2 * kHalf) * (w - 2 * kHalf));

  for (int c = 0; c < 3; ++c) {
    auto pa = extract_channel(a, c);
    auto pb = extract_channel(b, c);
    WindowMaps m = window_maps(pa, pb, h, w);
    const std::size_t nw = m.mu_a.size();

    // Per-window coefficients of the chain rule through (mu_a, Saa, Sab):
    //   dS/da_p = wgt * (q1 + a_p * q2 + b_p * q3).
    std::vector<double> q1(nw), q2(nw), q3(nw);
#pragma omp parallel for schedule(static)
    for (int q = 0; q < m.vh; ++q) {
      for (int j = 0; j < m.vw; ++j) {
        std::size_t k = static_cast<std::size_t>(q) * m.vw + j;
        double mu_a = m.mu_a[k], mu_b = m.mu_b[k];
        double va = m.saa[k] - mu_a * mu_a;
        double vb = m.sbb[k] - mu_b * mu_b;
        double cov = m.sab[k] - mu_a * mu_b;
        double A = 2.0 * mu_a * mu_b + kSsimC1;
        double B = 2.0 * cov + kSsimC2;
        double C = mu_a * mu_a + mu_b * mu_b + kSsimC1;
        double D = va + vb + kSsimC2;
        double S = (A * B) / (C * D);
        // dS/dmu_a with Saa, Sab held fixed.
        q1[k] = 2.0 * mu_b * (B - A) / (C * D) -
                2.0 * mu_a * S * (1.0 / C - 1.0 / D);
        q2[k] = -2.0 * S / D;        // via Saa (variance term)
        q3[k] = 2.0 * A / (C * D);   // via Sab (covariance term)
      }
    }

    auto f1 = scatter_full(q1, m.vh, m.vw, h, w);
    auto f2 = scatter_full(q2, m.vh, m.vw, h, w);
    auto f3 = scatter_full(q3, m.vh, m.vw, h, w);

#pragma omp parallel for schedule(static)
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        std::size_t k = static_cast<std::size_t>(i) * w + j;
        grad.data[k * 3 + c] = norm * (f1[k] + pa[k] * f2[k] + pb[k] * f3[k]);
      }
    }
  }
  return grad;
}

namespace reference {

double ssim(const Image& a, const Image& b) {
  check_inputs(a, b);
  const auto& g = window_1d();
  const int h = a.height, w = a.width;
  double total = 0.0;
  std::size_t n_windows = 0;
  for (int c = 0; c < 3; ++c) {
    for (int ci = kHalf; ci < h - kHalf; ++ci) {
      for (int cj = kHalf; cj < w - kHalf; ++cj) {
        double mu_a = 0, mu_b = 0, saa = 0, sbb = 0, sab = 0;
        for (int u = -kHalf; u <= kHalf; ++u) {
          for (int v = -kHalf; v <= kHalf; ++v) {
            double wgt = g[u + kHalf] * g[v + kHalf];
            double av = a.at(ci + u, cj + v, c);
            double bv = b.at(ci + u, cj + v, c);
            mu_a += wgt * av;
            mu_b += wgt * bv;
            saa += wgt * av * av;
            sbb += wgt * bv * bv;
            sab += wgt * av * bv;
          }
        }
        total += window_ssim(mu_a, mu_b, saa, sbb, sab);
        ++n_windows;
      }
    }
  }
  return total / static_cast<double>(n_windows);
}

PixelField ssim_pixel_gradient(const Image& a, const Image& b) {
  check_inputs(a, b);
  const auto& g = window_1d();
  const int h = a.height, w = a.width;
  PixelField grad(h, w, 0.0);
  const double norm =
      1.0 / (3.0 * static_cast<double>(h - 2 * kHalf) * (w - 2 * kHalf));
  for (int c = 0; c < 3; ++c) {
    for (int ci = kHalf; ci < h - kHalf; ++ci) {
      for (int cj = kHalf; cj < w - kHalf; ++cj) {
        double mu_a = 0, mu_b = 0, saa = 0, sbb = 0, sab = 0;
        for (int u = -kHalf; u <= kHalf; ++u) {
          for (int v = -kHalf; v <= kHalf; ++v) {
            double wgt = g[u + kHalf] * g[v + kHalf];
            double av = a.at(ci + u, cj + v, c);
            double bv = b.at(ci + u, cj + v, c);
            mu_a += wgt * av;
            mu_b += wgt * bv;
            saa += wgt * av * av;
            sbb += wgt * bv * bv;
            sab += wgt * av * bv;
          }
        }
        double va = saa - mu_a * mu_a;
        double vb = sbb - mu_b * mu_b;
        double cov = sab - mu_a * mu_b;
        double A = 2.0 * mu_a * mu_b + kSsimC1;
        double B = 2.0 * cov + kSsimC2;
        double C = mu_a * mu_a + mu_b * mu_b + kSsimC1;
        double D = va + vb + kSsimC2;
        double S = (A * B) / (C * D);
        double q1 = 2.0 * mu_b * (B - A) / (C * D) -
                    2.0 * mu_a * S * (1.0 / C - 1.0 / D);
        double q2 = -2.0 * S / D;
        double q3 = 2.0 * A / (C * D);
        for (int u = -kHalf; u <= kHalf; ++u) {
          for (int v = -kHalf; v <= kHalf; ++v) {
            double wgt = g[u + kHalf] * g[v + kHalf];
            double av = a.at(ci + u, cj + v, c);
            double bv = b.at(ci + u, cj + v, c);
            grad.at(ci + u, cj + v, c) += norm * wgt * (q1 + av * q2 + bv * q3);
          }
        }
      }
    }
  }
  return grad;
}

}  // namespace reference

}  // namespace camsticker
