#include "camsticker/calib.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>

#include "camsticker/rng.hpp"
#include "camsticker/ssim.hpp"

namespace camsticker {

namespace {

constexpr double kBetaMin = 0.05;
constexpr double kBetaMax = 8.0;
constexpr double kRadiusMin = 0.5;

const char* kChannelNames[3] = {"red", "green", "blue"};

double l2_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double e : v) s += e * e;
  return std::sqrt(s);
}

// Projected gradient ascent on one parameter block. `x` are the live block
// scalars, `objective` recomputes the objective from them, `gradient`
// returns the block gradient. Returns the achieved objective; unaccepted
// trial moves are rolled back, so the result is never below f0.
double ascend_block(const std::vector<double*>& x,
                    const std::function<double()>& objective,
                    const std::function<std::vector<double>()>& gradient,
                    const std::function<void()>& project, double f0,
                    const FitOptions& opts) {
  const std::size_t n = x.size();
  std::vector<double> x0(n);
  for (int step = 0; step < opts.inner_steps; ++step) {
    std::vector<double> g = gradient();
    double gn = l2_norm(g);
    if (gn < 1e-14) break;
    for (std::size_t i = 0; i < n; ++i) x0[i] = *x[i];

    double t = opts.step0;
    bool accepted = false;
    double f_new = f0;
    for (int h = 0; h <= opts.max_halvings; ++h) {
      for (std::size_t i = 0; i < n; ++i) *x[i] = x0[i] + t * g[i] / gn;
      project();
      double f = objective();
      if (f >= f0 + opts.armijo_c * t * gn) {
        f_new = f;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      for (std::size_t i = 0; i < n; ++i) *x[i] = x0[i];
      break;
    }
    double gain = f_new - f0;
    f0 = f_new;
    if (gain < opts.inner_tol) break;
  }
  return f0;
}

struct PairState {
  const CapturePair* pair = nullptr;
  DotParams dot;

  double eval() const {
    return camsticker::ssim(apply_dot(pair->clean, dot), pair->dotted);
  }
  DotGradient grad() const {
    Image perturbed = apply_dot(pair->clean, dot);
    PixelField up = ssim_pixel_gradient(perturbed, pair->dotted);
    StickerPattern one;
    one.dots.push_back(dot);
    return pattern_gradient(pair->clean, one, up)[0];
  }
  void project_center() {
    double r = dot.radius;
    dot.center_i = std::clamp(dot.center_i, -r, pair->clean.height - 1 + r);
    dot.center_j = std::clamp(dot.center_j, -r, pair->clean.width - 1 + r);
  }
  void project_color() {
    for (double& c : dot.color) c = clamp01(c);
  }
};

// Center then color block on one pair (the per-pair nuisance parameters);
// returns the pair SSIM after both blocks.
double run_pair_blocks(PairState& st, double f0, const FitOptions& opts) {
  f0 = ascend_block(
      {&st.dot.center_i, &st.dot.center_j}, [&] { return st.eval(); },
      [&] {
        DotGradient g = st.grad();
        return std::vector<double>{g.d_center_i, g.d_center_j};
      },
      [&] { st.project_center(); }, f0, opts);
  f0 = ascend_block(
      {&st.dot.color[0], &st.dot.color[1], &st.dot.color[2]},
      [&] { return st.eval(); },
      [&] {
        DotGradient g = st.grad();
        return std::vector<double>{g.d_color[0], g.d_color[1], g.d_color[2]};
      },
      [&] { st.project_color(); }, f0, opts);
  return f0;
}

void validate_pair(const CapturePair& pair, double radius) {
  if (!pair.clean.same_shape(pair.dotted)) {
    throw std::invalid_argument(
        "capture pair: clean and dotted image dimensions differ");
  }
  if (pair.hint_i < -radius || pair.hint_i > pair.clean.height - 1 + radius ||
      pair.hint_j < -radius || pair.hint_j > pair.clean.width - 1 + radius) {
    throw std::invalid_argument(
        "capture pair: center hint outside image bounds extended by one "
        "radius");
  }
}

}  // namespace

ColorFit fit_color_transform(
    const std::vector<std::pair<Color, Color>>& pairs) {
  if (pairs.size() < 2) {
    throw std::invalid_argument(
        "fit_color_transform: need at least 2 color pairs");
  }
  const double n = static_cast<double>(pairs.size());
  ColorFit fit;
  for (int c = 0; c < 3; ++c) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& [printed, observed] : pairs) {
      sx += printed[c];
      sy += observed[c];
      sxx += printed[c] * printed[c];
      sxy += printed[c] * observed[c];
    }
    double var = sxx - sx * sx / n;
    if (var < 1e-12) {
      throw std::invalid_argument(
          std::string("fit_color_transform: printed values are constant in "
                      "the ") +
          kChannelNames[c] + " channel; the slope is unidentifiable");
    }
    double k = (sxy - sx * sy / n) / var;
    double b = (sy - k * sx) / n;
    fit.calibration.k[c] = k;
    fit.calibration.b[c] = b;
    double ss = 0.0;
    for (const auto& [printed, observed] : pairs) {
      double r = observed[c] - (k * printed[c] + b);
      ss += r * r;
    }
    fit.residual_rms[c] = std::sqrt(ss / n);
  }
  return fit;
}

GridSpec default_grid(int height, int width) {
  GridSpec g;
  g.rows = 45;
  g.cols = 45;
  double side = static_cast<double>(std::min(height, width));
  g.spacing = std::max(1.0, std::floor(side / 45.0 + 0.5));
  return g;
}

std::vector<std::pair<double, double>> grid_points(const GridSpec& grid,
                                                   int height, int width) {
  double span_i = (grid.rows - 1) * grid.spacing;
  double span_j = (grid.cols - 1) * grid.spacing;
  double start_i = std::nearbyint((height - 1 - span_i) / 2.0);
  double start_j = std::nearbyint((width - 1 - span_j) / 2.0);
  std::vector<std::pair<double, double>> pts;
  pts.reserve(static_cast<std::size_t>(grid.rows) * grid.cols);
  for (int gi = 0; gi < grid.rows; ++gi) {
    for (int gj = 0; gj < grid.cols; ++gj) {
      pts.emplace_back(start_i + gi * grid.spacing,
                       start_j + gj * grid.spacing);
    }
  }
  return pts;
}

SingleDotFit fit_single_dot(const CapturePair& pair,
                            const SharedDotShape& shape_init,
                            const ColorCalibration& calibration,
                            const FitOptions& opts) {
  validate_pair(pair, shape_init.radius);

  PairState st;
  st.pair = &pair;
  st.dot.center_i = pair.hint_i;
  st.dot.center_j = pair.hint_j;
  st.dot.color = calibration.apply(pair.printed_color);
  st.dot.radius = shape_init.radius;
  st.dot.alpha_max = shape_init.alpha_max;
  st.dot.beta = shape_init.beta;

  const int h = pair.clean.height, w = pair.clean.width;
  const double radius_hi = 2.0 * std::max(h, w);

  double f = st.eval();
  const double f_init = f;

  for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
    double f_sweep = f;
    f = run_pair_blocks(st, f, opts);
    f = ascend_block(
        {&st.dot.alpha_max}, [&] { return st.eval(); },
        [&] { return std::vector<double>{st.grad().d_alpha_max}; },
        [&] { st.dot.alpha_max = clamp01(st.dot.alpha_max); }, f, opts);
    f = ascend_block(
        {&st.dot.beta}, [&] { return st.eval(); },
        [&] { return std::vector<double>{st.grad().d_beta}; },
        [&] { st.dot.beta = std::clamp(st.dot.beta, kBetaMin, kBetaMax); }, f,
        opts);
    f = ascend_block(
        {&st.dot.radius}, [&] { return st.eval(); },
        [&] { return std::vector<double>{st.grad().d_radius}; },
        [&] {
          st.dot.radius = std::clamp(st.dot.radius, kRadiusMin, radius_hi);
        },
        f, opts);
    if (f - f_sweep < opts.sweep_tol) break;
  }

  SingleDotFit out;
  out.dot = st.dot;
  out.ssim = f;
  out.improved = f > f_init + 1e-12;
  return out;
}

SharedShapeFit fit_shared_shape(const std::vector<CapturePair>& pairs,
                                const SharedDotShape& shape_init,
                                const ColorCalibration& calibration,
                                const FitOptions& opts) {
  if (pairs.empty()) {
    throw std::invalid_argument("fit_shared_shape: no capture pairs given");
  }
  const std::size_t P = pairs.size();
  for (const CapturePair& p : pairs) validate_pair(p, shape_init.radius);

  SharedDotShape shape = shape_init;
  std::vector<PairState> states(P);
  for (std::size_t p = 0; p < P; ++p) {
    states[p].pair = &pairs[p];
    states[p].dot.center_i = pairs[p].hint_i;
    states[p].dot.center_j = pairs[p].hint_j;
    states[p].dot.color = calibration.apply(pairs[p].printed_color);
    states[p].dot.radius = shape.radius;
    states[p].dot.alpha_max = shape.alpha_max;
    states[p].dot.beta = shape.beta;
  }

  int max_side = 0;
  for (const CapturePair& p : pairs) {
    max_side = std::max({max_side, p.clean.height, p.clean.width});
  }
  const double radius_hi = 2.0 * max_side;

  auto sync_shape = [&] {
    for (PairState& st : states) {
      st.dot.radius = shape.radius;
      st.dot.alpha_max = shape.alpha_max;
      st.dot.beta = shape.beta;
    }
  };

  std::vector<double> pair_ssim(P);
  auto mean_of = [&](const std::vector<double>& v) {
    double s = 0.0;
    for (double e : v) s += e;
    return s / static_cast<double>(P);
  };

  auto mean_eval = [&] {
    sync_shape();
    std::vector<double> vals(P);
#pragma omp parallel for schedule(dynamic)
    for (std::size_t p = 0; p < P; ++p) vals[p] = states[p].eval();
    pair_ssim = vals;
    return mean_of(vals);
  };

  auto mean_shape_grad = [&] {
    sync_shape();
    std::vector<DotGradient> gs(P);
#pragma omp parallel for schedule(dynamic)
    for (std::size_t p = 0; p < P; ++p) gs[p] = states[p].grad();
    DotGradient m;
    for (const DotGradient& g : gs) {
      m.d_radius += g.d_radius;
      m.d_alpha_max += g.d_alpha_max;
      m.d_beta += g.d_beta;
    }
    m.d_radius /= static_cast<double>(P);
    m.d_alpha_max /= static_cast<double>(P);
    m.d_beta /= static_cast<double>(P);
    return m;
  };

  double f = mean_eval();
  for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
    double f_sweep = f;

    // (a) per-pair nuisance parameters, shape frozen
#pragma omp parallel for schedule(dynamic)
    for (std::size_t p = 0; p < P; ++p) {
      pair_ssim[p] = run_pair_blocks(states[p], pair_ssim[p], opts);
    }
    f = mean_of(pair_ssim);

    // (b) shared shape blocks on the mean SSIM across pairs
    f = ascend_block(
        {&shape.alpha_max}, mean_eval,
        [&] { return std::vector<double>{mean_shape_grad().d_alpha_max}; },
        [&] { shape.alpha_max = clamp01(shape.alpha_max); }, f, opts);
    f = ascend_block(
        {&shape.beta}, mean_eval,
        [&] { return std::vector<double>{mean_shape_grad().d_beta}; },
        [&] { shape.beta = std::clamp(shape.beta, kBetaMin, kBetaMax); }, f,
        opts);
    f = ascend_block(
        {&shape.radius}, mean_eval,
        [&] { return std::vector<double>{mean_shape_grad().d_radius}; },
        [&] { shape.radius = std::clamp(shape.radius, kRadiusMin, radius_hi); },
        f, opts);

    if (f - f_sweep < opts.sweep_tol) break;
  }
  sync_shape();

  SharedShapeFit out;
  out.shape = shape;
  out.mean_ssim = f;
  out.pairs.resize(P);
  for (std::size_t p = 0; p < P; ++p) {
    out.pairs[p].center_i = states[p].dot.center_i;
    out.pairs[p].center_j = states[p].dot.center_j;
    out.pairs[p].color = states[p].dot.color;
    out.pairs[p].ssim = pair_ssim[p];
  }
  return out;
}

PaletteSelection select_palette(const std::vector<Color>& candidates,
                                const ClassifierBackend& classifier,
                                const std::vector<Image>& images,
                                const SharedDotShape& shape,
                                const GridSpec& grid,
                                const PaletteOptions& opts) {
  if (candidates.empty()) {
    throw std::invalid_argument("select_palette: no candidate colors");
  }
  if (opts.palette_size < 1 ||
      opts.palette_size > static_cast<int>(candidates.size())) {
    throw std::invalid_argument(
        "select_palette: palette_size must be in [1, #candidates]");
  }
  if (opts.trials_per_color < 1) {
    throw std::invalid_argument(
        "select_palette: trials_per_color must be >= 1");
  }
  if (images.empty()) {
    throw std::invalid_argument("select_palette: empty sample set");
  }

  std::vector<int> clean_preds = predict_batch(classifier, images);

  const std::size_t C = candidates.size();
  const std::size_t T = static_cast<std::size_t>(opts.trials_per_color);
  std::vector<unsigned char> hit(C * T, 0);
  std::exception_ptr error;

#pragma omp parallel for schedule(dynamic)
  for (std::size_t idx = 0; idx < C * T; ++idx) {
    try {
      const std::size_t ci = idx / T;
      const std::size_t t = idx % T;
      Rng rng(opts.seed, ci, t);
      const std::size_t m = rng.uniform_int(images.size());
      const Image& img = images[m];
      auto pts = grid_points(grid, img.height, img.width);
      const std::size_t cell = rng.uniform_int(pts.size());

      DotParams dot;
      dot.color = candidates[ci];
      dot.center_i = pts[cell].first;
      dot.center_j = pts[cell].second;
      dot.radius = shape.radius;
      dot.alpha_max = shape.alpha_max;
      dot.beta = shape.beta;

      int pred = predict(classifier, apply_dot(img, dot));
      hit[idx] = pred != clean_preds[m] ? 1 : 0;
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);

  std::vector<double> scores(C, 0.0);
  for (std::size_t ci = 0; ci < C; ++ci) {
    int n = 0;
    for (std::size_t t = 0; t < T; ++t) n += hit[ci * T + t];
    scores[ci] = static_cast<double>(n) / static_cast<double>(T);
  }

  std::vector<std::size_t> order(C);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return scores[a] > scores[b];
                   });

  PaletteSelection sel;
  sel.candidate_scores = scores;
  for (int i = 0; i < opts.palette_size; ++i) {
    sel.palette.push_back(candidates[order[i]]);
    sel.palette_scores.push_back(scores[order[i]]);
  }
  return sel;
}

std::vector<Color> default_color_candidates(const ColorCalibration& calib) {
  std::vector<Color> out;
  out.reserve(125);
  const double levels[5] = {0.0, 0.25, 0.5, 0.75, 1.0};
  for (double r : levels) {
    for (double g : levels) {
      for (double b : levels) {
        out.push_back(calib.apply({r, g, b}));
      }
    }
  }
  return out;
}

}  // namespace camsticker
