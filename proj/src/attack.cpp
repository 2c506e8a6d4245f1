#include "camsticker/attack.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "camsticker/rng.hpp"

namespace camsticker {

namespace {

double per_image_loss(const Logits& z, int y_star, int y_targ) {
  return softmax_cross_entropy(z, y_star) - softmax_cross_entropy(z, y_targ);
}

void validate_config(const AttackConfig& config,
                     const ClassifierBackend& classifier) {
  if (config.victim_class == config.target_class) {
    throw std::invalid_argument(
        "attack: victim and target class must differ");
  }
  if (config.victim_class < 0 ||
      config.victim_class >= classifier.num_classes() ||
      config.target_class < 0 ||
      config.target_class >= classifier.num_classes()) {
    throw std::invalid_argument("attack: class index out of range");
  }
  if (config.num_dots < 0 || config.num_dots > config.threat_model.max_dots) {
    throw std::invalid_argument(
        "attack: num_dots must be in [0, threat_model.max_dots]");
  }
  if (config.images == nullptr || config.images->empty()) {
    throw std::invalid_argument("attack: empty dataset");
  }
  if (config.num_dots > 0 && config.threat_model.palette.empty()) {
    throw std::invalid_argument("attack: threat model palette is empty");
  }
  const Image& first = config.images->front();
  for (const Image& img : *config.images) {
    if (!img.same_shape(first)) {
      throw std::invalid_argument(
          "attack: all dataset images must share one frame size");
    }
  }
}

// Seeded fixed subsample: first n of a Fisher-Yates shuffle, index-sorted.
std::vector<std::size_t> subsample_indices(std::uint64_t seed, std::size_t m,
                                           int n) {
  std::vector<std::size_t> ix(m);
  std::iota(ix.begin(), ix.end(), 0);
  if (n <= 0 || static_cast<std::size_t>(n) >= m) return ix;
  Rng rng(seed, 0x5ab5e7);
  for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
    std::size_t j = i + rng.uniform_int(m - i);
    std::swap(ix[i], ix[j]);
  }
  ix.resize(n);
  std::sort(ix.begin(), ix.end());
  return ix;
}

DotParams make_invisible_dot(const ThreatModel& tm,
                             const std::pair<double, double>& anchor) {
  DotParams dot;
  dot.color = tm.palette.empty() ? Color{0, 0, 0} : tm.palette.front();
  dot.center_i = anchor.first;
  dot.center_j = anchor.second;
  dot.radius = tm.shape.radius;
  dot.alpha_max = 0.0;
  dot.beta = tm.shape.beta;
  return dot;
}

// Cached alpha field of one candidate cell (shape is fixed across the
// attack, so the mask depends on the cell center only).
struct CellMask {
  DotBox box;
  std::vector<double> alpha;  // row-major within box
};

CellMask build_cell_mask(const DotParams& dot, int h, int w) {
  CellMask m;
  m.box = support_box(dot, h, w, dot.alpha_max);
  if (m.box.empty()) return m;
  m.alpha.resize(static_cast<std::size_t>(m.box.i1 - m.box.i0 + 1) *
                 (m.box.j1 - m.box.j0 + 1));
  std::size_t n = 0;
  for (int i = m.box.i0; i <= m.box.i1; ++i) {
    for (int j = m.box.j0; j <= m.box.j1; ++j) {
      m.alpha[n++] = dot_alpha(dot, i, j);
    }
  }
  return m;
}

// Same arithmetic as apply_dot_inplace, with the alpha values precomputed.
void apply_masked(Image& x, const CellMask& m, const Color& color) {
  if (m.box.empty()) return;
  std::size_t n = 0;
  for (int i = m.box.i0; i <= m.box.i1; ++i) {
    for (int j = m.box.j0; j <= m.box.j1; ++j) {
      double a = m.alpha[n++];
      std::size_t o = (static_cast<std::size_t>(i) * x.width + j) * 3;
      x.data[o] += a * (color[0] - x.data[o]);
      x.data[o + 1] += a * (color[1] - x.data[o + 1]);
      x.data[o + 2] += a * (color[2] - x.data[o + 2]);
    }
  }
}

StageSummary stage_summary(const StickerPattern& pattern,
                           const std::vector<Image>& images, int y_star,
                           int y_targ, const ClassifierBackend& classifier) {
  StageSummary s;
  s.loss = targeted_universal_loss(pattern, images, y_star, y_targ, classifier);
  std::vector<Image> perturbed(images.size());
#pragma omp parallel for schedule(static)
  for (std::size_t m = 0; m < images.size(); ++m) {
    perturbed[m] = apply_pattern(images[m], pattern);
  }
  std::vector<int> preds = predict_batch(classifier, perturbed);
  int correct = 0, target = 0, other = 0;
  for (int p : preds) {
    if (p == y_star) {
      ++correct;
    } else if (p == y_targ) {
      ++target;
    } else {
      ++other;
    }
  }
  double n = static_cast<double>(preds.size());
  s.fraction_correct = correct / n;
  s.fraction_target = target / n;
  s.fraction_other = other / n;
  return s;
}

}  // namespace

double targeted_universal_loss(const StickerPattern& pattern,
                               const std::vector<Image>& images, int y_star,
                               int y_targ,
                               const ClassifierBackend& classifier) {
  if (images.empty()) {
    throw std::invalid_argument("targeted_universal_loss: empty batch");
  }
  if (y_star < 0 || y_star >= classifier.num_classes() || y_targ < 0 ||
      y_targ >= classifier.num_classes()) {
    throw std::invalid_argument("targeted_universal_loss: class out of range");
  }
  std::vector<Image> perturbed(images.size());
#pragma omp parallel for schedule(static)
  for (std::size_t m = 0; m < images.size(); ++m) {
    perturbed[m] = apply_pattern(images[m], pattern);
  }
  std::vector<Logits> logits;
  try {
    logits = forward_batched(classifier, perturbed);
  } catch (const std::exception& e) {
    throw std::runtime_error(
        std::string("targeted_universal_loss: classifier failed on batch of ") +
        std::to_string(images.size()) + " images: " + e.what());
  }
  double loss = 0.0;
  for (std::size_t m = 0; m < logits.size(); ++m) {
    loss += per_image_loss(logits[m], y_star, y_targ);
  }
  return loss;
}

AttackResult greedy_coordinate_descent(const AttackConfig& config,
                                       const ClassifierBackend& classifier) {
  validate_config(config, classifier);
  const ThreatModel& tm = config.threat_model;
  const std::vector<Image>& all_images = *config.images;
  const int K = config.num_dots;
  const int y_star = config.victim_class;
  const int y_targ = config.target_class;
  const int h = all_images.front().height;
  const int w = all_images.front().width;

  AttackResult result;
  result.seed = config.options.seed;

  const auto cells = grid_points(tm.grid, h, w);
  const std::size_t n_cells = cells.size();
  const std::size_t n_colors = tm.palette.size();
  const std::size_t n_visible = n_cells * n_colors;

  if (K == 0) {
    result.loss_trace.push_back(
        {0,
         targeted_universal_loss(result.pattern, all_images, y_star, y_targ,
                                 classifier),
         "init"});
    result.post_greedy =
        stage_summary(result.pattern, all_images, y_star, y_targ, classifier);
    result.post_fine_tune = result.post_greedy;
    return result;
  }

  // Fixed, seeded subsample for every greedy sweep; the final sweep below
  // reruns on the full set.
  const auto sub_ix = subsample_indices(config.options.seed, all_images.size(),
                                        config.options.subsample);
  std::vector<Image> eval_images;
  eval_images.reserve(sub_ix.size());
  for (std::size_t ix : sub_ix) eval_images.push_back(all_images[ix]);
  const bool subsampled = eval_images.size() < all_images.size();

  // Per-cell alpha masks (the dot shape never changes during the search).
  DotParams probe = make_invisible_dot(tm, cells.front());
  probe.alpha_max = tm.shape.alpha_max;
  std::vector<CellMask> masks(n_cells);
  {
    std::size_t bytes = 0;
    for (std::size_t ci = 0; ci < n_cells; ++ci) {
      DotParams d = probe;
      d.center_i = cells[ci].first;
      d.center_j = cells[ci].second;
      masks[ci] = build_cell_mask(d, h, w);
      bytes += masks[ci].alpha.size() * sizeof(double);
    }
    // The cache is an optimization only; fall back to on-the-fly evaluation
    // when it would not fit (large frames x 45x45 grids).
    if (bytes > (std::size_t{256} << 20)) {
      for (CellMask& m : masks) {
        m.alpha.clear();
        m.alpha.shrink_to_fit();
      }
    }
  }

  result.pattern.dots.assign(K, make_invisible_dot(tm, cells.front()));
  result.assigned_cell.assign(K, -1);
  result.assigned_color.assign(K, -1);

  auto run_sweep = [&](const std::vector<Image>& set, int sweep_no,
                       const char* phase, double current_loss) {
    const std::size_t M = set.size();
    // Composite of dots 0..k-1, grown incrementally as dots are assigned.
    std::vector<Image> base = set;

    for (int k = 0; k < K; ++k) {
      std::vector<DotParams> tail(result.pattern.dots.begin() + k + 1,
                                  result.pattern.dots.end());
      std::erase_if(tail, [](const DotParams& d) { return d.alpha_max <= 0.0; });

      std::vector<double> cand_loss(n_visible + 1, 0.0);
      std::exception_ptr error;

#pragma omp parallel for schedule(dynamic)
      for (std::size_t c = 0; c <= n_visible; ++c) {
        try {
          std::vector<Image> batch(M);
          for (std::size_t m = 0; m < M; ++m) {
            Image img = base[m];
            if (c < n_visible) {
              const std::size_t cell = c / n_colors;
              const std::size_t color = c % n_colors;
              if (!masks[cell].alpha.empty() || masks[cell].box.empty()) {
                apply_masked(img, masks[cell], tm.palette[color]);
              } else {
                DotParams d = probe;
                d.center_i = cells[cell].first;
                d.center_j = cells[cell].second;
                d.color = tm.palette[color];
                apply_dot_inplace(img, d);
              }
            }
            for (const DotParams& d : tail) apply_dot_inplace(img, d);
            batch[m] = std::move(img);
          }
          auto logits = forward_batched(classifier, batch);
          double loss = 0.0;
          for (std::size_t m = 0; m < M; ++m) {
            loss += per_image_loss(logits[m], y_star, y_targ);
          }
          cand_loss[c] = loss;
        } catch (...) {
#pragma omp critical
          if (!error) error = std::current_exception();
        }
      }
      if (error) std::rethrow_exception(error);

      // Deterministic argmax: first strict improvement wins, so ties resolve
      // to the lowest cell index, then the lowest palette index; the
      // invisible candidate (last) loses all ties.
      std::size_t best = 0;
      for (std::size_t c = 1; c <= n_visible; ++c) {
        if (cand_loss[c] > cand_loss[best]) best = c;
      }

      if (best < n_visible) {
        const std::size_t cell = best / n_colors;
        const std::size_t color = best % n_colors;
        DotParams d = probe;
        d.center_i = cells[cell].first;
        d.center_j = cells[cell].second;
        d.color = tm.palette[color];
        result.pattern.dots[k] = d;
        result.assigned_cell[k] = static_cast<int>(cell);
        result.assigned_color[k] = static_cast<int>(color);
      } else {
        result.pattern.dots[k] = make_invisible_dot(tm, cells.front());
        result.assigned_cell[k] = -1;
        result.assigned_color[k] = -1;
      }
      current_loss = cand_loss[best];
      result.loss_trace.push_back({sweep_no, current_loss, phase});

      // Grow the composite with the dot just assigned.
      if (result.pattern.dots[k].alpha_max > 0.0) {
#pragma omp parallel for schedule(static)
        for (std::size_t m = 0; m < M; ++m) {
          apply_dot_inplace(base[m], result.pattern.dots[k]);
        }
      }
    }
    return current_loss;
  };

  double loss = targeted_universal_loss(result.pattern, eval_images, y_star,
                                        y_targ, classifier);
  result.loss_trace.push_back({0, loss, "init"});

  for (int sweep = 1; sweep <= config.options.max_sweeps; ++sweep) {
    double sweep_start = loss;
    loss = run_sweep(eval_images, sweep, "greedy", loss);
    double rel = (loss - sweep_start) /
                 std::max(1.0, std::fabs(sweep_start));
    if (rel < config.options.greedy_rel_tol) break;
  }

  if (subsampled) {
    double full_loss = targeted_universal_loss(result.pattern, all_images,
                                               y_star, y_targ, classifier);
    run_sweep(all_images, config.options.max_sweeps + 1, "full-sweep",
              full_loss);
  }

  result.post_greedy =
      stage_summary(result.pattern, all_images, y_star, y_targ, classifier);
  result.post_fine_tune = result.post_greedy;
  return result;
}

AttackResult fine_tune_positions(const AttackResult& input,
                                 const AttackConfig& config,
                                 const ClassifierBackend& classifier) {
  validate_config(config, classifier);
  const std::vector<Image>& all_images = *config.images;
  const int y_star = config.victim_class;
  const int y_targ = config.target_class;

  const bool analytic = classifier.supports_input_gradient();
  if (!analytic && !config.options.allow_finite_diff) {
    throw GradientUnsupportedError(
        "fine_tune_positions: backend exposes no input gradients and "
        "finite-difference mode is disabled; enable allow_finite_diff or use "
        "a differentiable backend");
  }

  AttackResult result = input;
  result.fine_tuned = true;

  std::vector<int> live;  // indices of visible dots
  for (std::size_t k = 0; k < result.pattern.dots.size(); ++k) {
    if (result.pattern.dots[k].alpha_max > 0.0) live.push_back(k);
  }
  if (live.empty()) {
    result.post_fine_tune = stage_summary(result.pattern, all_images, y_star,
                                          y_targ, classifier);
    return result;
  }

  const auto sub_ix = subsample_indices(config.options.seed, all_images.size(),
                                        config.options.subsample);
  std::vector<Image> work;
  work.reserve(sub_ix.size());
  for (std::size_t ix : sub_ix) work.push_back(all_images[ix]);

  const int h = all_images.front().height;
  const int w = all_images.front().width;

  auto loss_of = [&](const StickerPattern& p) {
    return targeted_universal_loss(p, work, y_star, y_targ, classifier);
  };

  // Gradient of the loss w.r.t. the 2*live.size() center coordinates.
  auto position_gradient = [&](const StickerPattern& p) {
    std::vector<double> g(2 * live.size(), 0.0);
    if (analytic) {
      std::vector<std::vector<double>> per_image(work.size());
      std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
      for (std::size_t m = 0; m < work.size(); ++m) {
        try {
          Image perturbed = apply_pattern(work[m], p);
          PixelField up = classifier.input_gradient(perturbed, y_star, y_targ);
          auto dgrads = pattern_gradient(work[m], p, up);
          std::vector<double> gm(2 * live.size());
          for (std::size_t q = 0; q < live.size(); ++q) {
            gm[2 * q] = dgrads[live[q]].d_center_i;
            gm[2 * q + 1] = dgrads[live[q]].d_center_j;
          }
          per_image[m] = std::move(gm);
        } catch (...) {
#pragma omp critical
          if (!error) error = std::current_exception();
        }
      }
      if (error) std::rethrow_exception(error);
      for (const auto& gm : per_image) {
        for (std::size_t q = 0; q < g.size(); ++q) g[q] += gm[q];
      }
    } else {
      const double step = 1e-4;
      for (std::size_t q = 0; q < live.size(); ++q) {
        for (int axis = 0; axis < 2; ++axis) {
          StickerPattern plus = p, minus = p;
          DotParams& dp = plus.dots[live[q]];
          DotParams& dm = minus.dots[live[q]];
          (axis == 0 ? dp.center_i : dp.center_j) += step;
          (axis == 0 ? dm.center_i : dm.center_j) -= step;
          g[2 * q + axis] = (loss_of(plus) - loss_of(minus)) / (2.0 * step);
        }
      }
    }
    return g;
  };

  auto project = [&](StickerPattern& p) {
    for (int k : live) {
      DotParams& d = p.dots[k];
      d.center_i = std::clamp(d.center_i, -d.radius, h - 1 + d.radius);
      d.center_j = std::clamp(d.center_j, -d.radius, w - 1 + d.radius);
    }
  };

  double f = loss_of(result.pattern);
  const int trace_sweep = result.loss_trace.empty()
                              ? 0
                              : result.loss_trace.back().sweep + 1;

  for (int step = 0; step < config.options.fine_tune_steps; ++step) {
    std::vector<double> g = position_gradient(result.pattern);
    double ginf = 0.0;
    for (double v : g) ginf = std::max(ginf, std::fabs(v));
    if (ginf < 1e-14) break;

    // Direction scaled so a unit step moves the fastest dot by one pixel.
    double slope = 0.0;
    for (double v : g) slope += v * v;
    slope /= ginf;

    StickerPattern x0 = result.pattern;
    double t = config.options.fine_tune_step0;
    bool accepted = false;
    for (int halve = 0; halve < 30; ++halve) {
      StickerPattern trial = x0;
      for (std::size_t q = 0; q < live.size(); ++q) {
        trial.dots[live[q]].center_i += t * g[2 * q] / ginf;
        trial.dots[live[q]].center_j += t * g[2 * q + 1] / ginf;
      }
      project(trial);
      double fn = loss_of(trial);
      if (fn >= f + 1e-4 * t * slope) {
        double gain = fn - f;
        result.pattern = std::move(trial);
        f = fn;
        accepted = true;
        result.loss_trace.push_back({trace_sweep, f, "fine-tune"});
        if (gain < config.options.fine_tune_rel_tol * std::max(1.0, std::fabs(f))) {
          step = config.options.fine_tune_steps;  // converged
        }
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;
  }

  result.post_fine_tune =
      stage_summary(result.pattern, all_images, y_star, y_targ, classifier);
  return result;
}

PgdResult pgd_unconstrained(const std::vector<Image>& images, int y_star,
                            int y_targ, int num_dots, const PgdBounds& bounds,
                            const ClassifierBackend& classifier,
                            const PgdOptions& opts) {
  if (images.empty()) throw std::invalid_argument("pgd: empty dataset");
  if (num_dots < 1) throw std::invalid_argument("pgd: need at least one dot");
  const bool analytic = classifier.supports_input_gradient();
  if (!analytic && !opts.allow_finite_diff) {
    throw GradientUnsupportedError(
        "pgd_unconstrained: backend exposes no input gradients and "
        "finite-difference mode is disabled");
  }

  auto project = [&](StickerPattern& p) {
    for (DotParams& d : p.dots) {
      for (double& c : d.color) c = clamp01(c);
      d.center_i = std::clamp(d.center_i, bounds.center_lo, bounds.center_hi);
      d.center_j = std::clamp(d.center_j, bounds.center_lo, bounds.center_hi);
      d.radius = std::clamp(d.radius, bounds.radius_lo, bounds.radius_hi);
      d.alpha_max = std::clamp(d.alpha_max, bounds.alpha_lo, bounds.alpha_hi);
      d.beta = std::clamp(d.beta, bounds.beta_lo, bounds.beta_hi);
    }
  };

  PgdResult result;
  if (opts.warm_start) {
    result.pattern = *opts.warm_start;
    if (static_cast<int>(result.pattern.dots.size()) > num_dots) {
      result.pattern.dots.resize(num_dots);
    }
    while (static_cast<int>(result.pattern.dots.size()) < num_dots) {
      result.pattern.dots.push_back(result.pattern.dots.empty()
                                        ? DotParams{}
                                        : result.pattern.dots.back());
    }
  } else {
    Rng rng(opts.seed, 0x96d);
    for (int k = 0; k < num_dots; ++k) {
      DotParams d;
      d.color = {rng.uniform(), rng.uniform(), rng.uniform()};
      d.center_i = rng.uniform(bounds.center_lo, bounds.center_hi);
      d.center_j = rng.uniform(bounds.center_lo, bounds.center_hi);
      d.radius = rng.uniform(bounds.radius_lo, bounds.radius_hi);
      d.alpha_max = rng.uniform(bounds.alpha_lo, bounds.alpha_hi);
      d.beta = 1.0;
      result.pattern.dots.push_back(d);
    }
  }
  project(result.pattern);

  auto loss_of = [&](const StickerPattern& p) {
    return targeted_universal_loss(p, images, y_star, y_targ, classifier);
  };

  // 8 scalars per dot: color (3), center (2), radius, alpha_max, beta.
  const int P = 8 * num_dots;
  auto full_gradient = [&](const StickerPattern& p) {
    std::vector<double> g(P, 0.0);
    if (analytic) {
      std::vector<std::vector<DotGradient>> per_image(images.size());
      std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
      for (std::size_t m = 0; m < images.size(); ++m) {
        try {
          Image perturbed = apply_pattern(images[m], p);
          PixelField up = classifier.input_gradient(perturbed, y_star, y_targ);
          per_image[m] = pattern_gradient(images[m], p, up);
        } catch (...) {
#pragma omp critical
          if (!error) error = std::current_exception();
        }
      }
      if (error) std::rethrow_exception(error);
      for (const auto& dg : per_image) {
        for (int k = 0; k < num_dots; ++k) {
          double* gk = g.data() + 8 * k;
          gk[0] += dg[k].d_color[0];
          gk[1] += dg[k].d_color[1];
          gk[2] += dg[k].d_color[2];
          gk[3] += dg[k].d_center_i;
          gk[4] += dg[k].d_center_j;
          gk[5] += dg[k].d_radius;
          gk[6] += dg[k].d_alpha_max;
          gk[7] += dg[k].d_beta;
        }
      }
    } else {
      const double step = 1e-4;
      auto param = [](StickerPattern& pat, int k, int q) -> double& {
        DotParams& d = pat.dots[k];
        switch (q) {
          case 0: return d.color[0];
          case 1: return d.color[1];
          case 2: return d.color[2];
          case 3: return d.center_i;
          case 4: return d.center_j;
          case 5: return d.radius;
          case 6: return d.alpha_max;
          default: return d.beta;
        }
      };
      for (int k = 0; k < num_dots; ++k) {
        for (int q = 0; q < 8; ++q) {
          StickerPattern plus = p, minus = p;
          param(plus, k, q) += step;
          param(minus, k, q) -= step;
          g[8 * k + q] = (loss_of(plus) - loss_of(minus)) / (2.0 * step);
        }
      }
    }
    return g;
  };

  // Natural step units per parameter kind at t = 1.
  auto unit_of = [](int q) {
    return (q == 3 || q == 4 || q == 5) ? 1.0 : 0.05;
  };

  double f = loss_of(result.pattern);
  result.loss_trace.push_back(f);

  for (int step = 0; step < opts.steps; ++step) {
    std::vector<double> g = full_gradient(result.pattern);

    // Per-kind inf-norm scaling: at t = 1 the largest move of each kind is
    // its natural unit.
    std::vector<double> dir(P, 0.0);
    double kind_max[8] = {0};
    for (int k = 0; k < num_dots; ++k) {
      for (int q = 0; q < 8; ++q) {
        kind_max[q] = std::max(kind_max[q], std::fabs(g[8 * k + q]));
      }
    }
    double color_alpha_max =
        std::max({kind_max[0], kind_max[1], kind_max[2], kind_max[6],
                  kind_max[7]});
    double geom_max = std::max({kind_max[3], kind_max[4], kind_max[5]});
    double slope = 0.0;
    for (int k = 0; k < num_dots; ++k) {
      for (int q = 0; q < 8; ++q) {
        double denom = (q == 3 || q == 4 || q == 5) ? geom_max : color_alpha_max;
        if (denom < 1e-14) continue;
        dir[8 * k + q] = g[8 * k + q] / denom * unit_of(q);
        slope += g[8 * k + q] * dir[8 * k + q];
      }
    }
    if (slope < 1e-14) break;

    StickerPattern x0 = result.pattern;
    double t = opts.step0;
    bool accepted = false;
    for (int halve = 0; halve < 30; ++halve) {
      StickerPattern trial = x0;
      for (int k = 0; k < num_dots; ++k) {
        DotParams& d = trial.dots[k];
        const double* dk = dir.data() + 8 * k;
        d.color[0] += t * dk[0];
        d.color[1] += t * dk[1];
        d.color[2] += t * dk[2];
        d.center_i += t * dk[3];
        d.center_j += t * dk[4];
        d.radius += t * dk[5];
        d.alpha_max += t * dk[6];
        d.beta += t * dk[7];
      }
      project(trial);
      double fn = loss_of(trial);
      if (fn >= f + 1e-4 * t * slope) {
        double gain = fn - f;
        result.pattern = std::move(trial);
        f = fn;
        accepted = true;
        result.loss_trace.push_back(f);
        if (opts.on_step) opts.on_step(result.pattern);
        if (gain < opts.rel_tol * std::max(1.0, std::fabs(f))) {
          step = opts.steps;  // converged
        }
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;
  }
  return result;
}

}  // namespace camsticker
