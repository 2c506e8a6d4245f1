#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "camsticker/calib.hpp"
#include "camsticker/classifier.hpp"
#include "camsticker/perturb.hpp"

namespace camsticker {

/// Knobs of the attack search. Defaults follow the shipped convergence
/// policy: a greedy sweep stops when the relative loss improvement drops
/// below 1e-4, capped at 5 sweeps; fine-tuning runs at most 200 accepted
/// steps.
struct AttackOptions {
  int max_sweeps = 5;
  double greedy_rel_tol = 1e-4;
  int fine_tune_steps = 200;
  double fine_tune_rel_tol = 1e-4;
  double fine_tune_step0 = 1.0;  // initial line-search step, pixels
  /// Greedy candidate evaluation may run on a seeded fixed subsample of this
  /// many images (0 = all); the final sweep always uses the full set.
  int subsample = 0;
  /// Position fine-tuning falls back to central finite differences over the
  /// 2K center coordinates when the backend has no input gradients.
  bool allow_finite_diff = true;
  std::uint64_t seed = 0;
};

struct AttackConfig {
  int victim_class = 0;
  int target_class = 0;
  int num_dots = 1;
  ThreatModel threat_model;
  /// Dataset handle: images of the victim class the attack is optimized on.
  const std::vector<Image>* images = nullptr;
  AttackOptions options;
};

struct LossTracePoint {
  int sweep = 0;
  double loss = 0.0;
  std::string phase;  // "init" | "greedy" | "full-sweep" | "fine-tune"
};

struct StageSummary {
  double loss = 0.0;  // Eq-style targeted universal loss on the full set
  double fraction_correct = 0.0;
  double fraction_target = 0.0;
  double fraction_other = 0.0;
};

struct AttackResult {
  StickerPattern pattern;
  /// Grid cell / palette index per dot; -1 when the dot stayed invisible.
  std::vector<int> assigned_cell;
  std::vector<int> assigned_color;
  std::vector<LossTracePoint> loss_trace;
  StageSummary post_greedy;
  StageSummary post_fine_tune;
  bool fine_tuned = false;
  std::uint64_t seed = 0;
};

/// Sum over the batch of xent(f(pi(x)), y_star) - xent(f(pi(x)), y_targ).
/// Classifier failures propagate with the index of the offending image.
double targeted_universal_loss(const StickerPattern& pattern,
                               const std::vector<Image>& images, int y_star,
                               int y_targ, const ClassifierBackend& classifier);

/// Greedy block coordinate descent over (grid cell x palette color) per dot.
/// Dots start invisible; each dot in turn is assigned the candidate with the
/// highest loss, all other dots frozen; sweeps repeat until the improvement
/// falls below tolerance or max_sweeps is hit. Ties break toward the lowest
/// row-major grid index, then the lowest palette index; the explicit
/// "stay invisible" candidate is ranked after all visible ones.
AttackResult greedy_coordinate_descent(const AttackConfig& config,
                                       const ClassifierBackend& classifier);

/// Gradient ascent on the dot center coordinates only (colors are discrete
/// and the shape is fixed by the threat model). Uses classifier input
/// gradients chained through the perturbation gradient, or central finite
/// differences over the 2K coordinates when unavailable and allowed.
AttackResult fine_tune_positions(const AttackResult& result,
                                 const AttackConfig& config,
                                 const ClassifierBackend& classifier);

/// Box constraints of the unconstrained-threat-model baseline.
struct PgdBounds {
  double center_lo = 0.0;
  double center_hi = 224.0;
  double radius_lo = 1.0;
  double radius_hi = 60.0;
  double alpha_lo = 0.0;
  double alpha_hi = 1.0;
  double beta_lo = 0.05;
  double beta_hi = 10.0;
};

struct PgdOptions {
  int steps = 100;
  double step0 = 1.0;
  double rel_tol = 1e-5;
  std::uint64_t seed = 0;
  /// Optional starting pattern (projected onto the bounds); random within
  /// the bounds when absent.
  const StickerPattern* warm_start = nullptr;
  bool allow_finite_diff = true;
  /// Invoked after every accepted step with the current (projected) iterate.
  std::function<void(const StickerPattern&)> on_step;
};

struct PgdResult {
  StickerPattern pattern;
  std::vector<double> loss_trace;
};

/// Projected gradient ascent over every parameter of K dots jointly, each
/// parameter projected onto its box after every step. The "unrealizable"
/// upper baseline: nothing restricts it to the fitted threat model.
PgdResult pgd_unconstrained(const std::vector<Image>& images, int y_star,
                            int y_targ, int num_dots, const PgdBounds& bounds,
                            const ClassifierBackend& classifier,
                            const PgdOptions& opts);

}  // namespace camsticker
