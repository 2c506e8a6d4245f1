#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "camsticker/attack.hpp"
#include "camsticker/classifier.hpp"
#include "camsticker/dataset.hpp"
#include "camsticker/perturb.hpp"

namespace camsticker {

/// Where the perturbed predictions land: back on the victim class, on the
/// attack target, or somewhere else. Fractions are over non-failed items and
/// sum to one.
struct FoolingReport {
  int n_images = 0;
  int n_failed = 0;
  double fraction_correct = 0.0;
  double fraction_target = 0.0;
  double fraction_other = 0.0;
  std::vector<int> predictions;  // per item; -1 marks a failed classification
};

FoolingReport evaluate_fooling(const StickerPattern& pattern,
                               const std::vector<Image>& images, int y_star,
                               int y_targ, const ClassifierBackend& classifier);

/// Dataset overload: evaluates on the items of class y_star in the given
/// split ("" = both splits).
FoolingReport evaluate_fooling(const StickerPattern& pattern,
                               const LabeledDataset& dataset,
                               const std::string& split, int y_star,
                               int y_targ, const ClassifierBackend& classifier);

struct SweepRow {
  int num_dots = 0;
  double targeted_rate = 0.0;
  double correct_rate = 0.0;
  double other_rate = 0.0;
  bool failed = false;
  std::string error;
};

/// Per-row seed derivation, exposed so a sweep row can be reproduced as an
/// independent single run.
std::uint64_t sweep_row_seed(std::uint64_t base_seed, int num_dots);

/// Runs the full greedy + fine-tune pipeline once per dot count on the
/// train-attack split and evaluates on the held-out test split. A failing
/// row is marked and the sweep continues.
std::vector<SweepRow> dot_count_sweep(const AttackConfig& base_config,
                                      const LabeledDataset& dataset,
                                      const std::vector<int>& counts,
                                      const ClassifierBackend& classifier);

}  // namespace camsticker
