#include "camsticker/eval.hpp"

#include <stdexcept>

#include "camsticker/rng.hpp"

namespace camsticker {

FoolingReport evaluate_fooling(const StickerPattern& pattern,
                               const std::vector<Image>& images, int y_star,
                               int y_targ,
                               const ClassifierBackend& classifier) {
  if (images.empty()) {
    throw std::invalid_argument("evaluate_fooling: empty image set");
  }
  FoolingReport report;
  report.n_images = static_cast<int>(images.size());
  report.predictions.assign(images.size(), -1);

  // Per-item forward so one failing item cannot take down the whole report;
  // assembly below is an indexed reduction.
#pragma omp parallel for schedule(dynamic)
  for (std::size_t m = 0; m < images.size(); ++m) {
    try {
      Image perturbed = apply_pattern(images[m], pattern);
      report.predictions[m] = predict(classifier, perturbed);
    } catch (...) {
      report.predictions[m] = -1;
    }
  }

  int correct = 0, target = 0, other = 0, failed = 0;
  for (int p : report.predictions) {
    if (p < 0) {
      ++failed;
    } else if (p == y_star) {
      ++correct;
    } else if (p == y_targ) {
      ++target;
    } else {
      ++other;
    }
  }
  report.n_failed = failed;
  const int ok = report.n_images - failed;
  if (ok > 0) {
    report.fraction_correct = static_cast<double>(correct) / ok;
    report.fraction_target = static_cast<double>(target) / ok;
    report.fraction_other = static_cast<double>(other) / ok;
  }
  return report;
}

FoolingReport evaluate_fooling(const StickerPattern& pattern,
                               const LabeledDataset& dataset,
                               const std::string& split, int y_star,
                               int y_targ,
                               const ClassifierBackend& classifier) {
  return evaluate_fooling(pattern, dataset.images_of(y_star, split), y_star,
                          y_targ, classifier);
}

std::uint64_t sweep_row_seed(std::uint64_t base_seed, int num_dots) {
  return Rng::mix(base_seed, 0xd07c0u + static_cast<std::uint64_t>(num_dots));
}

std::vector<SweepRow> dot_count_sweep(const AttackConfig& base_config,
                                      const LabeledDataset& dataset,
                                      const std::vector<int>& counts,
                                      const ClassifierBackend& classifier) {
  if (counts.empty()) {
    throw std::invalid_argument("dot_count_sweep: empty count list");
  }

  const std::vector<Image> attack_images =
      dataset.images_of(base_config.victim_class, kSplitTrainAttack);
  const std::vector<Image> eval_images =
      dataset.images_of(base_config.victim_class, kSplitTest);
  if (attack_images.empty() || eval_images.empty()) {
    throw std::invalid_argument(
        "dot_count_sweep: dataset is missing victim-class images in one of "
        "the splits");
  }

  std::vector<SweepRow> rows;
  for (int k : counts) {
    SweepRow row;
    row.num_dots = k;
    try {
      if (k < 0 || k > base_config.threat_model.max_dots) {
        throw std::invalid_argument(
            "dot count outside the threat model limit");
      }
      AttackConfig cfg = base_config;
      cfg.num_dots = k;
      cfg.images = &attack_images;
      cfg.options.seed = sweep_row_seed(base_config.options.seed, k);
      AttackResult res = greedy_coordinate_descent(cfg, classifier);
      res = fine_tune_positions(res, cfg, classifier);
      FoolingReport rep = evaluate_fooling(res.pattern, eval_images,
                                           cfg.victim_class, cfg.target_class,
                                           classifier);
      row.targeted_rate = rep.fraction_target;
      row.correct_rate = rep.fraction_correct;
      row.other_rate = rep.fraction_other;
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace camsticker
