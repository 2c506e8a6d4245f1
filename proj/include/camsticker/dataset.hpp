#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "camsticker/image.hpp"

namespace camsticker {

inline constexpr const char* kSplitTrainAttack = "train-attack";
inline constexpr const char* kSplitTest = "test";

struct DatasetItem {
  std::string path;  // file path, or a synthetic pseudo-path
  int label = 0;
  std::string split;  // kSplitTrainAttack or kSplitTest
  Image image;
};

struct LabeledDataset {
  std::vector<DatasetItem> items;
  int num_classes = 0;

  /// Images of one class; empty split string selects both splits.
  std::vector<Image> images_of(int label, const std::string& split = "") const;
  std::size_t count_of(int label, const std::string& split = "") const;
};

/// Loads a manifest (JSON: {"items": [{"path", "class", "split"}, ...]}),
/// resolving relative paths against the manifest directory and loading every
/// image up front. Unresolvable paths are rejected by name.
LabeledDataset load_dataset_manifest(const std::string& manifest_path);

/// Deterministic 64x64 renders of three classes (disk / square / triangle)
/// with randomized position, scale, hue and background noise. The first
/// round(train_fraction * n) items of each class are tagged train-attack,
/// the rest test.
LabeledDataset synth_shapes_dataset(std::uint64_t seed, int n_per_class,
                                    double train_fraction = 0.5);

/// Writes the dataset as PNG files plus a manifest under dir; returns the
/// manifest path.
std::string materialize_dataset(const LabeledDataset& dataset,
                                const std::string& dir);

}  // namespace camsticker
