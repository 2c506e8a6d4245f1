#pragma once

#include <cstdint>
#include <vector>

#include "camsticker/classifier.hpp"

namespace camsticker {

struct TrainOptions {
  int epochs = 20;
  double learning_rate = 0.05;
  double momentum = 0.9;
  int batch_size = 16;
  std::uint64_t seed = 0;
};

struct TrainStats {
  double final_loss = 0.0;
  double train_accuracy = 0.0;
};

/// Minibatch SGD with momentum on softmax cross-entropy. Deterministic for a
/// fixed seed (seeded shuffles, fixed-order gradient reduction).
TrainStats train_conv_net(ConvNetBackend& net, const std::vector<Image>& images,
                          const std::vector<int>& labels,
                          const TrainOptions& opts);

double accuracy(const ClassifierBackend& backend,
                const std::vector<Image>& images,
                const std::vector<int>& labels);

}  // namespace camsticker
