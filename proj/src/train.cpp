#include "camsticker/train.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "camsticker/rng.hpp"

namespace camsticker {

namespace {

// One Adam slot per weight vector.
struct AdamState {
  std::vector<double> m, v;
  void init(std::size_t n) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
  }
};

void adam_update(std::vector<double>& w, AdamState& st,
                 const std::vector<double>& g, double lr, double bc1,
                 double bc2) {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  for (std::size_t i = 0; i < w.size(); ++i) {
    st.m[i] = kBeta1 * st.m[i] + (1.0 - kBeta1) * g[i];
    st.v[i] = kBeta2 * st.v[i] + (1.0 - kBeta2) * g[i] * g[i];
    double mhat = st.m[i] / bc1;
    double vhat = st.v[i] / bc2;
    w[i] -= lr * mhat / (std::sqrt(vhat) + kEps);
  }
}

}  // namespace

TrainStats train_conv_net(ConvNetBackend& net, const std::vector<Image>& images,
                          const std::vector<int>& labels,
                          const TrainOptions& opts) {
  if (images.size() != labels.size() || images.empty()) {
    throw std::invalid_argument("train_conv_net: bad training set");
  }
  const std::size_t n = images.size();
  Rng rng(opts.seed, 0x77a11);

  AdamState s_w1, s_b1, s_w2, s_b2, s_wf, s_bf;
  s_w1.init(net.w1.size());
  s_b1.init(net.b1.size());
  s_w2.init(net.w2.size());
  s_b2.init(net.b2.size());
  s_wf.init(net.wf.size());
  s_bf.init(net.bf.size());

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  long step = 0;
  double epoch_loss = 0.0;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    for (std::size_t i = n - 1; i > 0; --i) {
      std::size_t j = rng.uniform_int(i + 1);
      std::swap(order[i], order[j]);
    }

    epoch_loss = 0.0;
    for (std::size_t off = 0; off < n; off += opts.batch_size) {
      const std::size_t bend = std::min(n, off + opts.batch_size);
      const std::size_t bs = bend - off;

      std::vector<ConvNetBackend::Gradients> per_item(bs);
      std::vector<double> item_loss(bs, 0.0);
#pragma omp parallel for schedule(dynamic)
      for (std::size_t b = 0; b < bs; ++b) {
        const std::size_t ix = order[off + b];
        item_loss[b] = net.xent_backward(images[ix], labels[ix], &per_item[b]);
      }

      // Fixed-order mean over the batch so results do not depend on thread
      // scheduling.
      ConvNetBackend::Gradients sum = per_item[0];
      for (std::size_t b = 1; b < bs; ++b) {
        auto add = [](std::vector<double>& a, const std::vector<double>& g) {
          for (std::size_t i = 0; i < a.size(); ++i) a[i] += g[i];
        };
        add(sum.w1, per_item[b].w1);
        add(sum.b1, per_item[b].b1);
        add(sum.w2, per_item[b].w2);
        add(sum.b2, per_item[b].b2);
        add(sum.wf, per_item[b].wf);
        add(sum.bf, per_item[b].bf);
      }
      const double inv = 1.0 / static_cast<double>(bs);
      auto scale = [&](std::vector<double>& g) {
        for (double& v : g) v *= inv;
      };
      scale(sum.w1);
      scale(sum.b1);
      scale(sum.w2);
      scale(sum.b2);
      scale(sum.wf);
      scale(sum.bf);
      for (double l : item_loss) epoch_loss += l;

      ++step;
      const double bc1 = 1.0 - std::pow(0.9, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(0.999, static_cast<double>(step));
      adam_update(net.w1, s_w1, sum.w1, opts.learning_rate, bc1, bc2);
      adam_update(net.b1, s_b1, sum.b1, opts.learning_rate, bc1, bc2);
      adam_update(net.w2, s_w2, sum.w2, opts.learning_rate, bc1, bc2);
      adam_update(net.b2, s_b2, sum.b2, opts.learning_rate, bc1, bc2);
      adam_update(net.wf, s_wf, sum.wf, opts.learning_rate, bc1, bc2);
      adam_update(net.bf, s_bf, sum.bf, opts.learning_rate, bc1, bc2);
    }
  }

  TrainStats stats;
  stats.final_loss = epoch_loss / static_cast<double>(n);
  stats.train_accuracy = accuracy(net, images, labels);
  return stats;
}

double accuracy(const ClassifierBackend& backend,
                const std::vector<Image>& images,
                const std::vector<int>& labels) {
  if (images.empty()) return 0.0;
  std::vector<int> preds = predict_batch(backend, images);
  int hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(images.size());
}

}  // namespace camsticker
