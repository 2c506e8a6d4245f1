#include "camsticker/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>

#include <json.hpp>

#include "camsticker/rng.hpp"

namespace camsticker {

Logits softmax(const Logits& z) {
  double m = *std::max_element(z.begin(), z.end());
  Logits p(z.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    p[k] = std::exp(z[k] - m);
    sum += p[k];
  }
  for (double& v : p) v /= sum;
  return p;
}

double softmax_cross_entropy(const Logits& z, int label) {
  double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - m);
  return std::log(sum) - (z[label] - m);
}

int argmax(const Logits& z) {
  return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
}

int predict(const ClassifierBackend& backend, const Image& x) {
  return argmax(backend.forward({x})[0]);
}

std::vector<Logits> forward_batched(const ClassifierBackend& backend,
                                    const std::vector<Image>& images) {
  std::vector<Logits> out;
  out.reserve(images.size());
  const std::size_t chunk = std::max(1, backend.max_batch());
  for (std::size_t off = 0; off < images.size(); off += chunk) {
    std::vector<Image> batch(
        images.begin() + off,
        images.begin() + std::min(images.size(), off + chunk));
    auto logits = backend.forward(batch);
    out.insert(out.end(), logits.begin(), logits.end());
  }
  return out;
}

std::vector<int> predict_batch(const ClassifierBackend& backend,
                               const std::vector<Image>& images) {
  auto logits = forward_batched(backend, images);
  std::vector<int> preds(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) preds[k] = argmax(logits[k]);
  return preds;
}

namespace {

class SerializingBackend : public ClassifierBackend {
 public:
  explicit SerializingBackend(std::shared_ptr<ClassifierBackend> inner)
      : inner_(std::move(inner)) {}

  int num_classes() const override { return inner_->num_classes(); }
  std::vector<std::string> labels() const override { return inner_->labels(); }
  int max_batch() const override { return inner_->max_batch(); }
  bool supports_input_gradient() const override {
    return inner_->supports_input_gradient();
  }
  bool concurrent_safe() const override { return true; }

  std::vector<Logits> forward(const std::vector<Image>& images) const override {
    std::lock_guard<std::mutex> lock(mu_);
    return inner_->forward(images);
  }
  PixelField input_gradient(const Image& x, int y_star,
                            int y_targ) const override {
    std::lock_guard<std::mutex> lock(mu_);
    return inner_->input_gradient(x, y_star, y_targ);
  }

 private:
  std::shared_ptr<ClassifierBackend> inner_;
  mutable std::mutex mu_;
};

}  // namespace

std::shared_ptr<ClassifierBackend> make_serializing(
    std::shared_ptr<ClassifierBackend> inner) {
  return std::make_shared<SerializingBackend>(std::move(inner));
}

// ---------------------------------------------------------------------------
// Linear backend

LinearBackend::LinearBackend(int height, int width, int classes)
    : height_(height),
      width_(width),
      classes_(classes),
      w_(static_cast<std::size_t>(classes) * height * width * 3, 0.0),
      b_(classes, 0.0) {}

LinearBackend::LinearBackend(int height, int width, int classes,
                             std::uint64_t seed)
    : LinearBackend(height, width, classes) {
  Rng rng(seed);
  double scale = 0.1 / std::sqrt(static_cast<double>(height) * width * 3);
  for (double& v : w_) v = rng.normal(0.0, scale);
  for (double& v : b_) v = rng.normal(0.0, 0.01);
}

Logits LinearBackend::forward_one(const Image& x) const {
  const std::size_t n = x.data.size();
  Logits z(classes_);
  for (int k = 0; k < classes_; ++k) {
    const double* row = w_.data() + static_cast<std::size_t>(k) * n;
    double s = b_[k];
    for (std::size_t p = 0; p < n; ++p) s += row[p] * x.data[p];
    z[k] = s;
  }
  return z;
}

std::vector<Logits> LinearBackend::forward(
    const std::vector<Image>& images) const {
  std::vector<Logits> out(images.size());
#pragma omp parallel for schedule(static)
  for (std::size_t m = 0; m < images.size(); ++m) {
    out[m] = forward_one(images[m]);
  }
  return out;
}

PixelField LinearBackend::input_gradient(const Image& x, int y_star,
                                         int y_targ) const {
  // d(xent(z,y*) - xent(z,y_targ))/dz = onehot(y_targ) - onehot(y*), so the
  // softmax terms cancel and the pixel gradient is a difference of weight
  // rows.
  (void)x;
  PixelField g(height_, width_, 0.0);
  const std::size_t n = g.data.size();
  const double* wt = w_.data() + static_cast<std::size_t>(y_targ) * n;
  const double* ws = w_.data() + static_cast<std::size_t>(y_star) * n;
  for (std::size_t p = 0; p < n; ++p) g.data[p] = wt[p] - ws[p];
  return g;
}

// ---------------------------------------------------------------------------
// Two-layer conv backend

namespace {
inline int conv_out(int in, int stride) { return (in - 1) / stride + 1; }
}  // namespace

ConvNetBackend::ConvNetBackend(int height, int width, int classes, int c1,
                               int c2, std::uint64_t seed)
    : height_(height), width_(width), classes_(classes), c1_(c1), c2_(c2) {
  h1_ = conv_out(height, 2);
  w1sz_ = conv_out(width, 2);
  hp_ = h1_ / 2;
  wp_ = w1sz_ / 2;
  h2_ = hp_;
  w2sz_ = wp_;
  hq_ = h2_ / 2;
  wq_ = w2sz_ / 2;

  Rng rng(seed);
  auto init = [&rng](std::vector<double>& v, std::size_t n, double fan_in) {
    v.assign(n, 0.0);
    double scale = std::sqrt(2.0 / fan_in);
    for (double& e : v) e = rng.normal(0.0, scale);
  };
  const std::size_t flat = static_cast<std::size_t>(c2_) * hq_ * wq_;
  init(w1, static_cast<std::size_t>(c1_) * 3 * 9, 27.0);
  b1.assign(c1_, 0.0);
  init(w2, static_cast<std::size_t>(c2_) * c1_ * 9, 9.0 * c1_);
  b2.assign(c2_, 0.0);
  init(wf, static_cast<std::size_t>(classes_) * flat, static_cast<double>(flat));
  bf.assign(classes_, 0.0);
}

struct ConvNetBackend::Tape {
  std::vector<double> in;     // [3][H][W]
  std::vector<double> a1;     // [c1][h1][w1], pre-relu
  std::vector<double> ap;     // [c1][hp][wp], post relu+pool
  std::vector<int> pool_ix;   // argmax flat index into a1 per pooled cell
  std::vector<double> a2;     // [c2][h2][w2], pre-relu
  std::vector<double> ap2;    // [c2][hq][wq], post relu+pool
  std::vector<int> pool2_ix;  // argmax flat index into a2 per pooled cell
  Logits logits;
};

void ConvNetBackend::forward_tape(const Image& x, Tape& t) const {
  const int H = height_, W = width_;
  t.in.resize(static_cast<std::size_t>(3) * H * W);
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < H; ++i) {
      for (int j = 0; j < W; ++j) {
        t.in[(static_cast<std::size_t>(c) * H + i) * W + j] = x.at(i, j, c);
      }
    }
  }

  // conv1: 3 -> c1, k3 s2 p1
  t.a1.assign(static_cast<std::size_t>(c1_) * h1_ * w1sz_, 0.0);
  for (int oc = 0; oc < c1_; ++oc) {
    for (int oi = 0; oi < h1_; ++oi) {
      for (int oj = 0; oj < w1sz_; ++oj) {
        double s = b1[oc];
        for (int ic = 0; ic < 3; ++ic) {
          for (int u = 0; u < 3; ++u) {
            int ii = oi * 2 + u - 1;
            if (ii < 0 || ii >= H) continue;
            for (int v = 0; v < 3; ++v) {
              int jj = oj * 2 + v - 1;
              if (jj < 0 || jj >= W) continue;
              s += t.in[(static_cast<std::size_t>(ic) * H + ii) * W + jj] *
                   w1[((static_cast<std::size_t>(oc) * 3 + ic) * 3 + u) * 3 + v];
            }
          }
        }
        t.a1[(static_cast<std::size_t>(oc) * h1_ + oi) * w1sz_ + oj] = s;
      }
    }
  }

  // relu + maxpool 2x2 s2
  t.ap.assign(static_cast<std::size_t>(c1_) * hp_ * wp_, 0.0);
  t.pool_ix.assign(t.ap.size(), 0);
  for (int c = 0; c < c1_; ++c) {
    for (int pi = 0; pi < hp_; ++pi) {
      for (int pj = 0; pj < wp_; ++pj) {
        double best = -1e300;
        int best_ix = 0;
        for (int u = 0; u < 2; ++u) {
          for (int v = 0; v < 2; ++v) {
            int ix = (static_cast<int>(c) * h1_ + pi * 2 + u) * w1sz_ +
                     (pj * 2 + v);
            if (t.a1[ix] > best) {
              best = t.a1[ix];
              best_ix = ix;
            }
          }
        }
        std::size_t po = (static_cast<std::size_t>(c) * hp_ + pi) * wp_ + pj;
        t.ap[po] = best > 0.0 ? best : 0.0;
        t.pool_ix[po] = best_ix;
      }
    }
  }

  // conv2: c1 -> c2, k3 s1 p1
  t.a2.assign(static_cast<std::size_t>(c2_) * h2_ * w2sz_, 0.0);
  for (int oc = 0; oc < c2_; ++oc) {
    for (int oi = 0; oi < h2_; ++oi) {
      for (int oj = 0; oj < w2sz_; ++oj) {
        double s = b2[oc];
        for (int ic = 0; ic < c1_; ++ic) {
          for (int u = 0; u < 3; ++u) {
            int ii = oi + u - 1;
            if (ii < 0 || ii >= hp_) continue;
            for (int v = 0; v < 3; ++v) {
              int jj = oj + v - 1;
              if (jj < 0 || jj >= wp_) continue;
              s += t.ap[(static_cast<std::size_t>(ic) * hp_ + ii) * wp_ + jj] *
                   w2[((static_cast<std::size_t>(oc) * c1_ + ic) * 3 + u) * 3 +
                      v];
            }
          }
        }
        t.a2[(static_cast<std::size_t>(oc) * h2_ + oi) * w2sz_ + oj] = s;
      }
    }
  }

  // relu + maxpool 2x2 s2
  t.ap2.assign(static_cast<std::size_t>(c2_) * hq_ * wq_, 0.0);
  t.pool2_ix.assign(t.ap2.size(), 0);
  for (int c = 0; c < c2_; ++c) {
    for (int pi = 0; pi < hq_; ++pi) {
      for (int pj = 0; pj < wq_; ++pj) {
        double best = -1e300;
        int best_ix = 0;
        for (int u = 0; u < 2; ++u) {
          for (int v = 0; v < 2; ++v) {
            int ix = (static_cast<int>(c) * h2_ + pi * 2 + u) * w2sz_ +
                     (pj * 2 + v);
            if (t.a2[ix] > best) {
              best = t.a2[ix];
              best_ix = ix;
            }
          }
        }
        std::size_t po = (static_cast<std::size_t>(c) * hq_ + pi) * wq_ + pj;
        t.ap2[po] = best > 0.0 ? best : 0.0;
        t.pool2_ix[po] = best_ix;
      }
    }
  }

  // dense on the flattened maps
  const std::size_t flat = t.ap2.size();
  t.logits.assign(classes_, 0.0);
  for (int k = 0; k < classes_; ++k) {
    double s = bf[k];
    const double* row = wf.data() + static_cast<std::size_t>(k) * flat;
    for (std::size_t q = 0; q < flat; ++q) s += row[q] * t.ap2[q];
    t.logits[k] = s;
  }
}

Logits ConvNetBackend::forward_one(const Image& x) const {
  Tape t;
  forward_tape(x, t);
  return t.logits;
}

std::vector<Logits> ConvNetBackend::forward(
    const std::vector<Image>& images) const {
  std::vector<Logits> out(images.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t m = 0; m < images.size(); ++m) {
    out[m] = forward_one(images[m]);
  }
  return out;
}

void ConvNetBackend::backward_one(const Image& x,
                                  const std::vector<double>& dlogits,
                                  Gradients* wgrads, PixelField* dinput) const {
  Tape t;
  forward_tape(x, t);
  backward_impl(t, dlogits, wgrads, dinput);
}

double ConvNetBackend::xent_backward(const Image& x, int label,
                                     Gradients* wgrads) const {
  Tape t;
  forward_tape(x, t);
  double loss = softmax_cross_entropy(t.logits, label);
  std::vector<double> dlogits = softmax(t.logits);
  dlogits[label] -= 1.0;
  backward_impl(t, dlogits, wgrads, nullptr);
  return loss;
}

void ConvNetBackend::backward_impl(const Tape& t,
                                   const std::vector<double>& dlogits,
                                   Gradients* wgrads, PixelField* dinput) const {
  const int H = height_, W = width_;

  if (wgrads) {
    wgrads->w1.assign(w1.size(), 0.0);
    wgrads->b1.assign(b1.size(), 0.0);
    wgrads->w2.assign(w2.size(), 0.0);
    wgrads->b2.assign(b2.size(), 0.0);
    wgrads->wf.assign(wf.size(), 0.0);
    wgrads->bf.assign(bf.size(), 0.0);
  }

  // dense backward
  const std::size_t flat = t.ap2.size();
  std::vector<double> dap2(flat, 0.0);
  for (int k = 0; k < classes_; ++k) {
    const double* row = wf.data() + static_cast<std::size_t>(k) * flat;
    double* grow = wgrads ? wgrads->wf.data() + static_cast<std::size_t>(k) * flat
                          : nullptr;
    for (std::size_t q = 0; q < flat; ++q) {
      dap2[q] += dlogits[k] * row[q];
      if (grow) grow[q] += dlogits[k] * t.ap2[q];
    }
    if (wgrads) wgrads->bf[k] += dlogits[k];
  }

  // pool2 + relu backward
  std::vector<double> da2(t.a2.size(), 0.0);
  for (std::size_t po = 0; po < flat; ++po) {
    int src = t.pool2_ix[po];
    if (t.a2[src] > 0.0) da2[src] += dap2[po];
  }

  // conv2 backward
  std::vector<double> dap(t.ap.size(), 0.0);
  for (int oc = 0; oc < c2_; ++oc) {
    for (int oi = 0; oi < h2_; ++oi) {
      for (int oj = 0; oj < w2sz_; ++oj) {
        double g = da2[(static_cast<std::size_t>(oc) * h2_ + oi) * w2sz_ + oj];
        if (g == 0.0) continue;
        if (wgrads) wgrads->b2[oc] += g;
        for (int ic = 0; ic < c1_; ++ic) {
          for (int u = 0; u < 3; ++u) {
            int ii = oi + u - 1;
            if (ii < 0 || ii >= hp_) continue;
            for (int v = 0; v < 3; ++v) {
              int jj = oj + v - 1;
              if (jj < 0 || jj >= wp_) continue;
              std::size_t pix =
                  (static_cast<std::size_t>(ic) * hp_ + ii) * wp_ + jj;
              std::size_t wix =
                  ((static_cast<std::size_t>(oc) * c1_ + ic) * 3 + u) * 3 + v;
              dap[pix] += g * w2[wix];
              if (wgrads) wgrads->w2[wix] += g * t.ap[pix];
            }
          }
        }
      }
    }
  }

  // pool + relu backward
  std::vector<double> da1(t.a1.size(), 0.0);
  for (std::size_t po = 0; po < t.ap.size(); ++po) {
    int src = t.pool_ix[po];
    if (t.a1[src] > 0.0) da1[src] += dap[po];
  }

  // conv1 backward
  std::vector<double> din;
  if (dinput) din.assign(t.in.size(), 0.0);
  for (int oc = 0; oc < c1_; ++oc) {
    for (int oi = 0; oi < h1_; ++oi) {
      for (int oj = 0; oj < w1sz_; ++oj) {
        double g = da1[(static_cast<std::size_t>(oc) * h1_ + oi) * w1sz_ + oj];
        if (g == 0.0) continue;
        if (wgrads) wgrads->b1[oc] += g;
        for (int ic = 0; ic < 3; ++ic) {
          for (int u = 0; u < 3; ++u) {
            int ii = oi * 2 + u - 1;
            if (ii < 0 || ii >= H) continue;
            for (int v = 0; v < 3; ++v) {
              int jj = oj * 2 + v - 1;
              if (jj < 0 || jj >= W) continue;
              std::size_t pix = (static_cast<std::size_t>(ic) * H + ii) * W + jj;
              std::size_t wix =
                  ((static_cast<std::size_t>(oc) * 3 + ic) * 3 + u) * 3 + v;
              if (dinput) din[pix] += g * w1[wix];
              if (wgrads) wgrads->w1[wix] += g * t.in[pix];
            }
          }
        }
      }
    }
  }

  if (dinput) {
    *dinput = PixelField(H, W, 0.0);
    for (int c = 0; c < 3; ++c) {
      for (int i = 0; i < H; ++i) {
        for (int j = 0; j < W; ++j) {
          dinput->at(i, j, c) = din[(static_cast<std::size_t>(c) * H + i) * W + j];
        }
      }
    }
  }
}

PixelField ConvNetBackend::input_gradient(const Image& x, int y_star,
                                          int y_targ) const {
  std::vector<double> dlogits(classes_, 0.0);
  dlogits[y_targ] += 1.0;
  dlogits[y_star] -= 1.0;
  PixelField g;
  backward_one(x, dlogits, nullptr, &g);
  return g;
}

// ---------------------------------------------------------------------------
// Factory + persistence

std::shared_ptr<ClassifierBackend> builtin_toy_network(const std::string& arch,
                                                       int height, int width,
                                                       int classes,
                                                       std::uint64_t seed) {
  if (arch == "linear") {
    return std::make_shared<LinearBackend>(height, width, classes, seed);
  }
  if (arch == "conv2") {
    return std::make_shared<ConvNetBackend>(height, width, classes, 8, 16,
                                            seed);
  }
  throw std::invalid_argument("unknown builtin architecture: " + arch +
                              " (expected \"linear\" or \"conv2\")");
}

void save_toy_network(const ClassifierBackend& backend,
                      const std::string& path) {
  nlohmann::json j;
  j["schema"] = "camsticker/toy-net@1";
  if (const auto* lin = dynamic_cast<const LinearBackend*>(&backend)) {
    j["arch"] = "linear";
    j["height"] = lin->height();
    j["width"] = lin->width();
    j["classes"] = lin->num_classes();
    j["w"] = lin->weights();
    j["b"] = lin->bias();
  } else if (const auto* net = dynamic_cast<const ConvNetBackend*>(&backend)) {
    j["arch"] = "conv2";
    j["height"] = net->height();
    j["width"] = net->width();
    j["classes"] = net->num_classes();
    j["c1"] = net->c1();
    j["c2"] = net->c2();
    j["w1"] = net->w1;
    j["b1"] = net->b1;
    j["w2"] = net->w2;
    j["b2"] = net->b2;
    j["wf"] = net->wf;
    j["bf"] = net->bf;
  } else {
    throw std::invalid_argument("save_toy_network: not a builtin backend");
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

std::shared_ptr<ClassifierBackend> load_toy_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open toy network file: " + path);
  nlohmann::json j;
  in >> j;
  const std::string arch = j.at("arch");
  if (arch == "linear") {
    auto net = std::make_shared<LinearBackend>(j.at("height"), j.at("width"),
                                               j.at("classes"));
    net->weights() = j.at("w").get<std::vector<double>>();
    net->bias() = j.at("b").get<std::vector<double>>();
    return net;
  }
  if (arch == "conv2") {
    auto net = std::make_shared<ConvNetBackend>(
        j.at("height"), j.at("width"), j.at("classes"), j.at("c1"), j.at("c2"),
        /*seed=*/0);
    net->w1 = j.at("w1").get<std::vector<double>>();
    net->b1 = j.at("b1").get<std::vector<double>>();
    net->w2 = j.at("w2").get<std::vector<double>>();
    net->b2 = j.at("b2").get<std::vector<double>>();
    net->wf = j.at("wf").get<std::vector<double>>();
    net->bf = j.at("bf").get<std::vector<double>>();
    return net;
  }
  throw std::runtime_error("unknown toy network arch in " + path);
}

}  // namespace camsticker
