#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "camsticker/image.hpp"

namespace camsticker {

/// Per-class real scores; prediction is the argmax index.
using Logits = std::vector<double>;

/// Thrown by input_gradient when a backend cannot differentiate through
/// itself; callers should fall back to finite-difference mode.
class GradientUnsupportedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Classifier contract. Backends own their preprocessing: callers always
/// pass [0,1] RGB images in caller space. forward must be deterministic.
class ClassifierBackend {
 public:
  virtual ~ClassifierBackend() = default;

  virtual int num_classes() const = 0;
  virtual std::vector<std::string> labels() const { return {}; }
  virtual int max_batch() const { return 32; }
  virtual bool supports_input_gradient() const { return false; }
  /// True if forward may be called concurrently from several threads.
  virtual bool concurrent_safe() const { return false; }

  virtual std::vector<Logits> forward(const std::vector<Image>& images) const = 0;

  /// Gradient of xent(f(x), y_star) - xent(f(x), y_targ) w.r.t. input pixels,
  /// preprocessing chain rule included.
  virtual PixelField input_gradient(const Image& x, int y_star,
                                    int y_targ) const {
    (void)x;
    (void)y_star;
    (void)y_targ;
    throw GradientUnsupportedError(
        "backend does not expose input gradients; enable finite-difference "
        "mode instead");
  }
};

Logits softmax(const Logits& z);
double softmax_cross_entropy(const Logits& z, int label);
int argmax(const Logits& z);

/// Convenience single-image prediction.
int predict(const ClassifierBackend& backend, const Image& x);

/// Batched prediction honoring max_batch; parallel over images for
/// concurrency-safe backends.
std::vector<int> predict_batch(const ClassifierBackend& backend,
                               const std::vector<Image>& images);
std::vector<Logits> forward_batched(const ClassifierBackend& backend,
                                    const std::vector<Image>& images);

/// Mutex adapter making any backend safe for concurrent callers.
std::shared_ptr<ClassifierBackend> make_serializing(
    std::shared_ptr<ClassifierBackend> inner);

/// Linear classifier: logits = W * flatten(x) + b, flatten in Image data
/// order (row-major interleaved RGB). Fully concurrent, exact gradients.
class LinearBackend : public ClassifierBackend {
 public:
  LinearBackend(int height, int width, int classes);
  /// Seeded Gaussian init, stddev 0.1 / sqrt(inputs).
  LinearBackend(int height, int width, int classes, std::uint64_t seed);

  int num_classes() const override { return classes_; }
  bool supports_input_gradient() const override { return true; }
  bool concurrent_safe() const override { return true; }
  std::vector<Logits> forward(const std::vector<Image>& images) const override;
  PixelField input_gradient(const Image& x, int y_star,
                            int y_targ) const override;

  Logits forward_one(const Image& x) const;

  int height() const { return height_; }
  int width() const { return width_; }
  std::vector<double>& weights() { return w_; }  // [classes][h*w*3]
  std::vector<double>& bias() { return b_; }
  const std::vector<double>& weights() const { return w_; }
  const std::vector<double>& bias() const { return b_; }

 private:
  int height_, width_, classes_;
  std::vector<double> w_, b_;
};

/// Two-layer convolutional network with a hand-written reverse pass:
/// conv 3x3 stride 2 -> relu -> maxpool 2 -> conv 3x3 -> relu -> maxpool 2
/// -> dense on the flattened maps. No autodiff dependency.
class ConvNetBackend : public ClassifierBackend {
 public:
  ConvNetBackend(int height, int width, int classes, int c1, int c2,
                 std::uint64_t seed);

  int num_classes() const override { return classes_; }
  bool supports_input_gradient() const override { return true; }
  bool concurrent_safe() const override { return true; }
  std::vector<Logits> forward(const std::vector<Image>& images) const override;
  PixelField input_gradient(const Image& x, int y_star,
                            int y_targ) const override;

  Logits forward_one(const Image& x) const;

  struct Gradients {
    std::vector<double> w1, b1, w2, b2, wf, bf;
  };
  /// Backward pass from dL/dlogits; fills weight gradients and optionally
  /// the input-pixel gradient.
  void backward_one(const Image& x, const std::vector<double>& dlogits,
                    Gradients* wgrads, PixelField* dinput) const;
  /// Forward + softmax cross-entropy + weight-gradient backward in one pass;
  /// returns the per-example loss.
  double xent_backward(const Image& x, int label, Gradients* wgrads) const;

  int height() const { return height_; }
  int width() const { return width_; }
  int c1() const { return c1_; }
  int c2() const { return c2_; }

  std::vector<double> w1, b1;  // [c1][3][3][3], [c1]
  std::vector<double> w2, b2;  // [c2][c1][3][3], [c2]
  std::vector<double> wf, bf;  // [classes][c2*hq*wq], [classes]

 private:
  struct Tape;
  void forward_tape(const Image& x, Tape& t) const;
  void backward_impl(const Tape& t, const std::vector<double>& dlogits,
                     Gradients* wgrads, PixelField* dinput) const;

  int height_, width_, classes_, c1_, c2_;
  int h1_, w1sz_, hp_, wp_, h2_, w2sz_, hq_, wq_;
};

/// Builds a deterministic toy backend. `arch` is "linear" or "conv2";
/// anything else is rejected.
std::shared_ptr<ClassifierBackend> builtin_toy_network(const std::string& arch,
                                                       int height, int width,
                                                       int classes,
                                                       std::uint64_t seed);

/// Toy-network weight (de)serialization for the CLI artifacts.
void save_toy_network(const ClassifierBackend& backend,
                      const std::string& path);
std::shared_ptr<ClassifierBackend> load_toy_network(const std::string& path);

}  // namespace camsticker
