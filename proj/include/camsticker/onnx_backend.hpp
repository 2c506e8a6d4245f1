#pragma once

#include <array>
#include <memory>
#include <string>

#include "camsticker/classifier.hpp"

namespace camsticker {

/// Preprocessing declared in the sidecar file shipped next to a model:
/// bilinear shorter-side resize, center crop, per-channel normalization.
struct PreprocSpec {
  int resize_shorter = 0;  // 0 = keep size
  int crop_h = 0;          // 0 = no crop
  int crop_w = 0;
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  std::array<double, 3> stdev{1.0, 1.0, 1.0};
};

PreprocSpec load_preproc_sidecar(const std::string& path);

/// CPU inference over models in the ONNX interchange format, restricted to
/// the operator subset common to image classifiers: Conv (group 1), Relu,
/// MaxPool, GlobalAveragePool, BatchNormalization, Add, Flatten, Reshape,
/// Gemm, MatMul, Constant, Identity, Dropout (inference), Softmax.
/// No input gradients: attack fine-tuning falls back to finite differences.
class OnnxBackend : public ClassifierBackend {
 public:
  OnnxBackend(const std::string& model_path, const PreprocSpec& preproc,
              int max_batch = 32);
  ~OnnxBackend() override;

  int num_classes() const override;
  int max_batch() const override { return max_batch_; }
  bool supports_input_gradient() const override { return false; }
  bool concurrent_safe() const override { return true; }
  std::vector<Logits> forward(const std::vector<Image>& images) const override;

 private:
  struct Model;
  std::shared_ptr<const Model> model_;
  PreprocSpec preproc_;
  int max_batch_;
  int num_classes_;
};

}  // namespace camsticker
