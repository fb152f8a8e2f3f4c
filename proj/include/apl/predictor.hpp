#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "apl/nn.hpp"

namespace apl {

enum class Backbone { desk_small, deeplab_style };

Backbone backbone_from_string(const std::string& s);
std::string to_string(Backbone b);

struct PredictorConfig {
  Backbone backbone = Backbone::desk_small;
  int resolution = 128;     // square input edge expected by predict()
  int base_channels = 16;   // desk_small width
  uint64_t params_init = 1;
  // Optional checkpoint with pretrained weights for the deeplab_style encoder.
  std::string init_weights;
};

// Segmentation network T(.|psi): image -> per-pixel saliency probabilities.
// Internal downsampling by 4 is undone by a bilinear head, so output spatial
// size always equals the input.
class TaskPredictor {
 public:
  explicit TaskPredictor(const PredictorConfig& cfg);

  // Forward pass; output is (1, H, W) with values strictly in (0, 1).
  // Caches activations, so a later backward() refers to this input.
  Tensor predict(const Tensor& image);

  // Backprop d(loss)/d(saliency) through the net. Accumulates psi gradients
  // unless param_grads is false. Returns the image gradient.
  Tensor backward(const Tensor& d_saliency, bool param_grads = true);

  ParamGroup params();
  const PredictorConfig& config() const { return cfg_; }

 private:
  PredictorConfig cfg_;
  std::vector<Conv2d> convs_;
  std::vector<LeakyRelu> acts_;  // slope 0 (plain ReLU); one fewer than convs_
  Upsample up_;
  SigmoidLayer sigmoid_;
};

// Threshold a saliency map into a pseudo label: 1 iff value >= tau.
Tensor binarize(const Tensor& saliency, double tau = 0.5);

}  // namespace apl
