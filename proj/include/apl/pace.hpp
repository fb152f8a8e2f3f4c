#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "apl/nn.hpp"

namespace apl {

struct PaceConfig {
  // Width of the first GSM stage; stages double from here. The default
  // matches the documented stack {64, 128, 256, 512}; desk-scale runs use a
  // narrower width to stay within CPU budgets.
  int base_channels = 64;
  double leaky_slope = 0.2;
  uint64_t params_init = 2;
};

// Output of the global-structure-mining branch on one mask.
struct GsmOutput {
  std::vector<Tensor> features;  // 4 post-activation stage maps, halving resolution
  std::array<double, 2> logits;  // [0] = predicted/fake, [1] = annotated/real

  // Softmax probability of the "annotated" index.
  double p_real() const;
  // d p_real / d logits, for chaining loss gradients into the conv stack.
  std::array<double, 2> p_real_grad() const;
};

// Pace-generator P(.|phi): a mask discriminator (GSM branch, parameters
// phi_g) plus a pixel-weighting decoder over its features (PW branch,
// parameters phi_v). Masks are consumed bare, single channel.
class PaceGenerator {
 public:
  explicit PaceGenerator(const PaceConfig& cfg);

  // Four 4x4/stride-2 conv stages, global sum pooling, fully connected
  // two-value head. Requires H and W divisible by 16.
  GsmOutput gsm_forward(const Tensor& mask);

  // Backprop from the two logits through the GSM stack; returns the mask
  // gradient. phi_g gradients accumulate unless param_grads is false.
  Tensor gsm_backward(const std::array<double, 2>& d_logits, bool param_grads = true);

  // Upsampling decoder with resolution-matched skip concatenations; emits a
  // weight map in [0,1] at the mask resolution. The feature inputs are
  // treated as constants (no gradient flows back into the GSM branch).
  Tensor pw_forward(const std::vector<Tensor>& features);

  // Accumulates phi_v gradients from d(loss)/d(weight map).
  void pw_backward(const Tensor& d_weights);

  // Reliability inference: pw_forward(gsm_forward(mask).features).
  // The result is a plain detached map; consumers get no gradient path.
  Tensor weigh(const Tensor& mask);

  ParamGroup gsm_params();
  ParamGroup pw_params();
  ParamGroup params();
  const PaceConfig& config() const { return cfg_; }

 private:
  PaceConfig cfg_;
  // GSM branch
  std::vector<Conv2d> gsm_convs_;
  std::vector<LeakyRelu> gsm_acts_;
  GlobalSumPool pool_;
  Linear head_;
  // PW branch: per block upsample + conv + activation; final sigmoid head.
  std::vector<Upsample> pw_ups_;
  std::vector<Conv2d> pw_convs_;
  std::vector<LeakyRelu> pw_acts_;
  Conv2d pw_head_;
  SigmoidLayer pw_sigmoid_;
  std::vector<int> skip_channels_;  // feature channels concatenated per block (0 = none)
};

// Conventional per-pixel discriminator used by the pixel-GAN ablation:
// same conv trunk as the GSM branch but with a 1-channel confidence head
// upsampled back to mask resolution.
class PixelGan {
 public:
  explicit PixelGan(const PaceConfig& cfg);

  Tensor forward(const Tensor& mask);  // (1, H, W) confidence in (0, 1)
  Tensor backward(const Tensor& d_conf, bool param_grads = true);
  ParamGroup params();

 private:
  PaceConfig cfg_;
  std::vector<Conv2d> convs_;
  std::vector<LeakyRelu> acts_;
  Conv2d head_;
  Upsample up_;
  SigmoidLayer sigmoid_;
};

}  // namespace apl
