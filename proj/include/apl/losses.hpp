#pragma once

#include <vector>

#include "apl/tensor.hpp"

namespace apl::losses {

struct LossConfig {
  double beta = 0.01;  // weight of the pace loss
  double eta = 0.7;    // unlabeled adversarial weight
  double eps = 1e-7;   // probability clamp inside logs

  void validate() const;
};

// Cross-entropy against a binary mask, summed over pixels:
//   -sum[(1-Y)*log(1-T) + Y*log(T)]  with T clamped to [eps, 1-eps].
// When dpred is given, the gradient w.r.t. pred is accumulated into it.
double labeled_loss(const Tensor& pred, const Tensor& gt, double eps, Tensor* dpred = nullptr);

// Reliability-weighted cross-entropy against a pseudo label. The weight map
// carries no gradient; with weights identically one this equals labeled_loss.
double unlabeled_loss(const Tensor& pred, const Tensor& pseudo, const Tensor& weights, double eps,
                      Tensor* dpred = nullptr);

// Per-pixel reliability target: 1 - |pred - gt|.
Tensor reliability_target(const Tensor& pred, const Tensor& gt);

// Cross-entropy of the pixel-weighting output against a soft target map,
// summed over pixels. Minimal at pw_out == target.
double pixel_weight_loss(const Tensor& pw_out, const Tensor& target, double eps, Tensor* dpw = nullptr);

// Realness probabilities emitted by the mask discriminator for one batch.
struct PaceAdversarialBatch {
  std::vector<double> p_gt;              // P_g on human-annotated masks
  std::vector<double> p_pred_labeled;    // P_g on predictions for labeled images
  std::vector<double> p_pred_unlabeled;  // P_g on predictions for unlabeled images
};

struct PaceAdversarialGrad {
  std::vector<double> d_gt, d_pred_labeled, d_pred_unlabeled;
};

// Adversarial pace loss over realness probabilities, batch-mean per term:
//   mean log(p_gt) + mean log(1 - p_pred_labeled) + eta * mean log(1 - p_pred_unlabeled).
// Ascended over the discriminator parameters, descended over the predictor
// through the two prediction terms. The unlabeled term vanishes when that
// list is empty; an empty labeled side is a configuration error.
double pace_adversarial_loss(const PaceAdversarialBatch& batch, double eta, double eps,
                             PaceAdversarialGrad* grad = nullptr);

// Full objective value: L^l + L^u + beta * (L^{p_g} + L^{p_w}).
// The predictor/pixel-weighting step descends it; the discriminator step
// ascends the beta * L^{p_g} part with everything else fixed.
double total_objective(double labeled, double unlabeled, double pace_adversarial, double pixel_weight,
                       double beta);

}  // namespace apl::losses
