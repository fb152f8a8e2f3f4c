#include "apl/losses.hpp"

#include <cmath>

namespace apl::losses {

namespace {

inline double clamp_prob(double p, double eps) {
  if (p < eps) return eps;
  if (p > 1.0 - eps) return 1.0 - eps;
  return p;
}

// Derivative of log(clamp(p)) w.r.t. p is 1/p inside the clamp window, 0 outside.
inline bool clamped(double p, double eps) { return p < eps || p > 1.0 - eps; }

}  // namespace

void LossConfig::validate() const {
  if (beta < 0.0) throw ConfigError("LossConfig: beta must be >= 0");
  if (eta < 0.0) throw ConfigError("LossConfig: eta must be >= 0");
  if (!(eps > 0.0 && eps < 0.5)) throw ConfigError("LossConfig: eps must lie in (0, 0.5)");
}

double labeled_loss(const Tensor& pred, const Tensor& gt, double eps, Tensor* dpred) {
  require_same_shape(pred, gt, "labeled_loss");
  if (dpred) require_same_shape(pred, *dpred, "labeled_loss gradient");
  double loss = 0.0;
  for (long i = 0; i < pred.size(); ++i) {
    const double t = clamp_prob(pred.v[i], eps);
    const double y = gt.v[i];
    loss -= (1.0 - y) * std::log(1.0 - t) + y * std::log(t);
    if (dpred && !clamped(pred.v[i], eps)) dpred->v[i] += (1.0 - y) / (1.0 - t) - y / t;
  }
  return loss;
}

double unlabeled_loss(const Tensor& pred, const Tensor& pseudo, const Tensor& weights, double eps,
                      Tensor* dpred) {
  require_same_shape(pred, pseudo, "unlabeled_loss");
  require_same_shape(pred, weights, "unlabeled_loss weights");
  if (dpred) require_same_shape(pred, *dpred, "unlabeled_loss gradient");
  double loss = 0.0;
  for (long i = 0; i < pred.size(); ++i) {
    const double t = clamp_prob(pred.v[i], eps);
    const double y = pseudo.v[i];
    const double v = weights.v[i];
    loss -= v * ((1.0 - y) * std::log(1.0 - t) + y * std::log(t));
    if (dpred && !clamped(pred.v[i], eps)) dpred->v[i] += v * ((1.0 - y) / (1.0 - t) - y / t);
  }
  return loss;
}

Tensor reliability_target(const Tensor& pred, const Tensor& gt) {
  require_same_shape(pred, gt, "reliability_target");
  Tensor target(pred.c, pred.h, pred.w);
  for (long i = 0; i < pred.size(); ++i) target.v[i] = 1.0 - std::fabs(pred.v[i] - gt.v[i]);
  return target;
}

double pixel_weight_loss(const Tensor& pw_out, const Tensor& target, double eps, Tensor* dpw) {
  require_same_shape(pw_out, target, "pixel_weight_loss");
  if (dpw) require_same_shape(pw_out, *dpw, "pixel_weight_loss gradient");
  double loss = 0.0;
  for (long i = 0; i < pw_out.size(); ++i) {
    const double p = clamp_prob(pw_out.v[i], eps);
    const double t = target.v[i];
    loss -= (1.0 - t) * std::log(1.0 - p) + t * std::log(p);
    if (dpw && !clamped(pw_out.v[i], eps)) dpw->v[i] += (1.0 - t) / (1.0 - p) - t / p;
  }
  return loss;
}

double pace_adversarial_loss(const PaceAdversarialBatch& batch, double eta, double eps,
                             PaceAdversarialGrad* grad) {
  if (batch.p_gt.empty() || batch.p_pred_labeled.empty())
    throw ConfigError("pace_adversarial_loss: labeled terms require at least one item");
  if (grad) {
    grad->d_gt.assign(batch.p_gt.size(), 0.0);
    grad->d_pred_labeled.assign(batch.p_pred_labeled.size(), 0.0);
    grad->d_pred_unlabeled.assign(batch.p_pred_unlabeled.size(), 0.0);
  }

  double loss = 0.0;
  const double inv_l = 1.0 / static_cast<double>(batch.p_gt.size());
  for (size_t i = 0; i < batch.p_gt.size(); ++i) {
    const double p = clamp_prob(batch.p_gt[i], eps);
    loss += inv_l * std::log(p);
    if (grad && !clamped(batch.p_gt[i], eps)) grad->d_gt[i] = inv_l / p;
  }
  const double inv_fl = 1.0 / static_cast<double>(batch.p_pred_labeled.size());
  for (size_t i = 0; i < batch.p_pred_labeled.size(); ++i) {
    const double p = clamp_prob(batch.p_pred_labeled[i], eps);
    loss += inv_fl * std::log(1.0 - p);
    if (grad && !clamped(batch.p_pred_labeled[i], eps)) grad->d_pred_labeled[i] = -inv_fl / (1.0 - p);
  }
  if (!batch.p_pred_unlabeled.empty()) {
    const double inv_fu = eta / static_cast<double>(batch.p_pred_unlabeled.size());
    for (size_t i = 0; i < batch.p_pred_unlabeled.size(); ++i) {
      const double p = clamp_prob(batch.p_pred_unlabeled[i], eps);
      loss += inv_fu * std::log(1.0 - p);
      if (grad && !clamped(batch.p_pred_unlabeled[i], eps)) grad->d_pred_unlabeled[i] = -inv_fu / (1.0 - p);
    }
  }
  return loss;
}

double total_objective(double labeled, double unlabeled, double pace_adversarial, double pixel_weight,
                       double beta) {
  return labeled + unlabeled + beta * (pace_adversarial + pixel_weight);
}

}  // namespace apl::losses
