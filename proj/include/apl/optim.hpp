#pragma once

#include <vector>

#include "apl/nn.hpp"

namespace apl {

// Polynomial learning-rate decay: base_lr * (1 - step/total)^power.
double lr_at(long step, double base_lr, long total, double power = 0.9);

// Gradient descent with classical momentum and L2 weight decay
// (velocity = m*v + grad + wd*w; w -= lr * velocity).
class SgdMomentum {
 public:
  SgdMomentum(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}
  void step(const ParamGroup& params, double lr);

 private:
  double momentum_, weight_decay_;
  std::vector<std::vector<double>> velocity_;
};

// Adam with bias correction.
class Adam {
 public:
  explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(const ParamGroup& params, double lr);

 private:
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace apl
