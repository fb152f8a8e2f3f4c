#include "apl/optim.hpp"

#include <cmath>

namespace apl {

double lr_at(long step, double base_lr, long total, double power) {
  if (step < 0 || step > total) throw ConfigError("lr_at: step outside [0, total]");
  if (total <= 0) throw ConfigError("lr_at: total must be positive");
  const double frac = 1.0 - static_cast<double>(step) / static_cast<double>(total);
  return base_lr * std::pow(frac, power);
}

void SgdMomentum::step(const ParamGroup& params, double lr) {
  if (velocity_.size() != params.size()) {
    velocity_.clear();
    for (const Param* p : params) velocity_.emplace_back(p->size(), 0.0);
  }
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Param& p = *params[pi];
    std::vector<double>& vel = velocity_[pi];
    for (size_t i = 0; i < p.size(); ++i) {
      vel[i] = momentum_ * vel[i] + p.grad[i] + weight_decay_ * p.value[i];
      p.value[i] -= lr * vel[i];
    }
  }
}

void Adam::step(const ParamGroup& params, double lr) {
  if (m_.size() != params.size()) {
    m_.clear();
    v_.clear();
    for (const Param* p : params) {
      m_.emplace_back(p->size(), 0.0);
      v_.emplace_back(p->size(), 0.0);
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Param& p = *params[pi];
    std::vector<double>& m = m_[pi];
    std::vector<double>& v = v_[pi];
    for (size_t i = 0; i < p.size(); ++i) {
      const double g = p.grad[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.value[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

}  // namespace apl
