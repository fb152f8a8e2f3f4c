#include "apl/spl.hpp"

#include <cmath>

namespace apl {

SplKind spl_kind_from_string(const std::string& s) {
  if (s == "hard_l1") return SplKind::hard_l1;
  if (s == "linear_soft") return SplKind::linear_soft;
  if (s == "l_half_group") return SplKind::l_half_group;
  if (s == "l21_group") return SplKind::l21_group;
  if (s == "fraction") return SplKind::fraction;
  throw ConfigError("unknown SPL scheme: " + s);
}

std::string to_string(SplKind k) {
  switch (k) {
    case SplKind::hard_l1: return "hard_l1";
    case SplKind::linear_soft: return "linear_soft";
    case SplKind::l_half_group: return "l_half_group";
    case SplKind::l21_group: return "l21_group";
    case SplKind::fraction: return "fraction";
  }
  return "?";
}

void SplScheme::validate() const {
  if (!(lambda > 0.0)) throw ConfigError("SplScheme: lambda must be positive");
  if (lambda_growth < 1.0) throw ConfigError("SplScheme: lambda_growth must be >= 1");
}

double spl_regularizer(SplKind kind, double v) {
  switch (kind) {
    case SplKind::hard_l1:
    case SplKind::l21_group: return -v;
    case SplKind::linear_soft: return 0.5 * v * v - v;
    case SplKind::l_half_group: return -2.0 * std::sqrt(v);
    case SplKind::fraction: return v <= 0.0 ? HUGE_VAL : v - std::log(v);
  }
  return 0.0;
}

double spl_weight(double loss, const SplScheme& scheme) {
  if (loss < 0.0) throw ConfigError("spl_weight: loss must be nonnegative");
  scheme.validate();
  const double l = scheme.lambda;
  switch (scheme.kind) {
    case SplKind::hard_l1:
    case SplKind::l21_group:
      return loss < l ? 1.0 : 0.0;
    case SplKind::linear_soft:
      return std::max(0.0, 1.0 - loss / l);
    case SplKind::l_half_group: {
      if (loss <= l) return 1.0;
      const double r = l / loss;
      return r * r;
    }
    case SplKind::fraction:
      return l / (l + loss);
  }
  return 0.0;
}

double spl_group_pool(const Tensor& per_pixel_loss, SplKind kind) {
  if (kind == SplKind::l21_group) {
    double ss = 0.0;
    for (double x : per_pixel_loss.v) ss += x * x;
    return std::sqrt(ss / static_cast<double>(per_pixel_loss.size()));
  }
  return per_pixel_loss.mean();
}

Tensor spl_pace_step(const Tensor& per_pixel_loss, const SplScheme& scheme) {
  Tensor weights(per_pixel_loss.c, per_pixel_loss.h, per_pixel_loss.w);
  if (scheme.kind == SplKind::l_half_group || scheme.kind == SplKind::l21_group) {
    const double pooled = spl_group_pool(per_pixel_loss, scheme.kind);
    weights.fill(spl_weight(pooled, scheme));
    return weights;
  }
  for (long i = 0; i < per_pixel_loss.size(); ++i) weights.v[i] = spl_weight(per_pixel_loss.v[i], scheme);
  return weights;
}

}  // namespace apl
