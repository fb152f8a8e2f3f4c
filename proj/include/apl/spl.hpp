#pragma once

#include <string>

#include "apl/tensor.hpp"

namespace apl {

// Classical self-paced weighting rules. Each kind is the closed-form
// minimizer of v*loss + lambda*f(v) over v in [0,1] for its regularizer f;
// the group kinds pool an image's per-pixel losses first and weight the
// whole image uniformly.
enum class SplKind { hard_l1, linear_soft, l_half_group, l21_group, fraction };

SplKind spl_kind_from_string(const std::string& s);
std::string to_string(SplKind k);

struct SplScheme {
  SplKind kind = SplKind::hard_l1;
  double lambda = 1.0;
  double lambda_growth = 1.1;  // multiplicative growth per epoch

  void validate() const;
};

// The regularizer value f(v) behind each scheme, exposed for oracle checks:
//   hard_l1      f(v) = -v
//   linear_soft  f(v) = v^2/2 - v
//   l_half_group f(v) = -2*sqrt(v)
//   l21_group    f(v) = -v          (applied to the l2-pooled group loss)
//   fraction     f(v) = v - log(v)
double spl_regularizer(SplKind kind, double v);

// Closed-form weight for one (possibly pooled) loss value.
double spl_weight(double loss, const SplScheme& scheme);

// Elementwise (or pooled, for group kinds) weighting of a per-pixel loss
// field into a drop-in reliability map. Pure; lambda growth is a separate
// per-epoch event driven by the trainer.
Tensor spl_pace_step(const Tensor& per_pixel_loss, const SplScheme& scheme);

// Pooled loss used by the group schemes: mean for l_half, RMS for l21.
double spl_group_pool(const Tensor& per_pixel_loss, SplKind kind);

}  // namespace apl
