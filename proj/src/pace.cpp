#include "apl/pace.hpp"

#include <cmath>

namespace apl {

double GsmOutput::p_real() const {
  // Stable two-way softmax.
  const double m = std::max(logits[0], logits[1]);
  const double e0 = std::exp(logits[0] - m);
  const double e1 = std::exp(logits[1] - m);
  return e1 / (e0 + e1);
}

std::array<double, 2> GsmOutput::p_real_grad() const {
  const double p = p_real();
  return {-p * (1.0 - p), p * (1.0 - p)};
}

namespace {

void require_gsm_input(const Tensor& mask) {
  if (mask.c != 1) throw ShapeError("gsm_forward: expected a single-channel mask");
  if (mask.h % 16 != 0 || mask.w % 16 != 0)
    throw ShapeError("gsm_forward: mask size must be divisible by 16, got " + std::to_string(mask.h) +
                     "x" + std::to_string(mask.w));
}

}  // namespace

PaceGenerator::PaceGenerator(const PaceConfig& cfg)
    : cfg_(cfg), head_("gsm.head", 8 * cfg.base_channels, 2), pw_head_("pw.head", cfg.base_channels / 2, 1, 3, 1, 1) {
  if (cfg.base_channels < 2) throw ConfigError("pace base_channels must be at least 2");
  const int g = cfg.base_channels;
  Rng rng(cfg.params_init);

  // GSM: 4x4 kernels, stride 2, widths g, 2g, 4g, 8g.
  const int widths[5] = {1, g, 2 * g, 4 * g, 8 * g};
  for (int s = 0; s < 4; ++s) {
    gsm_convs_.emplace_back("gsm.conv" + std::to_string(s + 1), widths[s], widths[s + 1], 4, 2, 1);
    gsm_convs_.back().init(rng);
    gsm_acts_.emplace_back(cfg.leaky_slope);
  }
  head_.init(rng);

  // PW: blocks 1..3 upsample and fuse the matching-resolution GSM feature;
  // block 4 reaches mask resolution without a skip.
  struct BlockSpec {
    int in_c, out_c, skip_c;
  };
  const BlockSpec blocks[4] = {
      {8 * g + 4 * g, 4 * g, 4 * g},
      {4 * g + 2 * g, 2 * g, 2 * g},
      {2 * g + g, g, g},
      {g, g / 2, 0},
  };
  for (int b = 0; b < 4; ++b) {
    pw_ups_.emplace_back(Upsample::Mode::nearest, 2);
    pw_convs_.emplace_back("pw.conv" + std::to_string(b + 1), blocks[b].in_c, blocks[b].out_c, 3, 1, 1);
    pw_convs_.back().init(rng);
    pw_acts_.emplace_back(cfg.leaky_slope);
    skip_channels_.push_back(blocks[b].skip_c);
  }
  pw_head_.init(rng);
}

GsmOutput PaceGenerator::gsm_forward(const Tensor& mask) {
  require_gsm_input(mask);
  GsmOutput out;
  Tensor x = mask;
  for (int s = 0; s < 4; ++s) {
    x = gsm_convs_[s].forward(x);
    x = gsm_acts_[s].forward(x);
    out.features.push_back(x);
  }
  const std::vector<double> pooled = pool_.forward(x);
  const std::vector<double> logits = head_.forward(pooled);
  out.logits = {logits[0], logits[1]};
  return out;
}

Tensor PaceGenerator::gsm_backward(const std::array<double, 2>& d_logits, bool param_grads) {
  std::vector<double> g = head_.backward({d_logits[0], d_logits[1]}, param_grads);
  Tensor t = pool_.backward(g);
  for (int s = 4; s-- > 0;) {
    t = gsm_acts_[s].backward(t);
    t = gsm_convs_[s].backward(t, param_grads);
  }
  return t;
}

Tensor PaceGenerator::pw_forward(const std::vector<Tensor>& features) {
  if (features.size() != 4) throw ShapeError("pw_forward: expected 4 GSM feature maps");
  Tensor x = features[3];
  for (int b = 0; b < 4; ++b) {
    x = pw_ups_[b].forward(x);
    if (skip_channels_[b] > 0) {
      const Tensor& skip = features[2 - b];
      if (skip.h != x.h || skip.w != x.w) throw ShapeError("pw_forward: skip resolution mismatch");
      x = concat_channels(x, skip);
    }
    x = pw_convs_[b].forward(x);
    x = pw_acts_[b].forward(x);
  }
  x = pw_head_.forward(x);
  return pw_sigmoid_.forward(x);
}

void PaceGenerator::pw_backward(const Tensor& d_weights) {
  Tensor g = pw_sigmoid_.backward(d_weights);
  g = pw_head_.backward(g);
  for (int b = 4; b-- > 0;) {
    g = pw_acts_[b].backward(g);
    g = pw_convs_[b].backward(g);
    if (skip_channels_[b] > 0) {
      Tensor upstream;
      split_channels(g, g.c - skip_channels_[b], &upstream, nullptr);  // skip part is detached
      g = std::move(upstream);
    }
    g = pw_ups_[b].backward(g);
  }
}

Tensor PaceGenerator::weigh(const Tensor& mask) {
  return pw_forward(gsm_forward(mask).features);
}

ParamGroup PaceGenerator::gsm_params() {
  ParamGroup group;
  for (Conv2d& c : gsm_convs_) {
    group.push_back(&c.weight);
    group.push_back(&c.bias);
  }
  group.push_back(&head_.weight);
  group.push_back(&head_.bias);
  return group;
}

ParamGroup PaceGenerator::pw_params() {
  ParamGroup group;
  for (Conv2d& c : pw_convs_) {
    group.push_back(&c.weight);
    group.push_back(&c.bias);
  }
  group.push_back(&pw_head_.weight);
  group.push_back(&pw_head_.bias);
  return group;
}

ParamGroup PaceGenerator::params() {
  ParamGroup group = gsm_params();
  const ParamGroup pw = pw_params();
  group.insert(group.end(), pw.begin(), pw.end());
  return group;
}

// ---------------------------------------------------------------------------
// PixelGan
// ---------------------------------------------------------------------------

PixelGan::PixelGan(const PaceConfig& cfg)
    : cfg_(cfg),
      head_("pixelgan.head", 8 * cfg.base_channels, 1, 1, 1, 0),
      up_(Upsample::Mode::bilinear, 16) {
  const int g = cfg.base_channels;
  Rng rng(cfg.params_init);
  const int widths[5] = {1, g, 2 * g, 4 * g, 8 * g};
  for (int s = 0; s < 4; ++s) {
    convs_.emplace_back("pixelgan.conv" + std::to_string(s + 1), widths[s], widths[s + 1], 4, 2, 1);
    convs_.back().init(rng);
    acts_.emplace_back(cfg.leaky_slope);
  }
  head_.init(rng);
}

Tensor PixelGan::forward(const Tensor& mask) {
  if (mask.c != 1) throw ShapeError("pixel_gan: expected a single-channel mask");
  if (mask.h % 16 != 0 || mask.w % 16 != 0)
    throw ShapeError("pixel_gan: mask size must be divisible by 16");
  Tensor x = mask;
  for (int s = 0; s < 4; ++s) {
    x = convs_[s].forward(x);
    x = acts_[s].forward(x);
  }
  x = head_.forward(x);
  x = up_.forward(x);
  return sigmoid_.forward(x);
}

Tensor PixelGan::backward(const Tensor& d_conf, bool param_grads) {
  Tensor g = sigmoid_.backward(d_conf);
  g = up_.backward(g);
  g = head_.backward(g, param_grads);
  for (int s = 4; s-- > 0;) {
    g = acts_[s].backward(g);
    g = convs_[s].backward(g, param_grads);
  }
  return g;
}

ParamGroup PixelGan::params() {
  ParamGroup group;
  for (Conv2d& c : convs_) {
    group.push_back(&c.weight);
    group.push_back(&c.bias);
  }
  group.push_back(&head_.weight);
  group.push_back(&head_.bias);
  return group;
}

}  // namespace apl
