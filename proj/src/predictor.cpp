#include "apl/predictor.hpp"

namespace apl {

Backbone backbone_from_string(const std::string& s) {
  if (s == "desk_small") return Backbone::desk_small;
  if (s == "deeplab_style") return Backbone::deeplab_style;
  throw ConfigError("unknown backbone: " + s);
}

std::string to_string(Backbone b) {
  return b == Backbone::desk_small ? "desk_small" : "deeplab_style";
}

namespace {

struct ConvSpec {
  int in_c, out_c, k, stride, pad, dil;
};

std::vector<ConvSpec> backbone_spec(const PredictorConfig& cfg) {
  if (cfg.backbone == Backbone::desk_small) {
    const int c = cfg.base_channels;
    return {
        {3, c, 3, 1, 1, 1},          //
        {c, 2 * c, 3, 2, 1, 1},      // /2
        {2 * c, 4 * c, 3, 2, 1, 1},  // /4
        {4 * c, 4 * c, 3, 1, 2, 2},  // dilated context
        {4 * c, 2 * c, 3, 1, 1, 1},  //
        {2 * c, 1, 3, 1, 1, 1},      // logit head
    };
  }
  // Dilated-convolution encoder with a single-scale head, /4 output stride.
  return {
      {3, 64, 3, 2, 1, 1},      // /2
      {64, 64, 3, 1, 1, 1},     //
      {64, 128, 3, 2, 1, 1},    // /4
      {128, 128, 3, 1, 2, 2},   //
      {128, 256, 3, 1, 2, 2},   //
      {256, 256, 3, 1, 4, 4},   //
      {256, 1, 3, 1, 1, 1},     // logit head
  };
}

}  // namespace

TaskPredictor::TaskPredictor(const PredictorConfig& cfg)
    : cfg_(cfg), up_(Upsample::Mode::bilinear, 4) {
  if (cfg.resolution % 4 != 0) throw ConfigError("predictor resolution must be divisible by 4");
  if (cfg.base_channels < 1) throw ConfigError("predictor base_channels must be positive");
  const auto spec = backbone_spec(cfg);
  Rng rng(cfg.params_init);
  int idx = 0;
  for (const auto& s : spec) {
    convs_.emplace_back("predictor.conv" + std::to_string(++idx), s.in_c, s.out_c, s.k, s.stride, s.pad,
                        s.dil);
    convs_.back().init(rng);
  }
  acts_.assign(convs_.size() - 1, LeakyRelu(0.0));
}

Tensor TaskPredictor::predict(const Tensor& image) {
  if (image.c != 3 || image.h != cfg_.resolution || image.w != cfg_.resolution)
    throw ShapeError("predict: expected 3x" + std::to_string(cfg_.resolution) + "x" +
                     std::to_string(cfg_.resolution) + " image, got " + std::to_string(image.c) + "x" +
                     std::to_string(image.h) + "x" + std::to_string(image.w));
  Tensor x = image;
  for (size_t i = 0; i < convs_.size(); ++i) {
    x = convs_[i].forward(x);
    if (i + 1 < convs_.size()) x = acts_[i].forward(x);
  }
  x = up_.forward(x);
  return sigmoid_.forward(x);
}

Tensor TaskPredictor::backward(const Tensor& d_saliency, bool param_grads) {
  Tensor g = sigmoid_.backward(d_saliency);
  g = up_.backward(g);
  for (size_t i = convs_.size(); i-- > 0;) {
    if (i + 1 < convs_.size()) g = acts_[i].backward(g);
    g = convs_[i].backward(g, param_grads);
  }
  return g;
}

ParamGroup TaskPredictor::params() {
  ParamGroup group;
  for (Conv2d& c : convs_) {
    group.push_back(&c.weight);
    group.push_back(&c.bias);
  }
  return group;
}

Tensor binarize(const Tensor& saliency, double tau) {
  if (tau < 0.0 || tau > 1.0) throw ConfigError("binarize: tau must lie in [0, 1]");
  Tensor out(saliency.c, saliency.h, saliency.w);
  for (long i = 0; i < saliency.size(); ++i) out.v[i] = saliency.v[i] >= tau ? 1.0 : 0.0;
  return out;
}

}  // namespace apl
