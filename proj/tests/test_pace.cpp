#include <cmath>

#include "doctest.h"

#include "apl/losses.hpp"
#include "apl/pace.hpp"
#include "test_util.hpp"

using namespace apl;
using apltest::random_binary_mask;
using apltest::random_tensor;

namespace {
PaceConfig small_pace(uint64_t seed = 2, int channels = 4) {
  PaceConfig cfg;
  cfg.base_channels = channels;
  cfg.params_init = seed;
  return cfg;
}
}  // namespace

TEST_CASE("gsm feature pyramid halves exactly and logits have length 2") {
  PaceGenerator pace(small_pace());
  Rng rng(1);
  const Tensor mask = random_tensor(1, 64, 64, rng);
  const GsmOutput out = pace.gsm_forward(mask);
  REQUIRE(out.features.size() == 4);
  const int sizes[4] = {32, 16, 8, 4};
  for (int k = 0; k < 4; ++k) {
    CHECK(out.features[k].h == sizes[k]);
    CHECK(out.features[k].w == sizes[k]);
    CHECK(out.features[k].c == small_pace().base_channels << k);
  }
  // softmax of the two logits sums to one
  const double p = out.p_real();
  CHECK(p >= 0.0);
  CHECK(p <= 1.0);
  const double e0 = std::exp(out.logits[0]), e1 = std::exp(out.logits[1]);
  CHECK(e1 / (e0 + e1) == doctest::Approx(p).epsilon(1e-6));
}

TEST_CASE("default pace width follows the documented 64..512 stack") {
  PaceConfig cfg;  // defaults
  CHECK(cfg.base_channels == 64);
  PaceGenerator pace(cfg);
  Rng rng(5);
  const Tensor mask = random_tensor(1, 32, 32, rng);
  const GsmOutput out = pace.gsm_forward(mask);
  CHECK(out.features[0].c == 64);
  CHECK(out.features[1].c == 128);
  CHECK(out.features[2].c == 256);
  CHECK(out.features[3].c == 512);
}

TEST_CASE("gsm rejects sizes not divisible by 16") {
  PaceGenerator pace(small_pace());
  CHECK_THROWS_AS(pace.gsm_forward(Tensor(1, 40, 40)), ShapeError);
  CHECK_THROWS_AS(pace.gsm_forward(Tensor(3, 32, 32)), ShapeError);
}

TEST_CASE("pw output shape/range and feature-count validation") {
  PaceGenerator pace(small_pace());
  Rng rng(3);
  const Tensor mask = random_tensor(1, 64, 64, rng);
  const GsmOutput out = pace.gsm_forward(mask);
  const Tensor weights = pace.pw_forward(out.features);
  CHECK(weights.c == 1);
  CHECK(weights.h == 64);
  CHECK(weights.w == 64);
  for (double v : weights.v) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  std::vector<Tensor> short_list(out.features.begin(), out.features.begin() + 3);
  CHECK_THROWS_AS(pace.pw_forward(short_list), ShapeError);
}

TEST_CASE("weigh equals the composition bitwise and ignores the logits head") {
  PaceGenerator pace(small_pace(11));
  Rng rng(4);
  const Tensor mask = random_tensor(1, 32, 32, rng);
  const Tensor composed = pace.pw_forward(pace.gsm_forward(mask).features);
  const Tensor weighed = pace.weigh(mask);
  CHECK(weighed.v == composed.v);

  // perturbing the fully connected head must not change the weight map
  PaceGenerator perturbed(small_pace(11));
  ParamGroup params = perturbed.gsm_params();
  for (Param* p : params)
    if (p->name.find("head") != std::string::npos)
      for (double& w : p->value) w += 1.0;
  const Tensor weighed2 = perturbed.weigh(mask);
  CHECK(weighed2.v == weighed.v);
}

TEST_CASE("pace gradcheck: L^{p_g} w.r.t. phi_g") {
  PaceGenerator pace(small_pace(13));
  Rng rng(6);
  const Tensor real_mask = random_binary_mask(16, 16, rng);
  const Tensor fake_mask = random_tensor(1, 16, 16, rng);
  const double eps = 1e-7;

  auto value = [&]() {
    PaceGenerator probe = pace;
    const double p_real = probe.gsm_forward(real_mask).p_real();
    const double p_fake = probe.gsm_forward(fake_mask).p_real();
    losses::PaceAdversarialBatch batch;
    batch.p_gt = {p_real};
    batch.p_pred_labeled = {p_fake};
    return losses::pace_adversarial_loss(batch, 0.7, eps);
  };
  auto grads = [&]() {
    zero_grads(pace.gsm_params());
    {
      const GsmOutput out = pace.gsm_forward(real_mask);
      losses::PaceAdversarialBatch batch;
      batch.p_gt = {out.p_real()};
      batch.p_pred_labeled = {0.5};  // placeholder, gradient taken per term below
      const double d_p = 1.0 / std::max(out.p_real(), eps);
      const auto pg = out.p_real_grad();
      pace.gsm_backward({d_p * pg[0], d_p * pg[1]});
    }
    {
      const GsmOutput out = pace.gsm_forward(fake_mask);
      const double d_p = -1.0 / std::max(1.0 - out.p_real(), eps);
      const auto pg = out.p_real_grad();
      pace.gsm_backward({d_p * pg[0], d_p * pg[1]});
    }
  };
  const auto res = apltest::check_param_grads(pace.gsm_params(), value, grads, 60, 1e-4, rng);
  CHECK(res.max_rel_err < 1e-3);
}

TEST_CASE("pace gradcheck: L^{p_w} w.r.t. phi_v") {
  PaceGenerator pace(small_pace(17));
  Rng rng(8);
  const Tensor mask = random_tensor(1, 16, 16, rng);
  const Tensor target = random_tensor(1, 16, 16, rng, 0.1, 0.9);
  const double eps = 1e-7;

  auto value = [&]() {
    PaceGenerator probe = pace;
    const Tensor pw = probe.pw_forward(probe.gsm_forward(mask).features);
    return losses::pixel_weight_loss(pw, target, eps);
  };
  auto grads = [&]() {
    zero_grads(pace.pw_params());
    const Tensor pw = pace.pw_forward(pace.gsm_forward(mask).features);
    Tensor d(pw.c, pw.h, pw.w, 0.0);
    losses::pixel_weight_loss(pw, target, eps, &d);
    pace.pw_backward(d);
  };
  const auto res = apltest::check_param_grads(pace.pw_params(), value, grads, 60, 1e-4, rng);
  CHECK(res.max_rel_err < 1e-3);
}

TEST_CASE("gsm_backward without param_grads leaves phi_g gradients untouched") {
  PaceGenerator pace(small_pace(19));
  Rng rng(9);
  const Tensor mask = random_tensor(1, 16, 16, rng);
  zero_grads(pace.gsm_params());
  const GsmOutput out = pace.gsm_forward(mask);
  const Tensor d_mask = pace.gsm_backward({0.3, -0.3}, /*param_grads=*/false);
  CHECK(grads_all_zero(pace.gsm_params()));
  CHECK(d_mask.size() == mask.size());
  // and input gradients are still produced
  double norm = 0.0;
  for (double v : d_mask.v) norm += std::fabs(v);
  CHECK(norm > 0.0);
}

TEST_CASE("pixel gan emits full-resolution confidences") {
  PixelGan gan(small_pace(21));
  Rng rng(10);
  const Tensor mask = random_tensor(1, 32, 32, rng);
  const Tensor conf = gan.forward(mask);
  CHECK(conf.c == 1);
  CHECK(conf.h == 32);
  CHECK(conf.w == 32);
  for (double v : conf.v) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}
