#include <cmath>
#include <cstring>
#include <sstream>

#include "doctest.h"

#include "apl/optim.hpp"
#include "apl/trainer.hpp"
#include "test_util.hpp"

using namespace apl;

namespace {

Split tiny_split(int total, int labeled, uint64_t seed = 1, double noise = 0.25) {
  SyntheticConfig cfg;
  cfg.image_size = 32;
  cfg.num_images = total;
  cfg.noise_level = noise;
  cfg.seed = seed;
  SplitConfig scfg;
  scfg.labeled_count = labeled;
  scfg.seed = seed;
  return make_split(generate_synthetic(cfg), scfg);
}

TrainConfig tiny_cfg(AblationMode mode, long total = 12, long warmup = 4) {
  TrainConfig cfg;
  cfg.total_iterations = total;
  cfg.warmup_iterations = warmup;
  cfg.batch_labeled = 2;
  cfg.batch_unlabeled = 2;
  cfg.predictor.resolution = 32;
  cfg.predictor.base_channels = 4;
  cfg.predictor.params_init = 3;
  cfg.pace.base_channels = 4;
  cfg.pace.params_init = 4;
  cfg.predictor_lr = 1e-3;
  cfg.pace_lr = 1e-3;
  cfg.gsm_lr = 1e-3;
  cfg.mode = mode;
  cfg.log_every = 4;
  return cfg;
}

std::vector<std::vector<double>> snapshot(const ParamGroup& params) {
  std::vector<std::vector<double>> out;
  for (const Param* p : params) out.push_back(p->value);
  return out;
}

bool bitwise_equal(const std::vector<std::vector<double>>& snap, const ParamGroup& params) {
  for (size_t i = 0; i < params.size(); ++i)
    if (std::memcmp(snap[i].data(), params[i]->value.data(), snap[i].size() * sizeof(double)) != 0)
      return false;
  return true;
}

}  // namespace

TEST_CASE("alternation hygiene: frozen sets are bitwise unchanged, no cross gradients") {
  Trainer trainer(tiny_split(12, 4), tiny_cfg(AblationMode::full));
  const auto labeled = trainer.draw_labeled_batch();
  const auto unlabeled = trainer.draw_unlabeled_batch();
  const auto inferred = trainer.infer_step(unlabeled);

  // update_predictor: phi_g frozen, no gradient reaches it
  const auto phi_g_before = snapshot(trainer.pace()->gsm_params());
  trainer.update_predictor(labeled, inferred, 0);
  CHECK(bitwise_equal(phi_g_before, trainer.pace()->gsm_params()));
  CHECK(grads_all_zero(trainer.pace()->gsm_params()));

  // update_pace: psi and phi_v frozen, no gradient reaches them
  const auto psi_before = snapshot(trainer.predictor().params());
  const auto phi_v_before = snapshot(trainer.pace()->pw_params());
  trainer.update_pace(labeled, inferred, 1);
  CHECK(bitwise_equal(psi_before, trainer.predictor().params()));
  CHECK(bitwise_equal(phi_v_before, trainer.pace()->pw_params()));
  CHECK(grads_all_zero(trainer.pace()->pw_params()));
  CHECK(grads_all_zero(trainer.predictor().params()));
}

TEST_CASE("V and Y^u enter the predictor step as constants") {
  // with beta = 0 the pixel-weighting loss is scaled away; if V carried any
  // gradient path, phi_v or phi_g grads would be nonzero after the step
  TrainConfig cfg = tiny_cfg(AblationMode::full);
  cfg.loss.beta = 0.0;
  Trainer trainer(tiny_split(12, 4), cfg);
  const auto labeled = trainer.draw_labeled_batch();
  const auto unlabeled = trainer.draw_unlabeled_batch();
  const auto inferred = trainer.infer_step(unlabeled);
  trainer.update_predictor(labeled, inferred, 0);
  CHECK(grads_all_zero(trainer.pace()->gsm_params()));
  CHECK(grads_all_zero(trainer.pace()->pw_params()));

  // weights themselves are plain tensors in [0,1]
  for (const Tensor& v : inferred.weights)
    for (double x : v.v) {
      CHECK(x >= 0.0);
      CHECK(x <= 1.0);
    }
  // pseudo labels equal binarize(saliency)
  for (size_t b = 0; b < inferred.saliency.size(); ++b) {
    const Tensor expect = binarize(inferred.saliency[b], 0.5);
    CHECK(expect.v == inferred.pseudo[b].v);
  }
}

TEST_CASE("infer_step recomputes fresh values after parameter updates") {
  Trainer trainer(tiny_split(10, 4), tiny_cfg(AblationMode::full));
  const std::vector<int> idx = {0, 1};
  const auto first = trainer.infer_step(idx);
  const auto labeled = trainer.draw_labeled_batch();
  trainer.update_predictor(labeled, first, 0);
  const auto second = trainer.infer_step(idx);
  bool changed = false;
  for (size_t b = 0; b < first.saliency.size() && !changed; ++b)
    changed = first.saliency[b].v != second.saliency[b].v;
  CHECK(changed);
}

TEST_CASE("warmup leaves phi_v bitwise untouched") {
  Trainer trainer(tiny_split(10, 4), tiny_cfg(AblationMode::full));
  const auto phi_v_before = snapshot(trainer.pace()->pw_params());
  for (long t = 0; t < 4; ++t) trainer.run_warmup_iteration(t);
  CHECK(bitwise_equal(phi_v_before, trainer.pace()->pw_params()));
}

TEST_CASE("beta = 0 warmup is plain supervised training; overfit loss decreases monotonically") {
  Split split = tiny_split(10, 10, 5, 0.1);  // all labeled, the overfit set
  TrainConfig cfg = tiny_cfg(AblationMode::full, 40, 30);
  cfg.loss.beta = 0.0;
  cfg.batch_labeled = 10;  // full batch
  cfg.predictor_lr = 2e-5;
  Trainer trainer(split, cfg);
  std::vector<double> ll;
  for (long t = 0; t < 30; ++t) {
    trainer.run_warmup_iteration(t);
    ll.push_back(trainer.last_losses().ll);
  }
  for (size_t i = 1; i < ll.size(); ++i) CHECK(ll[i] <= ll[i - 1] + 1e-9);
  CHECK(ll.back() < ll.front());
}

TEST_CASE("metrics log: determinism and exact LR schedule") {
  TrainConfig cfg = tiny_cfg(AblationMode::full, 8, 2);
  cfg.log_every = 4;

  auto run = [&]() {
    std::ostringstream log;
    Trainer trainer(tiny_split(10, 4), cfg);
    trainer.set_metrics_stream(&log);
    trainer.train();
    return log.str();
  };
  const std::string a = run();
  const std::string b = run();
  CHECK(a == b);  // identical metrics logs under identical seed/config

  // parse the logged learning rates back and compare with lr_at exactly
  std::istringstream in(a);
  std::string line;
  int matched = 0;
  while (std::getline(in, line)) {
    const auto pos = line.find("lr_pred=");
    if (pos == std::string::npos || line.rfind("iter=", 0) != 0) continue;
    const long iter = std::strtol(line.c_str() + 5, nullptr, 10);
    const double lr = std::strtod(line.c_str() + pos + 8, nullptr);
    CHECK(lr == lr_at(iter, cfg.predictor_lr, cfg.total_iterations, cfg.poly_power));
    ++matched;
  }
  CHECK(matched >= 3);  // iter 0, mid, terminal
}

TEST_CASE("only_labeled never touches unlabeled data") {
  Trainer trainer(tiny_split(12, 4), tiny_cfg(AblationMode::only_labeled, 6, 2));
  trainer.train();
  CHECK(trainer.unlabeled_draws() == 0);
}

TEST_CASE("no_pace_loss weights are identically one") {
  Trainer trainer(tiny_split(12, 4), tiny_cfg(AblationMode::no_pace_loss));
  const auto inferred = trainer.infer_step({0, 1});
  for (const Tensor& v : inferred.weights)
    for (double x : v.v) CHECK(x == 1.0);
  CHECK(trainer.pace() == nullptr);
}

TEST_CASE("spl mode auto-initializes lambda and emits weights in range") {
  TrainConfig cfg = tiny_cfg(AblationMode::spl, 10, 2);
  cfg.spl.kind = SplKind::linear_soft;
  cfg.spl.lambda = 0.0;  // request auto-init
  Trainer trainer(tiny_split(12, 4), cfg);
  trainer.train();
  CHECK(trainer.spl_lambda() > 0.0);
}

TEST_CASE("pixel gan mode trains and yields confidence weights") {
  Trainer trainer(tiny_split(12, 4), tiny_cfg(AblationMode::pixel_gan, 6, 2));
  trainer.train();
  const auto inferred = trainer.infer_step({0, 1});
  for (const Tensor& v : inferred.weights)
    for (double x : v.v) {
      CHECK(x > 0.0);
      CHECK(x < 1.0);
    }
}

TEST_CASE("empty unlabeled set degenerates to supervised+adversarial training") {
  SyntheticConfig scfg;
  scfg.image_size = 32;
  scfg.num_images = 6;
  scfg.seed = 2;
  SplitConfig sp;
  sp.labeled_count = 6;
  sp.seed = 2;
  Split split = make_split(generate_synthetic(scfg), sp);
  CHECK(split.unlabeled.empty());
  Trainer trainer(split, tiny_cfg(AblationMode::full, 6, 2));
  const TrainStats stats = trainer.train();
  CHECK(stats.iterations_run == 6);
  CHECK(trainer.unlabeled_draws() == 0);
}

TEST_CASE("non-finite loss aborts with diagnostics") {
  Trainer trainer(tiny_split(10, 4), tiny_cfg(AblationMode::full, 4, 2));
  trainer.predictor().params()[0]->value[0] = std::nan("");
  CHECK_THROWS_AS(trainer.train(), TrainingAbort);
}

TEST_CASE("per-epoch refresh keeps pseudo labels stable within an epoch") {
  TrainConfig cfg = tiny_cfg(AblationMode::full, 8, 2);
  cfg.refresh = TrainConfig::Refresh::per_epoch;
  Trainer trainer(tiny_split(12, 4), cfg);
  const std::vector<int> idx = {0, 1};
  const auto first = trainer.infer_step(idx);
  const auto labeled = trainer.draw_labeled_batch();
  trainer.update_predictor(labeled, first, 0);
  const auto second = trainer.infer_step(idx);  // same epoch: cached pseudo/weights
  for (size_t b = 0; b < first.pseudo.size(); ++b) {
    CHECK(first.pseudo[b].v == second.pseudo[b].v);
    CHECK(first.weights[b].v == second.weights[b].v);
  }
}

TEST_CASE("config validation catches bad schedules") {
  TrainConfig cfg = tiny_cfg(AblationMode::full);
  cfg.warmup_iterations = cfg.total_iterations;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_cfg(AblationMode::full);
  cfg.predictor_lr = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_cfg(AblationMode::full);
  cfg.predictor.resolution = 24;  // not divisible by 16
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  // json round trip
  cfg = tiny_cfg(AblationMode::spl);
  cfg.spl.kind = SplKind::fraction;
  const TrainConfig back = train_config_from_json(to_json(cfg));
  CHECK(back.total_iterations == cfg.total_iterations);
  CHECK(back.spl.kind == cfg.spl.kind);
  CHECK(to_string(back.mode) == to_string(cfg.mode));
}
