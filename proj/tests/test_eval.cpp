#include <algorithm>
#include <cmath>

#include "doctest.h"

#include "apl/eval.hpp"
#include "test_util.hpp"

using namespace apl;
using apltest::random_binary_mask;
using apltest::random_tensor;

namespace {

Tensor make2x2(std::initializer_list<double> vals) {
  Tensor t(1, 2, 2);
  std::copy(vals.begin(), vals.end(), t.v.begin());
  return t;
}

std::vector<Sample> samples_from(const std::vector<std::pair<Tensor, Tensor>>& pairs) {
  std::vector<Sample> out;
  int i = 0;
  for (const auto& [pred, gt] : pairs) {
    Sample s;
    s.id = "s" + std::to_string(i++);
    s.image = Tensor(3, pred.h, pred.w, 0.0);
    // stash the prediction in the red channel so the predict fn can recover it
    std::copy(pred.v.begin(), pred.v.end(), s.image.v.begin());
    s.mask = gt;
    out.push_back(std::move(s));
  }
  return out;
}

Tensor red_channel(const Tensor& image) {
  Tensor t(1, image.h, image.w);
  std::copy(image.v.begin(), image.v.begin() + t.size(), t.v.begin());
  return t;
}

}  // namespace

TEST_CASE("mae hand oracles") {
  const Tensor gt = make2x2({0, 1, 1, 0});
  CHECK(mae(gt, gt) == doctest::Approx(0.0));
  const Tensor half(1, 2, 2, 0.5);
  CHECK(mae(half, gt) == doctest::Approx(0.5));
  const Tensor pred = make2x2({0.2, 0.8, 1.0, 0.0});
  CHECK(mae(pred, gt) == doctest::Approx(0.1));
  CHECK_THROWS_AS(mae(Tensor(1, 3, 3), gt), ShapeError);
}

TEST_CASE("precision/recall/F at explicit thresholds") {
  const Tensor pred = make2x2({0.6, 0.4, 0.4, 0.6});
  const Tensor gt = make2x2({1, 0, 0, 1});
  {
    const PrPoint pr = precision_recall_at(pred, gt, 0.5);
    CHECK(pr.precision == doctest::Approx(1.0));
    CHECK(pr.recall == doctest::Approx(1.0));
    CHECK(f_beta(pr.precision, pr.recall) == doctest::Approx(1.0));
  }
  {
    const PrPoint pr = precision_recall_at(pred, gt, 0.3);
    CHECK(pr.precision == doctest::Approx(0.5));
    CHECK(pr.recall == doctest::Approx(1.0));
    CHECK(f_beta(pr.precision, pr.recall, 0.3) == doctest::Approx(1.3 * 0.5 / (0.3 * 0.5 + 1.0)));
    CHECK(f_beta(pr.precision, pr.recall, 0.3) == doctest::Approx(0.56522).epsilon(1e-4));
  }
  CHECK(f_beta(0.0, 0.0) == 0.0);
}

TEST_CASE("f curve: perfect prediction and all-zero prediction") {
  Rng rng(3);
  const Tensor gt = random_binary_mask(16, 16, rng);
  if (gt.sum() > 0) {
    const auto curve = f_measure_curve(gt, gt);
    CHECK(*std::max_element(curve.begin(), curve.end()) == doctest::Approx(1.0));
    // any threshold in (0,1] reproduces the mask exactly
    for (double tau : {0.25, 0.5, 1.0}) {
      const PrPoint pr = precision_recall_at(gt, gt, tau);
      CHECK(f_beta(pr.precision, pr.recall) == doctest::Approx(1.0));
    }
  }
  const Tensor zeros(1, 16, 16, 0.0);
  Tensor some_gt = random_binary_mask(16, 16, rng);
  some_gt.v[0] = 1.0;
  const auto curve = f_measure_curve(zeros, some_gt);
  // every rank threshold of an all-zero map selects everything (>= 0),
  // precision equals foreground fraction; F never reaches 1
  for (double f : curve) CHECK(f < 1.0);

  CHECK_THROWS_AS(f_measure_curve(zeros, Tensor(1, 16, 16, 0.0)), ConfigError);
}

TEST_CASE("evaluate: trivial dataset cases") {
  Rng rng(5);
  Tensor gt = random_binary_mask(8, 8, rng);
  gt.v[0] = 1.0;
  const auto samples = samples_from({{gt, gt}});
  const EvalReport report = evaluate(red_channel, samples);
  CHECK(report.max_f == doctest::Approx(1.0));
  CHECK(report.mae == doctest::Approx(0.0));

  // duplicating an image leaves the aggregate unchanged
  const auto doubled = samples_from({{gt, gt}, {gt, gt}});
  const EvalReport report2 = evaluate(red_channel, doubled);
  CHECK(report2.max_f == doctest::Approx(report.max_f));
  CHECK(report2.mae == doctest::Approx(report.mae));

  CHECK_THROWS_AS(evaluate(red_channel, {}), ConfigError);
}

TEST_CASE("max_f is invariant under strictly monotone rescaling") {
  Rng rng(7);
  std::vector<std::pair<Tensor, Tensor>> pairs;
  for (int i = 0; i < 4; ++i) {
    Tensor pred = random_tensor(1, 16, 16, rng);
    Tensor gt = random_binary_mask(16, 16, rng);
    gt.v[5] = 1.0;
    pairs.push_back({pred, gt});
  }
  const auto base_samples = samples_from(pairs);
  const double base = evaluate(red_channel, base_samples).max_f;

  // a family of strictly monotone maps on [0,1]
  std::vector<std::function<double(double)>> maps = {
      [](double x) { return x * x; },
      [](double x) { return std::sqrt(x); },
      [](double x) { return 0.5 + std::atan(8.0 * (x - 0.5)) / M_PI; },
      [](double x) { return x / (1.0 + x); },
      [](double x) { return std::exp(3.0 * x) / std::exp(3.0); },
      [](double x) { return 0.1 + 0.0001 * x; },
      [](double x) { return std::pow(x, 5.0); },
      [](double x) { return std::tanh(2.0 * x); },
      [](double x) { return x * 0.25; },
      [](double x) { return 1.0 / (1.0 + std::exp(-6.0 * (x - 0.3))); },
  };
  for (const auto& m : maps) {
    auto rescaled = pairs;
    for (auto& [pred, gt] : rescaled)
      for (double& v : pred.v) v = m(v);
    const double rescaled_f = evaluate(red_channel, samples_from(rescaled)).max_f;
    CHECK(std::fabs(rescaled_f - base) < 1e-9);
  }
}

TEST_CASE("aggregated metrics are permutation invariant") {
  Rng rng(9);
  std::vector<std::pair<Tensor, Tensor>> pairs;
  for (int i = 0; i < 6; ++i) {
    Tensor gt = random_binary_mask(8, 8, rng);
    gt.v[i] = 1.0;
    pairs.push_back({random_tensor(1, 8, 8, rng), gt});
  }
  auto samples = samples_from(pairs);
  const EvalReport a = evaluate(red_channel, samples);
  std::reverse(samples.begin(), samples.end());
  const EvalReport b = evaluate(red_channel, samples);
  CHECK(a.max_f == doctest::Approx(b.max_f).epsilon(1e-12));
  CHECK(a.mae == doctest::Approx(b.mae).epsilon(1e-12));
}

TEST_CASE("all-zero ground truth is skipped with a warning, not fatal") {
  Rng rng(11);
  Tensor good_gt = random_binary_mask(8, 8, rng);
  good_gt.v[0] = 1.0;
  auto samples = samples_from({{random_tensor(1, 8, 8, rng), good_gt},
                               {random_tensor(1, 8, 8, rng), Tensor(1, 8, 8, 0.0)}});
  const EvalReport report = evaluate(red_channel, samples);
  CHECK(report.images_used == 1);
  CHECK(report.images_skipped == 1);
}

TEST_CASE("per-image aggregation mode differs but stays in range") {
  Rng rng(13);
  std::vector<std::pair<Tensor, Tensor>> pairs;
  for (int i = 0; i < 3; ++i) {
    Tensor gt = random_binary_mask(8, 8, rng);
    gt.v[0] = 1.0;
    pairs.push_back({random_tensor(1, 8, 8, rng), gt});
  }
  EvalOptions opts;
  opts.aggregation = FAggregation::per_image;
  const EvalReport r = evaluate(red_channel, samples_from(pairs), opts);
  CHECK(r.max_f >= 0.0);
  CHECK(r.max_f <= 1.0);
}

TEST_CASE("pseudo-label audit") {
  Rng rng(15);
  // perfect predictor: stash gt in the red channel
  std::vector<Sample> unlabeled;
  for (int i = 0; i < 5; ++i) {
    Tensor gt = random_binary_mask(8, 8, rng);
    gt.v[0] = 1.0;
    Sample s;
    s.id = "u" + std::to_string(i);
    s.image = Tensor(3, 8, 8, 0.0);
    std::copy(gt.v.begin(), gt.v.end(), s.image.v.begin());
    s.hidden_mask = gt;
    unlabeled.push_back(std::move(s));
  }
  const PseudoAudit perfect = audit_pseudo_labels(red_channel, unlabeled);
  CHECK(perfect.accuracy == doctest::Approx(1.0));
  CHECK(perfect.mean_iou == doctest::Approx(1.0));

  const PseudoAudit constant_zero =
      audit_pseudo_labels([](const Tensor& img) { return Tensor(1, img.h, img.w, 0.0); }, unlabeled);
  CHECK(constant_zero.mean_iou == doctest::Approx(0.0));

  // random 0/1 predictions on balanced masks: accuracy concentrates near 0.5
  std::vector<Sample> balanced;
  for (int i = 0; i < 100; ++i) {
    Tensor gt(1, 10, 10, 0.0);
    for (int p = 0; p < 50; ++p) gt.v[p] = 1.0;
    Sample s;
    s.id = "b" + std::to_string(i);
    s.image = Tensor(3, 10, 10, 0.0);
    s.hidden_mask = gt;
    balanced.push_back(std::move(s));
  }
  Rng coin(99);
  const PseudoAudit random_audit = audit_pseudo_labels(
      [&coin](const Tensor& img) {
        Tensor t(1, img.h, img.w);
        for (double& v : t.v) v = uniform(coin, 0.0, 1.0) < 0.5 ? 0.0 : 1.0;
        return t;
      },
      balanced);
  CHECK(random_audit.accuracy == doctest::Approx(0.5).epsilon(0.1));
}
