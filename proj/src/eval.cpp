#include "apl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

namespace apl {

double mae(const Tensor& pred, const Tensor& gt) {
  require_same_shape(pred, gt, "mae");
  double s = 0.0;
  for (long i = 0; i < pred.size(); ++i) s += std::fabs(pred.v[i] - gt.v[i]);
  return s / static_cast<double>(pred.size());
}

PrPoint precision_recall_at(const Tensor& pred, const Tensor& gt, double tau) {
  require_same_shape(pred, gt, "precision_recall_at");
  long tp = 0, fp = 0, fn = 0;
  for (long i = 0; i < pred.size(); ++i) {
    const bool p = pred.v[i] >= tau;
    const bool g = gt.v[i] > 0.5;
    if (p && g) ++tp;
    else if (p && !g) ++fp;
    else if (!p && g) ++fn;
  }
  PrPoint out;
  out.precision = (tp + fp) > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  out.recall = (tp + fn) > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  return out;
}

double f_beta(double precision, double recall, double beta_sq) {
  const double denom = beta_sq * precision + recall;
  if (denom <= 0.0) return 0.0;
  return (1.0 + beta_sq) * precision * recall / denom;
}

std::array<double, kNumThresholds> image_thresholds(const Tensor& pred) {
  std::vector<double> sorted(pred.v);
  std::sort(sorted.begin(), sorted.end());
  std::array<double, kNumThresholds> taus{};
  const long n = static_cast<long>(sorted.size());
  for (int k = 0; k < kNumThresholds; ++k) {
    const long rank = (static_cast<long>(k) * (n - 1)) / (kNumThresholds - 1);
    taus[k] = sorted[rank];
  }
  return taus;
}

std::array<double, kNumThresholds> f_measure_curve(const Tensor& pred, const Tensor& gt, double beta_sq) {
  require_same_shape(pred, gt, "f_measure_curve");
  if (gt.sum() <= 0.0) throw ConfigError("f_measure_curve: ground truth has no positive pixel");
  const auto taus = image_thresholds(pred);
  std::array<double, kNumThresholds> f{};
  for (int k = 0; k < kNumThresholds; ++k) {
    const PrPoint pr = precision_recall_at(pred, gt, taus[k]);
    f[k] = f_beta(pr.precision, pr.recall, beta_sq);
  }
  return f;
}

EvalReport evaluate(const PredictFn& predict, const std::vector<Sample>& samples,
                    const EvalOptions& opts) {
  EvalReport report;
  report.precision.assign(kNumThresholds, 0.0);
  report.recall.assign(kNumThresholds, 0.0);
  report.f.assign(kNumThresholds, 0.0);

  double mae_sum = 0.0;
  for (const Sample& s : samples) {
    const Tensor* gt = s.mask ? &*s.mask : (s.hidden_mask ? &*s.hidden_mask : nullptr);
    if (!gt) continue;
    if (gt->sum() <= 0.0) {
      std::cerr << "warning: sample " << s.id << " has all-zero ground truth, excluded from F-measure\n";
      ++report.images_skipped;
      continue;
    }
    const Tensor pred = predict(s.image);
    require_same_shape(pred, *gt, "evaluate");
    mae_sum += mae(pred, *gt);
    const auto taus = image_thresholds(pred);
    for (int k = 0; k < kNumThresholds; ++k) {
      const PrPoint pr = precision_recall_at(pred, *gt, taus[k]);
      report.precision[k] += pr.precision;
      report.recall[k] += pr.recall;
      if (opts.aggregation == FAggregation::per_image)
        report.f[k] += f_beta(pr.precision, pr.recall, opts.beta_sq);
    }
    ++report.images_used;
  }
  if (report.images_used == 0) throw ConfigError("evaluate: no usable samples with ground truth");

  const double inv = 1.0 / report.images_used;
  for (int k = 0; k < kNumThresholds; ++k) {
    report.precision[k] *= inv;
    report.recall[k] *= inv;
    if (opts.aggregation == FAggregation::dataset_level)
      report.f[k] = f_beta(report.precision[k], report.recall[k], opts.beta_sq);
    else
      report.f[k] *= inv;
  }
  report.max_f = *std::max_element(report.f.begin(), report.f.end());
  report.mae = mae_sum * inv;
  return report;
}

PseudoAudit audit_pseudo_labels(const PredictFn& predict, const std::vector<Sample>& unlabeled) {
  PseudoAudit audit;
  long correct = 0, total = 0;
  double iou_sum = 0.0;
  int images = 0;
  for (const Sample& s : unlabeled) {
    const Tensor* gt = s.hidden_mask ? &*s.hidden_mask : (s.mask ? &*s.mask : nullptr);
    if (!gt) continue;
    const Tensor pred = predict(s.image);
    require_same_shape(pred, *gt, "audit_pseudo_labels");
    long tp = 0, fp = 0, fn = 0;
    for (long i = 0; i < pred.size(); ++i) {
      const bool p = pred.v[i] >= 0.5;
      const bool g = gt->v[i] > 0.5;
      if (p == g) ++correct;
      if (p && g) ++tp;
      else if (p && !g) ++fp;
      else if (!p && g) ++fn;
    }
    total += pred.size();
    const long uni = tp + fp + fn;
    iou_sum += uni > 0 ? static_cast<double>(tp) / uni : 1.0;
    ++images;
  }
  if (images == 0) return audit;
  audit.accuracy = static_cast<double>(correct) / static_cast<double>(total);
  audit.mean_iou = iou_sum / images;
  return audit;
}

}  // namespace apl
