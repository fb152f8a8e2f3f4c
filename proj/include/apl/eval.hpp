#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "apl/data.hpp"
#include "apl/tensor.hpp"

namespace apl {

constexpr int kNumThresholds = 256;

// Mean absolute error between a saliency map and a binary mask.
double mae(const Tensor& pred, const Tensor& gt);

struct PrPoint {
  double precision = 0.0;
  double recall = 0.0;
};

// Precision/recall of {pred >= tau} against gt.
PrPoint precision_recall_at(const Tensor& pred, const Tensor& gt, double tau);

// F_beta = (1 + b2) P R / (b2 P + R); 0 when P = R = 0.
double f_beta(double precision, double recall, double beta_sq = 0.3);

// 256 per-image thresholds taken at evenly spaced ranks of the prediction's
// own values. Rank-based thresholds make the F curve exactly invariant under
// strictly monotone rescaling of the predictions.
std::array<double, kNumThresholds> image_thresholds(const Tensor& pred);

// Per-image F curve over the rank thresholds. Requires gt to contain at
// least one positive pixel.
std::array<double, kNumThresholds> f_measure_curve(const Tensor& pred, const Tensor& gt,
                                                   double beta_sq = 0.3);

enum class FAggregation {
  dataset_level,  // average P and R over images per threshold, then F
  per_image,      // average per-image F values per threshold
};

struct EvalOptions {
  double beta_sq = 0.3;
  FAggregation aggregation = FAggregation::dataset_level;
};

struct EvalReport {
  double max_f = 0.0;
  double mae = 0.0;
  std::vector<double> precision;  // 256 aggregated values
  std::vector<double> recall;
  std::vector<double> f;
  int images_used = 0;
  int images_skipped = 0;  // all-zero ground truth
  std::string dataset_id;
  std::string checkpoint_id;
};

using PredictFn = std::function<Tensor(const Tensor& image)>;

// Aggregated report over samples carrying ground truth (mask, or hidden_mask
// for split-out unlabeled samples). All-zero-gt samples are skipped with a
// warning; an empty usable set is a configuration error.
EvalReport evaluate(const PredictFn& predict, const std::vector<Sample>& samples,
                    const EvalOptions& opts = {});

struct PseudoAudit {
  double accuracy = 0.0;
  double mean_iou = 0.0;
};

// Pixel accuracy and IoU of thresholded predictions against the hidden
// ground truth of unlabeled samples.
PseudoAudit audit_pseudo_labels(const PredictFn& predict, const std::vector<Sample>& unlabeled);

}  // namespace apl
