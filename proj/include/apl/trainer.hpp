#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "apl/data.hpp"
#include "apl/eval.hpp"
#include "apl/losses.hpp"
#include "apl/optim.hpp"
#include "apl/pace.hpp"
#include "apl/predictor.hpp"
#include "apl/spl.hpp"

namespace apl {

// Training variants: the full objective plus the ablations and the
// classical self-paced baselines that replace the learned pace.
enum class AblationMode { full, only_labeled, no_pace_loss, pixel_gan, no_vstar, spl };

AblationMode ablation_from_string(const std::string& s);
std::string to_string(AblationMode m);

struct TrainConfig {
  long total_iterations = 24500;
  long warmup_iterations = 2000;
  int batch_labeled = 8;
  int batch_unlabeled = 8;

  double predictor_lr = 2.5e-4;  // momentum SGD
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double pace_lr = 1e-4;  // PW branch, Adam
  double gsm_lr = 1e-4;   // GSM branch / discriminator, Adam
  double poly_power = 0.9;

  losses::LossConfig loss;  // beta, eta, eps
  uint64_t seed = 1;

  PredictorConfig predictor;
  PaceConfig pace;

  AblationMode mode = AblationMode::full;
  SplScheme spl{SplKind::hard_l1, 0.0, 1.1};  // lambda <= 0 requests auto-init
  bool non_saturating = false;                // opt-in -log(P) generator loss

  enum class Refresh { per_batch, per_epoch };
  Refresh refresh = Refresh::per_batch;

  long log_every = 100;
  long checkpoint_every = 0;  // 0 = final checkpoint only

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct TrainStats {
  long iterations_run = 0;
  double final_max_f = -1.0;  // filled when an eval set was provided
  double final_mae = -1.0;
  PseudoAudit final_audit;  // filled when unlabeled data exists
};

// The APL schedule: warmup under the labeled-only GAN objective, then per
// iteration pseudo-label/weight inference, a discriminator ascent step and
// a joint predictor/pixel-weighting descent step. Sequential and
// deterministic under the config seed.
class Trainer {
 public:
  Trainer(Split split, TrainConfig cfg, std::vector<Sample> eval_set = {});

  TrainStats train();

  // --- stage API, exposed for tests ---

  struct Inferred {
    std::vector<int> indices;      // into the unlabeled set
    std::vector<Tensor> saliency;  // T(X^u)
    std::vector<Tensor> pseudo;    // binarized at 0.5
    std::vector<Tensor> weights;   // reliability maps, detached
  };

  void run_warmup_iteration(long t);
  Inferred infer_step(const std::vector<int>& unlabeled_indices);
  void update_pace(const std::vector<int>& labeled_indices, const Inferred& inferred, long t);
  void update_predictor(const std::vector<int>& labeled_indices, const Inferred& inferred, long t);
  void run_apl_iteration(long t);

  std::vector<int> draw_labeled_batch();
  std::vector<int> draw_unlabeled_batch();

  struct IterLosses {
    double ll = 0.0, lu = 0.0, lpg = 0.0, lpw = 0.0, mean_v = 1.0;
  };
  const IterLosses& last_losses() const { return last_; }

  TaskPredictor& predictor() { return *predictor_; }
  PaceGenerator* pace() { return pace_.get(); }
  PixelGan* pixel_gan() { return pixelgan_.get(); }
  const Split& split() const { return split_; }
  const TrainConfig& config() const { return cfg_; }
  double spl_lambda() const { return spl_lambda_; }

  // How many unlabeled batches were ever drawn (data-access audit).
  long unlabeled_draws() const { return unlabeled_draws_; }

  void set_metrics_stream(std::ostream* os) { metrics_ = os; }
  void set_run_dir(std::filesystem::path dir) { run_dir_ = std::move(dir); }

 private:
  bool uses_adversary() const;
  bool uses_pw() const;
  void predictor_step(const std::vector<int>& labeled_indices, const Inferred* inferred, long t,
                      bool include_pw);
  void pace_ascent(const std::vector<int>& labeled_indices, const Inferred* inferred, long t);
  Tensor infer_weights(const Tensor& saliency, const Tensor& pseudo);
  void maybe_autoinit_spl_lambda(const std::vector<Tensor>& saliency, const std::vector<Tensor>& pseudo);
  void on_unlabeled_epoch();
  void check_finite(long t, const std::vector<int>& labeled_indices,
                    const std::vector<int>& unlabeled_indices);
  void log_line(long t);
  void write_checkpoint(long t);
  void eval_line(long t);

  Split split_;
  TrainConfig cfg_;
  std::vector<Sample> eval_set_;

  std::unique_ptr<TaskPredictor> predictor_;
  std::unique_ptr<PaceGenerator> pace_;
  std::unique_ptr<PixelGan> pixelgan_;

  SgdMomentum pred_opt_;
  Adam gsm_opt_;
  Adam pw_opt_;

  Rng rng_;
  std::vector<int> labeled_order_, unlabeled_order_;
  size_t labeled_pos_ = 0, unlabeled_pos_ = 0;
  long unlabeled_draws_ = 0;
  std::vector<int> last_labeled_batch_, last_unlabeled_batch_;

  double spl_lambda_ = 0.0;
  bool spl_lambda_ready_ = false;
  std::map<int, std::pair<Tensor, Tensor>> refresh_cache_;  // idx -> (pseudo, weights)

  IterLosses last_;
  std::ostream* metrics_ = nullptr;
  std::optional<std::filesystem::path> run_dir_;
};

}  // namespace apl
