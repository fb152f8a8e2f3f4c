#include "apl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>

#include "apl/checkpoint.hpp"

namespace apl {

namespace {

inline double clamp_prob(double p, double eps) {
  return p < eps ? eps : (p > 1.0 - eps ? 1.0 - eps : p);
}
inline bool is_clamped(double p, double eps) { return p < eps || p > 1.0 - eps; }

std::string format_line(long iter, const Trainer::IterLosses& l, double lr_pred, double lr_pace) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "iter=%ld Ll=%.6f Lu=%.6f Lpg=%.6f Lpw=%.6f meanV=%.6f lr_pred=%.17g lr_pace=%.17g",
                iter, l.ll, l.lu, l.lpg, l.lpw, l.mean_v, lr_pred, lr_pace);
  return buf;
}

}  // namespace

AblationMode ablation_from_string(const std::string& s) {
  if (s == "full") return AblationMode::full;
  if (s == "only_labeled") return AblationMode::only_labeled;
  if (s == "no_pace_loss") return AblationMode::no_pace_loss;
  if (s == "pixel_gan" || s == "pixelgan") return AblationMode::pixel_gan;
  if (s == "no_vstar") return AblationMode::no_vstar;
  if (s == "spl") return AblationMode::spl;
  throw ConfigError("unknown ablation mode: " + s);
}

std::string to_string(AblationMode m) {
  switch (m) {
    case AblationMode::full: return "full";
    case AblationMode::only_labeled: return "only_labeled";
    case AblationMode::no_pace_loss: return "no_pace_loss";
    case AblationMode::pixel_gan: return "pixel_gan";
    case AblationMode::no_vstar: return "no_vstar";
    case AblationMode::spl: return "spl";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (total_iterations <= 0) throw ConfigError("total_iterations must be positive");
  if (warmup_iterations < 0 || warmup_iterations >= total_iterations)
    throw ConfigError("warmup_iterations must lie in [0, total_iterations)");
  if (batch_labeled < 1 || batch_unlabeled < 1) throw ConfigError("batch sizes must be >= 1");
  if (predictor_lr <= 0.0 || pace_lr <= 0.0 || gsm_lr <= 0.0)
    throw ConfigError("learning rates must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0, 1)");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (poly_power <= 0.0) throw ConfigError("poly_power must be positive");
  if (log_every <= 0) throw ConfigError("log_every must be positive");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  loss.validate();
  if (predictor.resolution % 4 != 0) throw ConfigError("resolution must be divisible by 4");
  const bool needs_gsm =
      mode == AblationMode::full || mode == AblationMode::no_vstar || mode == AblationMode::pixel_gan;
  if (needs_gsm && predictor.resolution % 16 != 0)
    throw ConfigError("resolution must be divisible by 16 for the pace-generator");
  if (mode == AblationMode::spl && spl.lambda > 0.0) spl.validate();
}

nlohmann::json to_json(const TrainConfig& cfg) {
  return {{"total_iterations", cfg.total_iterations},
          {"warmup_iterations", cfg.warmup_iterations},
          {"batch_labeled", cfg.batch_labeled},
          {"batch_unlabeled", cfg.batch_unlabeled},
          {"predictor_lr", cfg.predictor_lr},
          {"momentum", cfg.momentum},
          {"weight_decay", cfg.weight_decay},
          {"pace_lr", cfg.pace_lr},
          {"gsm_lr", cfg.gsm_lr},
          {"poly_power", cfg.poly_power},
          {"beta", cfg.loss.beta},
          {"eta", cfg.loss.eta},
          {"eps", cfg.loss.eps},
          {"seed", cfg.seed},
          {"predictor", to_json(cfg.predictor)},
          {"pace", to_json(cfg.pace)},
          {"mode", to_string(cfg.mode)},
          {"spl_kind", to_string(cfg.spl.kind)},
          {"spl_lambda", cfg.spl.lambda},
          {"spl_lambda_growth", cfg.spl.lambda_growth},
          {"non_saturating", cfg.non_saturating},
          {"refresh", cfg.refresh == TrainConfig::Refresh::per_batch ? "per_batch" : "per_epoch"},
          {"log_every", cfg.log_every},
          {"checkpoint_every", cfg.checkpoint_every}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.total_iterations = j.at("total_iterations").get<long>();
  cfg.warmup_iterations = j.at("warmup_iterations").get<long>();
  cfg.batch_labeled = j.at("batch_labeled").get<int>();
  cfg.batch_unlabeled = j.at("batch_unlabeled").get<int>();
  cfg.predictor_lr = j.at("predictor_lr").get<double>();
  cfg.momentum = j.at("momentum").get<double>();
  cfg.weight_decay = j.at("weight_decay").get<double>();
  cfg.pace_lr = j.at("pace_lr").get<double>();
  cfg.gsm_lr = j.at("gsm_lr").get<double>();
  cfg.poly_power = j.at("poly_power").get<double>();
  cfg.loss.beta = j.at("beta").get<double>();
  cfg.loss.eta = j.at("eta").get<double>();
  cfg.loss.eps = j.at("eps").get<double>();
  cfg.seed = j.at("seed").get<uint64_t>();
  cfg.predictor = predictor_config_from_json(j.at("predictor"));
  cfg.pace = pace_config_from_json(j.at("pace"));
  cfg.mode = ablation_from_string(j.at("mode").get<std::string>());
  cfg.spl.kind = spl_kind_from_string(j.at("spl_kind").get<std::string>());
  cfg.spl.lambda = j.at("spl_lambda").get<double>();
  cfg.spl.lambda_growth = j.at("spl_lambda_growth").get<double>();
  cfg.non_saturating = j.at("non_saturating").get<bool>();
  cfg.refresh = j.at("refresh").get<std::string>() == "per_epoch" ? TrainConfig::Refresh::per_epoch
                                                                  : TrainConfig::Refresh::per_batch;
  cfg.log_every = j.at("log_every").get<long>();
  cfg.checkpoint_every = j.at("checkpoint_every").get<long>();
  return cfg;
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

Trainer::Trainer(Split split, TrainConfig cfg, std::vector<Sample> eval_set)
    : split_(std::move(split)),
      cfg_(std::move(cfg)),
      eval_set_(std::move(eval_set)),
      pred_opt_(cfg_.momentum, cfg_.weight_decay),
      rng_(cfg_.seed) {
  cfg_.validate();
  if (split_.labeled.empty()) throw ConfigError("training requires at least one labeled sample");

  predictor_ = std::make_unique<TaskPredictor>(cfg_.predictor);
  if (!cfg_.predictor.init_weights.empty()) {
    const LoadedCheckpoint ckpt = read_checkpoint(cfg_.predictor.init_weights);
    fill_params(ckpt, "psi", predictor_->params());
  }
  if (cfg_.mode == AblationMode::full || cfg_.mode == AblationMode::no_vstar)
    pace_ = std::make_unique<PaceGenerator>(cfg_.pace);
  else if (cfg_.mode == AblationMode::pixel_gan)
    pixelgan_ = std::make_unique<PixelGan>(cfg_.pace);

  labeled_order_.resize(split_.labeled.size());
  std::iota(labeled_order_.begin(), labeled_order_.end(), 0);
  std::shuffle(labeled_order_.begin(), labeled_order_.end(), rng_);
  unlabeled_order_.resize(split_.unlabeled.size());
  std::iota(unlabeled_order_.begin(), unlabeled_order_.end(), 0);
  if (!unlabeled_order_.empty()) std::shuffle(unlabeled_order_.begin(), unlabeled_order_.end(), rng_);

  spl_lambda_ = cfg_.spl.lambda;
  spl_lambda_ready_ = cfg_.mode != AblationMode::spl || cfg_.spl.lambda > 0.0;
}

bool Trainer::uses_adversary() const {
  return (cfg_.mode == AblationMode::full || cfg_.mode == AblationMode::no_vstar ||
          cfg_.mode == AblationMode::pixel_gan) &&
         cfg_.loss.beta > 0.0;
}

bool Trainer::uses_pw() const {
  return cfg_.mode == AblationMode::full || cfg_.mode == AblationMode::no_vstar;
}

std::vector<int> Trainer::draw_labeled_batch() {
  std::vector<int> batch;
  batch.reserve(cfg_.batch_labeled);
  for (int i = 0; i < cfg_.batch_labeled; ++i) {
    if (labeled_pos_ >= labeled_order_.size()) {
      labeled_pos_ = 0;
      std::shuffle(labeled_order_.begin(), labeled_order_.end(), rng_);
    }
    batch.push_back(labeled_order_[labeled_pos_++]);
  }
  return batch;
}

std::vector<int> Trainer::draw_unlabeled_batch() {
  std::vector<int> batch;
  if (split_.unlabeled.empty()) return batch;
  ++unlabeled_draws_;
  batch.reserve(cfg_.batch_unlabeled);
  for (int i = 0; i < cfg_.batch_unlabeled; ++i) {
    if (unlabeled_pos_ >= unlabeled_order_.size()) {
      unlabeled_pos_ = 0;
      std::shuffle(unlabeled_order_.begin(), unlabeled_order_.end(), rng_);
      on_unlabeled_epoch();
    }
    batch.push_back(unlabeled_order_[unlabeled_pos_++]);
  }
  return batch;
}

void Trainer::on_unlabeled_epoch() {
  if (cfg_.mode == AblationMode::spl && spl_lambda_ready_) spl_lambda_ *= cfg_.spl.lambda_growth;
  refresh_cache_.clear();
}

void Trainer::maybe_autoinit_spl_lambda(const std::vector<Tensor>& saliency,
                                        const std::vector<Tensor>& pseudo) {
  if (spl_lambda_ready_) return;
  // Set lambda so the median per-pixel loss gets weight 0.5 under the
  // linear soft rule: 1 - median/lambda = 0.5.
  std::vector<double> losses;
  for (size_t b = 0; b < saliency.size(); ++b) {
    const Tensor& t = saliency[b];
    const Tensor& y = pseudo[b];
    for (long i = 0; i < t.size(); ++i) {
      const double p = clamp_prob(t.v[i], cfg_.loss.eps);
      losses.push_back(-((1.0 - y.v[i]) * std::log(1.0 - p) + y.v[i] * std::log(p)));
    }
  }
  if (losses.empty()) return;
  std::nth_element(losses.begin(), losses.begin() + losses.size() / 2, losses.end());
  const double median = losses[losses.size() / 2];
  spl_lambda_ = std::max(2.0 * median, 1e-6);
  spl_lambda_ready_ = true;
  if (metrics_) *metrics_ << "# spl lambda auto-initialized to " << spl_lambda_ << "\n";
}

Tensor Trainer::infer_weights(const Tensor& saliency, const Tensor& pseudo) {
  switch (cfg_.mode) {
    case AblationMode::full:
    case AblationMode::no_vstar:
      return pace_->weigh(saliency);
    case AblationMode::pixel_gan:
      return pixelgan_->forward(saliency);
    case AblationMode::spl: {
      Tensor per_pixel(saliency.c, saliency.h, saliency.w);
      for (long i = 0; i < saliency.size(); ++i) {
        const double p = clamp_prob(saliency.v[i], cfg_.loss.eps);
        per_pixel.v[i] = -((1.0 - pseudo.v[i]) * std::log(1.0 - p) + pseudo.v[i] * std::log(p));
      }
      SplScheme scheme = cfg_.spl;
      scheme.lambda = spl_lambda_;
      return spl_pace_step(per_pixel, scheme);
    }
    case AblationMode::no_pace_loss:
    case AblationMode::only_labeled:
      return Tensor(saliency.c, saliency.h, saliency.w, 1.0);
  }
  return Tensor(saliency.c, saliency.h, saliency.w, 1.0);
}

Trainer::Inferred Trainer::infer_step(const std::vector<int>& unlabeled_indices) {
  Inferred inf;
  inf.indices = unlabeled_indices;
  for (int idx : unlabeled_indices) {
    inf.saliency.push_back(predictor_->predict(split_.unlabeled[idx].image));
    inf.pseudo.push_back(binarize(inf.saliency.back(), 0.5));
  }
  maybe_autoinit_spl_lambda(inf.saliency, inf.pseudo);
  const bool cache = cfg_.refresh == TrainConfig::Refresh::per_epoch;
  for (size_t b = 0; b < inf.saliency.size(); ++b) {
    const int idx = unlabeled_indices[b];
    if (cache) {
      auto it = refresh_cache_.find(idx);
      if (it == refresh_cache_.end()) {
        Tensor weights = infer_weights(inf.saliency[b], inf.pseudo[b]);
        it = refresh_cache_.emplace(idx, std::make_pair(inf.pseudo[b], std::move(weights))).first;
      }
      inf.pseudo[b] = it->second.first;
      inf.weights.push_back(it->second.second);
    } else {
      inf.weights.push_back(infer_weights(inf.saliency[b], inf.pseudo[b]));
    }
  }
  return inf;
}

// Discriminator ascent on L^{p_g} (Eq. 8 / warmup stage 1). The predictor is
// only read; its parameters receive no gradient.
void Trainer::pace_ascent(const std::vector<int>& labeled_indices, const Inferred* inferred, long t) {
  const double eps = cfg_.loss.eps;
  const double inv_l = 1.0 / static_cast<double>(labeled_indices.size());
  const size_t n_u = inferred ? inferred->saliency.size() : 0;
  const double inv_u = n_u > 0 ? cfg_.loss.eta / static_cast<double>(n_u) : 0.0;
  double value = 0.0;

  zero_grads(predictor_->params());  // this stage must leave psi gradient-free
  if (pace_) {
    zero_grads(pace_->gsm_params());
    zero_grads(pace_->pw_params());
    auto discriminate = [&](const Tensor& mask, double coeff, bool real) {
      const GsmOutput out = pace_->gsm_forward(mask);
      const double p = out.p_real();
      const double pc = clamp_prob(p, eps);
      value += real ? coeff * std::log(pc) : coeff * std::log(1.0 - pc);
      // Gradient of -L (Adam minimizes; ascent on L).
      double d_p = 0.0;
      if (!is_clamped(p, eps)) d_p = real ? -coeff / pc : coeff / (1.0 - pc);
      const auto pg = out.p_real_grad();
      pace_->gsm_backward({d_p * pg[0], d_p * pg[1]}, true);
    };
    for (int idx : labeled_indices) {
      const Sample& s = split_.labeled[idx];
      discriminate(*s.mask, inv_l, true);
      discriminate(predictor_->predict(s.image), inv_l, false);
    }
    for (size_t b = 0; b < n_u; ++b) discriminate(inferred->saliency[b], inv_u, false);
    gsm_opt_.step(pace_->gsm_params(), lr_at(t, cfg_.gsm_lr, cfg_.total_iterations, cfg_.poly_power));
  } else if (pixelgan_) {
    zero_grads(pixelgan_->params());
    auto discriminate = [&](const Tensor& mask, double coeff, bool real) {
      const Tensor conf = pixelgan_->forward(mask);
      Tensor d_conf(conf.c, conf.h, conf.w, 0.0);
      for (long i = 0; i < conf.size(); ++i) {
        const double p = clamp_prob(conf.v[i], eps);
        value += real ? coeff * std::log(p) : coeff * std::log(1.0 - p);
        if (!is_clamped(conf.v[i], eps)) d_conf.v[i] = real ? -coeff / p : coeff / (1.0 - p);
      }
      pixelgan_->backward(d_conf, true);
    };
    for (int idx : labeled_indices) {
      const Sample& s = split_.labeled[idx];
      discriminate(*s.mask, inv_l, true);
      discriminate(predictor_->predict(s.image), inv_l, false);
    }
    for (size_t b = 0; b < n_u; ++b) discriminate(inferred->saliency[b], inv_u, false);
    gsm_opt_.step(pixelgan_->params(), lr_at(t, cfg_.gsm_lr, cfg_.total_iterations, cfg_.poly_power));
  }
  last_.lpg = value;
}

void Trainer::update_pace(const std::vector<int>& labeled_indices, const Inferred& inferred, long t) {
  pace_ascent(labeled_indices, &inferred, t);
}

// Joint descent of psi (and phi_v when the pixel-weighting branch trains):
// L^l + L^u + beta * (adversarial fooling terms) + beta * L^{p_w}.
// The discriminator is frozen; it conducts mask gradients only.
void Trainer::predictor_step(const std::vector<int>& labeled_indices, const Inferred* inferred, long t,
                             bool include_pw) {
  const double eps = cfg_.loss.eps;
  const double beta = cfg_.loss.beta;
  const bool adversary = uses_adversary();
  const double inv_l = 1.0 / static_cast<double>(labeled_indices.size());

  zero_grads(predictor_->params());
  if (pace_) {
    zero_grads(pace_->gsm_params());
    zero_grads(pace_->pw_params());
  }
  if (pixelgan_) zero_grads(pixelgan_->params());

  double ll_total = 0.0, lu_total = 0.0, lpw_total = 0.0;
  double v_sum = 0.0;
  long v_count = 0;

  // Adds the beta-scaled "fool the discriminator" gradient to d_saliency.
  // The minimized term is scale*log(1 - P(T)) as written, or -scale*log(P(T))
  // in the opt-in non-saturating variant.
  auto add_fooling_grad = [&](const Tensor& saliency, double scale, Tensor& d_saliency) {
    if (pace_) {
      const GsmOutput out = pace_->gsm_forward(saliency);
      const double p = out.p_real();
      const double pc = clamp_prob(p, eps);
      double d_p = 0.0;
      if (!is_clamped(p, eps)) d_p = cfg_.non_saturating ? -scale / pc : -scale / (1.0 - pc);
      const auto pg = out.p_real_grad();
      const Tensor d_mask = pace_->gsm_backward({d_p * pg[0], d_p * pg[1]}, /*param_grads=*/false);
      for (long i = 0; i < d_saliency.size(); ++i) d_saliency.v[i] += d_mask.v[i];
    } else if (pixelgan_) {
      const Tensor conf = pixelgan_->forward(saliency);
      Tensor d_conf(conf.c, conf.h, conf.w, 0.0);
      for (long i = 0; i < conf.size(); ++i) {
        if (is_clamped(conf.v[i], eps)) continue;
        const double p = clamp_prob(conf.v[i], eps);
        d_conf.v[i] = cfg_.non_saturating ? -scale / p : -scale / (1.0 - p);
      }
      const Tensor d_mask = pixelgan_->backward(d_conf, /*param_grads=*/false);
      for (long i = 0; i < d_saliency.size(); ++i) d_saliency.v[i] += d_mask.v[i];
    }
  };

  for (int idx : labeled_indices) {
    const Sample& s = split_.labeled[idx];
    const Tensor saliency = predictor_->predict(s.image);
    Tensor d_saliency(saliency.c, saliency.h, saliency.w, 0.0);

    Tensor d_ce(saliency.c, saliency.h, saliency.w, 0.0);
    ll_total += inv_l * losses::labeled_loss(saliency, *s.mask, eps, &d_ce);
    for (long i = 0; i < d_saliency.size(); ++i) d_saliency.v[i] += inv_l * d_ce.v[i];

    if (adversary) add_fooling_grad(saliency, beta * inv_l, d_saliency);

    if (include_pw && pace_) {
      // Supervised pixel-weighting update. Prediction and features enter as
      // constants; gradients reach phi_v only.
      if (cfg_.mode == AblationMode::no_vstar) {
        const Tensor ones(saliency.c, saliency.h, saliency.w, 1.0);
        const Tensor zeros(saliency.c, saliency.h, saliency.w, 0.0);
        {
          const GsmOutput gt_out = pace_->gsm_forward(*s.mask);
          const Tensor pw = pace_->pw_forward(gt_out.features);
          Tensor d_pw(pw.c, pw.h, pw.w, 0.0);
          lpw_total += inv_l * losses::pixel_weight_loss(pw, ones, eps, &d_pw);
          for (double& g : d_pw.v) g *= beta * inv_l;
          pace_->pw_backward(d_pw);
        }
        {
          const GsmOutput pred_out = pace_->gsm_forward(saliency);
          const Tensor pw = pace_->pw_forward(pred_out.features);
          Tensor d_pw(pw.c, pw.h, pw.w, 0.0);
          lpw_total += inv_l * losses::pixel_weight_loss(pw, zeros, eps, &d_pw);
          for (double& g : d_pw.v) g *= beta * inv_l;
          pace_->pw_backward(d_pw);
        }
      } else {
        const Tensor v_star = losses::reliability_target(saliency, *s.mask);
        const GsmOutput out = pace_->gsm_forward(saliency);
        const Tensor pw = pace_->pw_forward(out.features);
        Tensor d_pw(pw.c, pw.h, pw.w, 0.0);
        lpw_total += inv_l * losses::pixel_weight_loss(pw, v_star, eps, &d_pw);
        for (double& g : d_pw.v) g *= beta * inv_l;
        pace_->pw_backward(d_pw);
      }
    }
    predictor_->backward(d_saliency, true);
  }

  if (inferred && !inferred->indices.empty()) {
    const double inv_u = 1.0 / static_cast<double>(inferred->indices.size());
    for (size_t b = 0; b < inferred->indices.size(); ++b) {
      const Sample& s = split_.unlabeled[inferred->indices[b]];
      const Tensor saliency = predictor_->predict(s.image);
      Tensor d_saliency(saliency.c, saliency.h, saliency.w, 0.0);

      Tensor d_ce(saliency.c, saliency.h, saliency.w, 0.0);
      lu_total +=
          inv_u * losses::unlabeled_loss(saliency, inferred->pseudo[b], inferred->weights[b], eps, &d_ce);
      for (long i = 0; i < d_saliency.size(); ++i) d_saliency.v[i] += inv_u * d_ce.v[i];

      if (adversary) add_fooling_grad(saliency, beta * cfg_.loss.eta * inv_u, d_saliency);

      v_sum += inferred->weights[b].sum();
      v_count += inferred->weights[b].size();
      predictor_->backward(d_saliency, true);
    }
  }

  pred_opt_.step(predictor_->params(), lr_at(t, cfg_.predictor_lr, cfg_.total_iterations, cfg_.poly_power));
  if (include_pw && pace_)
    pw_opt_.step(pace_->pw_params(), lr_at(t, cfg_.pace_lr, cfg_.total_iterations, cfg_.poly_power));

  last_.ll = ll_total;
  last_.lu = lu_total;
  last_.lpw = lpw_total;
  last_.mean_v = v_count > 0 ? v_sum / static_cast<double>(v_count) : 1.0;
}

void Trainer::update_predictor(const std::vector<int>& labeled_indices, const Inferred& inferred,
                               long t) {
  predictor_step(labeled_indices, &inferred, t, uses_pw());
}

void Trainer::run_warmup_iteration(long t) {
  const std::vector<int> batch = draw_labeled_batch();
  last_labeled_batch_ = batch;
  last_unlabeled_batch_.clear();
  last_ = IterLosses{};
  if (uses_adversary()) pace_ascent(batch, nullptr, t);
  predictor_step(batch, nullptr, t, /*include_pw=*/false);
  last_.lu = 0.0;
  last_.lpw = 0.0;
  last_.mean_v = 1.0;  // reliability weights start as ones
}

void Trainer::run_apl_iteration(long t) {
  const std::vector<int> labeled = draw_labeled_batch();
  last_labeled_batch_ = labeled;
  last_unlabeled_batch_.clear();
  last_ = IterLosses{};
  if (cfg_.mode == AblationMode::only_labeled || split_.unlabeled.empty()) {
    if (uses_adversary()) pace_ascent(labeled, nullptr, t);
    predictor_step(labeled, nullptr, t, uses_pw());
    return;
  }
  const std::vector<int> unlabeled = draw_unlabeled_batch();
  last_unlabeled_batch_ = unlabeled;
  const Inferred inferred = infer_step(unlabeled);
  if (uses_adversary()) update_pace(labeled, inferred, t);
  update_predictor(labeled, inferred, t);
}

void Trainer::check_finite(long t, const std::vector<int>& labeled_indices,
                           const std::vector<int>& unlabeled_indices) {
  const bool ok = std::isfinite(last_.ll) && std::isfinite(last_.lu) && std::isfinite(last_.lpg) &&
                  std::isfinite(last_.lpw);
  if (ok) return;
  std::string dump = "non-finite loss at iteration " + std::to_string(t) + "\n";
  char buf[160];
  std::snprintf(buf, sizeof(buf), "Ll=%g Lu=%g Lpg=%g Lpw=%g\n", last_.ll, last_.lu, last_.lpg,
                last_.lpw);
  dump += buf;
  dump += "labeled batch:";
  for (int i : labeled_indices) dump += " " + split_.labeled[i].id;
  dump += "\nunlabeled batch:";
  for (int i : unlabeled_indices) dump += " " + split_.unlabeled[i].id;
  dump += "\n";
  if (run_dir_) {
    std::ofstream out(*run_dir_ / "diagnostic_dump.txt");
    out << dump;
  }
  std::cerr << dump;
  throw TrainingAbort("non-finite loss at iteration " + std::to_string(t));
}

void Trainer::log_line(long t) {
  if (!metrics_) return;
  const double lrp = lr_at(t, cfg_.predictor_lr, cfg_.total_iterations, cfg_.poly_power);
  const double lrg = lr_at(t, cfg_.pace_lr, cfg_.total_iterations, cfg_.poly_power);
  *metrics_ << format_line(t, last_, lrp, lrg) << "\n";
}

void Trainer::eval_line(long t) {
  if (!metrics_ || eval_set_.empty()) return;
  const EvalReport report = evaluate([this](const Tensor& img) { return predictor_->predict(img); },
                                     eval_set_);
  char buf[128];
  std::snprintf(buf, sizeof(buf), "eval iter=%ld max_f=%.6f mae=%.6f", t, report.max_f, report.mae);
  *metrics_ << buf << "\n";
}

void Trainer::write_checkpoint(long t) {
  if (!run_dir_) return;
  std::vector<CheckpointSection> sections;
  sections.push_back({"psi", predictor_->params()});
  if (pace_) {
    sections.push_back({"phi_g", pace_->gsm_params()});
    sections.push_back({"phi_v", pace_->pw_params()});
  }
  if (pixelgan_) sections.push_back({"phi_g", pixelgan_->params()});
  save_checkpoint(*run_dir_ / ("ckpt_" + std::to_string(t)), to_json(cfg_), sections);
}

TrainStats Trainer::train() {
  TrainStats stats;
  for (long t = 0; t < cfg_.total_iterations; ++t) {
    if (t < cfg_.warmup_iterations)
      run_warmup_iteration(t);
    else
      run_apl_iteration(t);
    check_finite(t, last_labeled_batch_, last_unlabeled_batch_);
    if (t % cfg_.log_every == 0) log_line(t);
    if (cfg_.checkpoint_every > 0 && (t + 1) % cfg_.checkpoint_every == 0 &&
        (t + 1) < cfg_.total_iterations) {
      write_checkpoint(t + 1);
      eval_line(t + 1);
    }
    ++stats.iterations_run;
  }

  // Terminal state line: schedule fully decayed.
  if (metrics_) {
    const long T = cfg_.total_iterations;
    *metrics_ << format_line(T, last_, lr_at(T, cfg_.predictor_lr, T, cfg_.poly_power),
                             lr_at(T, cfg_.pace_lr, T, cfg_.poly_power))
              << "\n";
  }
  write_checkpoint(cfg_.total_iterations);

  if (!eval_set_.empty()) {
    const EvalReport report = evaluate([this](const Tensor& img) { return predictor_->predict(img); },
                                       eval_set_);
    stats.final_max_f = report.max_f;
    stats.final_mae = report.mae;
    if (metrics_) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "final iter=%ld\neval dataset=heldout max_f=%.6f mae=%.6f",
                    cfg_.total_iterations, report.max_f, report.mae);
      *metrics_ << buf << "\n";
    }
  }
  if (!split_.unlabeled.empty()) {
    stats.final_audit = audit_pseudo_labels(
        [this](const Tensor& img) { return predictor_->predict(img); }, split_.unlabeled);
    if (metrics_) {
      char buf[128];
      std::snprintf(buf, sizeof(buf), "audit accuracy=%.6f iou=%.6f", stats.final_audit.accuracy,
                    stats.final_audit.mean_iou);
      *metrics_ << buf << "\n";
    }
  }
  return stats;
}

}  // namespace apl
