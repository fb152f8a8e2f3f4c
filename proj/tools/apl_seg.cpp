// apl_seg: train / evaluate / infer / synthesize / compare for the
// few-cost saliency segmentation framework.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "apl/checkpoint.hpp"
#include "apl/data.hpp"
#include "apl/eval.hpp"
#include "apl/manifest.hpp"
#include "apl/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

void check_device() {
  const char* dev = std::getenv("APL_SEG_DEVICE");
  if (!dev || std::string(dev).empty() || std::string(dev) == "cpu") return;
  throw apl::ConfigError(std::string("APL_SEG_DEVICE=") + dev + " is not supported (cpu only)");
}

void prepare_out_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force)
      throw apl::ConfigError("output directory " + dir.string() + " exists; pass --force to reuse it");
  }
  fs::create_directories(dir);
}

// Flags shared by the commands that consume a dataset.
struct DataArgs {
  std::string data_root;
  bool synthetic = false;
  int synth_images = 500;
  int synth_size = 32;
  double synth_noise = 0.30;
  uint64_t seed = 1;
  int resolution = 0;  // 0 = profile default

  void add_to(CLI::App* cmd) {
    cmd->add_option("--data", data_root, "Dataset root with images/ and masks/ subdirectories");
    cmd->add_flag("--synthetic", synthetic, "Use the synthetic shape dataset instead of --data");
    cmd->add_option("--synth-images", synth_images, "Synthetic dataset size");
    cmd->add_option("--synth-size", synth_size, "Synthetic image edge length");
    cmd->add_option("--synth-noise", synth_noise, "Synthetic noise level");
    cmd->add_option("--seed", seed, "Random seed");
    cmd->add_option("--resolution", resolution, "Training resolution (square edge)");
  }

  int effective_resolution() const {
    if (resolution > 0) return resolution;
    return synthetic ? synth_size : 128;
  }

  std::vector<apl::Sample> load(int target_resolution) const {
    if (synthetic == data_root.empty())
      throw apl::ConfigError("exactly one of --data or --synthetic is required");
    if (synthetic) {
      apl::SyntheticConfig cfg;
      cfg.image_size = target_resolution;
      cfg.num_images = synth_images;
      cfg.noise_level = synth_noise;
      cfg.seed = seed;
      return apl::generate_synthetic(cfg);
    }
    apl::LoadOptions opts;
    opts.resolution = target_resolution;
    return apl::load_dataset(data_root, apl::DatasetLayout{}, opts);
  }

  // Held-out synthetic set drawn from a disjoint seed stream.
  std::vector<apl::Sample> load_heldout(int target_resolution, int count) const {
    apl::SyntheticConfig cfg;
    cfg.image_size = target_resolution;
    cfg.num_images = count;
    cfg.noise_level = synth_noise;
    cfg.seed = seed + 900001;
    return apl::generate_synthetic(cfg);
  }
};

struct TrainArgs {
  DataArgs data;
  std::string out_dir = "runs/latest";
  bool force = false;
  long iters = 0;       // 0 = profile default
  long warmup = -1;     // <0 = profile default
  int labeled = 0;
  double labeled_ratio = 0.0;
  double beta = -1.0, eta = -1.0;
  std::string pace = "apl";  // apl | spl:<kind> | pixelgan | none
  std::string mode;          // overrides pace mapping (ablation names)
  std::string backbone;
  double predictor_lr = 0.0, pace_lr = 0.0, gsm_lr = 0.0;
  int batch = 0;
  std::string refresh = "batch";
  long log_every = 0;
  long checkpoint_every = 0;
  bool non_saturating = false;
  double spl_lambda = 0.0;
  double spl_growth = 0.0;
  int pace_channels = 0;
  int predictor_channels = 0;
  long eval_images = 150;
};

// Desk-scale profile for synthetic runs: small nets, resolution 32, learning
// rates rescaled for pixel-sum losses at that resolution.
void apply_profile(apl::TrainConfig& cfg, bool synthetic, int resolution) {
  cfg.predictor.resolution = resolution;
  if (synthetic) {
    cfg.total_iterations = 2000;
    cfg.warmup_iterations = 400;
    cfg.predictor.base_channels = 16;
    cfg.pace.base_channels = 8;
    cfg.predictor_lr = 2.5e-3;
    cfg.pace_lr = 1e-3;
    cfg.gsm_lr = 1e-3;
    cfg.log_every = 100;
  }
}

apl::TrainConfig build_train_config(const TrainArgs& a) {
  apl::TrainConfig cfg;
  apply_profile(cfg, a.data.synthetic, a.data.effective_resolution());
  cfg.seed = a.data.seed;
  cfg.predictor.params_init = a.data.seed * 2 + 1;
  cfg.pace.params_init = a.data.seed * 2 + 2;

  std::string mode_name = a.mode;
  if (mode_name.empty()) {
    if (a.pace == "apl") mode_name = "full";
    else if (a.pace == "none") mode_name = "no_pace_loss";
    else if (a.pace == "pixelgan") mode_name = "pixel_gan";
    else if (a.pace.rfind("spl:", 0) == 0) mode_name = "spl";
    else throw apl::ConfigError("unknown --pace value: " + a.pace);
  }
  if (mode_name.rfind("spl:", 0) == 0) mode_name = "spl";
  cfg.mode = apl::ablation_from_string(mode_name);
  if (a.pace.rfind("spl:", 0) == 0) cfg.spl.kind = apl::spl_kind_from_string(a.pace.substr(4));
  if (a.mode.rfind("spl:", 0) == 0) cfg.spl.kind = apl::spl_kind_from_string(a.mode.substr(4));

  if (a.iters > 0) cfg.total_iterations = a.iters;
  if (a.warmup >= 0) cfg.warmup_iterations = a.warmup;
  if (cfg.warmup_iterations >= cfg.total_iterations)
    cfg.warmup_iterations = cfg.total_iterations / 5;
  if (a.beta >= 0.0) cfg.loss.beta = a.beta;
  if (a.eta >= 0.0) cfg.loss.eta = a.eta;
  if (!a.backbone.empty()) cfg.predictor.backbone = apl::backbone_from_string(a.backbone);
  if (a.predictor_lr > 0.0) cfg.predictor_lr = a.predictor_lr;
  if (a.pace_lr > 0.0) cfg.pace_lr = a.pace_lr;
  if (a.gsm_lr > 0.0) cfg.gsm_lr = a.gsm_lr;
  if (a.batch > 0) cfg.batch_labeled = cfg.batch_unlabeled = a.batch;
  if (a.log_every > 0) cfg.log_every = a.log_every;
  if (a.checkpoint_every > 0) cfg.checkpoint_every = a.checkpoint_every;
  if (a.spl_lambda > 0.0) cfg.spl.lambda = a.spl_lambda;
  if (a.spl_growth >= 1.0) cfg.spl.lambda_growth = a.spl_growth;
  if (a.pace_channels > 0) cfg.pace.base_channels = a.pace_channels;
  if (a.predictor_channels > 0) cfg.predictor.base_channels = a.predictor_channels;
  cfg.non_saturating = a.non_saturating;
  cfg.refresh = a.refresh == "epoch" ? apl::TrainConfig::Refresh::per_epoch
                                     : apl::TrainConfig::Refresh::per_batch;
  return cfg;
}

apl::Split build_split(const TrainArgs& a, const std::vector<apl::Sample>& samples) {
  apl::SplitConfig split_cfg;
  if (a.labeled > 0 && a.labeled_ratio > 0.0)
    throw apl::ConfigError("give either --labeled or --labeled-ratio, not both");
  if (a.labeled > 0) split_cfg.labeled_count = a.labeled;
  else split_cfg.labeled_ratio = a.labeled_ratio > 0.0 ? a.labeled_ratio : 0.1;
  split_cfg.seed = a.data.seed;
  return apl::make_split(samples, split_cfg);
}

int run_one_training(const TrainArgs& a, apl::TrainConfig cfg, const apl::Split& split,
                     const std::vector<apl::Sample>& eval_set, const fs::path& run_dir) {
  apl::write_run_manifest(run_dir, apl::to_string(cfg.mode), cfg.seed, apl::to_json(cfg));
  std::ofstream metrics(run_dir / "metrics.log");
  apl::Trainer trainer(split, cfg, eval_set);
  trainer.set_metrics_stream(&metrics);
  trainer.set_run_dir(run_dir);
  const apl::TrainStats stats = trainer.train();
  std::cout << "run " << run_dir.string() << " finished: iterations=" << stats.iterations_run;
  if (stats.final_max_f >= 0.0)
    std::cout << " max_f=" << stats.final_max_f << " mae=" << stats.final_mae;
  std::cout << "\n";
  return 0;
}

int cmd_train(const TrainArgs& a) {
  apl::TrainConfig cfg = build_train_config(a);
  const auto samples = a.data.load(cfg.predictor.resolution);  // validates roots before any mkdir
  const apl::Split split = build_split(a, samples);
  std::vector<apl::Sample> eval_set;
  if (a.data.synthetic && a.eval_images > 0)
    eval_set = a.data.load_heldout(cfg.predictor.resolution, static_cast<int>(a.eval_images));
  prepare_out_dir(a.out_dir, a.force);
  return run_one_training(a, cfg, split, eval_set, a.out_dir);
}

int cmd_compare(const TrainArgs& a, const std::vector<std::string>& modes, const std::string& format) {
  if (modes.empty()) throw apl::ConfigError("compare: at least one --modes entry required");
  apl::TrainConfig base_cfg = build_train_config(a);
  const auto samples = a.data.load(base_cfg.predictor.resolution);
  const apl::Split split = build_split(a, samples);
  std::vector<apl::Sample> eval_set;
  if (a.data.synthetic)
    eval_set = a.data.load_heldout(base_cfg.predictor.resolution, static_cast<int>(a.eval_images));
  else
    eval_set = split.unlabeled;  // hidden ground truth serves as the eval target
  prepare_out_dir(a.out_dir, a.force);

  json rows = json::array();
  for (const std::string& mode : modes) {
    apl::TrainConfig cfg = base_cfg;
    std::string name = mode;
    if (name.rfind("spl:", 0) == 0) {
      cfg.mode = apl::AblationMode::spl;
      cfg.spl.kind = apl::spl_kind_from_string(name.substr(4));
    } else {
      cfg.mode = apl::ablation_from_string(name);
    }
    const fs::path run_dir = fs::path(a.out_dir) / name;
    std::string slug = name;
    std::replace(slug.begin(), slug.end(), ':', '_');
    const fs::path dir = fs::path(a.out_dir) / slug;
    fs::create_directories(dir);
    apl::write_run_manifest(dir, name, cfg.seed, apl::to_json(cfg));
    std::ofstream metrics(dir / "metrics.log");
    apl::Trainer trainer(split, cfg, eval_set);
    trainer.set_metrics_stream(&metrics);
    trainer.set_run_dir(dir);
    const apl::TrainStats stats = trainer.train();
    rows.push_back({{"mode", name},
                    {"max_f", stats.final_max_f},
                    {"mae", stats.final_mae},
                    {"pseudo_accuracy", stats.final_audit.accuracy},
                    {"pseudo_iou", stats.final_audit.mean_iou}});
  }

  if (format == "json") {
    std::cout << rows.dump(2) << "\n";
  } else {
    std::printf("%-18s %8s %8s\n", "mode", "F_max", "MAE");
    for (const auto& r : rows)
      std::printf("%-18s %8.4f %8.4f\n", r.at("mode").get<std::string>().c_str(),
                  r.at("max_f").get<double>(), r.at("mae").get<double>());
  }
  std::ofstream table(fs::path(a.out_dir) / "comparison.json");
  table << rows.dump(2) << "\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  DataArgs data;
  std::string format = "table";
  std::string out_file;
  bool per_image_f = false;
};

int cmd_eval(const EvalArgs& a) {
  if (!fs::exists(a.checkpoint)) throw apl::ConfigError("missing checkpoint: " + a.checkpoint);
  const apl::LoadedCheckpoint ckpt = apl::read_checkpoint(a.checkpoint);
  const apl::PredictorConfig pcfg = apl::predictor_config_from_json(ckpt.config.at("predictor"));
  apl::TaskPredictor predictor(pcfg);
  apl::fill_params(ckpt, "psi", predictor.params());

  auto samples = a.data.load(pcfg.resolution);
  apl::EvalOptions opts;
  opts.aggregation = a.per_image_f ? apl::FAggregation::per_image : apl::FAggregation::dataset_level;
  apl::EvalReport report =
      apl::evaluate([&](const apl::Tensor& img) { return predictor.predict(img); }, samples, opts);
  report.dataset_id = a.data.synthetic ? "synthetic" : a.data.data_root;
  report.checkpoint_id = a.checkpoint;

  json j = {{"dataset", report.dataset_id}, {"checkpoint", report.checkpoint_id},
            {"max_f", report.max_f},        {"mae", report.mae},
            {"images", report.images_used}, {"skipped", report.images_skipped},
            {"precision", report.precision}, {"recall", report.recall}};
  if (a.format == "json") {
    std::cout << j.dump(2) << "\n";
  } else {
    std::printf("%-24s %8s %8s\n", "dataset", "F_max", "MAE");
    std::printf("%-24s %8.4f %8.4f\n", report.dataset_id.c_str(), report.max_f, report.mae);
  }
  if (!a.out_file.empty()) {
    std::ofstream out(a.out_file);
    out << j.dump(2) << "\n";
  }
  return 0;
}

struct InferArgs {
  std::string checkpoint;
  std::string images_dir;
  std::string out_dir = "maps";
  bool dump_weights = false;
  bool force = false;
};

int cmd_infer(const InferArgs& a) {
  if (!fs::exists(a.checkpoint)) throw apl::ConfigError("missing checkpoint: " + a.checkpoint);
  if (!fs::is_directory(a.images_dir)) throw apl::ConfigError("missing image directory: " + a.images_dir);
  const apl::LoadedCheckpoint ckpt = apl::read_checkpoint(a.checkpoint);
  const apl::PredictorConfig pcfg = apl::predictor_config_from_json(ckpt.config.at("predictor"));
  apl::TaskPredictor predictor(pcfg);
  apl::fill_params(ckpt, "psi", predictor.params());

  std::unique_ptr<apl::PaceGenerator> pace;
  if (a.dump_weights) {
    if (!ckpt.has_section("phi_v"))
      throw apl::ConfigError("checkpoint has no pace-generator; cannot --dump-weights");
    pace = std::make_unique<apl::PaceGenerator>(apl::pace_config_from_json(ckpt.config.at("pace")));
    apl::fill_params(ckpt, "phi_g", pace->gsm_params());
    apl::fill_params(ckpt, "phi_v", pace->pw_params());
  }

  prepare_out_dir(a.out_dir, a.force);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(a.images_dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());

  int ok = 0;
  for (const fs::path& f : files) {
    auto image = apl::read_image(f);
    if (!image) {
      std::cerr << "warning: cannot decode " << f << ", skipping\n";
      continue;
    }
    const apl::Tensor resized = apl::resize_image(*image, pcfg.resolution, pcfg.resolution);
    const apl::Tensor saliency = predictor.predict(resized);
    apl::write_gray_png(saliency, fs::path(a.out_dir) / (f.stem().string() + ".png"));
    if (pace) {
      const apl::Tensor weights = pace->weigh(saliency);
      apl::write_gray_png(weights, fs::path(a.out_dir) / (f.stem().string() + "_weights.png"));
    }
    ++ok;
  }
  if (ok == 0) throw apl::TrainingAbort("no input image could be processed");
  return 0;
}

struct SynthArgs {
  std::string out_dir;
  int images = 100;
  int size = 64;
  double noise = 0.30;
  uint64_t seed = 1;
  std::string shapes = "ellipse,rectangle,blob";
  bool force = false;
};

int cmd_synth(const SynthArgs& a) {
  apl::SyntheticConfig cfg;
  cfg.image_size = a.size;
  cfg.num_images = a.images;
  cfg.noise_level = a.noise;
  cfg.seed = a.seed;
  cfg.shape_kinds.clear();
  std::stringstream ss(a.shapes);
  std::string kind;
  while (std::getline(ss, kind, ',')) {
    if (kind == "ellipse") cfg.shape_kinds.insert(apl::ShapeKind::ellipse);
    else if (kind == "rectangle") cfg.shape_kinds.insert(apl::ShapeKind::rectangle);
    else if (kind == "blob") cfg.shape_kinds.insert(apl::ShapeKind::blob);
    else throw apl::ConfigError("unknown shape kind: " + kind);
  }
  const auto samples = apl::generate_synthetic(cfg);
  prepare_out_dir(a.out_dir, a.force);
  apl::export_dataset(samples, a.out_dir);
  std::cout << "wrote " << samples.size() << " samples to " << a.out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-cost saliency segmentation: adversarial-paced learning"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Key-value config file; command-line flags override it");

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "Train a model");
  train_args.data.add_to(train);
  train->add_option("--out", train_args.out_dir, "Run directory");
  train->add_flag("--force", train_args.force, "Reuse an existing run directory");
  train->add_option("--iters", train_args.iters, "Total iterations");
  train->add_option("--warmup", train_args.warmup, "Warmup iterations");
  train->add_option("--labeled", train_args.labeled, "Number of labeled images");
  train->add_option("--labeled-ratio", train_args.labeled_ratio, "Labeled fraction in (0,1]");
  train->add_option("--beta", train_args.beta, "Pace loss weight");
  train->add_option("--eta", train_args.eta, "Unlabeled adversarial weight");
  train->add_option("--pace", train_args.pace, "apl | spl:<kind> | pixelgan | none");
  train->add_option("--mode", train_args.mode, "Ablation mode (overrides --pace)");
  train->add_option("--backbone", train_args.backbone, "desk_small | deeplab_style");
  train->add_option("--predictor-lr", train_args.predictor_lr, "Predictor base LR");
  train->add_option("--pace-lr", train_args.pace_lr, "PW branch base LR");
  train->add_option("--gsm-lr", train_args.gsm_lr, "GSM/discriminator base LR");
  train->add_option("--batch", train_args.batch, "Batch size (labeled and unlabeled)");
  train->add_option("--refresh", train_args.refresh, "Pseudo-label refresh: batch | epoch");
  train->add_option("--log-every", train_args.log_every, "Metrics log cadence");
  train->add_option("--checkpoint-every", train_args.checkpoint_every, "Checkpoint cadence");
  train->add_flag("--non-saturating", train_args.non_saturating, "Use -log(P) generator loss");
  train->add_option("--spl-lambda", train_args.spl_lambda, "SPL age parameter (0 = auto)");
  train->add_option("--spl-growth", train_args.spl_growth, "SPL lambda growth per epoch");
  train->add_option("--pace-channels", train_args.pace_channels, "GSM stage-1 width");
  train->add_option("--predictor-channels", train_args.predictor_channels, "desk_small width");
  train->add_option("--eval-images", train_args.eval_images, "Held-out synthetic eval size");

  TrainArgs compare_args;
  std::vector<std::string> compare_modes;
  std::string compare_format = "table";
  CLI::App* compare = app.add_subcommand("compare", "Run ablation/SPL comparisons on one split");
  compare_args.data.add_to(compare);
  compare->add_option("--modes", compare_modes, "Modes: full,only_labeled,no_pace_loss,pixel_gan,no_vstar,spl:<kind>")
      ->delimiter(',');
  compare->add_option("--out", compare_args.out_dir, "Output directory");
  compare->add_flag("--force", compare_args.force, "Reuse an existing output directory");
  compare->add_option("--iters", compare_args.iters, "Total iterations");
  compare->add_option("--warmup", compare_args.warmup, "Warmup iterations");
  compare->add_option("--labeled", compare_args.labeled, "Number of labeled images");
  compare->add_option("--labeled-ratio", compare_args.labeled_ratio, "Labeled fraction");
  compare->add_option("--beta", compare_args.beta, "Pace loss weight");
  compare->add_option("--eta", compare_args.eta, "Unlabeled adversarial weight");
  compare->add_option("--batch", compare_args.batch, "Batch size");
  compare->add_option("--predictor-lr", compare_args.predictor_lr, "Predictor base LR");
  compare->add_option("--pace-lr", compare_args.pace_lr, "PW branch base LR");
  compare->add_option("--gsm-lr", compare_args.gsm_lr, "GSM/discriminator base LR");
  compare->add_option("--pace-channels", compare_args.pace_channels, "GSM stage-1 width");
  compare->add_option("--predictor-channels", compare_args.predictor_channels, "desk_small width");
  compare->add_option("--eval-images", compare_args.eval_images, "Held-out synthetic eval size");
  compare->add_option("--format", compare_format, "table | json");

  EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint file")->required();
  eval_args.data.add_to(eval);
  eval->add_option("--format", eval_args.format, "table | json");
  eval->add_option("--out", eval_args.out_file, "Also write the JSON report here");
  eval->add_flag("--per-image-f", eval_args.per_image_f, "Average per-image F instead of dataset-level");

  InferArgs infer_args;
  CLI::App* infer = app.add_subcommand("infer", "Dump saliency maps for a directory of images");
  infer->add_option("--checkpoint", infer_args.checkpoint, "Checkpoint file")->required();
  infer->add_option("--images", infer_args.images_dir, "Directory of input images")->required();
  infer->add_option("--out", infer_args.out_dir, "Output directory");
  infer->add_flag("--dump-weights", infer_args.dump_weights, "Also dump reliability weight maps");
  infer->add_flag("--force", infer_args.force, "Reuse an existing output directory");

  SynthArgs synth_args;
  CLI::App* synth = app.add_subcommand("synth", "Generate and export a synthetic dataset");
  synth->add_option("--out", synth_args.out_dir, "Output root")->required();
  synth->add_option("--images", synth_args.images, "Number of images");
  synth->add_option("--size", synth_args.size, "Image edge length");
  synth->add_option("--noise", synth_args.noise, "Noise level");
  synth->add_option("--seed", synth_args.seed, "Random seed");
  synth->add_option("--shapes", synth_args.shapes, "Comma list of ellipse,rectangle,blob");
  synth->add_flag("--force", synth_args.force, "Reuse an existing output directory");

  try {
    app.parse(argc, argv);
    check_device();
    if (*train) return cmd_train(train_args);
    if (*compare) return cmd_compare(compare_args, compare_modes, compare_format);
    if (*eval) return cmd_eval(eval_args);
    if (*infer) return cmd_infer(infer_args);
    if (*synth) return cmd_synth(synth_args);
    return kExitConfig;
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitConfig;
  } catch (const apl::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
