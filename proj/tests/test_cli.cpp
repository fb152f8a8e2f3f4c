#include <unistd.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"

#include "apl/checkpoint.hpp"
#include "apl/data.hpp"
#include "apl/predictor.hpp"

namespace fs = std::filesystem;

namespace {

std::string bin() {
  const char* b = std::getenv("APL_SEG_BIN");
  REQUIRE_MESSAGE(b != nullptr, "APL_SEG_BIN must point at the apl_seg binary");
  return b;
}

int run(const std::string& args, const std::string& stdout_file = "") {
  std::string cmd = bin() + " " + args + " 2>/dev/null";
  if (!stdout_file.empty()) cmd += " >" + stdout_file;
  else cmd += " >/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Workspace {
  fs::path root;
  Workspace() {
    root = fs::temp_directory_path() / ("apl_cli_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Workspace() { fs::remove_all(root); }
  std::string dir(const std::string& name) const { return (root / name).string(); }
};

const std::string kTinyTrain =
    " --iters 6 --warmup 2 --batch 2 --pace-channels 4 --predictor-channels 4 --eval-images 8"
    " --log-every 2";

}  // namespace

TEST_CASE("cli end-to-end: synth, train, eval, infer") {
  Workspace ws;

  // synth exports the canonical layout
  CHECK(run("synth --out " + ws.dir("data") + " --images 8 --size 32 --seed 3") == 0);
  CHECK(fs::exists(ws.root / "data" / "images"));
  CHECK(fs::exists(ws.root / "data" / "masks"));

  // train on the exported data
  const std::string run_dir = ws.dir("run1");
  CHECK(run("train --data " + ws.dir("data") + " --resolution 32 --labeled 3 --seed 1 --out " +
            run_dir + kTinyTrain) == 0);
  CHECK(fs::exists(fs::path(run_dir) / "manifest.json"));
  CHECK(fs::exists(fs::path(run_dir) / "config.json"));
  CHECK(fs::exists(fs::path(run_dir) / "metrics.log"));
  CHECK(fs::exists(fs::path(run_dir) / "ckpt_6"));

  // manifest carries the config hash
  const auto manifest = nlohmann::json::parse(slurp(fs::path(run_dir) / "manifest.json"));
  CHECK(manifest.at("config_hash").get<std::string>().size() == 40);

  // rerun without --force refuses, with --force succeeds
  CHECK(run("train --data " + ws.dir("data") + " --resolution 32 --labeled 3 --seed 1 --out " +
            run_dir + kTinyTrain) == 2);
  CHECK(run("train --data " + ws.dir("data") + " --resolution 32 --labeled 3 --seed 1 --out " +
            run_dir + " --force" + kTinyTrain) == 0);

  // eval: table and json formats, determinism across invocations
  const std::string ckpt = (fs::path(run_dir) / "ckpt_6").string();
  const std::string json_out = ws.dir("eval.json");
  CHECK(run("eval --checkpoint " + ckpt + " --data " + ws.dir("data") + " --format json", json_out) ==
        0);
  const auto report = nlohmann::json::parse(slurp(json_out));
  CHECK(report.at("max_f").get<double>() >= 0.0);
  CHECK(report.at("max_f").get<double>() <= 1.0);
  CHECK(report.at("precision").size() == 256);
  const std::string json_out2 = ws.dir("eval2.json");
  CHECK(run("eval --checkpoint " + ckpt + " --data " + ws.dir("data") + " --format json", json_out2) ==
        0);
  CHECK(slurp(json_out) == slurp(json_out2));

  // infer: one map per decodable input with matching stems
  const std::string maps = ws.dir("maps");
  CHECK(run("infer --checkpoint " + ckpt + " --images " + ws.dir("data") + "/images --out " + maps +
            " --dump-weights") == 0);
  int n_maps = 0, n_weights = 0;
  for (const auto& e : fs::directory_iterator(maps)) {
    const std::string name = e.path().filename().string();
    if (name.find("_weights") != std::string::npos) ++n_weights;
    else ++n_maps;
  }
  CHECK(n_maps == 8);
  CHECK(n_weights == 8);

  // round trip: a dumped map, re-read and binarized, matches binarize(predict)
  const apl::LoadedCheckpoint loaded = apl::read_checkpoint(ckpt);
  apl::TaskPredictor predictor(apl::predictor_config_from_json(loaded.config.at("predictor")));
  apl::fill_params(loaded, "psi", predictor.params());
  const auto images = apl::load_dataset(ws.dir("data"), apl::DatasetLayout{}, apl::LoadOptions{32});
  const apl::Tensor direct = predictor.predict(images[0].image);
  const auto reread = apl::read_gray(fs::path(maps) / (images[0].id + ".png"));
  REQUIRE(reread.has_value());
  double max_err = 0.0;
  for (long i = 0; i < direct.size(); ++i)
    max_err = std::max(max_err, std::fabs(direct.v[i] - reread->v[i]));
  CHECK(max_err <= 1.0 / 255.0 + 1e-9);
  const apl::Tensor bin_direct = apl::binarize(direct, 0.5);
  const apl::Tensor bin_reread = apl::binarize(*reread, 0.5);
  // quantization can flip only pixels within half a gray level of the threshold
  for (long i = 0; i < bin_direct.size(); ++i)
    if (bin_direct.v[i] != bin_reread.v[i]) CHECK(std::fabs(direct.v[i] - 0.5) <= 0.5 / 255.0 + 1e-9);
}

TEST_CASE("cli error contract") {
  Workspace ws;
  // missing data root: exit 2, run directory not created
  const std::string run_dir = ws.dir("never");
  CHECK(run("train --data /nonexistent_root --out " + run_dir + kTinyTrain) == 2);
  CHECK(!fs::exists(run_dir));

  // both or neither data source
  CHECK(run("train --out " + ws.dir("x") + kTinyTrain) == 2);

  // unknown compare mode
  CHECK(run("compare --synthetic --synth-images 8 --modes bogus --out " + ws.dir("cmp") + kTinyTrain) ==
        2);

  // unknown pace
  CHECK(run("train --synthetic --synth-images 8 --pace nonsense --out " + ws.dir("y") + kTinyTrain) ==
        2);

  // eval without checkpoint file
  CHECK(run("eval --checkpoint " + ws.dir("missing.ckpt") + " --synthetic --synth-images 4") == 2);

  // unsupported device
  const std::string cmd = "APL_SEG_DEVICE=cuda " + bin() + " synth --out " + ws.dir("dev") +
                          " --images 2 --size 32 >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  CHECK(WEXITSTATUS(status) == 2);
}

TEST_CASE("cli train --synthetic produces a checkpointed run; spl pace flag works") {
  Workspace ws;
  CHECK(run("train --synthetic --synth-images 10 --labeled 4 --seed 1 --out " + ws.dir("srun") +
            kTinyTrain) == 0);
  CHECK(fs::exists(ws.root / "srun" / "ckpt_6"));

  CHECK(run("train --synthetic --synth-images 10 --labeled 4 --seed 1 --pace spl:hard_l1 --out " +
            ws.dir("splrun") + kTinyTrain) == 0);
  const auto cfg = nlohmann::json::parse(slurp(ws.root / "splrun" / "config.json"));
  CHECK(cfg.at("mode").get<std::string>() == "spl");
  CHECK(cfg.at("spl_kind").get<std::string>() == "hard_l1");
}

TEST_CASE("cli compare emits one row per mode and is reproducible") {
  Workspace ws;
  const std::string base = "compare --synthetic --synth-images 12 --labeled 4 --seed 5 --modes "
                           "full,only_labeled --format json" +
                           kTinyTrain;
  CHECK(run(base + " --out " + ws.dir("cmp1")) == 0);
  CHECK(run(base + " --out " + ws.dir("cmp2")) == 0);
  const auto rows1 = nlohmann::json::parse(slurp(ws.root / "cmp1" / "comparison.json"));
  const auto rows2 = nlohmann::json::parse(slurp(ws.root / "cmp2" / "comparison.json"));
  REQUIRE(rows1.size() == 2);
  CHECK(rows1.at(0).at("mode") == "full");
  CHECK(rows1.at(1).at("mode") == "only_labeled");
  CHECK(rows1 == rows2);  // same seed, same split, identical table
}
