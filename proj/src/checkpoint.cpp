#include "apl/checkpoint.hpp"

#include <fstream>

namespace apl {

namespace {
constexpr char kMagic[] = "APLCKPT1";
}

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& config,
                     const std::vector<CheckpointSection>& sections) {
  nlohmann::json header;
  header["config"] = config;
  nlohmann::json jsections = nlohmann::json::array();
  for (const auto& s : sections) {
    nlohmann::json js;
    js["name"] = s.name;
    nlohmann::json params = nlohmann::json::array();
    for (const Param* p : s.params) params.push_back({{"name", p->name}, {"size", p->size()}});
    js["params"] = params;
    jsections.push_back(js);
  }
  header["sections"] = jsections;
  const std::string htext = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint " + path.string());
  out.write(kMagic, 8);
  const uint64_t hlen = htext.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  for (const auto& s : sections)
    for (const Param* p : s.params)
      out.write(reinterpret_cast<const char*>(p->value.data()),
                static_cast<std::streamsize>(p->value.size() * sizeof(double)));
  if (!out) throw ConfigError("failed while writing checkpoint " + path.string());
}

LoadedCheckpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read checkpoint " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != kMagic)
    throw ConfigError("not a checkpoint file: " + path.string());
  uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string htext(hlen, '\0');
  in.read(htext.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw ConfigError("truncated checkpoint header: " + path.string());
  const nlohmann::json header = nlohmann::json::parse(htext);

  LoadedCheckpoint ckpt;
  ckpt.config = header.at("config");
  for (const auto& js : header.at("sections")) {
    auto& section = ckpt.sections[js.at("name").get<std::string>()];
    for (const auto& jp : js.at("params")) {
      std::vector<double> values(jp.at("size").get<size_t>());
      in.read(reinterpret_cast<char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(double)));
      section[jp.at("name").get<std::string>()] = std::move(values);
    }
  }
  if (!in) throw ConfigError("truncated checkpoint payload: " + path.string());
  return ckpt;
}

void fill_params(const LoadedCheckpoint& ckpt, const std::string& section, const ParamGroup& params) {
  auto sit = ckpt.sections.find(section);
  if (sit == ckpt.sections.end()) throw ConfigError("checkpoint has no section '" + section + "'");
  for (Param* p : params) {
    auto pit = sit->second.find(p->name);
    if (pit == sit->second.end()) throw ConfigError("checkpoint misses parameter " + p->name);
    if (pit->second.size() != p->size())
      throw ConfigError("checkpoint parameter " + p->name + " has wrong size");
    p->value = pit->second;
  }
}

nlohmann::json to_json(const PredictorConfig& cfg) {
  return {{"backbone", to_string(cfg.backbone)},
          {"resolution", cfg.resolution},
          {"base_channels", cfg.base_channels},
          {"params_init", cfg.params_init},
          {"init_weights", cfg.init_weights}};
}

PredictorConfig predictor_config_from_json(const nlohmann::json& j) {
  PredictorConfig cfg;
  cfg.backbone = backbone_from_string(j.at("backbone").get<std::string>());
  cfg.resolution = j.at("resolution").get<int>();
  cfg.base_channels = j.at("base_channels").get<int>();
  cfg.params_init = j.at("params_init").get<uint64_t>();
  cfg.init_weights = j.value("init_weights", std::string());
  return cfg;
}

nlohmann::json to_json(const PaceConfig& cfg) {
  return {{"base_channels", cfg.base_channels},
          {"leaky_slope", cfg.leaky_slope},
          {"params_init", cfg.params_init}};
}

PaceConfig pace_config_from_json(const nlohmann::json& j) {
  PaceConfig cfg;
  cfg.base_channels = j.at("base_channels").get<int>();
  cfg.leaky_slope = j.at("leaky_slope").get<double>();
  cfg.params_init = j.at("params_init").get<uint64_t>();
  return cfg;
}

}  // namespace apl
