#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "apl/nn.hpp"
#include "apl/pace.hpp"
#include "apl/predictor.hpp"

namespace apl {

// Binary checkpoint: a JSON header (config + per-section parameter manifest)
// followed by raw little-endian doubles. Sections are named parameter sets,
// conventionally "psi", "phi_g", "phi_v".
struct CheckpointSection {
  std::string name;
  ParamGroup params;
};

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& config,
                     const std::vector<CheckpointSection>& sections);

struct LoadedCheckpoint {
  nlohmann::json config;
  // section -> param name -> values
  std::map<std::string, std::map<std::string, std::vector<double>>> sections;

  bool has_section(const std::string& name) const { return sections.count(name) > 0; }
};

LoadedCheckpoint read_checkpoint(const std::filesystem::path& path);

// Copies stored values into a live parameter group; every param must be
// present with a matching size.
void fill_params(const LoadedCheckpoint& ckpt, const std::string& section, const ParamGroup& params);

// Config (de)serialization used by checkpoints and run manifests.
nlohmann::json to_json(const PredictorConfig& cfg);
PredictorConfig predictor_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PaceConfig& cfg);
PaceConfig pace_config_from_json(const nlohmann::json& j);

}  // namespace apl
