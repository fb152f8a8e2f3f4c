#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

namespace apl {

// Hash of a config snapshot, computed the way git hashes a blob:
// sha1("blob <len>\0" + content), hex-encoded.
std::string git_blob_sha1(const std::string& content);

// Writes `manifest.json` and the resolved `config.json` into a run
// directory so every run records exactly what produced it.
void write_run_manifest(const std::filesystem::path& run_dir, const std::string& mode, uint64_t seed,
                        const nlohmann::json& config);

}  // namespace apl
