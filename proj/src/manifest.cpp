#include "apl/manifest.hpp"

#include <openssl/evp.h>

#include <fstream>

#include "apl/common.hpp"

namespace apl {

std::string git_blob_sha1(const std::string& content) {
  const std::string blob = "blob " + std::to_string(content.size()) + '\0' + content;
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(blob.data(), blob.size(), digest, &len, EVP_sha1(), nullptr))
    throw std::runtime_error("sha1 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

void write_run_manifest(const std::filesystem::path& run_dir, const std::string& mode, uint64_t seed,
                        const nlohmann::json& config) {
  const std::string config_text = config.dump(2);
  {
    std::ofstream out(run_dir / "config.json");
    if (!out) throw ConfigError("cannot write config snapshot in " + run_dir.string());
    out << config_text << "\n";
  }
  nlohmann::json manifest;
  manifest["mode"] = mode;
  manifest["seed"] = seed;
  manifest["output_dir"] = run_dir.string();
  manifest["config"] = config;
  manifest["config_hash"] = git_blob_sha1(config_text);
  std::ofstream out(run_dir / "manifest.json");
  if (!out) throw ConfigError("cannot write manifest in " + run_dir.string());
  out << manifest.dump(2) << "\n";
}

}  // namespace apl
