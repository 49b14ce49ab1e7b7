#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace polybert::cli {

inline constexpr const char* kArtifactVersion = "0.1.0";

/// Every subcommand writes one manifest next to its outputs: the resolved
/// configuration, input digests, and seed are enough to rerun it.
struct RunManifest {
  std::string subcommand;
  std::map<std::string, std::string> resolved_config;
  std::vector<std::pair<std::string, std::string>> input_digests;  // path, fnv64 hex
  std::uint64_t seed = 0;
  bool seed_set = false;
};

void add_input_digest(RunManifest& manifest, const std::string& path);
void write_manifest(const RunManifest& manifest, const std::string& path);

}  // namespace polybert::cli
