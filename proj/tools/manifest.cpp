#include "manifest.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "polybert/tokenizer.hpp"

namespace polybert::cli {

using json = nlohmann::json;

void add_input_digest(RunManifest& manifest, const std::string& path) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(tokenizer::fnv1a64_file(path)));
  manifest.input_digests.emplace_back(path, buf);
}

void write_manifest(const RunManifest& manifest, const std::string& path) {
  json j;
  j["artifact_version"] = kArtifactVersion;
  j["subcommand"] = manifest.subcommand;
  j["resolved_config"] = manifest.resolved_config;
  json inputs = json::array();
  for (const auto& [p, digest] : manifest.input_digests) {
    inputs.push_back(json{{"path", p}, {"fnv1a64", digest}});
  }
  j["inputs"] = inputs;
  if (manifest.seed_set) j["seed"] = manifest.seed;
  const auto now = std::chrono::system_clock::now();
  const auto t = std::chrono::system_clock::to_time_t(now);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  j["timestamp"] = stamp;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace polybert::cli
