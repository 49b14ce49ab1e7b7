#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "polybert/model.hpp"
#include "polybert/optim.hpp"

namespace polybert::checkpoint {

/// Optimizer state for one parameter group, keyed to the group's parameter
/// order.
struct OptStateBlob {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::int64_t step_count = 0;
};

/// Everything a checkpoint file holds: a JSON header (config, vocab hash,
/// tensor directory) followed by raw little-endian doubles.
struct Checkpoint {
  model::ModelConfig config;
  std::uint64_t vocab_hash = 0;
  std::int64_t step = 0;
  bool has_discriminator = false;
  std::string extra;  // free-form JSON consumers may attach (task heads etc.)
  std::map<std::string, std::vector<double>> tensors;  // name -> values
  std::optional<OptStateBlob> encoder_opt;
  std::optional<OptStateBlob> discriminator_opt;
};

void save(const std::string& path, const Checkpoint& ckpt);
Checkpoint load(const std::string& path);

/// Convenience builders/appliers between live models and the blob form.
Checkpoint from_models(const model::EncoderModel& encoder,
                       const model::LanguageDiscriminator* disc,
                       std::uint64_t vocab_hash, std::int64_t step);
void store_optimizer(Checkpoint& ckpt, const optim::AdamW& encoder_opt,
                     const optim::AdamW* disc_opt);

/// Rebuilds the encoder (and discriminator when present) from a checkpoint.
/// Throws when `expected_vocab_hash` is set and does not match.
model::EncoderModel restore_encoder(const Checkpoint& ckpt,
                                    std::optional<std::uint64_t> expected_vocab_hash);
model::LanguageDiscriminator restore_discriminator(const Checkpoint& ckpt);
void restore_opt_state(const OptStateBlob& blob, optim::AdamW& opt);

}  // namespace polybert::checkpoint
