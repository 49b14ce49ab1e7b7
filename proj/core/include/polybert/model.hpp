#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "polybert/tensor.hpp"

namespace polybert::model {

/// Architecture dimensions. Parameter count is a deterministic function of
/// this struct.
struct ModelConfig {
  int n_layers = 2;
  int hidden = 64;
  int n_heads = 2;
  int ff_multiplier = 4;
  int vocab_size = 0;
  int max_positions = 128;
  int n_languages = 2;

  void validate() const;  // throws std::invalid_argument
  bool strictly_larger_than(const ModelConfig& other) const {
    return hidden > other.hidden && n_layers > other.n_layers;
  }
  bool operator==(const ModelConfig&) const = default;
};

/// One padded batch of token ids, row-major [batch, seq]. attn_mask is 1.0
/// at real positions and 0.0 at padding.
struct TokenBatch {
  int batch = 0;
  int seq = 0;
  std::vector<int> ids;
  std::vector<double> attn_mask;

  int id_at(int b, int s) const { return ids[static_cast<std::size_t>(b * seq + s)]; }
  bool is_real(int b, int s) const {
    return attn_mask[static_cast<std::size_t>(b * seq + s)] != 0.0;
  }
};

struct EncoderLayer {
  nn::Tensor ln1_gain, ln1_bias;
  nn::Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  nn::Tensor ln2_gain, ln2_bias;
  nn::Tensor w_ff1, b_ff1, w_ff2, b_ff2;
};

/// Pre-layer-norm transformer encoder with learned absolute positions and an
/// untied vocabulary projection head.
class EncoderModel {
 public:
  EncoderModel() = default;

  /// Weights ~ truncated normal (std 0.02), biases zero, layer-norm gain 1 /
  /// bias 0; bit-reproducible from the seed.
  static EncoderModel init(const ModelConfig& config, std::uint64_t seed);

  /// Hidden states [batch, seq, hidden]. Padded key positions are masked out
  /// of attention; a padded position changes nothing for real positions.
  nn::Tensor encode_sequence(const TokenBatch& batch) const;

  /// Vocabulary logits [batch, seq, V] from encoder hidden states.
  nn::Tensor mlm_logits(const nn::Tensor& hidden_states) const;

  const ModelConfig& config() const { return config_; }
  /// Parameters in a stable order; the optimizer group for this model.
  std::vector<nn::Tensor> parameters() const;
  std::int64_t parameter_count() const;
  /// Stable name -> tensor listing used by checkpoints.
  std::vector<std::pair<std::string, nn::Tensor>> named_parameters() const;
  /// Deep copy with independent parameter storage.
  EncoderModel clone() const;

  nn::Tensor token_embedding;
  nn::Tensor position_embedding;
  std::vector<EncoderLayer> layers;
  nn::Tensor final_ln_gain, final_ln_bias;
  nn::Tensor w_mlm, b_mlm;

 private:
  ModelConfig config_;
};

/// Single feed-forward layer over mean-pooled embeddings predicting the
/// input language. Its parameters are disjoint from the encoder's.
class LanguageDiscriminator {
 public:
  LanguageDiscriminator() = default;
  static LanguageDiscriminator init(int hidden, int n_languages,
                                    std::uint64_t seed);

  /// Language logits [batch, L]: mean of hidden states over non-pad
  /// positions, then the linear layer. Throws on an all-pad sequence.
  nn::Tensor discriminate(const nn::Tensor& hidden_states,
                          const nn::Tensor& attn_mask) const;

  /// The two halves of discriminate(), for callers that reuse the pooled
  /// vector (e.g. to update the discriminator without walking the encoder
  /// graph again).
  nn::Tensor pool(const nn::Tensor& hidden_states,
                  const nn::Tensor& attn_mask) const;
  nn::Tensor logits_from_pooled(const nn::Tensor& pooled) const;

  std::vector<nn::Tensor> parameters() const;
  std::vector<std::pair<std::string, nn::Tensor>> named_parameters() const;
  int n_languages() const { return n_languages_; }

  nn::Tensor w, b;

 private:
  int n_languages_ = 0;
};

/// Builds the [B,S] attention mask tensor for a batch (constant, no grad).
nn::Tensor attn_mask_tensor(const TokenBatch& batch);

}  // namespace polybert::model
