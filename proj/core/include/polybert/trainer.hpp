#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "polybert/checkpoint.hpp"
#include "polybert/config.hpp"
#include "polybert/corpus.hpp"
#include "polybert/model.hpp"
#include "polybert/objectives.hpp"
#include "polybert/optim.hpp"
#include "polybert/rng.hpp"
#include "polybert/tokenizer.hpp"

namespace polybert::trainer {

enum class KdPositions { all, masked_only };

struct TrainConfig {
  model::ModelConfig model;  // vocab_size/n_languages are filled at run time
  int batch_size = 16;
  int max_seq_len = 64;
  double mask_prob = 0.15;
  objectives::LossWeights weights;
  double label_smoothing = 0.7;
  double kd_temperature = 2.0;
  bool kd_t2_rescale = false;
  KdPositions kd_positions = KdPositions::all;
  bool mask_bert_style = false;  // 80/10/10 corruption ablation; plain MASK otherwise
  bool teacher_sees_masked = true;
  // per-op NaN/Inf validation; off by default (a non-finite loss always
  // aborts the step, and the step is replayed with checks on to name the op)
  bool numeric_checks = false;
  optim::OptimConfig optim;
  std::uint64_t seed = 42;
  std::int64_t n_steps = 1000;
  std::int64_t log_every = 10;
  std::int64_t checkpoint_every = 500;

  void validate() const;
  static TrainConfig from_kv(const config::KvConfig& kv);
  config::KvConfig to_kv() const;
};

struct StepRecord {
  std::int64_t step = 0;
  objectives::LossBreakdown losses;
  double lr = 0.0;
  double grad_norm_preclip = 0.0;
  std::int64_t wall_ms = 0;
};

/// One pre-tokenized sequence ready for batching: [CLS] ids [SEP], already
/// truncated, with its language id.
struct PreparedSequence {
  std::vector<int> ids;
  int lang_id = 0;
};

/// Encodes filtered documents into training sequences.
std::vector<PreparedSequence> prepare_sequences(
    const std::vector<corpus::Document>& docs, const tokenizer::Tokenizer& tok,
    const corpus::LanguageRegistry& langs, int max_seq_len);

/// Pads a run of sequences to the longest one and builds the [B,S] batch.
model::TokenBatch assemble_batch(const std::vector<PreparedSequence>& seqs,
                                 std::vector<int>& lang_ids_out);

/// Independently masks each non-special token with probability mask_prob and
/// replaces it with MASK (or the 80/10/10 corruption when bert_style). A
/// sequence with zero selections gets one uniformly chosen forced position.
/// Throws when a sequence has no maskable token at all.
objectives::MaskedBatch mask_batch(const model::TokenBatch& batch,
                                   const std::vector<int>& lang_ids,
                                   double mask_prob, rng::Rng& gen,
                                   bool bert_style = false, int vocab_size = 0);

/// Owns the student, the discriminator, their two optimizers, and the frozen
/// teacher. One instance runs one pre-training job.
class Trainer {
 public:
  Trainer(model::EncoderModel student,
          std::optional<model::LanguageDiscriminator> disc,
          std::optional<model::EncoderModel> teacher, TrainConfig cfg);

  /// One combined step: student forward, teacher forward, the three losses,
  /// backward of the reversed total for the student group, backward of the
  /// plain adversarial loss for the discriminator group, clip, AdamW both.
  StepRecord train_step(const objectives::MaskedBatch& batch);

  const model::EncoderModel& student() const { return student_; }
  bool has_discriminator() const { return disc_.has_value(); }
  const model::LanguageDiscriminator& discriminator() const { return *disc_; }
  const std::optional<model::EncoderModel>& teacher() const { return teacher_; }
  std::int64_t step() const { return step_; }
  optim::AdamW& student_opt() { return student_opt_; }
  optim::AdamW& disc_opt() { return *disc_opt_; }
  void set_step(std::int64_t step) { step_ = step; }
  const TrainConfig& config() const { return cfg_; }

 private:
  model::EncoderModel student_;
  std::optional<model::LanguageDiscriminator> disc_;
  std::optional<model::EncoderModel> teacher_;
  TrainConfig cfg_;
  optim::AdamW student_opt_;
  std::optional<optim::AdamW> disc_opt_;
  std::int64_t step_ = 0;
};

struct PretrainResult {
  model::EncoderModel encoder;
  std::optional<model::LanguageDiscriminator> discriminator;
  std::vector<StepRecord> records;    // every step, in order
  std::string final_checkpoint_path;  // empty when out_dir is empty
};

/// Full pre-training loop: seeded shuffled batching, per-step masking,
/// metrics CSV, periodic + final checkpoints. Deterministic: identical
/// (seed, corpus, config) give identical parameter trajectories, and a
/// resume from step k continues exactly as the uninterrupted run.
/// `teacher_ckpt` may be empty when lambda_kd is zero.
PretrainResult pretrain(const std::vector<corpus::Document>& docs,
                        const tokenizer::Tokenizer& tok,
                        const corpus::LanguageRegistry& langs, TrainConfig cfg,
                        const std::optional<checkpoint::Checkpoint>& teacher_ckpt,
                        const std::string& out_dir,
                        const std::optional<checkpoint::Checkpoint>& resume_from = {});

/// MLM-only pre-training of a (typically larger) model used as the frozen
/// teacher; adversarial and distillation weights are forced to zero.
PretrainResult pretrain_teacher(const std::vector<corpus::Document>& docs,
                                const tokenizer::Tokenizer& tok,
                                const corpus::LanguageRegistry& langs,
                                TrainConfig cfg, const std::string& out_dir);

/// The metrics CSV header written by pretrain.
inline constexpr const char* kMetricsHeader =
    "step,l_mlm,l_adv,l_kd,l_total,lr,grad_norm,wall_ms";

std::string format_metrics_row(const StepRecord& rec);

}  // namespace polybert::trainer
