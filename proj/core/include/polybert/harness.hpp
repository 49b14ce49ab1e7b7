#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "polybert/model.hpp"
#include "polybert/stats.hpp"
#include "polybert/tasks.hpp"
#include "polybert/tensor.hpp"
#include "polybert/tokenizer.hpp"

namespace polybert::harness {

/// A pre-trained encoder plus the task head attached by finetune().
struct FinetunedModel {
  model::EncoderModel encoder;
  tasks::TaskKind kind = tasks::TaskKind::token_classification;
  std::vector<std::string> labels;
  double score_min = 0.0, score_max = 5.0;
  nn::Tensor head_w, head_b;

  std::vector<nn::Tensor> parameters() const;
  void save(const std::string& path, std::uint64_t vocab_hash) const;
  static FinetunedModel load(const std::string& path,
                             std::optional<std::uint64_t> expected_vocab_hash);
};

/// Attaches the kind-appropriate head and trains on the union of the given
/// languages' training splits. Deterministic per seed. Throws when the
/// selected training split is empty.
FinetunedModel finetune(const model::EncoderModel& base,
                        const tokenizer::Tokenizer& tok,
                        const tasks::TaskSpec& task,
                        const std::vector<std::string>& languages,
                        std::uint64_t seed);

/// Score on one language's eval split: span F1 for token tasks, macro-F1 for
/// pair classification, partial-match F1 for span extraction, Pearson for
/// regression. F1 scores are fractions in [0,1].
double evaluate(const FinetunedModel& m, const tokenizer::Tokenizer& tok,
                const tasks::TaskSpec& task, const std::string& language);

struct EvalResult {
  std::string model_id;
  std::string task;
  std::string train_mode;  // each | all | mono
  std::map<std::string, double> per_language;
  double average = 0.0;
};

struct ModelUnderTest {
  std::string id;
  model::EncoderModel encoder;
};

/// The each/all/mono protocol. "each": one fine-tune per eval language,
/// scored on that language. "all": one fine-tune on every training split
/// (cross-lingual portions included). "mono": one fine-tune on monolingual
/// splits only; valid only for tasks with cross-lingual data.
std::vector<EvalResult> run_protocol(const std::vector<ModelUnderTest>& models,
                                     const tokenizer::Tokenizer& tok,
                                     const std::vector<tasks::TaskSpec>& task_list,
                                     const std::vector<std::string>& modes,
                                     std::uint64_t seed);

struct ComparisonEntry {
  std::string model;
  std::string task;
  double each_avg = 0.0;
  double all_avg = 0.0;
  double rel_improvement = 0.0;  // (all - each) / each
};

struct ComparisonReport {
  std::vector<ComparisonEntry> entries;
  std::map<std::string, double> mean_rel_by_model;
  std::vector<std::string> group_a;  // model ids under test
  std::vector<std::string> group_b;  // baseline model ids
  std::optional<stats::TTestResult> group_test;  // a vs b rel improvements
};

/// Pairs up each/all results per (model, task) and runs the group t-test
/// when `baseline_models` is non-empty and both groups have >= 2 entries.
ComparisonReport build_comparison(const std::vector<EvalResult>& results,
                                  const std::vector<std::string>& baseline_models);

void write_comparison_json(const ComparisonReport& report, const std::string& path);
ComparisonReport load_comparison_json(const std::string& path);

/// Writes report.csv (model,task,each,all,rel_improvement) and report.svg
/// (mean relative improvement per model, bar chart) under `dir`.
void emit_report(const ComparisonReport& report, const std::string& dir);

/// Re-parses an emitted report.csv; inverse of the CSV side of emit_report.
std::vector<ComparisonEntry> load_comparison_csv(const std::string& path);

// ---- probing utilities (adversarial-effect experiments) --------------------

struct ProbeData {
  std::vector<std::vector<double>> features;
  std::vector<int> labels;
};

struct ProbeOutcome {
  double accuracy = 0.0;  // on the eval set
  double mean_ce = 0.0;   // mean cross-entropy on the eval set
};

/// Trains a fresh linear softmax classifier on frozen feature vectors
/// (full-batch Adam, fixed step count) and scores it on the eval set.
ProbeOutcome train_linear_probe(const ProbeData& train, const ProbeData& eval,
                                int n_classes, std::uint64_t seed);

/// Mean-pooled final-layer states over non-pad positions, one vector per
/// text. The feature source for language probes.
std::vector<std::vector<double>> mean_pooled_features(
    const model::EncoderModel& encoder, const tokenizer::Tokenizer& tok,
    const std::vector<std::string>& texts, int max_seq_len);

}  // namespace polybert::harness
