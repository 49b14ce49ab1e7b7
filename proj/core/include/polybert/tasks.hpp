#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace polybert::tasks {

enum class TaskKind {
  token_classification,
  pair_classification,
  span_extraction,
  pair_regression,
};

std::string kind_name(TaskKind kind);
TaskKind kind_from_name(const std::string& name);

struct LangSplit {
  std::string train_path;
  std::string eval_path;  // may be empty for train-only cross-lingual data
};

/// A downstream task: its kind, label set or score range, per-language data
/// files, and fine-tuning hyperparameters. Stored as a flat key-value file.
/// Cross-lingual portions (mixed-language sentence pairs) use a hyphenated
/// key such as "aa-bb" and normally carry no eval split.
struct TaskSpec {
  std::string name;
  TaskKind kind = TaskKind::token_classification;
  std::vector<std::string> labels;  // classification kinds
  double score_min = 0.0, score_max = 5.0;
  std::map<std::string, LangSplit> languages;
  double lr = 3e-4;
  int epochs = 10;
  int batch_size = 8;
  int max_seq_len = 48;

  /// Languages with an eval split (monolingual keys).
  std::vector<std::string> eval_languages() const;
  /// True when the task carries mixed-language training data.
  bool cross_lingual() const;
  int label_id(const std::string& label) const;  // throws if unknown

  static TaskSpec load(const std::string& path);
  void save(const std::string& path) const;
};

struct TokenExample {
  std::vector<std::string> words;
  std::vector<std::string> tags;  // BIO, parallel to words
};

struct PairExample {
  std::string text_a;
  std::string text_b;
  std::string label;   // classification
  double score = 0.0;  // regression
};

struct SpanExample {
  std::string context;
  std::string question;
  std::string answer_text;
  int answer_start = 0;  // byte offset into context
};

/// CoNLL column format: `token tag` lines, blank line between sentences.
std::vector<TokenExample> load_conll(const std::string& path);
void write_conll(const std::string& path, const std::vector<TokenExample>& ex);

/// TSV `text_a \t text_b \t label-or-score`.
std::vector<PairExample> load_pair_tsv(const std::string& path, bool regression);
void write_pair_tsv(const std::string& path, const std::vector<PairExample>& ex,
                    bool regression);

/// JSON lines {context, question, answer_text, answer_start}.
std::vector<SpanExample> load_span_jsonl(const std::string& path);
void write_span_jsonl(const std::string& path, const std::vector<SpanExample>& ex);

}  // namespace polybert::tasks
