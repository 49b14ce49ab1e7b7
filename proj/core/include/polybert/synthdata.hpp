#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "polybert/corpus.hpp"
#include "polybert/tasks.hpp"

namespace polybert::synthdata {

/// The two synthetic languages: shared sentence templates and concept
/// inventory rendered into disjoint surface vocabularies, so every
/// cross-lingual protocol path runs offline.
inline constexpr const char* kLangA = "aa";
inline constexpr const char* kLangB = "bb";

struct GenOptions {
  int docs_per_lang = 384;
  std::uint64_t seed = 7;
};

/// Deterministic bilingual pre-training corpus (already clean text).
std::vector<corpus::Document> bilingual_corpus(const GenOptions& options);

/// Renders one concept word in a language; exposed for tests.
std::string concept_word(const std::string& lang, const std::string& category,
                         int index);

// In-memory task sample generators (aligned across languages by seed).
std::vector<tasks::TokenExample> token_examples(const std::string& lang,
                                                int count, std::uint64_t seed);
std::vector<tasks::PairExample> pair_examples(const std::string& lang,
                                              int count, std::uint64_t seed);
std::vector<tasks::SpanExample> span_examples(const std::string& lang,
                                              int count, std::uint64_t seed);
std::vector<tasks::PairExample> regression_examples(const std::string& lang_a,
                                                    const std::string& lang_b,
                                                    int count,
                                                    std::uint64_t seed);

/// Each writer materializes data files plus a task spec under `dir` and
/// returns the spec path.
std::string write_token_task(const std::string& dir, int train_per_lang,
                             int eval_per_lang, std::uint64_t seed);
std::string write_pair_task(const std::string& dir, int train_per_lang,
                            int eval_per_lang, std::uint64_t seed);
std::string write_span_task(const std::string& dir, int train_per_lang,
                            int eval_per_lang, std::uint64_t seed);
/// Regression task with monolingual splits plus an "aa-bb" cross-lingual
/// training portion (mono/all protocol coverage).
std::string write_regression_task(const std::string& dir, int train_per_lang,
                                  int cross_pairs, int eval_per_lang,
                                  std::uint64_t seed);

inline constexpr const char* kTokenLabels = "O,B-PER,I-PER,B-LOC,I-LOC";
inline constexpr const char* kPairLabels = "match,contra,neutral";

}  // namespace polybert::synthdata
