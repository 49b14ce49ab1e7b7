#pragma once

#include <string>
#include <vector>

namespace polybert::metrics {

/// A typed token span, [start, end) over token positions.
struct Span {
  std::string type;
  int start = 0;
  int end = 0;

  bool operator==(const Span&) const = default;
  auto operator<=>(const Span&) const = default;
};

/// Exact-span micro-F1 over per-sentence span sets. Both-empty input scores
/// 1.0. Throws on overlapping gold spans (invalid annotation).
double token_f1(const std::vector<std::vector<Span>>& gold,
                const std::vector<std::vector<Span>>& predicted);

/// Macro-averaged F1 over the classes present in gold or predictions.
/// A class with no predictions and no recall contributes 0.
double classification_f1(const std::vector<int>& gold,
                         const std::vector<int>& predicted, int n_classes);

/// Bag-of-tokens overlap F1 per question (whitespace tokens of the answer
/// strings), averaged over questions. Empty-vs-empty counts as 1.
double span_partial_f1(const std::vector<std::string>& gold_answers,
                       const std::vector<std::string>& predicted_answers);

/// Converts a BIO tag sequence to typed spans. Tags look like O, B-X, I-X;
/// an I-X without a preceding B-X/I-X opens a new span (conventional repair).
std::vector<Span> bio_to_spans(const std::vector<std::string>& tags);

}  // namespace polybert::metrics
