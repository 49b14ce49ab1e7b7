#include "polybert/metrics.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace polybert::metrics {

namespace {

double f1_from_counts(double tp, double n_pred, double n_gold) {
  if (n_pred == 0.0 && n_gold == 0.0) return 1.0;
  if (tp == 0.0) return 0.0;
  const double precision = tp / n_pred;
  const double recall = tp / n_gold;
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace

double token_f1(const std::vector<std::vector<Span>>& gold,
                const std::vector<std::vector<Span>>& predicted) {
  if (gold.size() != predicted.size()) {
    throw std::invalid_argument("token_f1: sentence count mismatch");
  }
  double tp = 0.0, n_pred = 0.0, n_gold = 0.0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    std::vector<Span> g = gold[i];
    std::sort(g.begin(), g.end(), [](const Span& a, const Span& b) {
      return a.start < b.start;
    });
    for (std::size_t k = 0; k + 1 < g.size(); ++k) {
      if (g[k + 1].start < g[k].end) {
        throw std::invalid_argument(
            "token_f1: overlapping gold spans in sentence " + std::to_string(i));
      }
    }
    const std::set<Span> gold_set(g.begin(), g.end());
    const std::set<Span> pred_set(predicted[i].begin(), predicted[i].end());
    for (const Span& s : pred_set) tp += gold_set.count(s) ? 1.0 : 0.0;
    n_pred += static_cast<double>(pred_set.size());
    n_gold += static_cast<double>(gold_set.size());
  }
  return f1_from_counts(tp, n_pred, n_gold);
}

double classification_f1(const std::vector<int>& gold,
                         const std::vector<int>& predicted, int n_classes) {
  if (gold.size() != predicted.size()) {
    throw std::invalid_argument("classification_f1: length mismatch");
  }
  if (n_classes < 1) throw std::invalid_argument("classification_f1: n_classes < 1");
  double f1_sum = 0.0;
  for (int c = 0; c < n_classes; ++c) {
    double tp = 0.0, np = 0.0, ng = 0.0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      const bool p = predicted[i] == c;
      const bool g = gold[i] == c;
      if (p) np += 1.0;
      if (g) ng += 1.0;
      if (p && g) tp += 1.0;
    }
    // a class absent from both sides is trivially right (counts as 1)
    f1_sum += f1_from_counts(tp, np, ng);
  }
  return f1_sum / static_cast<double>(n_classes);
}

double span_partial_f1(const std::vector<std::string>& gold_answers,
                       const std::vector<std::string>& predicted_answers) {
  if (gold_answers.size() != predicted_answers.size()) {
    throw std::invalid_argument("span_partial_f1: length mismatch");
  }
  if (gold_answers.empty()) {
    throw std::invalid_argument("span_partial_f1: empty input");
  }
  const auto bag = [](const std::string& s) {
    std::multiset<std::string> tokens;
    std::istringstream in(s);
    std::string t;
    while (in >> t) tokens.insert(t);
    return tokens;
  };
  double acc = 0.0;
  for (std::size_t i = 0; i < gold_answers.size(); ++i) {
    const auto g = bag(gold_answers[i]);
    const auto p = bag(predicted_answers[i]);
    std::multiset<std::string> overlap;
    std::set_intersection(g.begin(), g.end(), p.begin(), p.end(),
                          std::inserter(overlap, overlap.begin()));
    acc += f1_from_counts(static_cast<double>(overlap.size()),
                          static_cast<double>(p.size()),
                          static_cast<double>(g.size()));
  }
  return acc / static_cast<double>(gold_answers.size());
}

std::vector<Span> bio_to_spans(const std::vector<std::string>& tags) {
  std::vector<Span> spans;
  Span open;
  bool in_span = false;
  const auto close = [&](int end) {
    if (in_span) {
      open.end = end;
      spans.push_back(open);
      in_span = false;
    }
  };
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const std::string& tag = tags[i];
    if (tag == "O" || tag.empty()) {
      close(static_cast<int>(i));
    } else if (tag.size() > 2 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-') {
      const std::string type = tag.substr(2);
      if (tag[0] == 'B' || !in_span || open.type != type) {
        close(static_cast<int>(i));
        open = Span{type, static_cast<int>(i), -1};
        in_span = true;
      }
      // I- of the open type extends the span
    } else {
      throw std::invalid_argument("bio_to_spans: malformed tag '" + tag + "'");
    }
  }
  close(static_cast<int>(tags.size()));
  return spans;
}

}  // namespace polybert::metrics
