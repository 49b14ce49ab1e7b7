#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace polybert::corpus {

/// One raw text sample with a language label; the unit of filtering and
/// batching.
struct Document {
  std::string id;
  std::string lang;
  std::string text;
};

/// Ordered set of language codes with stable integer ids in [0, size).
class LanguageRegistry {
 public:
  LanguageRegistry() = default;
  explicit LanguageRegistry(std::vector<std::string> codes);

  /// Registers a code if new; returns its id either way.
  int add(const std::string& code);
  /// Returns the id for a registered code, or nullopt.
  std::optional<int> lookup(const std::string& code) const;
  int id_of(const std::string& code) const;  // throws if unregistered
  const std::vector<std::string>& codes() const { return codes_; }
  int size() const { return static_cast<int>(codes_.size()); }

 private:
  std::vector<std::string> codes_;
  std::map<std::string, int> index_;
};

/// Counts from one filtering pass. kept + sum(dropped) equals the input size.
struct FilterReport {
  std::int64_t kept = 0;
  std::map<std::string, std::int64_t> dropped_per_rule;
  std::int64_t total_bytes_kept = 0;
  double tokens_per_sample_mean = 0.0;

  std::int64_t total_dropped() const;
  std::string to_json() const;
};

/// Counts the tokens the filter's minimum-length rule sees.
using TokenCounter = std::function<int(const std::string&)>;

/// Whitespace token counter; the mode the filter fixtures pin.
int whitespace_token_count(const std::string& text);

/// Removes angle-bracket tag spans (`<` + 1..100 non-`>` code points + `>`)
/// and entity spans (`&` + 1..10 ASCII word chars + `;`). Total and
/// idempotent; everything else is preserved in order.
std::string strip_html_artifacts(const std::string& text);

/// Removes Unicode Cc/Cf code points. Newline and tab become one space each.
std::string strip_hidden_characters(const std::string& text);

struct FilterDecision {
  bool keep = true;
  std::string rule;  // empty when kept
};

inline constexpr const char* kRuleUrlIsbnOnly = "url_isbn_only";
inline constexpr const char* kRuleDigitRatio = "digit_ratio";
inline constexpr const char* kRuleTooShort = "too_short";

/// Applies the drop rules in fixed order (url_isbn_only, digit_ratio,
/// too_short) to already-stripped text and reports the first failing rule.
FilterDecision passes_filters(const Document& doc, const TokenCounter& tokens);

/// Strips and filters a document stream. Output preserves input order and
/// carries the stripped text. Throws std::runtime_error when a document's
/// language is not registered.
std::pair<std::vector<Document>, FilterReport> filter_corpus(
    const std::vector<Document>& docs, const LanguageRegistry& langs,
    const TokenCounter& tokens);

/// JSONL corpus I/O: one {"id","lang","text"} object per line, UTF-8, LF.
std::vector<Document> read_jsonl(const std::string& path);
std::vector<Document> read_jsonl_stream(std::istream& in);
void write_jsonl(const std::string& path, const std::vector<Document>& docs);

}  // namespace polybert::corpus
