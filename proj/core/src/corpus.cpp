#include "polybert/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "polybert/utf8.hpp"

namespace polybert::corpus {

using json = nlohmann::json;

LanguageRegistry::LanguageRegistry(std::vector<std::string> codes) {
  for (auto& c : codes) add(c);
}

int LanguageRegistry::add(const std::string& code) {
  auto it = index_.find(code);
  if (it != index_.end()) return it->second;
  const int id = static_cast<int>(codes_.size());
  codes_.push_back(code);
  index_.emplace(code, id);
  return id;
}

std::optional<int> LanguageRegistry::lookup(const std::string& code) const {
  auto it = index_.find(code);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int LanguageRegistry::id_of(const std::string& code) const {
  auto id = lookup(code);
  if (!id) throw std::runtime_error("unregistered language code: " + code);
  return *id;
}

std::int64_t FilterReport::total_dropped() const {
  std::int64_t n = 0;
  for (const auto& [rule, count] : dropped_per_rule) n += count;
  return n;
}

std::string FilterReport::to_json() const {
  json j;
  j["kept"] = kept;
  j["dropped_per_rule"] = dropped_per_rule;
  j["total_bytes_kept"] = total_bytes_kept;
  j["tokens_per_sample_mean"] = tokens_per_sample_mean;
  return j.dump(2);
}

int whitespace_token_count(const std::string& text) {
  int n = 0;
  bool in_token = false;
  for (char c : text) {
    const bool ws = c == ' ' || c == '\t' || c == '\n' || c == '\r';
    if (!ws && !in_token) ++n;
    in_token = !ws;
  }
  return n;
}

namespace {

bool is_ascii_word_char(char32_t cp) {
  return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z') ||
         (cp >= '0' && cp <= '9') || cp == '_';
}

// Unicode general category Cf (format) ranges.
struct CpRange {
  char32_t lo, hi;
};
constexpr CpRange kFormatRanges[] = {
    {0x00ad, 0x00ad},   {0x0600, 0x0605},   {0x061c, 0x061c},
    {0x06dd, 0x06dd},   {0x070f, 0x070f},   {0x0890, 0x0891},
    {0x08e2, 0x08e2},   {0x180e, 0x180e},   {0x200b, 0x200f},
    {0x202a, 0x202e},   {0x2060, 0x2064},   {0x2066, 0x206f},
    {0xfeff, 0xfeff},   {0xfff9, 0xfffb},   {0x110bd, 0x110bd},
    {0x110cd, 0x110cd}, {0x13430, 0x1343f}, {0x1bca0, 0x1bca3},
    {0x1d173, 0x1d17a}, {0xe0001, 0xe0001}, {0xe0020, 0xe007f},
};

bool is_control(char32_t cp) {  // category Cc
  return cp <= 0x1f || (cp >= 0x7f && cp <= 0x9f);
}

bool is_format(char32_t cp) {  // category Cf
  for (const auto& r : kFormatRanges) {
    if (cp >= r.lo && cp <= r.hi) return true;
  }
  return false;
}

bool is_ascii_space(char32_t cp) {
  return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r';
}

bool is_ascii_punct(char32_t cp) {
  return (cp >= '!' && cp <= '/') || (cp >= ':' && cp <= '@') ||
         (cp >= '[' && cp <= '`') || (cp >= '{' && cp <= '~');
}

bool is_ascii_digit(char32_t cp) { return cp >= '0' && cp <= '9'; }

}  // namespace

namespace {

// Single left-to-right removal pass over code points.
std::vector<char32_t> strip_markup_once(const std::vector<char32_t>& cps,
                                        bool& changed) {
  std::vector<char32_t> out;
  out.reserve(cps.size());
  std::size_t i = 0;
  while (i < cps.size()) {
    if (cps[i] == U'<') {
      // `>` must close 1..100 enclosed code points
      std::size_t j = i + 1;
      const std::size_t limit = std::min(cps.size(), i + 101);
      while (j < limit && cps[j] != U'>') ++j;
      if (j < cps.size() && cps[j] == U'>' && j > i + 1) {
        i = j + 1;
        changed = true;
        continue;
      }
    } else if (cps[i] == U'&') {
      std::size_t j = i + 1;
      while (j < cps.size() && j <= i + 10 && is_ascii_word_char(cps[j])) ++j;
      if (j > i + 1 && j < cps.size() && cps[j] == U';') {
        i = j + 1;
        changed = true;
        continue;
      }
    }
    out.push_back(cps[i]);
    ++i;
  }
  return out;
}

}  // namespace

std::string strip_html_artifacts(const std::string& text) {
  // Removing a span can splice the surrounding text into a fresh match, so
  // iterate to a fixpoint; this is what makes the operation idempotent.
  std::vector<char32_t> cps = utf8::decode_all(text);
  bool changed = true;
  while (changed) {
    changed = false;
    cps = strip_markup_once(cps, changed);
  }
  return utf8::encode_all(cps);
}

std::string strip_hidden_characters(const std::string& text) {
  const std::vector<char32_t> cps = utf8::decode_all(text);
  std::vector<char32_t> out;
  out.reserve(cps.size());
  for (char32_t cp : cps) {
    if (cp == U'\n' || cp == U'\t') {
      out.push_back(U' ');
    } else if (is_control(cp) || is_format(cp)) {
      // dropped
    } else {
      out.push_back(cp);
    }
  }
  return utf8::encode_all(out);
}

namespace {

// Deletes URL spans (http:// or https:// plus the following non-space run)
// and ISBN spans (the literal "ISBN" plus any following digits/hyphens).
std::vector<char32_t> delete_url_isbn_spans(const std::vector<char32_t>& cps) {
  const auto starts_with = [&](std::size_t i, std::string_view pat) {
    if (i + pat.size() > cps.size()) return false;
    for (std::size_t k = 0; k < pat.size(); ++k) {
      if (cps[i + k] != static_cast<char32_t>(pat[k])) return false;
    }
    return true;
  };
  std::vector<char32_t> out;
  out.reserve(cps.size());
  std::size_t i = 0;
  while (i < cps.size()) {
    if (starts_with(i, "http://") || starts_with(i, "https://")) {
      while (i < cps.size() && !is_ascii_space(cps[i])) ++i;
      continue;
    }
    if (starts_with(i, "ISBN")) {
      i += 4;
      while (i < cps.size() && (is_ascii_digit(cps[i]) || cps[i] == U'-')) ++i;
      continue;
    }
    out.push_back(cps[i]);
    ++i;
  }
  return out;
}

}  // namespace

FilterDecision passes_filters(const Document& doc, const TokenCounter& tokens) {
  const std::vector<char32_t> cps = utf8::decode_all(doc.text);

  // rule 1: nothing but URLs/ISBNs (and whitespace/punctuation around them)
  bool has_content = false;
  for (char32_t cp : delete_url_isbn_spans(cps)) {
    if (!is_ascii_space(cp) && !is_ascii_punct(cp)) {
      has_content = true;
      break;
    }
  }
  if (!has_content) return {false, kRuleUrlIsbnOnly};

  // rule 2: digit-heavy text; ratio over all code points, strict >0.70.
  // Integer comparison keeps the exact-70% boundary on the "keep" side.
  if (!cps.empty()) {
    std::uint64_t digits = 0;
    for (char32_t cp : cps) digits += is_ascii_digit(cp) ? 1u : 0u;
    if (digits * 10 > static_cast<std::uint64_t>(cps.size()) * 7) {
      return {false, kRuleDigitRatio};
    }
  }

  // rule 3: fewer than five tokens
  if (tokens(doc.text) < 5) return {false, kRuleTooShort};

  return {true, ""};
}

std::pair<std::vector<Document>, FilterReport> filter_corpus(
    const std::vector<Document>& docs, const LanguageRegistry& langs,
    const TokenCounter& tokens) {
  std::vector<Document> kept;
  FilterReport report;
  report.dropped_per_rule[kRuleUrlIsbnOnly] = 0;
  report.dropped_per_rule[kRuleDigitRatio] = 0;
  report.dropped_per_rule[kRuleTooShort] = 0;
  std::int64_t token_total = 0;

  for (const Document& doc : docs) {
    if (!langs.lookup(doc.lang)) {
      throw std::runtime_error("filter_corpus: unregistered language code '" +
                               doc.lang + "' in document " + doc.id);
    }
    Document d = doc;
    d.text = strip_hidden_characters(strip_html_artifacts(d.text));
    const FilterDecision decision = passes_filters(d, tokens);
    if (decision.keep) {
      report.kept += 1;
      report.total_bytes_kept += static_cast<std::int64_t>(d.text.size());
      token_total += tokens(d.text);
      kept.push_back(std::move(d));
    } else {
      report.dropped_per_rule[decision.rule] += 1;
    }
  }
  report.tokens_per_sample_mean =
      report.kept > 0
          ? static_cast<double>(token_total) / static_cast<double>(report.kept)
          : 0.0;
  return {std::move(kept), report};
}

std::vector<Document> read_jsonl_stream(std::istream& in) {
  std::vector<Document> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw std::runtime_error("corpus line " + std::to_string(line_no) +
                               ": not a JSON object");
    }
    Document d;
    d.id = j.value("id", "");
    d.lang = j.value("lang", "");
    d.text = j.value("text", "");
    docs.push_back(std::move(d));
  }
  return docs;
}

std::vector<Document> read_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path);
  return read_jsonl_stream(in);
}

void write_jsonl(const std::string& path, const std::vector<Document>& docs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write corpus file: " + path);
  for (const Document& d : docs) {
    json j;
    j["id"] = d.id;
    j["lang"] = d.lang;
    j["text"] = d.text;
    out << j.dump() << "\n";
  }
}

}  // namespace polybert::corpus
