#include "polybert/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "polybert/utf8.hpp"

namespace polybert::tokenizer {

std::uint64_t fnv1a64(const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file for hashing: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  return fnv1a64(bytes.data(), bytes.size());
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) {
    throw std::out_of_range("token id " + std::to_string(id) +
                            " out of range for vocab of size " +
                            std::to_string(size()));
  }
  return tokens[static_cast<std::size_t>(id)];
}

int Vocab::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? -1 : it->second;
}

void Vocab::rebuild_index() {
  index_.clear();
  index_.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    index_.emplace(tokens[i], static_cast<int>(i));
  }
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write vocab file: " + path);
  for (const auto& t : tokens) out << t << "\n";
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open vocab file: " + path);
  Vocab v;
  std::string line;
  while (std::getline(in, line)) v.tokens.push_back(line);
  if (v.size() < kNumSpecials + 1) {
    throw std::runtime_error("vocab file too small: " + path);
  }
  for (int i = 0; i < kNumSpecials; ++i) {
    if (v.tokens[static_cast<std::size_t>(i)] != kSpecialTokens[i]) {
      throw std::runtime_error("vocab file missing special token at id " +
                               std::to_string(i) + ": " + path);
    }
  }
  v.rebuild_index();
  return v;
}

std::uint64_t Vocab::hash() const {
  std::string joined;
  for (const auto& t : tokens) {
    joined += t;
    joined += '\n';
  }
  return fnv1a64(joined.data(), joined.size());
}

namespace {

std::vector<std::string> split_whitespace(const std::string& text) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : text) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      if (!cur.empty()) {
        words.push_back(std::move(cur));
        cur.clear();
      }
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

}  // namespace

Vocab build_vocab(const std::vector<corpus::Document>& docs, int target_size) {
  if (target_size < kNumSpecials + 1) {
    throw std::invalid_argument("build_vocab: target_size must be at least " +
                                std::to_string(kNumSpecials + 1));
  }
  // word -> count, in first-occurrence order for determinism
  std::vector<std::pair<std::vector<std::string>, std::int64_t>> words;
  std::map<std::string, std::size_t> word_index;
  for (const auto& doc : docs) {
    for (auto& w : split_whitespace(doc.text)) {
      auto [it, fresh] = word_index.emplace(w, words.size());
      if (fresh) {
        std::vector<std::string> symbols;
        const auto cps = utf8::decode_all(w);
        symbols.reserve(cps.size());
        for (char32_t cp : cps) {
          std::string s;
          utf8::append(s, cp);
          symbols.push_back(std::move(s));
        }
        words.emplace_back(std::move(symbols), 1);
      } else {
        words[it->second].second += 1;
      }
    }
  }
  if (words.empty()) throw std::runtime_error("build_vocab: empty corpus");

  Vocab vocab;
  for (const char* s : kSpecialTokens) vocab.tokens.emplace_back(s);

  // seed the alphabet: single code points by descending frequency, ties
  // lexicographic, capped at target_size
  std::map<std::string, std::int64_t> char_freq;
  for (const auto& [symbols, count] : words) {
    for (const auto& s : symbols) char_freq[s] += count;
  }
  std::vector<std::pair<std::string, std::int64_t>> alphabet(char_freq.begin(),
                                                             char_freq.end());
  std::sort(alphabet.begin(), alphabet.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  for (const auto& [sym, freq] : alphabet) {
    if (vocab.size() >= target_size) break;
    vocab.tokens.push_back(sym);
  }

  // iterative pair merging until the vocabulary is full or no pairs remain
  while (vocab.size() < target_size) {
    std::map<std::pair<std::string, std::string>, std::int64_t> pair_freq;
    for (const auto& [symbols, count] : words) {
      for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
        pair_freq[{symbols[i], symbols[i + 1]}] += count;
      }
    }
    if (pair_freq.empty()) break;
    std::pair<std::string, std::string> best;
    std::int64_t best_count = -1;
    for (const auto& [pair, count] : pair_freq) {
      const std::string merged = pair.first + pair.second;
      const std::string best_merged = best.first + best.second;
      if (count > best_count ||
          (count == best_count && merged < best_merged)) {
        best = pair;
        best_count = count;
      }
    }
    const std::string merged = best.first + best.second;
    for (auto& [symbols, count] : words) {
      std::vector<std::string> next;
      next.reserve(symbols.size());
      std::size_t i = 0;
      while (i < symbols.size()) {
        if (i + 1 < symbols.size() && symbols[i] == best.first &&
            symbols[i + 1] == best.second) {
          next.push_back(merged);
          i += 2;
        } else {
          next.push_back(symbols[i]);
          ++i;
        }
      }
      symbols = std::move(next);
    }
    vocab.tokens.push_back(merged);
  }

  vocab.rebuild_index();
  return vocab;
}

Tokenizer::Tokenizer(Vocab vocab, bool lowercase, int max_subword_length)
    : vocab_(std::move(vocab)),
      lowercase_(lowercase),
      max_subword_length_(max_subword_length) {
  vocab_.rebuild_index();
  for (int i = kNumSpecials; i < vocab_.size(); ++i) {
    content_tokens_.insert(vocab_.token(i));
  }
}

void Tokenizer::encode_word(const std::string& word,
                            std::vector<int>& out) const {
  const auto cps = utf8::decode_all(word);
  std::size_t pos = 0;
  while (pos < cps.size()) {
    const std::size_t max_len = std::min(
        cps.size() - pos, static_cast<std::size_t>(max_subword_length_));
    int matched_id = -1;
    for (std::size_t len = max_len; len >= 1; --len) {
      std::string candidate;
      for (std::size_t k = 0; k < len; ++k) utf8::append(candidate, cps[pos + k]);
      if (content_tokens_.count(candidate)) {
        matched_id = vocab_.id(candidate);
        pos += len;
        break;
      }
    }
    if (matched_id >= 0) {
      out.push_back(matched_id);
    } else {
      out.push_back(kUnk);
      ++pos;
    }
  }
}

std::vector<int> Tokenizer::encode(const std::string& text) const {
  std::vector<int> word_of_token;
  return encode_with_word_index(text, word_of_token);
}

std::vector<int> Tokenizer::encode_with_word_index(
    const std::string& text, std::vector<int>& word_of_token) const {
  std::string input = text;
  if (lowercase_) {
    for (char& c : input) {
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
  }
  std::vector<int> ids;
  word_of_token.clear();
  int word_idx = 0;
  for (const auto& word : split_whitespace(input)) {
    const std::size_t before = ids.size();
    encode_word(word, ids);
    for (std::size_t k = before; k < ids.size(); ++k) {
      word_of_token.push_back(word_idx);
    }
    ++word_idx;
  }
  return ids;
}

std::string Tokenizer::decode(const std::vector<int>& ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const std::string& tok = vocab_.token(ids[i]);  // throws on id >= V
    if (i > 0) out.push_back(' ');
    out += tok;
  }
  return out;
}

}  // namespace polybert::tokenizer
