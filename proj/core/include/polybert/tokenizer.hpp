#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "polybert/corpus.hpp"

namespace polybert::tokenizer {

/// Fixed special-token layout; ids 0..4 in every vocabulary.
enum SpecialId : int {
  kPad = 0,
  kUnk = 1,
  kCls = 2,
  kSep = 3,
  kMask = 4,
};
inline constexpr int kNumSpecials = 5;
inline constexpr const char* kSpecialTokens[kNumSpecials] = {
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};

/// Ordered token list; line number in the vocab file is the token id.
struct Vocab {
  std::vector<std::string> tokens;

  int size() const { return static_cast<int>(tokens.size()); }
  const std::string& token(int id) const;
  /// Returns -1 when the token string is not in the vocabulary.
  int id(const std::string& token) const;

  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

  /// FNV-1a 64 over the serialized vocab bytes; stored in checkpoints so a
  /// model is never paired with the wrong vocabulary.
  std::uint64_t hash() const;

  void rebuild_index();  // call after mutating tokens

 private:
  std::unordered_map<std::string, int> index_;
};

/// Learns a subword vocabulary by iterative most-frequent-pair merging over
/// whitespace-pre-tokenized words. Deterministic: ties break on the
/// lexicographically smallest merged string.
Vocab build_vocab(const std::vector<corpus::Document>& docs, int target_size);

/// Greedy longest-match encoder over an immutable vocabulary.
class Tokenizer {
 public:
  explicit Tokenizer(Vocab vocab, bool lowercase = false,
                     int max_subword_length = 64);

  /// Longest-match-first segmentation; out-of-vocabulary code points map to
  /// UNK. Empty input gives an empty sequence.
  std::vector<int> encode(const std::string& text) const;

  /// Joins token strings with single spaces. decode(encode(t)) == t for text
  /// whose every whitespace-delimited word is a single vocab token; for any
  /// text built from in-vocab characters the round trip preserves everything
  /// but whitespace placement. Throws std::out_of_range for id >= vocab size.
  std::string decode(const std::vector<int>& ids) const;

  /// encode() plus the source word index of each produced token; used to map
  /// token spans back to text.
  std::vector<int> encode_with_word_index(const std::string& text,
                                          std::vector<int>& word_of_token) const;

  const Vocab& vocab() const { return vocab_; }
  bool lowercase() const { return lowercase_; }
  int max_subword_length() const { return max_subword_length_; }

 private:
  void encode_word(const std::string& word, std::vector<int>& out) const;

  Vocab vocab_;
  bool lowercase_;
  int max_subword_length_;
  std::unordered_set<std::string> content_tokens_;
};

std::uint64_t fnv1a64(const void* data, std::size_t len);
std::uint64_t fnv1a64_file(const std::string& path);

}  // namespace polybert::tokenizer
