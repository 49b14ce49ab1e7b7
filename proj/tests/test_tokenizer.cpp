#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "polybert/rng.hpp"
#include "polybert/tokenizer.hpp"

using namespace polybert;
using namespace polybert::tokenizer;
using corpus::Document;

namespace {
std::vector<Document> docs_of(const std::vector<std::string>& texts) {
  std::vector<Document> docs;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    docs.push_back({"d" + std::to_string(i), "aa", texts[i]});
  }
  return docs;
}
}  // namespace

TEST_CASE("special ids are pinned") {
  CHECK(kPad == 0);
  CHECK(kUnk == 1);
  CHECK(kCls == 2);
  CHECK(kSep == 3);
  CHECK(kMask == 4);
}

TEST_CASE("build_vocab: pair (a,a) merges into 'aa' at target 7") {
  const auto vocab = build_vocab(docs_of({"aa aa aa"}), 7);
  CHECK(vocab.size() == 7);
  CHECK(vocab.id("aa") >= kNumSpecials);
}

TEST_CASE("build_vocab: target below specials+1 is rejected") {
  CHECK_THROWS_AS(build_vocab(docs_of({"x"}), 5), std::invalid_argument);
}

TEST_CASE("build_vocab: single char document fills exactly to 6") {
  const auto vocab = build_vocab(docs_of({"x"}), 6);
  CHECK(vocab.size() == 6);
  CHECK(vocab.tokens[5] == "x");
}

TEST_CASE("build_vocab: empty corpus is an error") {
  CHECK_THROWS_AS(build_vocab({}, 10), std::runtime_error);
}

TEST_CASE("build_vocab determinism: byte-identical vocab files") {
  const auto texts = std::vector<std::string>{
      "the cat sat on the mat", "the dog sat on the log", "cats and dogs"};
  const auto v1 = build_vocab(docs_of(texts), 40);
  const auto v2 = build_vocab(docs_of(texts), 40);
  CHECK(v1.tokens == v2.tokens);
  const auto dir = std::filesystem::temp_directory_path() / "pb_vocab_test";
  std::filesystem::create_directories(dir);
  v1.save((dir / "v1.txt").string());
  v2.save((dir / "v2.txt").string());
  std::ifstream f1(dir / "v1.txt", std::ios::binary);
  std::ifstream f2(dir / "v2.txt", std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), {});
  std::string s2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(s1 == s2);
  CHECK(v1.hash() == v2.hash());
}

TEST_CASE("encode: basics and UNK fallback") {
  const auto vocab = build_vocab(docs_of({"aa aa aa bb"}), 12);
  const Tokenizer tok(vocab);
  CHECK(tok.encode("").empty());
  const auto one = tok.encode("aa");
  REQUIRE(one.size() == 1);
  CHECK(one[0] == vocab.id("aa"));
  // 'z' never appeared: becomes UNK
  const auto ids = tok.encode("za");
  CHECK(std::count(ids.begin(), ids.end(), kUnk) == 1);
  CHECK(!tok.encode("zzz").empty());
}

TEST_CASE("encode: longest match wins") {
  // vocab with both "ab" and single chars; "abab" should use two "ab" pieces
  const auto vocab = build_vocab(docs_of({"ab ab ab abab"}), 10);
  const Tokenizer tok(vocab);
  const int ab = vocab.id("ab");
  REQUIRE(ab >= 0);
  const auto ids = tok.encode("abab");
  const int abab = vocab.id("abab");
  if (abab >= 0) {
    CHECK(ids == std::vector<int>{abab});
  } else {
    CHECK(ids == std::vector<int>{ab, ab});
  }
}

TEST_CASE("decode: bounds, empty, and round trip") {
  const auto vocab = build_vocab(docs_of({"aa bb aa bb cc"}), 16);
  const Tokenizer tok(vocab);
  CHECK(tok.decode({}).empty());
  CHECK_THROWS_AS(tok.decode({vocab.size()}), std::out_of_range);
  const auto ids = tok.encode("aa bb cc");
  CHECK(tok.decode(ids) == "aa bb cc");
}

TEST_CASE("round trip property: whitespace-insensitive reconstruction") {
  rng::Rng gen(31);
  const auto corpus_texts = std::vector<std::string>{
      "ka ti po sa mu no", "kati posa muno", "tika sapo noka", "mu mu ka ti"};
  const auto vocab = build_vocab(docs_of(corpus_texts), 48);
  const Tokenizer tok(vocab);
  const std::string letters = "ktpsmn aio";
  for (int trial = 0; trial < 200; ++trial) {
    std::string text;
    const auto len = 1 + gen.below(24);
    for (std::uint64_t i = 0; i < len; ++i) {
      text.push_back(letters[gen.below(letters.size())]);
    }
    const std::string decoded = tok.decode(tok.encode(text));
    // strip every whitespace character from both sides before comparing
    const auto strip_space = [](const std::string& s) {
      std::string out;
      for (char c : s) {
        if (c != ' ') out.push_back(c);
      }
      return out;
    };
    CHECK(strip_space(decoded) == strip_space(text));
  }
}

TEST_CASE("vocab file: line number is the id, specials first") {
  const auto vocab = build_vocab(docs_of({"aa bb"}), 10);
  const auto dir = std::filesystem::temp_directory_path() / "pb_vocab_test2";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "v.txt").string();
  vocab.save(path);
  const auto loaded = Vocab::load(path);
  CHECK(loaded.tokens == vocab.tokens);
  for (int i = 0; i < kNumSpecials; ++i) {
    CHECK(loaded.tokens[static_cast<std::size_t>(i)] == kSpecialTokens[i]);
  }
  // corrupted specials are rejected
  std::ofstream bad(path, std::ios::binary);
  bad << "[PAD]\n[UNK]\nWRONG\n[SEP]\n[MASK]\nx\n";
  bad.close();
  CHECK_THROWS_AS(Vocab::load(path), std::runtime_error);
}

TEST_CASE("special tokens in running text do not map to special ids") {
  const auto vocab = build_vocab(docs_of({"aa bb"}), 16);
  const Tokenizer tok(vocab);
  for (int id : tok.encode("[CLS]")) CHECK(id != kCls);
  for (int id : tok.encode("[MASK]")) CHECK(id != kMask);
}

TEST_CASE("encode_with_word_index maps pieces to source words") {
  const auto vocab = build_vocab(docs_of({"ka ti ka ti kati"}), 14);
  const Tokenizer tok(vocab);
  std::vector<int> word_of;
  const auto ids = tok.encode_with_word_index("ka kati ti", word_of);
  REQUIRE(ids.size() == word_of.size());
  CHECK(word_of.front() == 0);
  CHECK(word_of.back() == 2);
}
