#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "polybert/corpus.hpp"
#include "polybert/rng.hpp"

using namespace polybert;
using corpus::Document;

TEST_CASE("strip_html_artifacts removes tags and entities") {
  CHECK(corpus::strip_html_artifacts("a <b>bold</b> word") == "a bold word");
  CHECK(corpus::strip_html_artifacts("x &amp; y") == "x  y");
  CHECK(corpus::strip_html_artifacts("no markup here") == "no markup here");
  // unterminated tag and bare ampersand survive
  CHECK(corpus::strip_html_artifacts("a < b") == "a < b");
  CHECK(corpus::strip_html_artifacts("a & b") == "a & b");
  CHECK(corpus::strip_html_artifacts("<>") == "<>");  // needs 1..100 chars inside
  // entity needs 1..10 word chars
  CHECK(corpus::strip_html_artifacts("&toolongtobeentity;") ==
        "&toolongtobeentity;");
  // tag content longer than 100 code points is not a tag
  const std::string long_tag = "<" + std::string(101, 'x') + ">";
  CHECK(corpus::strip_html_artifacts(long_tag) == long_tag);
  const std::string max_tag = "<" + std::string(100, 'x') + ">";
  CHECK(corpus::strip_html_artifacts(max_tag).empty());
}

TEST_CASE("strip_hidden_characters: Cc/Cf removed, newline and tab to space") {
  CHECK(corpus::strip_hidden_characters("a\xE2\x80\x8B"
                                        "b") == "ab");  // U+200B
  CHECK(corpus::strip_hidden_characters("a\nb") == "a b");
  CHECK(corpus::strip_hidden_characters("a\tb") == "a b");
  CHECK(corpus::strip_hidden_characters("a\rb") == "ab");  // CR is plain Cc
  CHECK(corpus::strip_hidden_characters("plain") == "plain");
  CHECK(corpus::strip_hidden_characters("\xEF\xBB\xBFtext") == "text");  // BOM
}

TEST_CASE("strip operations are idempotent (fuzz)") {
  rng::Rng gen(21);
  const std::string alphabet = "ab<>&; c\n\t1#";
  for (int trial = 0; trial < 300; ++trial) {
    std::string s;
    const auto len = gen.below(40);
    for (std::uint64_t i = 0; i < len; ++i) {
      s.push_back(alphabet[gen.below(alphabet.size())]);
    }
    const std::string once = corpus::strip_html_artifacts(s);
    CHECK(corpus::strip_html_artifacts(once) == once);
    const std::string hidden_once = corpus::strip_hidden_characters(s);
    CHECK(corpus::strip_hidden_characters(hidden_once) == hidden_once);
  }
}

static corpus::FilterDecision decide(const std::string& text) {
  return corpus::passes_filters({"d", "aa", text},
                                corpus::whitespace_token_count);
}

TEST_CASE("passes_filters: rule outcomes and order") {
  CHECK(decide("https://x.org/page").rule == corpus::kRuleUrlIsbnOnly);
  CHECK(decide("ISBN978-0306406157").rule == corpus::kRuleUrlIsbnOnly);
  CHECK(decide("see https://a.b and ISBN42-1 !").rule ==
        corpus::kRuleUrlIsbnOnly);
  // 8 digits / 10 chars = 80%
  CHECK(decide("a1234567b9").rule == corpus::kRuleDigitRatio);
  // five whitespace tokens pass the <5 rule
  CHECK(decide("the cat sat on mats").keep);
  CHECK(decide("four tokens only here").rule == corpus::kRuleTooShort);
  // order: a URL-only text with high digit ratio reports the URL rule
  CHECK(decide("https://1234567890.example").rule == corpus::kRuleUrlIsbnOnly);
}

TEST_CASE("digit ratio boundary: exactly 70% is kept") {
  // 14 digits / 20 code points, 6 tokens
  const std::string text = "111 222 333 444 55 b";
  REQUIRE(text.size() == 20);
  CHECK(decide(text).keep);
  // one more digit tips it over
  CHECK(decide("111 222 333 444 555b").rule == corpus::kRuleDigitRatio);
}

static std::vector<Document> fixture12() {
  // 3 per drop-rule, 3 keeps; hand-checkable outcomes
  return {
      {"k1", "aa", "the quick brown fox jumps"},
      {"u1", "aa", "https://example.org/a"},
      {"d1", "bb", "a1234567b9"},
      {"s1", "bb", "too short here"},
      {"k2", "bb", "five little words in sequence"},
      {"u2", "aa", "http://foo.bar https://baz.qux"},
      {"d2", "bb", "99999999 x9"},
      {"s2", "aa", "just four tokens present"},
      {"k3", "aa", "111 222 333 444 55 b"},  // 70% digits exactly
      {"u3", "bb", "ISBN978-0306406157"},
      {"d3", "aa", "12345678901234 xyz41"},
      {"s3", "bb", "one two three four"},
  };
}

TEST_CASE("filter_corpus: 12-document fixture") {
  const auto docs = fixture12();
  corpus::LanguageRegistry langs({"aa", "bb"});
  const auto [kept, report] =
      corpus::filter_corpus(docs, langs, corpus::whitespace_token_count);
  CHECK(kept.size() == 3);
  CHECK(report.kept == 3);
  CHECK(report.dropped_per_rule.at(corpus::kRuleUrlIsbnOnly) == 3);
  CHECK(report.dropped_per_rule.at(corpus::kRuleDigitRatio) == 3);
  CHECK(report.dropped_per_rule.at(corpus::kRuleTooShort) == 3);
  // order preserved
  CHECK(kept[0].id == "k1");
  CHECK(kept[1].id == "k2");
  CHECK(kept[2].id == "k3");
}

TEST_CASE("filter_corpus: empty stream and single clean sentence") {
  corpus::LanguageRegistry langs({"aa"});
  const auto [kept0, report0] =
      corpus::filter_corpus({}, langs, corpus::whitespace_token_count);
  CHECK(kept0.empty());
  CHECK(report0.kept == 0);

  const std::vector<Document> one{{"x", "aa", "a clean five token sentence"}};
  const auto [kept1, report1] =
      corpus::filter_corpus(one, langs, corpus::whitespace_token_count);
  CHECK(kept1.size() == 1);
  CHECK(report1.tokens_per_sample_mean == doctest::Approx(5.0));
}

TEST_CASE("filter_corpus: unregistered language is a configuration error") {
  corpus::LanguageRegistry langs({"aa"});
  const std::vector<Document> docs{{"x", "zz", "five tokens are right here"}};
  CHECK_THROWS_WITH_AS(
      corpus::filter_corpus(docs, langs, corpus::whitespace_token_count),
      doctest::Contains("zz"), std::runtime_error);
}

TEST_CASE("conservation: kept + dropped = input, for random corpora") {
  rng::Rng gen(22);
  corpus::LanguageRegistry langs({"aa"});
  const char* pieces[] = {"word", "123456", "https://x.y", "a", "&amp;", "<b>",
                          "tok en s", "9"};
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Document> docs;
    const auto n = gen.below(20);
    for (std::uint64_t i = 0; i < n; ++i) {
      std::string text;
      const auto words = gen.below(9);
      for (std::uint64_t w = 0; w < words; ++w) {
        if (!text.empty()) text += ' ';
        text += pieces[gen.below(8)];
      }
      docs.push_back({"d" + std::to_string(i), "aa", text});
    }
    const auto [kept, report] =
        corpus::filter_corpus(docs, langs, corpus::whitespace_token_count);
    CHECK(report.kept + report.total_dropped() ==
          static_cast<std::int64_t>(docs.size()));
    CHECK(report.kept == static_cast<std::int64_t>(kept.size()));
  }
}

TEST_CASE("jsonl round trip") {
  const auto docs = fixture12();
  std::ostringstream buffer;
  {
    std::stringstream tmp;
    for (const auto& d : docs) {
      tmp << R"({"id":")" << d.id << R"(","lang":")" << d.lang
          << R"(","text":")" << d.text << R"("})" << "\n";
    }
    buffer << tmp.str();
  }
  std::istringstream in(buffer.str());
  const auto parsed = corpus::read_jsonl_stream(in);
  REQUIRE(parsed.size() == docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    CHECK(parsed[i].id == docs[i].id);
    CHECK(parsed[i].text == docs[i].text);
  }
}

TEST_CASE("filter report JSON carries the per-rule counts") {
  corpus::FilterReport report;
  report.kept = 2;
  report.dropped_per_rule["url_isbn_only"] = 1;
  const auto j = report.to_json();
  CHECK(j.find("\"kept\": 2") != std::string::npos);
  CHECK(j.find("url_isbn_only") != std::string::npos);
}
