#include "polybert/synthdata.hpp"

#include <filesystem>
#include <cstdio>
#include <stdexcept>

#include "polybert/rng.hpp"

namespace polybert::synthdata {

namespace {

constexpr int kNouns = 12;     // class 0: 0..5, class 1: 6..11
constexpr int kVerbs = 8;
constexpr int kAdjs = 6;
constexpr int kPersons = 8;
constexpr int kPlaces = 8;

struct Inventory {
  const char* consonants[6];
  const char* vowels[3];
};

const Inventory& inventory(const std::string& lang) {
  static const Inventory a{{"k", "t", "p", "s", "m", "n"}, {"a", "i", "o"}};
  static const Inventory b{{"z", "g", "d", "b", "v", "r"}, {"u", "e", "y"}};
  if (lang == kLangA) return a;
  if (lang == kLangB) return b;
  throw std::invalid_argument("synthdata: unknown language '" + lang + "'");
}

int category_offset(const std::string& category) {
  if (category == "noun") return 0;
  if (category == "verb") return 20;
  if (category == "adj") return 40;
  if (category == "per") return 60;
  if (category == "loc") return 80;
  if (category == "det0") return 100;
  if (category == "det1") return 101;
  if (category == "end") return 102;
  if (category == "neg") return 103;
  if (category == "qword") return 104;
  if (category == "prep") return 105;
  throw std::invalid_argument("synthdata: unknown category '" + category + "'");
}

}  // namespace

std::string concept_word(const std::string& lang, const std::string& category,
                         int index) {
  const Inventory& inv = inventory(lang);
  const int code = category_offset(category) + index;
  // two deterministic CV syllables; injective for code < 324
  std::string w;
  w += inv.consonants[code % 6];
  w += inv.vowels[(code / 6) % 3];
  w += inv.consonants[(code / 18) % 6];
  w += inv.vowels[(code / 108) % 3];
  return w;
}

namespace {

std::string det_for_noun(const std::string& lang, int noun) {
  return concept_word(lang, noun < kNouns / 2 ? "det0" : "det1", 0);
}

struct SentenceConcepts {
  int noun_subj;
  int verb;
  int noun_obj;
  int adj = -1;      // -1: absent
  bool use_prep = false;
};

SentenceConcepts draw_sentence(rng::Rng& gen) {
  SentenceConcepts c;
  c.noun_subj = static_cast<int>(gen.below(kNouns));
  c.verb = static_cast<int>(gen.below(kVerbs));
  c.noun_obj = static_cast<int>(gen.below(kNouns));
  const auto form = gen.below(3);
  if (form == 1) c.adj = static_cast<int>(gen.below(kAdjs));
  if (form == 2) c.use_prep = true;
  return c;
}

std::string render_sentence(const std::string& lang, const SentenceConcepts& c) {
  std::string s;
  const auto push = [&s](const std::string& w) {
    if (!s.empty()) s += ' ';
    s += w;
  };
  push(det_for_noun(lang, c.noun_subj));
  if (c.adj >= 0) push(concept_word(lang, "adj", c.adj));
  push(concept_word(lang, "noun", c.noun_subj));
  push(concept_word(lang, "verb", c.verb));
  if (c.use_prep) push(concept_word(lang, "prep", 0));
  push(det_for_noun(lang, c.noun_obj));
  push(concept_word(lang, "noun", c.noun_obj));
  push(concept_word(lang, "end", 0));
  return s;
}

}  // namespace

std::vector<corpus::Document> bilingual_corpus(const GenOptions& options) {
  std::vector<corpus::Document> docs;
  docs.reserve(2 * static_cast<std::size_t>(options.docs_per_lang));
  for (const std::string lang : {kLangA, kLangB}) {
    rng::Rng gen(rng::derive_seed(options.seed, "corpus:" + lang));
    for (int i = 0; i < options.docs_per_lang; ++i) {
      corpus::Document d;
      char idbuf[16];
      std::snprintf(idbuf, sizeof(idbuf), "%s-%04d", lang.c_str(), i);
      d.id = idbuf;
      d.lang = lang;
      const int n_sentences = 2 + static_cast<int>(gen.below(3));
      for (int s = 0; s < n_sentences; ++s) {
        if (s) d.text += ' ';
        d.text += render_sentence(lang, draw_sentence(gen));
      }
      docs.push_back(std::move(d));
    }
  }
  return docs;
}

std::vector<tasks::TokenExample> token_examples(const std::string& lang,
                                                int count, std::uint64_t seed) {
  rng::Rng gen(rng::derive_seed(seed, "token:" + lang));
  std::vector<tasks::TokenExample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    tasks::TokenExample ex;
    const auto push = [&ex](const std::string& w, const std::string& t) {
      ex.words.push_back(w);
      ex.tags.push_back(t);
    };
    const int noun = static_cast<int>(gen.below(kNouns));
    const int verb = static_cast<int>(gen.below(kVerbs));
    // subject noun phrase
    push(det_for_noun(lang, noun), "O");
    push(concept_word(lang, "noun", noun), "O");
    push(concept_word(lang, "verb", verb), "O");
    // entity: one- or two-word person, or a place after the preposition
    if (gen.below(2) == 0) {
      const int p1 = static_cast<int>(gen.below(kPersons));
      push(concept_word(lang, "per", p1), "B-PER");
      if (gen.below(2) == 0) {
        const int p2 = static_cast<int>(gen.below(kPersons));
        push(concept_word(lang, "per", p2), "I-PER");
      }
    } else {
      push(concept_word(lang, "prep", 0), "O");
      const int l1 = static_cast<int>(gen.below(kPlaces));
      push(concept_word(lang, "loc", l1), "B-LOC");
    }
    push(concept_word(lang, "end", 0), "O");
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<tasks::PairExample> pair_examples(const std::string& lang,
                                              int count, std::uint64_t seed) {
  rng::Rng gen(rng::derive_seed(seed, "pair:" + lang));
  std::vector<tasks::PairExample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    SentenceConcepts premise = draw_sentence(gen);
    premise.adj = -1;
    premise.use_prep = false;
    tasks::PairExample ex;
    ex.text_a = render_sentence(lang, premise);
    SentenceConcepts hyp = premise;
    switch (gen.below(3)) {
      case 0: {  // same concepts, adjective added
        hyp.adj = static_cast<int>(gen.below(kAdjs));
        ex.label = "match";
        ex.text_b = render_sentence(lang, hyp);
        break;
      }
      case 1: {  // negated opposite verb
        hyp.verb = premise.verb ^ 1;
        ex.label = "contra";
        ex.text_b = concept_word(lang, "neg", 0) + " " + render_sentence(lang, hyp);
        break;
      }
      default: {  // unrelated object and verb
        hyp.noun_obj = (premise.noun_obj + 3 + static_cast<int>(gen.below(5))) % kNouns;
        hyp.verb = (premise.verb + 2 + static_cast<int>(gen.below(3))) % kVerbs;
        ex.label = "neutral";
        ex.text_b = render_sentence(lang, hyp);
        break;
      }
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<tasks::SpanExample> span_examples(const std::string& lang,
                                              int count, std::uint64_t seed) {
  rng::Rng gen(rng::derive_seed(seed, "span:" + lang));
  std::vector<tasks::SpanExample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    SentenceConcepts c = draw_sentence(gen);
    c.adj = -1;  // keep the object offset computable from rendered words
    tasks::SpanExample ex;
    ex.context = render_sentence(lang, c);
    ex.question = concept_word(lang, "qword", 0) + " " +
                  concept_word(lang, "verb", c.verb);
    // answer: the object noun phrase "det noun_obj"
    ex.answer_text =
        det_for_noun(lang, c.noun_obj) + " " + concept_word(lang, "noun", c.noun_obj);
    const auto at = ex.context.rfind(ex.answer_text);
    if (at == std::string::npos) {
      throw std::logic_error("synthdata: object phrase not found in context");
    }
    ex.answer_start = static_cast<int>(at);
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<tasks::PairExample> regression_examples(const std::string& lang_a,
                                                    const std::string& lang_b,
                                                    int count,
                                                    std::uint64_t seed) {
  rng::Rng gen(rng::derive_seed(seed, "reg:" + lang_a + ":" + lang_b));
  std::vector<tasks::PairExample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    SentenceConcepts a = draw_sentence(gen);
    a.adj = -1;
    a.use_prep = false;
    SentenceConcepts b = a;
    // share 0..3 of the three concept slots; score = 5 * shared/3
    const int shared = static_cast<int>(gen.below(4));
    if (shared < 3) b.noun_obj = (a.noun_obj + 1 + static_cast<int>(gen.below(kNouns - 1))) % kNouns;
    if (shared < 2) b.verb = (a.verb + 1 + static_cast<int>(gen.below(kVerbs - 1))) % kVerbs;
    if (shared < 1) b.noun_subj = (a.noun_subj + 1 + static_cast<int>(gen.below(kNouns - 1))) % kNouns;
    tasks::PairExample ex;
    ex.text_a = render_sentence(lang_a, a);
    ex.text_b = render_sentence(lang_b, b);
    ex.score = 5.0 * static_cast<double>(shared) / 3.0;
    out.push_back(std::move(ex));
  }
  return out;
}

namespace {

tasks::TaskSpec base_spec(const std::string& name, tasks::TaskKind kind) {
  tasks::TaskSpec spec;
  spec.name = name;
  spec.kind = kind;
  return spec;
}

std::string file_name(const std::string& lang, const char* split,
                      const char* ext) {
  return lang + "." + split + "." + ext;
}

}  // namespace

std::string write_token_task(const std::string& dir, int train_per_lang,
                             int eval_per_lang, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  auto spec = base_spec("synth-ner", tasks::TaskKind::token_classification);
  spec.labels = {"O", "B-PER", "I-PER", "B-LOC", "I-LOC"};
  spec.epochs = 20;
  for (const std::string lang : {kLangA, kLangB}) {
    const auto train = token_examples(lang, train_per_lang, seed);
    const auto eval = token_examples(lang, eval_per_lang, seed + 1);
    tasks::write_conll(dir + "/" + file_name(lang, "train", "conll"), train);
    tasks::write_conll(dir + "/" + file_name(lang, "eval", "conll"), eval);
    spec.languages[lang] = {file_name(lang, "train", "conll"),
                            file_name(lang, "eval", "conll")};
  }
  const std::string path = dir + "/task.cfg";
  spec.save(path);
  return path;
}

std::string write_pair_task(const std::string& dir, int train_per_lang,
                            int eval_per_lang, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  auto spec = base_spec("synth-nli", tasks::TaskKind::pair_classification);
  spec.labels = {"match", "contra", "neutral"};
  spec.epochs = 20;
  for (const std::string lang : {kLangA, kLangB}) {
    const auto train = pair_examples(lang, train_per_lang, seed);
    const auto eval = pair_examples(lang, eval_per_lang, seed + 1);
    tasks::write_pair_tsv(dir + "/" + file_name(lang, "train", "tsv"), train, false);
    tasks::write_pair_tsv(dir + "/" + file_name(lang, "eval", "tsv"), eval, false);
    spec.languages[lang] = {file_name(lang, "train", "tsv"),
                            file_name(lang, "eval", "tsv")};
  }
  const std::string path = dir + "/task.cfg";
  spec.save(path);
  return path;
}

std::string write_span_task(const std::string& dir, int train_per_lang,
                            int eval_per_lang, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  auto spec = base_spec("synth-qa", tasks::TaskKind::span_extraction);
  spec.epochs = 20;
  for (const std::string lang : {kLangA, kLangB}) {
    const auto train = span_examples(lang, train_per_lang, seed);
    const auto eval = span_examples(lang, eval_per_lang, seed + 1);
    tasks::write_span_jsonl(dir + "/" + file_name(lang, "train", "jsonl"), train);
    tasks::write_span_jsonl(dir + "/" + file_name(lang, "eval", "jsonl"), eval);
    spec.languages[lang] = {file_name(lang, "train", "jsonl"),
                            file_name(lang, "eval", "jsonl")};
  }
  const std::string path = dir + "/task.cfg";
  spec.save(path);
  return path;
}

std::string write_regression_task(const std::string& dir, int train_per_lang,
                                  int cross_pairs, int eval_per_lang,
                                  std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  auto spec = base_spec("synth-sts", tasks::TaskKind::pair_regression);
  spec.score_min = 0.0;
  spec.score_max = 5.0;
  spec.epochs = 20;
  for (const std::string lang : {kLangA, kLangB}) {
    const auto train = regression_examples(lang, lang, train_per_lang, seed);
    const auto eval = regression_examples(lang, lang, eval_per_lang, seed + 1);
    tasks::write_pair_tsv(dir + "/" + file_name(lang, "train", "tsv"), train, true);
    tasks::write_pair_tsv(dir + "/" + file_name(lang, "eval", "tsv"), eval, true);
    spec.languages[lang] = {file_name(lang, "train", "tsv"),
                            file_name(lang, "eval", "tsv")};
  }
  const auto cross = regression_examples(kLangA, kLangB, cross_pairs, seed + 2);
  const std::string cross_key = std::string(kLangA) + "-" + kLangB;
  tasks::write_pair_tsv(dir + "/" + file_name(cross_key, "train", "tsv"), cross, true);
  spec.languages[cross_key] = {file_name(cross_key, "train", "tsv"), ""};
  const std::string path = dir + "/task.cfg";
  spec.save(path);
  return path;
}

}  // namespace polybert::synthdata
