#include "polybert/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "polybert/checkpoint.hpp"
#include "polybert/metrics.hpp"
#include "polybert/objectives.hpp"
#include "polybert/optim.hpp"
#include "polybert/rng.hpp"

namespace polybert::harness {

using json = nlohmann::json;
using nn::Tensor;
using tasks::TaskKind;

namespace {

constexpr int kMaxAnswerTokens = 30;

// One task example encoded to ids plus everything the loss and the decoder
// need later.
struct Encoded {
  std::vector<int> ids;
  std::vector<int> piece_label;  // token task; -1 = ignored position
  int class_label = -1;
  double reg_target = 0.0;  // normalized to [0,1]
  int start_pos = -1, end_pos = -1;
  int ctx_begin = -1, ctx_end = -1;          // [begin,end) seq positions
  std::vector<int> word_of_piece;            // -1 for non-context pieces
  std::vector<std::pair<int, int>> word_chars;  // context word byte ranges
  std::size_t source_index = 0;
};

struct WordPieces {
  std::vector<int> ids;
  std::vector<int> word_index;
};

WordPieces encode_words(const tokenizer::Tokenizer& tok, const std::string& text) {
  WordPieces wp;
  wp.ids = tok.encode_with_word_index(text, wp.word_index);
  return wp;
}

std::vector<std::pair<int, int>> word_byte_ranges(const std::string& text) {
  std::vector<std::pair<int, int>> ranges;
  int i = 0;
  const int n = static_cast<int>(text.size());
  while (i < n) {
    while (i < n && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i >= n) break;
    const int begin = i;
    while (i < n && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    ranges.emplace_back(begin, i);
  }
  return ranges;
}

// two-sided truncation for sentence pairs: drop from the longer side first
void truncate_pair(std::vector<int>& a, std::vector<int>& b, int budget) {
  while (static_cast<int>(a.size() + b.size()) > budget) {
    if (a.size() >= b.size()) {
      a.pop_back();
    } else {
      b.pop_back();
    }
  }
}

Encoded encode_token_example(const tokenizer::Tokenizer& tok,
                             const tasks::TaskSpec& task,
                             const tasks::TokenExample& ex, int max_seq_len) {
  Encoded enc;
  enc.ids.push_back(tokenizer::kCls);
  enc.piece_label.push_back(-1);
  enc.word_of_piece.push_back(-1);
  const int budget = max_seq_len - 2;
  for (std::size_t w = 0; w < ex.words.size(); ++w) {
    const auto pieces = tok.encode(ex.words[w]);
    if (static_cast<int>(enc.ids.size()) - 1 + static_cast<int>(pieces.size()) >
        budget) {
      break;
    }
    for (std::size_t k = 0; k < pieces.size(); ++k) {
      enc.ids.push_back(pieces[k]);
      // only the first piece of a word carries the word's tag
      enc.piece_label.push_back(k == 0 ? task.label_id(ex.tags[w]) : -1);
      enc.word_of_piece.push_back(static_cast<int>(w));
    }
  }
  enc.ids.push_back(tokenizer::kSep);
  enc.piece_label.push_back(-1);
  enc.word_of_piece.push_back(-1);
  return enc;
}

Encoded encode_pair_example(const tokenizer::Tokenizer& tok,
                            const tasks::TaskSpec& task,
                            const tasks::PairExample& ex, int max_seq_len) {
  Encoded enc;
  auto a = tok.encode(ex.text_a);
  auto b = tok.encode(ex.text_b);
  truncate_pair(a, b, max_seq_len - 3);
  enc.ids.push_back(tokenizer::kCls);
  enc.ids.insert(enc.ids.end(), a.begin(), a.end());
  enc.ids.push_back(tokenizer::kSep);
  enc.ids.insert(enc.ids.end(), b.begin(), b.end());
  enc.ids.push_back(tokenizer::kSep);
  if (task.kind == TaskKind::pair_classification) {
    enc.class_label = task.label_id(ex.label);
  } else {
    enc.reg_target =
        (ex.score - task.score_min) / (task.score_max - task.score_min);
  }
  return enc;
}

Encoded encode_span_example(const tokenizer::Tokenizer& tok,
                            const tasks::TaskSpec& task,
                            const tasks::SpanExample& ex, int max_seq_len) {
  Encoded enc;
  auto q = tok.encode(ex.question);
  const auto ctx_words = word_byte_ranges(ex.context);
  const WordPieces ctx = encode_words(tok, ex.context);

  const int q_budget = std::min<int>(static_cast<int>(q.size()),
                                     (max_seq_len - 3) / 3);
  q.resize(static_cast<std::size_t>(q_budget));
  const int ctx_budget = max_seq_len - 3 - q_budget;

  enc.ids.push_back(tokenizer::kCls);
  enc.word_of_piece.push_back(-1);
  for (int id : q) {
    enc.ids.push_back(id);
    enc.word_of_piece.push_back(-1);
  }
  enc.ids.push_back(tokenizer::kSep);
  enc.word_of_piece.push_back(-1);
  enc.ctx_begin = static_cast<int>(enc.ids.size());
  for (std::size_t k = 0;
       k < ctx.ids.size() && static_cast<int>(k) < ctx_budget; ++k) {
    enc.ids.push_back(ctx.ids[k]);
    enc.word_of_piece.push_back(ctx.word_index[k]);
  }
  enc.ctx_end = static_cast<int>(enc.ids.size());
  enc.ids.push_back(tokenizer::kSep);
  enc.word_of_piece.push_back(-1);
  enc.word_chars = ctx_words;

  // map the gold byte span to token positions (first piece of the first
  // word, last piece of the last word)
  const int answer_begin = ex.answer_start;
  const int answer_end = answer_begin + static_cast<int>(ex.answer_text.size());
  int first_word = -1, last_word = -1;
  for (std::size_t w = 0; w < ctx_words.size(); ++w) {
    const auto [wb, we] = ctx_words[w];
    if (wb < answer_end && answer_begin < we) {
      if (first_word < 0) first_word = static_cast<int>(w);
      last_word = static_cast<int>(w);
    }
  }
  if (first_word >= 0) {
    for (int pos = enc.ctx_begin; pos < enc.ctx_end; ++pos) {
      const int w = enc.word_of_piece[static_cast<std::size_t>(pos)];
      if (w == first_word && enc.start_pos < 0) enc.start_pos = pos;
      if (w == last_word) enc.end_pos = pos;
    }
  }
  (void)task;
  return enc;
}

model::TokenBatch batch_from_encoded(const std::vector<const Encoded*>& items) {
  model::TokenBatch batch;
  batch.batch = static_cast<int>(items.size());
  std::size_t max_len = 0;
  for (const auto* e : items) max_len = std::max(max_len, e->ids.size());
  batch.seq = static_cast<int>(max_len);
  batch.ids.assign(items.size() * max_len, tokenizer::kPad);
  batch.attn_mask.assign(items.size() * max_len, 0.0);
  for (std::size_t i = 0; i < items.size(); ++i) {
    for (std::size_t j = 0; j < items[i]->ids.size(); ++j) {
      batch.ids[i * max_len + j] = items[i]->ids[j];
      batch.attn_mask[i * max_len + j] = 1.0;
    }
  }
  return batch;
}

Tensor cls_vector(const Tensor& hidden) {
  const auto b = hidden.dim(0);
  const auto h = hidden.dim(2);
  return nn::reshape(nn::slice(hidden, 1, 0, 1), {b, h});
}

struct HeadOutputs {
  Tensor loss;
};

// loss over one already-encoded batch; shared by all kinds
HeadOutputs batch_loss(const FinetunedModel& m,
                       const std::vector<const Encoded*>& items) {
  const model::TokenBatch batch = batch_from_encoded(items);
  const Tensor hidden = m.encoder.encode_sequence(batch);
  HeadOutputs out;
  switch (m.kind) {
    case TaskKind::token_classification: {
      const Tensor logits = nn::add(nn::matmul(hidden, m.head_w), m.head_b);
      const auto l = logits.dim(2);
      const Tensor flat = nn::reshape(logits, {logits.dim(0) * logits.dim(1), l});
      std::vector<std::int64_t> positions;
      std::vector<int> targets;
      for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& labels = items[i]->piece_label;
        for (std::size_t j = 0; j < labels.size(); ++j) {
          if (labels[j] >= 0) {
            positions.push_back(static_cast<std::int64_t>(i) * batch.seq +
                                static_cast<std::int64_t>(j));
            targets.push_back(labels[j]);
          }
        }
      }
      out.loss = objectives::cross_entropy(nn::take_rows(flat, positions), targets);
      break;
    }
    case TaskKind::pair_classification: {
      const Tensor logits = nn::add(nn::matmul(cls_vector(hidden), m.head_w), m.head_b);
      std::vector<int> targets;
      for (const auto* e : items) targets.push_back(e->class_label);
      out.loss = objectives::cross_entropy(logits, targets);
      break;
    }
    case TaskKind::pair_regression: {
      const Tensor pred = nn::reshape(
          nn::add(nn::matmul(cls_vector(hidden), m.head_w), m.head_b),
          {static_cast<std::int64_t>(items.size())});
      std::vector<double> targets;
      for (const auto* e : items) targets.push_back(e->reg_target);
      const Tensor target_t = Tensor::constant(
          {static_cast<std::int64_t>(items.size())}, std::move(targets), "reg_targets");
      const Tensor diff = nn::sub(pred, target_t);
      out.loss = nn::mean_all(nn::mul(diff, diff));
      break;
    }
    case TaskKind::span_extraction: {
      const Tensor logits2 = nn::add(nn::matmul(hidden, m.head_w), m.head_b);
      const auto b = logits2.dim(0);
      const auto s = logits2.dim(1);
      const Tensor start_raw = nn::reshape(nn::slice(logits2, 2, 0, 1), {b, s});
      const Tensor end_raw = nn::reshape(nn::slice(logits2, 2, 1, 2), {b, s});
      // additive mask: answers live inside the context segment only
      std::vector<double> mask(static_cast<std::size_t>(b * s), -1e30);
      for (std::size_t i = 0; i < items.size(); ++i) {
        for (int pos = items[i]->ctx_begin; pos < items[i]->ctx_end; ++pos) {
          mask[i * static_cast<std::size_t>(s) + static_cast<std::size_t>(pos)] = 0.0;
        }
      }
      const Tensor mask_t = Tensor::constant({b, s}, std::move(mask), "ctx_mask");
      std::vector<int> starts, ends;
      for (const auto* e : items) {
        starts.push_back(std::max(e->start_pos, e->ctx_begin));
        ends.push_back(std::max(e->end_pos, e->ctx_begin));
      }
      const Tensor ce_start =
          objectives::cross_entropy(nn::add(start_raw, mask_t), starts);
      const Tensor ce_end =
          objectives::cross_entropy(nn::add(end_raw, mask_t), ends);
      out.loss = nn::add(nn::scale(ce_start, 0.5), nn::scale(ce_end, 0.5));
      break;
    }
  }
  return out;
}

std::vector<Encoded> encode_dataset(const tokenizer::Tokenizer& tok,
                                    const tasks::TaskSpec& task,
                                    const std::string& path) {
  std::vector<Encoded> out;
  switch (task.kind) {
    case TaskKind::token_classification: {
      const auto data = tasks::load_conll(path);
      for (std::size_t i = 0; i < data.size(); ++i) {
        auto enc = encode_token_example(tok, task, data[i], task.max_seq_len);
        enc.source_index = i;
        out.push_back(std::move(enc));
      }
      break;
    }
    case TaskKind::pair_classification:
    case TaskKind::pair_regression: {
      const auto data = tasks::load_pair_tsv(
          path, task.kind == TaskKind::pair_regression);
      for (std::size_t i = 0; i < data.size(); ++i) {
        auto enc = encode_pair_example(tok, task, data[i], task.max_seq_len);
        enc.source_index = i;
        out.push_back(std::move(enc));
      }
      break;
    }
    case TaskKind::span_extraction: {
      const auto data = tasks::load_span_jsonl(path);
      for (std::size_t i = 0; i < data.size(); ++i) {
        auto enc = encode_span_example(tok, task, data[i], task.max_seq_len);
        enc.source_index = i;
        out.push_back(std::move(enc));
      }
      break;
    }
  }
  return out;
}

int head_width(const tasks::TaskSpec& task) {
  switch (task.kind) {
    case TaskKind::token_classification:
    case TaskKind::pair_classification:
      return static_cast<int>(task.labels.size());
    case TaskKind::span_extraction:
      return 2;
    case TaskKind::pair_regression:
      return 1;
  }
  throw std::logic_error("head_width: bad enum");
}

}  // namespace

std::vector<Tensor> FinetunedModel::parameters() const {
  auto params = encoder.parameters();
  params.push_back(head_w);
  params.push_back(head_b);
  return params;
}

void FinetunedModel::save(const std::string& path,
                          std::uint64_t vocab_hash) const {
  auto ckpt = checkpoint::from_models(encoder, nullptr, vocab_hash, 0);
  ckpt.tensors["head.w"] = head_w.values();
  ckpt.tensors["head.b"] = head_b.values();
  json extra;
  extra["kind"] = tasks::kind_name(kind);
  extra["labels"] = labels;
  extra["score_min"] = score_min;
  extra["score_max"] = score_max;
  extra["head_width"] = head_w.dim(1);
  ckpt.extra = extra.dump();
  checkpoint::save(path, ckpt);
}

FinetunedModel FinetunedModel::load(
    const std::string& path, std::optional<std::uint64_t> expected_vocab_hash) {
  const auto ckpt = checkpoint::load(path);
  if (ckpt.extra.empty()) {
    throw std::runtime_error("not a fine-tuned model file: " + path);
  }
  const json extra = json::parse(ckpt.extra);
  FinetunedModel m;
  m.encoder = checkpoint::restore_encoder(ckpt, expected_vocab_hash);
  m.kind = tasks::kind_from_name(extra.at("kind").get<std::string>());
  m.labels = extra.at("labels").get<std::vector<std::string>>();
  m.score_min = extra.at("score_min").get<double>();
  m.score_max = extra.at("score_max").get<double>();
  const auto width = extra.at("head_width").get<std::int64_t>();
  const auto& w = ckpt.tensors.at("head.w");
  const auto& b = ckpt.tensors.at("head.b");
  m.head_w = Tensor::parameter({ckpt.config.hidden, width},
                               std::vector<double>(w), "head.w");
  m.head_b = Tensor::parameter({width}, std::vector<double>(b), "head.w.bias");
  return m;
}

FinetunedModel finetune(const model::EncoderModel& base,
                        const tokenizer::Tokenizer& tok,
                        const tasks::TaskSpec& task,
                        const std::vector<std::string>& languages,
                        std::uint64_t seed) {
  FinetunedModel m;
  m.encoder = base.clone();
  m.kind = task.kind;
  m.labels = task.labels;
  m.score_min = task.score_min;
  m.score_max = task.score_max;
  const int width = head_width(task);
  rng::Rng gen(rng::derive_seed(seed, "head_init"));
  std::vector<double> w(static_cast<std::size_t>(base.config().hidden) * width);
  for (auto& x : w) x = gen.truncated_normal(0.02);
  m.head_w = Tensor::parameter({base.config().hidden, width}, std::move(w), "head.w");
  m.head_b = Tensor::parameter(
      {width}, std::vector<double>(static_cast<std::size_t>(width), 0.0),
      "head.w.bias");

  std::vector<Encoded> train;
  for (const auto& lang : languages) {
    const auto it = task.languages.find(lang);
    if (it == task.languages.end()) {
      throw std::runtime_error("finetune: task has no language '" + lang + "'");
    }
    if (it->second.train_path.empty()) continue;
    auto part = encode_dataset(tok, task, it->second.train_path);
    std::move(part.begin(), part.end(), std::back_inserter(train));
  }
  if (train.empty()) {
    throw std::runtime_error("finetune: empty training split");
  }

  const std::int64_t steps_per_epoch =
      (static_cast<std::int64_t>(train.size()) + task.batch_size - 1) /
      task.batch_size;
  optim::OptimConfig ocfg;
  ocfg.peak_lr = task.lr;
  ocfg.total_steps = steps_per_epoch * task.epochs;
  ocfg.warmup_steps = std::max<std::int64_t>(1, ocfg.total_steps / 10);
  optim::AdamW opt(m.parameters(), ocfg);

  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::int64_t step = 0;
  for (int epoch = 0; epoch < task.epochs; ++epoch) {
    rng::Rng shuffle_gen(rng::derive_seed(seed, "ft_shuffle",
                                          static_cast<std::uint64_t>(epoch)));
    shuffle_gen.shuffle(order);
    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(task.batch_size)) {
      const std::size_t end = std::min(
          begin + static_cast<std::size_t>(task.batch_size), order.size());
      std::vector<const Encoded*> items;
      for (std::size_t i = begin; i < end; ++i) items.push_back(&train[order[i]]);
      const auto out = batch_loss(m, items);
      ++step;
      opt.zero_grad();
      nn::backward(out.loss);
      optim::clip_gradients(opt.params(), ocfg.clip_norm);
      opt.step(optim::lr_at(ocfg, step));
    }
  }
  return m;
}

namespace {

struct Predictions {
  // one entry per example, task-dependent
  std::vector<std::vector<metrics::Span>> spans;  // token task
  std::vector<int> class_ids;                     // pair classification
  std::vector<double> scores;                     // regression
  std::vector<std::pair<int, int>> word_ranges;   // span extraction
};

Predictions predict(const FinetunedModel& m, const std::vector<Encoded>& data,
                    const std::vector<tasks::TokenExample>* token_gold,
                    int batch_size) {
  Predictions pred;
  nn::NoGradGuard no_grad;
  for (std::size_t begin = 0; begin < data.size();
       begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t batch_end =
        std::min(begin + static_cast<std::size_t>(batch_size), data.size());
    std::vector<const Encoded*> items;
    for (std::size_t i = begin; i < batch_end; ++i) items.push_back(&data[i]);
    const model::TokenBatch batch = batch_from_encoded(items);
    const Tensor hidden = m.encoder.encode_sequence(batch);
    switch (m.kind) {
      case TaskKind::token_classification: {
        const Tensor logits = nn::add(nn::matmul(hidden, m.head_w), m.head_b);
        const auto l = logits.dim(2);
        for (std::size_t i = 0; i < items.size(); ++i) {
          const Encoded& e = *items[i];
          const auto& gold_words =
              (*token_gold)[e.source_index].words;
          std::vector<std::string> tags(gold_words.size(), "O");
          for (std::size_t j = 0; j < e.piece_label.size(); ++j) {
            if (e.piece_label[j] < 0) continue;  // not a first piece
            const int word = e.word_of_piece[j];
            const double* row = logits.values().data() +
                                (static_cast<std::int64_t>(i) * batch.seq +
                                 static_cast<std::int64_t>(j)) *
                                    l;
            int best = 0;
            for (int c = 1; c < l; ++c) {
              if (row[c] > row[best]) best = c;
            }
            tags[static_cast<std::size_t>(word)] =
                m.labels[static_cast<std::size_t>(best)];
          }
          pred.spans.push_back(metrics::bio_to_spans(tags));
        }
        break;
      }
      case TaskKind::pair_classification: {
        const Tensor logits = nn::add(nn::matmul(cls_vector(hidden), m.head_w), m.head_b);
        const auto l = logits.dim(1);
        for (std::size_t i = 0; i < items.size(); ++i) {
          const double* row = logits.values().data() + static_cast<std::int64_t>(i) * l;
          int best = 0;
          for (int c = 1; c < l; ++c) {
            if (row[c] > row[best]) best = c;
          }
          pred.class_ids.push_back(best);
        }
        break;
      }
      case TaskKind::pair_regression: {
        const Tensor out = nn::add(nn::matmul(cls_vector(hidden), m.head_w), m.head_b);
        for (std::size_t i = 0; i < items.size(); ++i) {
          double v = out.values()[i];
          // denormalize and clip to the task range
          v = m.score_min + v * (m.score_max - m.score_min);
          v = std::clamp(v, m.score_min, m.score_max);
          pred.scores.push_back(v);
        }
        break;
      }
      case TaskKind::span_extraction: {
        const Tensor logits2 = nn::add(nn::matmul(hidden, m.head_w), m.head_b);
        const auto s = logits2.dim(1);
        for (std::size_t i = 0; i < items.size(); ++i) {
          const Encoded& e = *items[i];
          const auto at = [&](std::int64_t pos, int which) {
            return logits2.values()[(static_cast<std::int64_t>(i) * s + pos) * 2 +
                                    which];
          };
          double best_score = -1e300;
          int best_start = e.ctx_begin, best_end = e.ctx_begin;
          for (int st = e.ctx_begin; st < e.ctx_end; ++st) {
            for (int en = st;
                 en < std::min(e.ctx_end, st + kMaxAnswerTokens); ++en) {
              const double sc = at(st, 0) + at(en, 1);
              if (sc > best_score) {
                best_score = sc;
                best_start = st;
                best_end = en;
              }
            }
          }
          pred.word_ranges.emplace_back(
              e.word_of_piece[static_cast<std::size_t>(best_start)],
              e.word_of_piece[static_cast<std::size_t>(best_end)]);
        }
        break;
      }
    }
  }
  return pred;
}

}  // namespace

double evaluate(const FinetunedModel& m, const tokenizer::Tokenizer& tok,
                const tasks::TaskSpec& task, const std::string& language) {
  const auto it = task.languages.find(language);
  if (it == task.languages.end() || it->second.eval_path.empty()) {
    throw std::runtime_error("evaluate: no eval split for language '" +
                             language + "'");
  }
  const std::string& path = it->second.eval_path;
  const auto data = encode_dataset(tok, task, path);
  if (data.empty()) throw std::runtime_error("evaluate: empty eval split " + path);

  switch (task.kind) {
    case TaskKind::token_classification: {
      const auto gold = tasks::load_conll(path);
      const auto pred = predict(m, data, &gold, task.batch_size);
      std::vector<std::vector<metrics::Span>> gold_spans;
      for (const auto& ex : gold) {
        gold_spans.push_back(metrics::bio_to_spans(ex.tags));
      }
      return metrics::token_f1(gold_spans, pred.spans);
    }
    case TaskKind::pair_classification: {
      const auto gold = tasks::load_pair_tsv(path, false);
      const auto pred = predict(m, data, nullptr, task.batch_size);
      std::vector<int> gold_ids;
      for (const auto& ex : gold) gold_ids.push_back(task.label_id(ex.label));
      return metrics::classification_f1(gold_ids, pred.class_ids,
                                        static_cast<int>(task.labels.size()));
    }
    case TaskKind::pair_regression: {
      const auto gold = tasks::load_pair_tsv(path, true);
      const auto pred = predict(m, data, nullptr, task.batch_size);
      std::vector<double> gold_scores;
      for (const auto& ex : gold) gold_scores.push_back(ex.score);
      return stats::pearson(pred.scores, gold_scores);
    }
    case TaskKind::span_extraction: {
      const auto gold = tasks::load_span_jsonl(path);
      const auto pred = predict(m, data, nullptr, task.batch_size);
      std::vector<std::string> gold_answers, pred_answers;
      for (std::size_t i = 0; i < gold.size(); ++i) {
        gold_answers.push_back(gold[i].answer_text);
        const auto [w0, w1] = pred.word_ranges[i];
        const Encoded& e = data[i];
        std::string answer;
        if (w0 >= 0 && w1 >= w0 && w1 < static_cast<int>(e.word_chars.size())) {
          answer = gold[i].context.substr(
              static_cast<std::size_t>(e.word_chars[static_cast<std::size_t>(w0)].first),
              static_cast<std::size_t>(e.word_chars[static_cast<std::size_t>(w1)].second -
                                       e.word_chars[static_cast<std::size_t>(w0)].first));
        }
        pred_answers.push_back(std::move(answer));
      }
      return metrics::span_partial_f1(gold_answers, pred_answers);
    }
  }
  throw std::logic_error("evaluate: bad enum");
}

std::vector<EvalResult> run_protocol(const std::vector<ModelUnderTest>& models,
                                     const tokenizer::Tokenizer& tok,
                                     const std::vector<tasks::TaskSpec>& task_list,
                                     const std::vector<std::string>& modes,
                                     std::uint64_t seed) {
  std::vector<EvalResult> results;
  for (const auto& mode : modes) {
    if (mode != "each" && mode != "all" && mode != "mono") {
      throw std::runtime_error("run_protocol: unknown mode '" + mode + "'");
    }
  }
  for (const auto& task : task_list) {
    const auto eval_langs = task.eval_languages();
    if (eval_langs.empty()) {
      throw std::runtime_error("run_protocol: task '" + task.name +
                               "' has no evaluable languages");
    }
    for (const auto& mode : modes) {
      if (mode == "mono" && !task.cross_lingual()) {
        throw std::runtime_error("run_protocol: task '" + task.name +
                                 "' has no cross-lingual samples; mono mode "
                                 "does not apply");
      }
      for (const auto& mut : models) {
        EvalResult r;
        r.model_id = mut.id;
        r.task = task.name;
        r.train_mode = mode;
        if (mode == "each") {
          for (const auto& lang : eval_langs) {
            const auto ft = finetune(
                mut.encoder, tok, task, {lang},
                rng::derive_seed(seed, mut.id + "/" + task.name + "/each/" + lang));
            r.per_language[lang] = evaluate(ft, tok, task, lang);
          }
        } else {
          std::vector<std::string> train_langs;
          for (const auto& [lang, split] : task.languages) {
            const bool cross = lang.find('-') != std::string::npos;
            if (mode == "mono" && cross) continue;
            if (split.train_path.empty()) continue;
            train_langs.push_back(lang);
          }
          const auto ft = finetune(
              mut.encoder, tok, task, train_langs,
              rng::derive_seed(seed, mut.id + "/" + task.name + "/" + mode));
          for (const auto& lang : eval_langs) {
            r.per_language[lang] = evaluate(ft, tok, task, lang);
          }
        }
        double sum = 0.0;
        for (const auto& [lang, score] : r.per_language) sum += score;
        r.average = sum / static_cast<double>(r.per_language.size());
        results.push_back(std::move(r));
      }
    }
  }
  return results;
}

ComparisonReport build_comparison(const std::vector<EvalResult>& results,
                                  const std::vector<std::string>& baseline_models) {
  ComparisonReport report;
  const std::set<std::string> baseline(baseline_models.begin(),
                                       baseline_models.end());
  std::map<std::pair<std::string, std::string>, std::pair<double, double>> pairs;
  std::map<std::pair<std::string, std::string>, int> seen;
  for (const auto& r : results) {
    const auto key = std::make_pair(r.model_id, r.task);
    if (r.train_mode == "each") {
      pairs[key].first = r.average;
      seen[key] |= 1;
    } else if (r.train_mode == "all") {
      pairs[key].second = r.average;
      seen[key] |= 2;
    }
  }
  std::map<std::string, std::vector<double>> by_model;
  for (const auto& [key, scores] : pairs) {
    if (seen[key] != 3) continue;  // need both each and all
    ComparisonEntry e;
    e.model = key.first;
    e.task = key.second;
    e.each_avg = scores.first;
    e.all_avg = scores.second;
    e.rel_improvement = stats::relative_improvement(e.each_avg, e.all_avg);
    by_model[e.model].push_back(e.rel_improvement);
    report.entries.push_back(std::move(e));
  }
  std::vector<double> group_a_vals, group_b_vals;
  for (const auto& [model, vals] : by_model) {
    double sum = 0.0;
    for (double v : vals) sum += v;
    report.mean_rel_by_model[model] = sum / static_cast<double>(vals.size());
    if (baseline.count(model)) {
      report.group_b.push_back(model);
      group_b_vals.insert(group_b_vals.end(), vals.begin(), vals.end());
    } else {
      report.group_a.push_back(model);
      group_a_vals.insert(group_a_vals.end(), vals.begin(), vals.end());
    }
  }
  if (!baseline.empty() && group_a_vals.size() >= 2 && group_b_vals.size() >= 2) {
    report.group_test = stats::students_t_test(group_a_vals, group_b_vals);
  }
  return report;
}

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_comparison_json(const ComparisonReport& report,
                           const std::string& path) {
  json j;
  j["entries"] = json::array();
  for (const auto& e : report.entries) {
    j["entries"].push_back(json{{"model", e.model},
                                {"task", e.task},
                                {"each", e.each_avg},
                                {"all", e.all_avg},
                                {"rel_improvement", e.rel_improvement}});
  }
  j["mean_rel_by_model"] = report.mean_rel_by_model;
  j["group_a"] = report.group_a;
  j["group_b"] = report.group_b;
  if (report.group_test) {
    j["t_test"] = json{{"t", report.group_test->t},
                       {"p", report.group_test->p},
                       {"df", report.group_test->df},
                       {"mean_a", report.group_test->mean_a},
                       {"mean_b", report.group_test->mean_b}};
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write comparison: " + path);
  out << j.dump(2) << "\n";
}

ComparisonReport load_comparison_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open comparison: " + path);
  json j;
  in >> j;
  ComparisonReport report;
  for (const auto& e : j.at("entries")) {
    ComparisonEntry entry;
    entry.model = e.at("model").get<std::string>();
    entry.task = e.at("task").get<std::string>();
    entry.each_avg = e.at("each").get<double>();
    entry.all_avg = e.at("all").get<double>();
    entry.rel_improvement = e.at("rel_improvement").get<double>();
    report.entries.push_back(std::move(entry));
  }
  report.mean_rel_by_model =
      j.at("mean_rel_by_model").get<std::map<std::string, double>>();
  report.group_a = j.at("group_a").get<std::vector<std::string>>();
  report.group_b = j.at("group_b").get<std::vector<std::string>>();
  if (j.contains("t_test")) {
    stats::TTestResult t;
    t.t = j["t_test"].at("t").get<double>();
    t.p = j["t_test"].at("p").get<double>();
    t.df = j["t_test"].at("df").get<std::int64_t>();
    t.mean_a = j["t_test"].at("mean_a").get<double>();
    t.mean_b = j["t_test"].at("mean_b").get<double>();
    report.group_test = t;
  }
  return report;
}

namespace {

void write_svg(const ComparisonReport& report, const std::string& path) {
  const int width = 640, height = 360;
  const int margin_left = 60, margin_bottom = 60, margin_top = 30,
            margin_right = 20;
  std::vector<std::pair<std::string, double>> bars(
      report.mean_rel_by_model.begin(), report.mean_rel_by_model.end());
  double lo = 0.0, hi = 0.0;
  for (const auto& [name, v] : bars) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi == lo) hi = lo + 1e-9;
  const double plot_w = width - margin_left - margin_right;
  const double plot_h = height - margin_top - margin_bottom;
  const auto y_of = [&](double v) {
    return margin_top + plot_h * (hi - v) / (hi - lo);
  };
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\">\n";
  svg << "  <rect width=\"" << width << "\" height=\"" << height
      << "\" fill=\"white\"/>\n";
  svg << "  <text x=\"" << width / 2
      << "\" y=\"18\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"14\">Mean relative improvement (all vs each)</text>\n";
  // zero line
  svg << "  <line x1=\"" << margin_left << "\" y1=\"" << y_of(0.0) << "\" x2=\""
      << width - margin_right << "\" y2=\"" << y_of(0.0)
      << "\" stroke=\"#444\" stroke-width=\"1\"/>\n";
  const double slot = bars.empty() ? plot_w : plot_w / static_cast<double>(bars.size());
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double v = bars[i].second;
    const double x = margin_left + slot * static_cast<double>(i) + slot * 0.15;
    const double bar_w = slot * 0.7;
    const double y_top = std::min(y_of(v), y_of(0.0));
    const double bar_h = std::fabs(y_of(v) - y_of(0.0));
    svg << "  <rect x=\"" << x << "\" y=\"" << y_top << "\" width=\"" << bar_w
        << "\" height=\"" << std::max(bar_h, 0.5)
        << "\" fill=\"#4878a8\"/>\n";
    char label[64];
    std::snprintf(label, sizeof(label), "%+.2f%%", v * 100.0);
    svg << "  <text x=\"" << x + bar_w / 2 << "\" y=\"" << y_top - 4
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"11\">"
        << label << "</text>\n";
    svg << "  <text x=\"" << x + bar_w / 2 << "\" y=\"" << height - margin_bottom + 16
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"11\">"
        << bars[i].first << "</text>\n";
  }
  svg << "</svg>\n";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write svg: " + path);
  out << svg.str();
}

}  // namespace

void emit_report(const ComparisonReport& report, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::string csv_path = dir + "/report.csv";
  std::ofstream csv(csv_path, std::ios::binary);
  if (!csv) throw std::runtime_error("cannot write report csv: " + csv_path);
  csv << "model,task,each,all,rel_improvement\n";
  for (const auto& e : report.entries) {
    csv << e.model << ',' << e.task << ',' << fmt17(e.each_avg) << ','
        << fmt17(e.all_avg) << ',' << fmt17(e.rel_improvement) << "\n";
  }
  csv.close();
  if (!csv) throw std::runtime_error("report csv write failed: " + csv_path);
  write_svg(report, dir + "/report.svg");
}

ProbeOutcome train_linear_probe(const ProbeData& train, const ProbeData& eval,
                                int n_classes, std::uint64_t seed) {
  if (train.features.empty() || eval.features.empty()) {
    throw std::invalid_argument("train_linear_probe: empty data");
  }
  const auto dim = static_cast<std::int64_t>(train.features.front().size());
  const auto rows = static_cast<std::int64_t>(train.features.size());
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(rows * dim));
  for (const auto& f : train.features) {
    if (static_cast<std::int64_t>(f.size()) != dim) {
      throw std::invalid_argument("train_linear_probe: ragged features");
    }
    flat.insert(flat.end(), f.begin(), f.end());
  }
  const Tensor x = Tensor::constant({rows, dim}, std::move(flat), "probe_x");

  rng::Rng gen(rng::derive_seed(seed, "probe_init"));
  std::vector<double> w0(static_cast<std::size_t>(dim * n_classes));
  for (auto& v : w0) v = gen.truncated_normal(0.02);
  Tensor w = Tensor::parameter({dim, n_classes}, std::move(w0), "probe.w");
  Tensor b = Tensor::parameter(
      {n_classes}, std::vector<double>(static_cast<std::size_t>(n_classes), 0.0),
      "probe.w.bias");

  optim::OptimConfig ocfg;
  ocfg.peak_lr = 0.05;
  ocfg.total_steps = 400;
  ocfg.warmup_steps = 20;
  ocfg.weight_decay = 0.0;
  optim::AdamW opt({w, b}, ocfg);
  for (std::int64_t step = 1; step <= ocfg.total_steps; ++step) {
    const Tensor logits = nn::add(nn::matmul(x, w), b);
    const Tensor loss = objectives::cross_entropy(logits, train.labels);
    opt.zero_grad();
    nn::backward(loss);
    opt.step(optim::lr_at(ocfg, step));
  }

  // score on the eval set
  nn::NoGradGuard no_grad;
  std::vector<double> eval_flat;
  for (const auto& f : eval.features) {
    eval_flat.insert(eval_flat.end(), f.begin(), f.end());
  }
  const auto eval_rows = static_cast<std::int64_t>(eval.features.size());
  const Tensor ex = Tensor::constant({eval_rows, dim}, std::move(eval_flat), "probe_eval");
  const Tensor logits = nn::add(nn::matmul(ex, w), b);
  const Tensor ce = objectives::cross_entropy(logits, eval.labels);
  ProbeOutcome out;
  out.mean_ce = ce.item();
  std::int64_t correct = 0;
  for (std::int64_t i = 0; i < eval_rows; ++i) {
    const double* row = logits.values().data() + i * n_classes;
    int best = 0;
    for (int c = 1; c < n_classes; ++c) {
      if (row[c] > row[best]) best = c;
    }
    if (best == eval.labels[static_cast<std::size_t>(i)]) ++correct;
  }
  out.accuracy = static_cast<double>(correct) / static_cast<double>(eval_rows);
  return out;
}

std::vector<std::vector<double>> mean_pooled_features(
    const model::EncoderModel& encoder, const tokenizer::Tokenizer& tok,
    const std::vector<std::string>& texts, int max_seq_len) {
  nn::NoGradGuard no_grad;
  std::vector<std::vector<double>> features;
  features.reserve(texts.size());
  constexpr int kBatch = 16;
  for (std::size_t begin = 0; begin < texts.size(); begin += kBatch) {
    const std::size_t end = std::min(begin + kBatch, texts.size());
    std::vector<Encoded> encoded;
    for (std::size_t i = begin; i < end; ++i) {
      Encoded e;
      auto ids = tok.encode(texts[i]);
      if (static_cast<int>(ids.size()) > max_seq_len - 2) {
        ids.resize(static_cast<std::size_t>(max_seq_len - 2));
      }
      e.ids.push_back(tokenizer::kCls);
      e.ids.insert(e.ids.end(), ids.begin(), ids.end());
      e.ids.push_back(tokenizer::kSep);
      encoded.push_back(std::move(e));
    }
    std::vector<const Encoded*> items;
    for (const auto& e : encoded) items.push_back(&e);
    const model::TokenBatch batch = batch_from_encoded(items);
    const Tensor hidden = encoder.encode_sequence(batch);
    const Tensor pooled =
        nn::masked_mean_rows(hidden, model::attn_mask_tensor(batch));
    const auto h = pooled.dim(1);
    for (std::int64_t i = 0; i < pooled.dim(0); ++i) {
      features.emplace_back(pooled.values().begin() + i * h,
                            pooled.values().begin() + (i + 1) * h);
    }
  }
  return features;
}

std::vector<ComparisonEntry> load_comparison_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open report csv: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "model,task,each,all,rel_improvement") {
    throw std::runtime_error("unexpected report csv header in " + path);
  }
  std::vector<ComparisonEntry> entries;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    ComparisonEntry e;
    std::getline(ls, e.model, ',');
    std::getline(ls, e.task, ',');
    std::getline(ls, field, ',');
    e.each_avg = std::stod(field);
    std::getline(ls, field, ',');
    e.all_avg = std::stod(field);
    std::getline(ls, field, ',');
    e.rel_improvement = std::stod(field);
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace polybert::harness
