#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "polybert/model.hpp"
#include "polybert/tensor.hpp"

using namespace polybert;
using model::EncoderModel;
using model::LanguageDiscriminator;
using model::ModelConfig;
using model::TokenBatch;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.n_layers = 1;
  cfg.hidden = 8;
  cfg.n_heads = 2;
  cfg.ff_multiplier = 4;
  cfg.vocab_size = 32;
  cfg.max_positions = 16;
  cfg.n_languages = 2;
  return cfg;
}

TokenBatch batch_of(const std::vector<std::vector<int>>& seqs) {
  TokenBatch batch;
  batch.batch = static_cast<int>(seqs.size());
  std::size_t max_len = 0;
  for (const auto& s : seqs) max_len = std::max(max_len, s.size());
  batch.seq = static_cast<int>(max_len);
  batch.ids.assign(seqs.size() * max_len, 0);
  batch.attn_mask.assign(seqs.size() * max_len, 0.0);
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    for (std::size_t j = 0; j < seqs[i].size(); ++j) {
      batch.ids[i * max_len + j] = seqs[i][j];
      batch.attn_mask[i * max_len + j] = 1.0;
    }
  }
  return batch;
}

}  // namespace

TEST_CASE("config validation") {
  auto cfg = tiny_config();
  CHECK_NOTHROW(cfg.validate());
  cfg.n_heads = 3;  // 8 % 3 != 0
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = tiny_config();
  cfg.vocab_size = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("init determinism: same seed bit-identical, different seed differs") {
  const auto cfg = tiny_config();
  const auto m1 = EncoderModel::init(cfg, 7);
  const auto m2 = EncoderModel::init(cfg, 7);
  const auto m3 = EncoderModel::init(cfg, 8);
  const auto p1 = m1.parameters();
  const auto p2 = m2.parameters();
  const auto p3 = m3.parameters();
  bool any_diff = false;
  for (std::size_t i = 0; i < p1.size(); ++i) {
    CHECK(p1[i].values() == p2[i].values());
    if (p1[i].values() != p3[i].values()) any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("parameter count matches the closed-form architecture formula") {
  const auto cfg = tiny_config();
  const auto m = EncoderModel::init(cfg, 1);
  const std::int64_t h = cfg.hidden, v = cfg.vocab_size, f = 4 * h;
  // embeddings + per-layer (2 LN + QKVO + FF) + final LN + untied MLM head
  const std::int64_t embeddings = v * h + cfg.max_positions * h;
  const std::int64_t per_layer = 2 * (2 * h)            // ln1, ln2
                                 + 4 * (h * h + h)      // wq wk wv wo + biases
                                 + (h * f + f)          // ff w1
                                 + (f * h + h);         // ff w2
  const std::int64_t head = h * v + v;
  const std::int64_t expected =
      embeddings + cfg.n_layers * per_layer + 2 * h + head;
  CHECK(m.parameter_count() == expected);
  CHECK(expected == 1560);  // frozen for this config

  const auto disc = LanguageDiscriminator::init(cfg.hidden, cfg.n_languages, 1);
  std::int64_t disc_count = 0;
  for (const auto& t : disc.parameters()) disc_count += t.numel();
  CHECK(disc_count == h * cfg.n_languages + cfg.n_languages);
}

TEST_CASE("init statistics: biases zero, LN gain one, weights spread") {
  const auto m = EncoderModel::init(tiny_config(), 3);
  for (double v : m.layers[0].bq.values()) CHECK(v == 0.0);
  for (double v : m.layers[0].ln1_gain.values()) CHECK(v == 1.0);
  for (double v : m.layers[0].ln1_bias.values()) CHECK(v == 0.0);
  double min = 1e9, max = -1e9;
  for (double v : m.token_embedding.values()) {
    min = std::min(min, v);
    max = std::max(max, v);
    CHECK(std::fabs(v) <= 0.04);  // truncated at 2 sigma
  }
  CHECK(min < 0.0);
  CHECK(max > 0.0);
}

TEST_CASE("encode_sequence: shape contract and batch independence") {
  const auto cfg = tiny_config();
  const auto m = EncoderModel::init(cfg, 5);
  const auto batch = batch_of({{2, 9, 3}});
  const auto h = m.encode_sequence(batch);
  CHECK(h.shape() == nn::Shape{1, 3, 8});

  // permuting batch rows permutes outputs identically
  const auto two = batch_of({{2, 9, 3}, {2, 11, 3}});
  const auto swapped = batch_of({{2, 11, 3}, {2, 9, 3}});
  const auto h2 = m.encode_sequence(two).values();
  const auto h2s = m.encode_sequence(swapped).values();
  const std::size_t row = 3 * 8;
  for (std::size_t i = 0; i < row; ++i) {
    CHECK(h2[i] == h2s[row + i]);
    CHECK(h2[row + i] == h2s[i]);
  }
}

TEST_CASE("appending a fully masked pad position leaves real outputs unchanged") {
  const auto cfg = tiny_config();
  const auto m = EncoderModel::init(cfg, 6);
  const auto base = batch_of({{2, 9, 3, 7}});
  auto padded = base;
  padded.seq += 1;
  padded.ids.push_back(0);
  padded.attn_mask.push_back(0.0);
  const auto h1 = m.encode_sequence(base).values();
  const auto h2 = m.encode_sequence(padded).values();
  for (std::size_t i = 0; i < h1.size(); ++i) {
    CHECK(h1[i] == doctest::Approx(h2[i]).epsilon(1e-10));
  }
}

TEST_CASE("encode_sequence errors: too long, id out of range") {
  const auto cfg = tiny_config();
  const auto m = EncoderModel::init(cfg, 6);
  std::vector<int> long_seq(static_cast<std::size_t>(cfg.max_positions) + 1, 6);
  CHECK_THROWS_AS(m.encode_sequence(batch_of({long_seq})),
                  std::invalid_argument);
  CHECK_THROWS_AS(m.encode_sequence(batch_of({{2, 32, 3}})),
                  std::invalid_argument);
}

TEST_CASE("mlm_logits: shape, bias at zero hidden state, finiteness") {
  const auto cfg = tiny_config();
  const auto m = EncoderModel::init(cfg, 9);
  const auto batch = batch_of({{2, 9, 3}});
  const auto logits = m.mlm_logits(m.encode_sequence(batch));
  CHECK(logits.shape() == nn::Shape{1, 3, 32});
  for (double v : logits.values()) CHECK(std::isfinite(v));

  const auto zero_h = nn::Tensor::zeros({1, 1, 8});
  const auto from_zero = m.mlm_logits(zero_h).values();
  for (std::size_t i = 0; i < from_zero.size(); ++i) {
    CHECK(from_zero[i] == m.b_mlm.values()[i]);
  }
}

TEST_CASE("discriminator: mean pooling over non-pad positions only") {
  LanguageDiscriminator d = LanguageDiscriminator::init(2, 2, 4);
  // identity FF, zero bias
  d.w.values() = {1.0, 0.0, 0.0, 1.0};
  d.b.values() = {0.0, 0.0};
  // two token vectors [1,3] and [3,1] -> pooled [2,2]
  const auto h = nn::Tensor::constant({1, 2, 2}, {1.0, 3.0, 3.0, 1.0});
  const auto mask = nn::Tensor::constant({1, 2}, {1.0, 1.0});
  const auto logits = d.discriminate(h, mask).values();
  CHECK(logits[0] == doctest::Approx(2.0));
  CHECK(logits[1] == doctest::Approx(2.0));

  // padding invariance: a pad position does not shift the mean
  const auto h_pad =
      nn::Tensor::constant({1, 3, 2}, {1.0, 3.0, 3.0, 1.0, 99.0, -99.0});
  const auto mask_pad = nn::Tensor::constant({1, 3}, {1.0, 1.0, 0.0});
  const auto logits_pad = d.discriminate(h_pad, mask_pad).values();
  CHECK(logits_pad[0] == doctest::Approx(2.0));
  CHECK(logits_pad[1] == doctest::Approx(2.0));

  // zero weights -> uniform distribution over languages
  d.w.values() = {0.0, 0.0, 0.0, 0.0};
  const auto zero_logits = d.discriminate(h, mask).values();
  CHECK(zero_logits[0] == 0.0);
  CHECK(zero_logits[1] == 0.0);

  // all-pad sequence is an error
  const auto all_pad = nn::Tensor::constant({1, 2}, {0.0, 0.0});
  CHECK_THROWS_AS(d.discriminate(h, all_pad), std::invalid_argument);
}

TEST_CASE("encoder and discriminator parameter groups are disjoint") {
  const auto cfg = tiny_config();
  const auto m = EncoderModel::init(cfg, 1);
  const auto d = LanguageDiscriminator::init(cfg.hidden, cfg.n_languages, 1);
  for (const auto& pe : m.parameters()) {
    for (const auto& pd : d.parameters()) {
      CHECK(pe.node().get() != pd.node().get());
    }
  }
}

TEST_CASE("clone produces equal values with independent storage") {
  const auto m = EncoderModel::init(tiny_config(), 2);
  auto copy = m.clone();
  auto src = m.parameters();
  auto dst = copy.parameters();
  for (std::size_t i = 0; i < src.size(); ++i) {
    CHECK(src[i].values() == dst[i].values());
    CHECK(src[i].node().get() != dst[i].node().get());
  }
  dst[0].values()[0] += 1.0;
  CHECK(src[0].values()[0] != dst[0].values()[0]);
}
