#include "polybert/model.hpp"

#include <cmath>
#include <stdexcept>

#include "polybert/rng.hpp"

namespace polybert::model {

using nn::Shape;
using nn::Tensor;

void ModelConfig::validate() const {
  const auto fail = [](const std::string& msg) {
    throw std::invalid_argument("ModelConfig: " + msg);
  };
  if (n_layers <= 0) fail("n_layers must be positive");
  if (hidden <= 0) fail("hidden must be positive");
  if (n_heads <= 0) fail("n_heads must be positive");
  if (ff_multiplier <= 0) fail("ff_multiplier must be positive");
  if (vocab_size <= 0) fail("vocab_size must be positive");
  if (max_positions <= 0) fail("max_positions must be positive");
  if (n_languages <= 0) fail("n_languages must be positive");
  if (hidden % n_heads != 0) {
    fail("hidden (" + std::to_string(hidden) + ") not divisible by n_heads (" +
         std::to_string(n_heads) + ")");
  }
}

namespace {

Tensor init_weight(rng::Rng& gen, Shape shape, const std::string& name) {
  const auto n = nn::shape_numel(shape);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = gen.truncated_normal(0.02);
  return Tensor::parameter(std::move(shape), std::move(v), name);
}

Tensor init_const(Shape shape, double value, const std::string& name) {
  const auto n = nn::shape_numel(shape);
  return Tensor::parameter(
      std::move(shape), std::vector<double>(static_cast<std::size_t>(n), value),
      name);
}

}  // namespace

EncoderModel EncoderModel::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  rng::Rng gen(rng::derive_seed(seed, "encoder_init"));
  EncoderModel m;
  m.config_ = config;
  const std::int64_t h = config.hidden;
  const std::int64_t v = config.vocab_size;
  const std::int64_t f = static_cast<std::int64_t>(config.ff_multiplier) * h;

  m.token_embedding = init_weight(gen, {v, h}, "tok_emb");
  m.position_embedding =
      init_weight(gen, {config.max_positions, h}, "pos_emb");
  for (int l = 0; l < config.n_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    EncoderLayer layer;
    layer.ln1_gain = init_const({h}, 1.0, p + "ln1.gain");
    layer.ln1_bias = init_const({h}, 0.0, p + "ln1.bias");
    layer.wq = init_weight(gen, {h, h}, p + "attn.wq");
    layer.bq = init_const({h}, 0.0, p + "attn.wq.bias");
    layer.wk = init_weight(gen, {h, h}, p + "attn.wk");
    layer.bk = init_const({h}, 0.0, p + "attn.wk.bias");
    layer.wv = init_weight(gen, {h, h}, p + "attn.wv");
    layer.bv = init_const({h}, 0.0, p + "attn.wv.bias");
    layer.wo = init_weight(gen, {h, h}, p + "attn.wo");
    layer.bo = init_const({h}, 0.0, p + "attn.wo.bias");
    layer.ln2_gain = init_const({h}, 1.0, p + "ln2.gain");
    layer.ln2_bias = init_const({h}, 0.0, p + "ln2.bias");
    layer.w_ff1 = init_weight(gen, {h, f}, p + "ff.w1");
    layer.b_ff1 = init_const({f}, 0.0, p + "ff.w1.bias");
    layer.w_ff2 = init_weight(gen, {f, h}, p + "ff.w2");
    layer.b_ff2 = init_const({h}, 0.0, p + "ff.w2.bias");
    m.layers.push_back(std::move(layer));
  }
  m.final_ln_gain = init_const({h}, 1.0, "final_ln.gain");
  m.final_ln_bias = init_const({h}, 0.0, "final_ln.bias");
  m.w_mlm = init_weight(gen, {h, v}, "mlm_head.w");
  m.b_mlm = init_const({v}, 0.0, "mlm_head.w.bias");
  return m;
}

Tensor attn_mask_tensor(const TokenBatch& batch) {
  return Tensor::constant({batch.batch, batch.seq}, batch.attn_mask,
                          "attn_mask");
}

Tensor EncoderModel::encode_sequence(const TokenBatch& batch) const {
  if (batch.seq > config_.max_positions) {
    throw std::invalid_argument(
        "encode_sequence: sequence length " + std::to_string(batch.seq) +
        " exceeds max_positions " + std::to_string(config_.max_positions));
  }
  for (int id : batch.ids) {
    if (id < 0 || id >= config_.vocab_size) {
      throw std::invalid_argument("encode_sequence: token id " +
                                  std::to_string(id) + " outside vocab of " +
                                  std::to_string(config_.vocab_size));
    }
  }
  const std::int64_t b = batch.batch;
  const std::int64_t s = batch.seq;
  const std::int64_t h = config_.hidden;
  const std::int64_t heads = config_.n_heads;
  const std::int64_t hd = h / heads;

  std::vector<int> pos_ids(static_cast<std::size_t>(b * s));
  for (std::int64_t i = 0; i < b; ++i) {
    for (std::int64_t j = 0; j < s; ++j) {
      pos_ids[static_cast<std::size_t>(i * s + j)] = static_cast<int>(j);
    }
  }
  Tensor x = nn::add(nn::embedding_lookup(token_embedding, batch.ids, {b, s}),
                     nn::embedding_lookup(position_embedding, pos_ids, {b, s}));

  // additive attention mask: 0 at real keys, -1e30 at padded keys. exp()
  // underflows to exactly 0, so padding cannot leak into real positions.
  std::vector<double> mask_add(static_cast<std::size_t>(b * heads * s * s));
  for (std::int64_t i = 0; i < b; ++i) {
    for (std::int64_t g = 0; g < heads; ++g) {
      for (std::int64_t q = 0; q < s; ++q) {
        for (std::int64_t k = 0; k < s; ++k) {
          mask_add[static_cast<std::size_t>(((i * heads + g) * s + q) * s + k)] =
              batch.attn_mask[static_cast<std::size_t>(i * s + k)] != 0.0
                  ? 0.0
                  : -1e30;
        }
      }
    }
  }
  const Tensor key_mask =
      Tensor::constant({b, heads, s, s}, std::move(mask_add), "key_mask");
  const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));

  const auto to_heads = [&](const Tensor& t) {
    // [B,S,H] -> [B,heads,S,hd]
    return nn::transpose_axes(nn::reshape(t, {b, s, heads, hd}), 1, 2);
  };

  for (const EncoderLayer& layer : layers) {
    const Tensor xn = nn::layer_norm(x, layer.ln1_gain, layer.ln1_bias);
    const Tensor q = to_heads(nn::add(nn::matmul(xn, layer.wq), layer.bq));
    const Tensor k = to_heads(nn::add(nn::matmul(xn, layer.wk), layer.bk));
    const Tensor v = to_heads(nn::add(nn::matmul(xn, layer.wv), layer.bv));
    Tensor scores =
        nn::scale(nn::matmul(q, nn::transpose_axes(k, 2, 3)), inv_sqrt_hd);
    scores = nn::add(scores, key_mask);
    const Tensor attn = nn::softmax(scores, 3);
    Tensor ctx = nn::matmul(attn, v);  // [B,heads,S,hd]
    ctx = nn::reshape(nn::transpose_axes(ctx, 1, 2), {b, s, h});
    const Tensor attn_out = nn::add(nn::matmul(ctx, layer.wo), layer.bo);
    x = nn::add(x, attn_out);

    const Tensor xn2 = nn::layer_norm(x, layer.ln2_gain, layer.ln2_bias);
    const Tensor ff1 =
        nn::gelu(nn::add(nn::matmul(xn2, layer.w_ff1), layer.b_ff1));
    const Tensor ff2 = nn::add(nn::matmul(ff1, layer.w_ff2), layer.b_ff2);
    x = nn::add(x, ff2);
  }
  return nn::layer_norm(x, final_ln_gain, final_ln_bias);
}

Tensor EncoderModel::mlm_logits(const nn::Tensor& hidden_states) const {
  return nn::add(nn::matmul(hidden_states, w_mlm), b_mlm);
}

std::vector<std::pair<std::string, Tensor>> EncoderModel::named_parameters()
    const {
  std::vector<std::pair<std::string, Tensor>> out;
  const auto push = [&out](const Tensor& t) { out.emplace_back(t.label(), t); };
  push(token_embedding);
  push(position_embedding);
  for (const auto& l : layers) {
    push(l.ln1_gain);
    push(l.ln1_bias);
    push(l.wq);
    push(l.bq);
    push(l.wk);
    push(l.bk);
    push(l.wv);
    push(l.bv);
    push(l.wo);
    push(l.bo);
    push(l.ln2_gain);
    push(l.ln2_bias);
    push(l.w_ff1);
    push(l.b_ff1);
    push(l.w_ff2);
    push(l.b_ff2);
  }
  push(final_ln_gain);
  push(final_ln_bias);
  push(w_mlm);
  push(b_mlm);
  return out;
}

std::vector<Tensor> EncoderModel::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::int64_t EncoderModel::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& t : parameters()) n += t.numel();
  return n;
}

EncoderModel EncoderModel::clone() const {
  EncoderModel copy = EncoderModel::init(config_, 0);
  auto src = parameters();
  auto dst = copy.parameters();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i].values() = src[i].values();
  return copy;
}

LanguageDiscriminator LanguageDiscriminator::init(int hidden, int n_languages,
                                                  std::uint64_t seed) {
  if (hidden <= 0 || n_languages <= 0) {
    throw std::invalid_argument("LanguageDiscriminator: dimensions must be positive");
  }
  rng::Rng gen(rng::derive_seed(seed, "disc_init"));
  LanguageDiscriminator d;
  d.n_languages_ = n_languages;
  d.w = init_weight(gen, {hidden, n_languages}, "disc.w");
  d.b = init_const({n_languages}, 0.0, "disc.w.bias");
  return d;
}

Tensor LanguageDiscriminator::pool(const nn::Tensor& hidden_states,
                                   const nn::Tensor& attn_mask) const {
  return nn::masked_mean_rows(hidden_states, attn_mask);
}

Tensor LanguageDiscriminator::logits_from_pooled(const nn::Tensor& pooled) const {
  return nn::add(nn::matmul(pooled, w), b);
}

Tensor LanguageDiscriminator::discriminate(const nn::Tensor& hidden_states,
                                           const nn::Tensor& attn_mask) const {
  return logits_from_pooled(pool(hidden_states, attn_mask));
}

std::vector<std::pair<std::string, Tensor>>
LanguageDiscriminator::named_parameters() const {
  return {{w.label(), w}, {b.label(), b}};
}

std::vector<Tensor> LanguageDiscriminator::parameters() const { return {w, b}; }

}  // namespace polybert::model
