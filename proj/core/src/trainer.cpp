#include "polybert/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>

namespace polybert::trainer {

using objectives::MaskedBatch;

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (max_seq_len < 3) throw std::invalid_argument("TrainConfig: max_seq_len must fit CLS+token+SEP");
  if (!(mask_prob >= 0.0 && mask_prob < 1.0)) {
    throw std::invalid_argument("TrainConfig: mask_prob must be in [0,1)");
  }
  if (weights.lambda_mlm < 0 || weights.lambda_adv < 0 || weights.lambda_kd < 0) {
    throw std::invalid_argument("TrainConfig: loss weights must be non-negative");
  }
  if (label_smoothing < 0.0 || label_smoothing >= 1.0) {
    throw std::invalid_argument("TrainConfig: label_smoothing must be in [0,1)");
  }
  if (kd_temperature <= 0.0) throw std::invalid_argument("TrainConfig: kd_temperature must be positive");
  if (n_steps < 1) throw std::invalid_argument("TrainConfig: n_steps must be >= 1");
  if (log_every < 1 || checkpoint_every < 1) {
    throw std::invalid_argument("TrainConfig: log_every/checkpoint_every must be >= 1");
  }
}

TrainConfig TrainConfig::from_kv(const config::KvConfig& kv) {
  TrainConfig cfg;
  cfg.model.n_layers = static_cast<int>(kv.get_int("n_layers", cfg.model.n_layers));
  cfg.model.hidden = static_cast<int>(kv.get_int("hidden", cfg.model.hidden));
  cfg.model.n_heads = static_cast<int>(kv.get_int("n_heads", cfg.model.n_heads));
  cfg.model.ff_multiplier =
      static_cast<int>(kv.get_int("ff_multiplier", cfg.model.ff_multiplier));
  cfg.model.max_positions =
      static_cast<int>(kv.get_int("max_positions", cfg.model.max_positions));
  cfg.batch_size = static_cast<int>(kv.get_int("batch_size", cfg.batch_size));
  cfg.max_seq_len = static_cast<int>(kv.get_int("max_seq_len", cfg.max_seq_len));
  cfg.mask_prob = kv.get_double("mask_prob", cfg.mask_prob);
  cfg.weights.lambda_mlm = kv.get_double("lambda_mlm", cfg.weights.lambda_mlm);
  cfg.weights.lambda_adv = kv.get_double("lambda_adv", cfg.weights.lambda_adv);
  cfg.weights.lambda_kd = kv.get_double("lambda_kd", cfg.weights.lambda_kd);
  cfg.label_smoothing = kv.get_double("label_smoothing", cfg.label_smoothing);
  cfg.kd_temperature = kv.get_double("kd_temperature", cfg.kd_temperature);
  cfg.kd_t2_rescale = kv.get_bool("kd_t2_rescale", cfg.kd_t2_rescale);
  const std::string kd_pos = kv.get_string("kd_positions", "all");
  if (kd_pos == "all") {
    cfg.kd_positions = KdPositions::all;
  } else if (kd_pos == "masked_only") {
    cfg.kd_positions = KdPositions::masked_only;
  } else {
    throw std::runtime_error("config key 'kd_positions': expected all|masked_only");
  }
  cfg.mask_bert_style = kv.get_bool("mask_bert_style", cfg.mask_bert_style);
  cfg.teacher_sees_masked =
      kv.get_bool("teacher_sees_masked", cfg.teacher_sees_masked);
  cfg.numeric_checks = kv.get_bool("numeric_checks", cfg.numeric_checks);
  cfg.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<std::int64_t>(cfg.seed)));
  cfg.n_steps = kv.get_int("n_steps", cfg.n_steps);
  cfg.log_every = kv.get_int("log_every", cfg.log_every);
  cfg.checkpoint_every = kv.get_int("checkpoint_every", cfg.checkpoint_every);
  cfg.optim.peak_lr = kv.get_double("peak_lr", cfg.optim.peak_lr);
  cfg.optim.total_steps = kv.get_int("total_steps", cfg.n_steps);
  cfg.optim.warmup_steps =
      kv.get_int("warmup_steps", std::max<std::int64_t>(1, cfg.n_steps / 20));
  cfg.optim.beta1 = kv.get_double("beta1", cfg.optim.beta1);
  cfg.optim.beta2 = kv.get_double("beta2", cfg.optim.beta2);
  cfg.optim.eps = kv.get_double("eps", cfg.optim.eps);
  cfg.optim.weight_decay = kv.get_double("weight_decay", cfg.optim.weight_decay);
  cfg.optim.clip_norm = kv.get_double("clip_norm", cfg.optim.clip_norm);

  static const std::vector<std::string> known = {
      "n_layers", "hidden", "n_heads", "ff_multiplier", "max_positions",
      "batch_size", "max_seq_len", "mask_prob", "lambda_mlm", "lambda_adv",
      "lambda_kd", "label_smoothing", "kd_temperature", "kd_t2_rescale",
      "kd_positions", "mask_bert_style", "teacher_sees_masked",
      "numeric_checks", "seed", "n_steps", "log_every", "checkpoint_every",
      "peak_lr", "total_steps", "warmup_steps", "beta1", "beta2", "eps",
      "weight_decay", "clip_norm"};
  const auto unknown = kv.unknown_keys(known);
  if (!unknown.empty()) {
    throw std::runtime_error("unknown config key: " + unknown.front());
  }
  cfg.validate();
  return cfg;
}

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

config::KvConfig TrainConfig::to_kv() const {
  config::KvConfig kv;
  kv.set("n_layers", std::to_string(model.n_layers));
  kv.set("hidden", std::to_string(model.hidden));
  kv.set("n_heads", std::to_string(model.n_heads));
  kv.set("ff_multiplier", std::to_string(model.ff_multiplier));
  kv.set("max_positions", std::to_string(model.max_positions));
  kv.set("batch_size", std::to_string(batch_size));
  kv.set("max_seq_len", std::to_string(max_seq_len));
  kv.set("mask_prob", fmt_double(mask_prob));
  kv.set("lambda_mlm", fmt_double(weights.lambda_mlm));
  kv.set("lambda_adv", fmt_double(weights.lambda_adv));
  kv.set("lambda_kd", fmt_double(weights.lambda_kd));
  kv.set("label_smoothing", fmt_double(label_smoothing));
  kv.set("kd_temperature", fmt_double(kd_temperature));
  kv.set("kd_t2_rescale", kd_t2_rescale ? "true" : "false");
  kv.set("kd_positions", kd_positions == KdPositions::all ? "all" : "masked_only");
  kv.set("mask_bert_style", mask_bert_style ? "true" : "false");
  kv.set("teacher_sees_masked", teacher_sees_masked ? "true" : "false");
  kv.set("numeric_checks", numeric_checks ? "true" : "false");
  kv.set("seed", std::to_string(seed));
  kv.set("n_steps", std::to_string(n_steps));
  kv.set("log_every", std::to_string(log_every));
  kv.set("checkpoint_every", std::to_string(checkpoint_every));
  kv.set("peak_lr", fmt_double(optim.peak_lr));
  kv.set("total_steps", std::to_string(optim.total_steps));
  kv.set("warmup_steps", std::to_string(optim.warmup_steps));
  kv.set("beta1", fmt_double(optim.beta1));
  kv.set("beta2", fmt_double(optim.beta2));
  kv.set("eps", fmt_double(optim.eps));
  kv.set("weight_decay", fmt_double(optim.weight_decay));
  kv.set("clip_norm", fmt_double(optim.clip_norm));
  return kv;
}

std::vector<PreparedSequence> prepare_sequences(
    const std::vector<corpus::Document>& docs, const tokenizer::Tokenizer& tok,
    const corpus::LanguageRegistry& langs, int max_seq_len) {
  std::vector<PreparedSequence> out;
  out.reserve(docs.size());
  for (const auto& doc : docs) {
    PreparedSequence seq;
    seq.lang_id = langs.id_of(doc.lang);
    std::vector<int> ids = tok.encode(doc.text);
    const std::size_t budget = static_cast<std::size_t>(max_seq_len - 2);
    if (ids.size() > budget) ids.resize(budget);
    seq.ids.reserve(ids.size() + 2);
    seq.ids.push_back(tokenizer::kCls);
    seq.ids.insert(seq.ids.end(), ids.begin(), ids.end());
    seq.ids.push_back(tokenizer::kSep);
    out.push_back(std::move(seq));
  }
  return out;
}

model::TokenBatch assemble_batch(const std::vector<PreparedSequence>& seqs,
                                 std::vector<int>& lang_ids_out) {
  if (seqs.empty()) throw std::invalid_argument("assemble_batch: empty batch");
  model::TokenBatch batch;
  batch.batch = static_cast<int>(seqs.size());
  std::size_t max_len = 0;
  for (const auto& s : seqs) max_len = std::max(max_len, s.ids.size());
  batch.seq = static_cast<int>(max_len);
  batch.ids.assign(static_cast<std::size_t>(batch.batch) * max_len,
                   tokenizer::kPad);
  batch.attn_mask.assign(static_cast<std::size_t>(batch.batch) * max_len, 0.0);
  lang_ids_out.clear();
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    lang_ids_out.push_back(seqs[i].lang_id);
    for (std::size_t j = 0; j < seqs[i].ids.size(); ++j) {
      batch.ids[i * max_len + j] = seqs[i].ids[j];
      batch.attn_mask[i * max_len + j] = 1.0;
    }
  }
  return batch;
}

MaskedBatch mask_batch(const model::TokenBatch& batch,
                       const std::vector<int>& lang_ids, double mask_prob,
                       rng::Rng& gen, bool bert_style, int vocab_size) {
  if (batch.batch <= 0) throw std::invalid_argument("mask_batch: empty batch");
  if (!(mask_prob >= 0.0 && mask_prob < 1.0)) {
    throw std::invalid_argument("mask_batch: mask_prob must be in [0,1)");
  }
  if (static_cast<int>(lang_ids.size()) != batch.batch) {
    throw std::invalid_argument("mask_batch: lang_ids size mismatch");
  }
  MaskedBatch out;
  out.tokens = batch;
  out.original_ids = batch.ids;
  out.lang_ids = lang_ids;
  out.mask_positions.resize(static_cast<std::size_t>(batch.batch));

  for (int b = 0; b < batch.batch; ++b) {
    std::vector<int> maskable;
    for (int s = 0; s < batch.seq; ++s) {
      if (!batch.is_real(b, s)) continue;
      if (batch.id_at(b, s) < tokenizer::kNumSpecials) continue;
      maskable.push_back(s);
    }
    if (maskable.empty()) {
      throw std::invalid_argument("mask_batch: sequence " + std::to_string(b) +
                                  " has no maskable tokens");
    }
    auto& selected = out.mask_positions[static_cast<std::size_t>(b)];
    for (int s : maskable) {
      if (gen.uniform() < mask_prob) selected.push_back(s);
    }
    if (selected.empty()) {
      // Equation-1 is undefined on a sequence with nothing masked, so force
      // one uniformly chosen position.
      selected.push_back(maskable[gen.below(maskable.size())]);
    }
    for (int s : selected) {
      const std::size_t at = static_cast<std::size_t>(b * batch.seq + s);
      if (!bert_style) {
        out.tokens.ids[at] = tokenizer::kMask;
        continue;
      }
      // 80/10/10: MASK / random content token / unchanged
      const double u = gen.uniform();
      if (u < 0.8) {
        out.tokens.ids[at] = tokenizer::kMask;
      } else if (u < 0.9) {
        if (vocab_size <= tokenizer::kNumSpecials) {
          throw std::invalid_argument(
              "mask_batch: bert_style needs the vocab size");
        }
        out.tokens.ids[at] = tokenizer::kNumSpecials +
                             static_cast<int>(gen.below(static_cast<std::uint64_t>(
                                 vocab_size - tokenizer::kNumSpecials)));
      }  // else leave the original token in place
    }
  }
  return out;
}

Trainer::Trainer(model::EncoderModel student,
                 std::optional<model::LanguageDiscriminator> disc,
                 std::optional<model::EncoderModel> teacher, TrainConfig cfg)
    : student_(std::move(student)),
      disc_(std::move(disc)),
      teacher_(std::move(teacher)),
      cfg_(std::move(cfg)),
      student_opt_(student_.parameters(), cfg_.optim) {
  if (disc_) disc_opt_.emplace(disc_->parameters(), cfg_.optim);
  if (teacher_ && !teacher_->config().strictly_larger_than(student_.config())) {
    std::cerr << "[trainer] warning: teacher (" << teacher_->config().hidden
              << "h/" << teacher_->config().n_layers
              << "l) is not strictly larger than the student ("
              << student_.config().hidden << "h/" << student_.config().n_layers
              << "l)\n";
  }
}

StepRecord Trainer::train_step(const MaskedBatch& batch) {
  const auto t0 = std::chrono::steady_clock::now();
  nn::set_debug_checks(cfg_.numeric_checks);
  ++step_;
  const double lr = optim::lr_at(cfg_.optim, std::min(step_, cfg_.optim.total_steps));

  struct Forward {
    objectives::TotalLoss total;
    nn::Tensor l_adv;
    nn::Tensor pooled;
  };
  const auto forward = [&]() {
    Forward f;
    const nn::Tensor hidden = student_.encode_sequence(batch.tokens);
    const nn::Tensor logits = student_.mlm_logits(hidden);
    const nn::Tensor mask_t = model::attn_mask_tensor(batch.tokens);

    nn::Tensor l_mlm, l_kd;
    l_mlm = objectives::mlm_loss(logits, batch, cfg_.label_smoothing);
    if (disc_) {
      f.pooled = disc_->pool(hidden, mask_t);
      f.l_adv = objectives::adversarial_loss(
          disc_->logits_from_pooled(f.pooled), batch.lang_ids);
    }
    if (teacher_) {
      nn::Tensor teacher_logits;
      {
        nn::NoGradGuard no_grad;
        model::TokenBatch teacher_view = batch.tokens;
        if (!cfg_.teacher_sees_masked) teacher_view.ids = batch.original_ids;
        teacher_logits =
            teacher_->mlm_logits(teacher_->encode_sequence(teacher_view));
      }
      const auto positions = cfg_.kd_positions == KdPositions::all
                                 ? batch.flat_real_positions()
                                 : batch.flat_mask_positions();
      l_kd = objectives::kd_loss(logits, teacher_logits, cfg_.kd_temperature,
                                 positions, cfg_.kd_t2_rescale);
    }
    f.total = objectives::total_loss(l_mlm, f.l_adv, l_kd, batch.n_masked(),
                                     cfg_.weights);
    return f;
  };

  Forward f = forward();
  if (!std::isfinite(f.total.breakdown.l_total)) {
    // localize: replay the forward with per-op checks so the fault names
    // the tensor that produced it
    nn::set_debug_checks(true);
    (void)forward();
    throw nn::NumericFault("train_step: non-finite total loss at step " +
                           std::to_string(step_));
  }

  // student group: gradients of the reversed combination
  student_opt_.zero_grad();
  if (disc_opt_) disc_opt_->zero_grad();
  nn::backward(f.total.node);
  const double grad_norm = optim::clip_gradients(student_opt_.params(),
                                                 cfg_.optim.clip_norm);
  student_opt_.step(lr);

  // discriminator group: the unnegated adversarial loss. Recomputed from the
  // detached pooled vector: its theta_disc gradient is identical and the
  // backward pass stays off the encoder graph.
  if (f.l_adv.defined() && disc_opt_) {
    const nn::Tensor pooled_const = nn::Tensor::constant(
        f.pooled.shape(), f.pooled.values(), "pooled_detached");
    const nn::Tensor l_adv_disc = objectives::adversarial_loss(
        disc_->logits_from_pooled(pooled_const), batch.lang_ids);
    disc_opt_->zero_grad();
    nn::backward(l_adv_disc);
    optim::clip_gradients(disc_opt_->params(), cfg_.optim.clip_norm);
    disc_opt_->step(lr);
  }
  const auto& total = f.total;

  StepRecord rec;
  rec.step = step_;
  rec.losses = total.breakdown;
  rec.lr = lr;
  rec.grad_norm_preclip = grad_norm;
  rec.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
  return rec;
}

std::string format_metrics_row(const StepRecord& rec) {
  // wall_ms is reported as 0 here: the metrics file is part of the
  // determinism contract (byte-identical across reruns), which real timing
  // would break. Wall time still reaches the console via StepRecord.
  std::string row = std::to_string(rec.step);
  row += ',';
  row += fmt_double(rec.losses.l_mlm);
  row += ',';
  row += fmt_double(rec.losses.l_adv);
  row += ',';
  row += fmt_double(rec.losses.l_kd);
  row += ',';
  row += fmt_double(rec.losses.l_total);
  row += ',';
  row += fmt_double(rec.lr);
  row += ',';
  row += fmt_double(rec.grad_norm_preclip);
  row += ",0";
  return row;
}

namespace {

struct LoopSetup {
  std::vector<PreparedSequence> sequences;
  std::int64_t steps_per_epoch = 0;
};

LoopSetup setup_loop(const std::vector<corpus::Document>& docs,
                     const tokenizer::Tokenizer& tok,
                     const corpus::LanguageRegistry& langs,
                     const TrainConfig& cfg) {
  LoopSetup s;
  s.sequences = prepare_sequences(docs, tok, langs, cfg.max_seq_len);
  if (s.sequences.empty()) {
    throw std::runtime_error("pretrain: corpus produced no sequences");
  }
  s.steps_per_epoch = (static_cast<std::int64_t>(s.sequences.size()) +
                       cfg.batch_size - 1) /
                      cfg.batch_size;
  return s;
}

// Deterministic batch composition for a global step (1-based): the epoch's
// shuffled order is re-derived from the seed, so resume needs no RNG state.
std::vector<PreparedSequence> batch_for_step(
    const LoopSetup& setup, const TrainConfig& cfg, std::int64_t step,
    std::vector<std::size_t>& epoch_order, std::int64_t& cached_epoch) {
  const std::int64_t epoch = (step - 1) / setup.steps_per_epoch;
  const std::int64_t index = (step - 1) % setup.steps_per_epoch;
  if (epoch != cached_epoch) {
    epoch_order.resize(setup.sequences.size());
    for (std::size_t i = 0; i < epoch_order.size(); ++i) epoch_order[i] = i;
    rng::Rng gen(rng::derive_seed(cfg.seed, "shuffle",
                                  static_cast<std::uint64_t>(epoch)));
    gen.shuffle(epoch_order);
    cached_epoch = epoch;
  }
  std::vector<PreparedSequence> chosen;
  const std::size_t begin = static_cast<std::size_t>(index) * cfg.batch_size;
  const std::size_t end =
      std::min(begin + static_cast<std::size_t>(cfg.batch_size),
               setup.sequences.size());
  for (std::size_t i = begin; i < end; ++i) {
    chosen.push_back(setup.sequences[epoch_order[i]]);
  }
  return chosen;
}

PretrainResult run_loop(const std::vector<corpus::Document>& docs,
                        const tokenizer::Tokenizer& tok,
                        const corpus::LanguageRegistry& langs, TrainConfig cfg,
                        const std::optional<checkpoint::Checkpoint>& teacher_ckpt,
                        const std::string& out_dir,
                        const std::optional<checkpoint::Checkpoint>& resume_from,
                        bool with_discriminator) {
  cfg.model.vocab_size = tok.vocab().size();
  cfg.model.n_languages = langs.size();
  cfg.validate();
  cfg.model.validate();
  if (cfg.optim.total_steps < cfg.n_steps) {
    throw std::runtime_error(
        "pretrain: optimizer total_steps is shorter than n_steps");
  }
  cfg.optim.validate();
  if (cfg.weights.lambda_adv > 0.0 && langs.size() < 2) {
    throw std::runtime_error(
        "pretrain: adversarial objective requires >= 2 languages");
  }
  const std::uint64_t vocab_hash = tok.vocab().hash();

  std::optional<model::EncoderModel> teacher;
  if (teacher_ckpt) {
    if (teacher_ckpt->vocab_hash != vocab_hash) {
      throw std::runtime_error(
          "pretrain: teacher checkpoint was built with a different vocabulary");
    }
    teacher = checkpoint::restore_encoder(*teacher_ckpt, vocab_hash);
  } else if (cfg.weights.lambda_kd > 0.0) {
    throw std::runtime_error("pretrain: lambda_kd > 0 but no teacher given");
  }

  model::EncoderModel student;
  std::optional<model::LanguageDiscriminator> disc;
  std::int64_t start_step = 0;
  if (resume_from) {
    if (resume_from->vocab_hash != vocab_hash) {
      throw std::runtime_error("pretrain: resume checkpoint vocab mismatch");
    }
    if (!(resume_from->config == cfg.model)) {
      throw std::runtime_error("pretrain: resume checkpoint config mismatch");
    }
    student = checkpoint::restore_encoder(*resume_from, vocab_hash);
    if (with_discriminator) {
      disc = checkpoint::restore_discriminator(*resume_from);
    }
    start_step = resume_from->step;
  } else {
    student = model::EncoderModel::init(cfg.model, cfg.seed);
    if (with_discriminator) {
      disc = model::LanguageDiscriminator::init(cfg.model.hidden, langs.size(),
                                                cfg.seed);
    }
  }

  Trainer trainer(std::move(student), std::move(disc), std::move(teacher), cfg);
  trainer.set_step(start_step);
  if (resume_from) {
    if (resume_from->encoder_opt) {
      checkpoint::restore_opt_state(*resume_from->encoder_opt,
                                    trainer.student_opt());
    }
    if (resume_from->discriminator_opt && trainer.has_discriminator()) {
      checkpoint::restore_opt_state(*resume_from->discriminator_opt,
                                    trainer.disc_opt());
    }
  }

  const LoopSetup setup = setup_loop(docs, tok, langs, cfg);
  std::ofstream metrics;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    metrics.open(out_dir + "/metrics.csv", std::ios::binary);
    if (!metrics) throw std::runtime_error("cannot write metrics.csv in " + out_dir);
    metrics << kMetricsHeader << "\n";
  }

  const auto save_ckpt = [&](const std::string& name, std::int64_t step) {
    if (out_dir.empty()) return std::string();
    auto ckpt = checkpoint::from_models(
        trainer.student(),
        trainer.has_discriminator() ? &trainer.discriminator() : nullptr,
        vocab_hash, step);
    checkpoint::store_optimizer(
        ckpt, trainer.student_opt(),
        trainer.has_discriminator() ? &trainer.disc_opt() : nullptr);
    const std::string path = out_dir + "/" + name;
    checkpoint::save(path, ckpt);
    return path;
  };

  PretrainResult result;
  std::vector<std::size_t> epoch_order;
  std::int64_t cached_epoch = -1;
  for (std::int64_t step = start_step + 1; step <= cfg.n_steps; ++step) {
    const auto chosen =
        batch_for_step(setup, cfg, step, epoch_order, cached_epoch);
    std::vector<int> lang_ids;
    const model::TokenBatch token_batch = assemble_batch(chosen, lang_ids);
    rng::Rng mask_gen(rng::derive_seed(cfg.seed, "mask",
                                       static_cast<std::uint64_t>(step)));
    const MaskedBatch masked =
        mask_batch(token_batch, lang_ids, cfg.mask_prob, mask_gen,
                   cfg.mask_bert_style, cfg.model.vocab_size);
    const StepRecord rec = trainer.train_step(masked);
    if (metrics.is_open() && step % cfg.log_every == 0) {
      metrics << format_metrics_row(rec) << "\n";
    }
    if (!out_dir.empty() && step % cfg.checkpoint_every == 0 &&
        step != cfg.n_steps) {
      save_ckpt("checkpoint-" + std::to_string(step) + ".pbckpt", step);
    }
    result.records.push_back(rec);
  }

  result.final_checkpoint_path = save_ckpt("checkpoint-final.pbckpt", cfg.n_steps);
  result.encoder = trainer.student();
  if (trainer.has_discriminator()) {
    result.discriminator = trainer.discriminator();
  }
  return result;
}

}  // namespace

PretrainResult pretrain(const std::vector<corpus::Document>& docs,
                        const tokenizer::Tokenizer& tok,
                        const corpus::LanguageRegistry& langs, TrainConfig cfg,
                        const std::optional<checkpoint::Checkpoint>& teacher_ckpt,
                        const std::string& out_dir,
                        const std::optional<checkpoint::Checkpoint>& resume_from) {
  return run_loop(docs, tok, langs, std::move(cfg), teacher_ckpt, out_dir,
                  resume_from, /*with_discriminator=*/true);
}

PretrainResult pretrain_teacher(const std::vector<corpus::Document>& docs,
                                const tokenizer::Tokenizer& tok,
                                const corpus::LanguageRegistry& langs,
                                TrainConfig cfg, const std::string& out_dir) {
  cfg.weights.lambda_adv = 0.0;
  cfg.weights.lambda_kd = 0.0;
  return run_loop(docs, tok, langs, std::move(cfg), {}, out_dir, {},
                  /*with_discriminator=*/false);
}

}  // namespace polybert::trainer
