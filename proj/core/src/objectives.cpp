#include "polybert/objectives.hpp"

#include <stdexcept>

namespace polybert::objectives {

using nn::Tensor;

std::int64_t MaskedBatch::n_masked() const {
  std::int64_t n = 0;
  for (const auto& positions : mask_positions) {
    n += static_cast<std::int64_t>(positions.size());
  }
  return n;
}

std::vector<std::int64_t> MaskedBatch::flat_mask_positions() const {
  std::vector<std::int64_t> flat;
  for (std::size_t i = 0; i < mask_positions.size(); ++i) {
    for (int p : mask_positions[i]) {
      flat.push_back(static_cast<std::int64_t>(i) * tokens.seq + p);
    }
  }
  return flat;
}

std::vector<std::int64_t> MaskedBatch::flat_real_positions() const {
  std::vector<std::int64_t> flat;
  for (int b = 0; b < tokens.batch; ++b) {
    for (int s = 0; s < tokens.seq; ++s) {
      if (tokens.is_real(b, s)) {
        flat.push_back(static_cast<std::int64_t>(b) * tokens.seq + s);
      }
    }
  }
  return flat;
}

std::vector<double> smoothed_target(int true_id, int n_classes,
                                    double smoothing) {
  std::vector<double> t(static_cast<std::size_t>(n_classes),
                        smoothing / static_cast<double>(n_classes));
  t[static_cast<std::size_t>(true_id)] += 1.0 - smoothing;
  return t;
}

Tensor mlm_loss(const Tensor& logits, const MaskedBatch& batch,
                double smoothing) {
  if (smoothing < 0.0 || smoothing >= 1.0) {
    throw std::invalid_argument("mlm_loss: smoothing must be in [0,1)");
  }
  const auto flat = batch.flat_mask_positions();
  if (flat.empty()) {
    throw std::invalid_argument("mlm_loss: no masked tokens in batch");
  }
  const std::int64_t v = logits.dim(-1);
  const std::int64_t rows = logits.numel() / v;
  const Tensor flat_logits = nn::reshape(logits, {rows, v});
  const Tensor masked_logits = nn::take_rows(flat_logits, flat);
  const Tensor log_probs = nn::log_softmax(masked_logits, 1);

  std::vector<double> targets;
  targets.reserve(flat.size() * static_cast<std::size_t>(v));
  for (auto pos : flat) {
    const int original = batch.original_ids[static_cast<std::size_t>(pos)];
    const auto row = smoothed_target(original, static_cast<int>(v), smoothing);
    targets.insert(targets.end(), row.begin(), row.end());
  }
  const Tensor target_t =
      Tensor::constant({static_cast<std::int64_t>(flat.size()), v},
                       std::move(targets), "mlm_targets");
  // mean over masked positions of -sum_v t_v * log p_v
  return nn::scale(
      nn::mean_over_axis(nn::sum_over_axis(nn::mul(log_probs, target_t), 1), 0),
      -1.0);
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
  if (logits.ndim() != 2) {
    throw std::invalid_argument("cross_entropy: logits must be 2-d, got " +
                                nn::shape_str(logits.shape()));
  }
  const std::int64_t rows = logits.dim(0);
  const std::int64_t classes = logits.dim(1);
  if (static_cast<std::int64_t>(targets.size()) != rows) {
    throw std::invalid_argument("cross_entropy: target count mismatch");
  }
  std::vector<double> onehot(
      static_cast<std::size_t>(rows * classes), 0.0);
  for (std::int64_t r = 0; r < rows; ++r) {
    const int t = targets[static_cast<std::size_t>(r)];
    if (t < 0 || t >= classes) {
      throw std::invalid_argument("cross_entropy: target " + std::to_string(t) +
                                  " outside [0," + std::to_string(classes) + ")");
    }
    onehot[static_cast<std::size_t>(r * classes + t)] = 1.0;
  }
  const Tensor target_t =
      Tensor::constant({rows, classes}, std::move(onehot), "ce_targets");
  const Tensor log_probs = nn::log_softmax(logits, 1);
  return nn::scale(
      nn::mean_over_axis(nn::sum_over_axis(nn::mul(log_probs, target_t), 1), 0),
      -1.0);
}

Tensor adversarial_loss(const Tensor& lang_logits,
                        const std::vector<int>& lang_ids) {
  return cross_entropy(lang_logits, lang_ids);
}

Tensor kd_loss(const Tensor& student_logits, const Tensor& teacher_logits,
               double temperature, const std::vector<std::int64_t>& positions,
               bool t2_rescale) {
  if (temperature <= 0.0) {
    throw std::invalid_argument("kd_loss: temperature must be positive");
  }
  if (student_logits.shape() != teacher_logits.shape()) {
    throw std::invalid_argument("kd_loss: student " +
                                nn::shape_str(student_logits.shape()) +
                                " and teacher " +
                                nn::shape_str(teacher_logits.shape()) +
                                " shapes differ");
  }
  if (positions.empty()) {
    throw std::invalid_argument("kd_loss: no positions selected");
  }
  const std::int64_t v = student_logits.dim(-1);
  const std::int64_t rows = student_logits.numel() / v;

  const Tensor s_rows =
      nn::take_rows(nn::reshape(student_logits, {rows, v}), positions);
  const Tensor log_p_student = nn::log_softmax(nn::scale(s_rows, 1.0 / temperature), 1);

  // the teacher side is constant: compute its softened distribution and
  // entropy term outside the tape
  Tensor p_teacher;
  Tensor teacher_entropy_term;
  {
    nn::NoGradGuard no_grad;
    const Tensor t_rows =
        nn::take_rows(nn::reshape(teacher_logits, {rows, v}), positions);
    p_teacher = nn::softmax(t_rows, 1, temperature);
    const Tensor log_p_teacher =
        nn::log_softmax(nn::scale(t_rows, 1.0 / temperature), 1);
    teacher_entropy_term =
        nn::sum_over_axis(nn::mul(p_teacher, log_p_teacher), 1);
  }
  // KL(p_T || p_S) per row = sum p_T log p_T - sum p_T log p_S
  const Tensor cross = nn::sum_over_axis(nn::mul(p_teacher, log_p_student), 1);
  Tensor kl = nn::mean_over_axis(nn::sub(teacher_entropy_term, cross), 0);
  if (t2_rescale) kl = nn::scale(kl, temperature * temperature);
  return kl;
}

TotalLoss total_loss(const Tensor& l_mlm, const Tensor& l_adv,
                     const Tensor& l_kd, std::int64_t n_masked,
                     const LossWeights& weights) {
  TotalLoss out;
  out.breakdown.n_masked = n_masked;
  Tensor acc;
  const auto accumulate = [&acc](const Tensor& term) {
    acc = acc.defined() ? nn::add(acc, term) : term;
  };
  if (l_mlm.defined()) {
    out.breakdown.l_mlm = l_mlm.item();
    accumulate(nn::scale(l_mlm, weights.lambda_mlm));
  }
  if (l_adv.defined()) {
    out.breakdown.l_adv = l_adv.item();
    accumulate(nn::scale(l_adv, -weights.lambda_adv));
  }
  if (l_kd.defined()) {
    out.breakdown.l_kd = l_kd.item();
    accumulate(nn::scale(l_kd, weights.lambda_kd));
  }
  if (!acc.defined()) acc = Tensor::scalar(0.0);
  out.node = acc;
  out.breakdown.l_total = acc.item();
  return out;
}

}  // namespace polybert::objectives
