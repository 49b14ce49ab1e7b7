#pragma once

#include <cstdint>
#include <vector>

#include "polybert/model.hpp"
#include "polybert/tensor.hpp"

namespace polybert::objectives {

/// Mixing weights of the combined objective. The adversarial term enters the
/// total with a negative sign (loss reversal); the weights themselves are
/// non-negative.
struct LossWeights {
  double lambda_mlm = 0.5;
  double lambda_adv = 0.1;
  double lambda_kd = 0.4;
};

struct LossBreakdown {
  double l_mlm = 0.0;
  double l_adv = 0.0;
  double l_kd = 0.0;
  double l_total = 0.0;
  std::int64_t n_masked = 0;
};

/// A token batch after masking. input ids carry MASK at the selected
/// positions and the original ids everywhere else.
struct MaskedBatch {
  model::TokenBatch tokens;                      // post-masking
  std::vector<int> original_ids;                 // [batch*seq]
  std::vector<std::vector<int>> mask_positions;  // per sequence, ascending
  std::vector<int> lang_ids;                     // per sequence

  std::int64_t n_masked() const;
  /// Masked positions as flat row indices into [batch*seq, ...].
  std::vector<std::int64_t> flat_mask_positions() const;
  /// Non-pad positions as flat row indices.
  std::vector<std::int64_t> flat_real_positions() const;
};

/// Mean cross-entropy against label-smoothed targets over the masked
/// positions only. smoothing spreads eps/V over every class, leaving
/// 1-eps+eps/V on the true one. Throws when the batch has no masked tokens.
nn::Tensor mlm_loss(const nn::Tensor& logits, const MaskedBatch& batch,
                    double smoothing);

/// Plain cross-entropy helper over 2-d logits; mean over rows.
nn::Tensor cross_entropy(const nn::Tensor& logits, const std::vector<int>& targets);

/// Mean cross-entropy of the discriminator's prediction against the gold
/// language labels. Non-negative by construction.
nn::Tensor adversarial_loss(const nn::Tensor& lang_logits,
                            const std::vector<int>& lang_ids);

/// Mean KL(p_teacher || p_student) over the selected flat positions, both
/// distributions softened by `temperature`. Gradient flows to the student
/// logits only. `t2_rescale` multiplies by T^2 (off by default).
nn::Tensor kd_loss(const nn::Tensor& student_logits,
                   const nn::Tensor& teacher_logits, double temperature,
                   const std::vector<std::int64_t>& positions,
                   bool t2_rescale = false);

struct TotalLoss {
  nn::Tensor node;  // lambda_mlm*L_mlm - lambda_adv*L_adv + lambda_kd*L_kd
  LossBreakdown breakdown;
};

/// Combines the component losses with the reversal sign on the adversarial
/// term. Backward through `node` yields the student-side gradients; the
/// discriminator is updated from the unnegated adversarial loss separately.
/// Undefined component tensors contribute zero.
TotalLoss total_loss(const nn::Tensor& l_mlm, const nn::Tensor& l_adv,
                     const nn::Tensor& l_kd, std::int64_t n_masked,
                     const LossWeights& weights);

/// The smoothed target row used by mlm_loss; exposed for tests.
std::vector<double> smoothed_target(int true_id, int n_classes, double smoothing);

}  // namespace polybert::objectives
