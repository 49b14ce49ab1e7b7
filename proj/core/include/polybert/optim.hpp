#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "polybert/tensor.hpp"

namespace polybert::optim {

struct OptimConfig {
  double peak_lr = 5e-4;
  std::int64_t warmup_steps = 100;
  std::int64_t total_steps = 1000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double clip_norm = 5.0;
  /// Parameters whose name ends with one of these receive no weight decay
  /// (layer-norm gains/biases and bias vectors).
  std::vector<std::string> no_decay_suffixes = {".bias", ".gain"};

  void validate() const;
};

/// Linear ramp 0 -> peak over [0, warmup], then linear decay peak -> 0 over
/// [warmup, total]. Continuous at the joint. Throws for step > total_steps.
double lr_at(const OptimConfig& config, std::int64_t step);

/// Scales every gradient by clip_norm/g when the global norm g exceeds
/// clip_norm; otherwise leaves them alone. Returns the pre-clip norm.
double clip_gradients(const std::vector<nn::Tensor>& params, double clip_norm);

/// AdamW over one parameter group: bias-corrected Adam step followed by
/// decoupled decay p -= lr * weight_decay * p.
class AdamW {
 public:
  AdamW() = default;
  AdamW(std::vector<nn::Tensor> params, OptimConfig config);

  void step(double lr);
  void zero_grad();

  std::int64_t step_count() const { return step_count_; }
  const std::vector<nn::Tensor>& params() const { return params_; }

  // moment access for checkpointing
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }
  void restore_state(std::vector<std::vector<double>> m,
                     std::vector<std::vector<double>> v, std::int64_t steps);

 private:
  bool decays(const nn::Tensor& p) const;

  std::vector<nn::Tensor> params_;
  OptimConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::int64_t step_count_ = 0;
};

}  // namespace polybert::optim
