#include "polybert/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace polybert::optim {

void OptimConfig::validate() const {
  if (peak_lr <= 0.0) throw std::invalid_argument("OptimConfig: peak_lr must be positive");
  if (warmup_steps <= 0 || warmup_steps > total_steps) {
    throw std::invalid_argument(
        "OptimConfig: need 0 < warmup_steps <= total_steps");
  }
  if (clip_norm <= 0.0) throw std::invalid_argument("OptimConfig: clip_norm must be positive");
}

double lr_at(const OptimConfig& config, std::int64_t step) {
  if (step < 0 || step > config.total_steps) {
    throw std::invalid_argument("lr_at: step " + std::to_string(step) +
                                " outside [0," +
                                std::to_string(config.total_steps) + "]");
  }
  if (step <= config.warmup_steps) {
    return config.peak_lr * static_cast<double>(step) /
           static_cast<double>(config.warmup_steps);
  }
  const auto tail = config.total_steps - config.warmup_steps;
  if (tail == 0) return 0.0;
  return config.peak_lr * static_cast<double>(config.total_steps - step) /
         static_cast<double>(tail);
}

double clip_gradients(const std::vector<nn::Tensor>& params, double clip_norm) {
  const double norm = nn::global_grad_norm(params);
  if (norm > clip_norm && norm > 0.0) {
    const double factor = clip_norm / norm;
    for (nn::Tensor p : params) {  // handle copy; grads are shared
      for (double& v : p.grad()) v *= factor;
    }
  }
  return norm;
}

AdamW::AdamW(std::vector<nn::Tensor> params, OptimConfig config)
    : params_(std::move(params)), config_(std::move(config)) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

bool AdamW::decays(const nn::Tensor& p) const {
  for (const auto& suffix : config_.no_decay_suffixes) {
    const auto& name = p.label();
    if (name.size() >= suffix.size() &&
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
      return false;
    }
  }
  return true;
}

void AdamW::step(double lr) {
  ++step_count_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_count_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.has_grad()) {
      throw std::runtime_error("AdamW::step: parameter '" + p.label() +
                               "' has no gradient");
    }
    auto& values = p.values();
    const auto& g = p.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    const bool decay = decays(p) && config_.weight_decay != 0.0;
    for (std::size_t j = 0; j < values.size(); ++j) {
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g[j];
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      values[j] -= lr * m_hat / (std::sqrt(v_hat) + config_.eps);
      if (decay) values[j] -= lr * config_.weight_decay * values[j];
    }
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void AdamW::restore_state(std::vector<std::vector<double>> m,
                          std::vector<std::vector<double>> v,
                          std::int64_t steps) {
  if (m.size() != params_.size() || v.size() != params_.size()) {
    throw std::invalid_argument("AdamW::restore_state: buffer count mismatch");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (static_cast<std::int64_t>(m[i].size()) != params_[i].numel() ||
        static_cast<std::int64_t>(v[i].size()) != params_[i].numel()) {
      throw std::invalid_argument(
          "AdamW::restore_state: buffer shape mismatch for '" +
          params_[i].label() + "'");
    }
  }
  m_ = std::move(m);
  v_ = std::move(v);
  step_count_ = steps;
}

}  // namespace polybert::optim
