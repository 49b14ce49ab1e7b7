#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "polybert/rng.hpp"
#include "polybert/tensor.hpp"

namespace testutil {

/// Central-difference gradient check. `loss_fn` must rebuild the forward
/// graph from the parameters' current values and return the loss value.
/// Checks every coordinate of every parameter unless `max_coords_per_param`
/// limits it (sampled deterministically).
struct GradCheckResult {
  int checked = 0;
  int failed = 0;
  double worst_rel = 0.0;
  std::string worst_at;
};

inline GradCheckResult gradcheck(
    const std::function<double()>& loss_fn,
    const std::function<void()>& backward_fn,
    std::vector<polybert::nn::Tensor> params, double h = 1e-5,
    double tol = 1e-4, int max_coords_per_param = 0, std::uint64_t seed = 17) {
  using polybert::nn::Tensor;
  GradCheckResult result;
  for (auto& p : params) p.zero_grad();
  backward_fn();
  std::vector<std::vector<double>> analytic;
  for (auto& p : params) analytic.push_back(p.grad());

  polybert::rng::Rng gen(seed);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& values = params[pi].values();
    const std::size_t n = values.size();
    std::vector<std::size_t> coords;
    if (max_coords_per_param > 0 &&
        n > static_cast<std::size_t>(max_coords_per_param)) {
      for (int k = 0; k < max_coords_per_param; ++k) {
        coords.push_back(static_cast<std::size_t>(gen.below(n)));
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) coords.push_back(i);
    }
    for (std::size_t i : coords) {
      const double keep = values[i];
      values[i] = keep + h;
      const double up = loss_fn();
      values[i] = keep - h;
      const double down = loss_fn();
      values[i] = keep;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[pi][i];
      // relative error with a floor that keeps near-zero gradients from
      // amplifying finite-difference noise
      const double rel =
          std::fabs(a - numeric) /
          std::max({std::fabs(a), std::fabs(numeric), 1e-4});
      ++result.checked;
      if (rel > result.worst_rel) {
        result.worst_rel = rel;
        result.worst_at = params[pi].label() + "[" + std::to_string(i) + "]";
      }
      if (rel > tol) ++result.failed;
    }
  }
  return result;
}

inline std::vector<double> random_values(std::size_t n, polybert::rng::Rng& gen,
                                         double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = (gen.uniform() * 2.0 - 1.0) * scale;
  return v;
}

}  // namespace testutil
