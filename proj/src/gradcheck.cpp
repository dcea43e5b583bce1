/*
 * SPDX-License-Identifier: Apache-2.0
 */
#include "insloc/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "insloc/error.hpp"

namespace insloc {

namespace {

double eval_loss(const std::function<Var()>& loss) {
  NoGradGuard guard;
  const double v = loss().value()[0];
  if (!std::isfinite(v)) throw TrainingError("finite_difference_check: loss is not finite");
  return v;
}

}  // namespace

GradCheckResult finite_difference_check(const std::function<Var()>& loss,
                                        std::span<Var> inputs,
                                        const GradCheckOptions& options) {
  for (auto& in : inputs) in.zero_grad();
  Var root = loss();
  if (!std::isfinite(root.value()[0])) {
    throw TrainingError("finite_difference_check: loss is not finite");
  }
  root.backward();

  std::mt19937_64 rng(options.seed);
  GradCheckResult result;
  for (auto& in : inputs) {
    const std::size_t n = in.value().numel();
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords_per_input && options.max_coords_per_input < n) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_input);
    }
    for (auto i : coords) {
      const double analytic = in.has_grad() ? in.grad()[i] : 0.0;
      double& x = in.mutable_value()[i];
      const double saved = x;
      x = saved + options.step;
      const double up = eval_loss(loss);
      x = saved - options.step;
      const double down = eval_loss(loss);
      x = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      result.max_relative_error =
          std::max(result.max_relative_error, std::abs(analytic - numeric) / denom);
      ++result.coordinates_checked;
    }
  }
  return result;
}

}  // namespace insloc
