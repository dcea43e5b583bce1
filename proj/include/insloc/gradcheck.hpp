/*
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include "insloc/autograd.hpp"

namespace insloc {

struct GradCheckOptions {
  double step = 1e-5;
  /// Coordinates sampled per input; 0 checks every coordinate.
  std::size_t max_coords_per_input = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates_checked = 0;
};

/// Compares reverse-mode gradients of the scalar `loss` with central
/// differences. Relative error per coordinate is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
/// Throws TrainingError if the loss is not finite.
GradCheckResult finite_difference_check(const std::function<Var()>& loss,
                                        std::span<Var> inputs,
                                        const GradCheckOptions& options = {});

}  // namespace insloc
