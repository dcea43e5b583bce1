/*
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "insloc/autograd.hpp"

namespace insloc {

enum class OptimizerKind { kMomentum, kAdam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double learning_rate = 1e-3;
  double momentum_mu = 0.9;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  /// Detector training settings: learning rate 0.0003, momentum 0.9.
  static OptimizerConfig momentum_defaults();
  /// Segmenter training settings: learning rate 1e-3, betas 0.9/0.999, eps 1e-8.
  static OptimizerConfig adam_defaults();

  /// Throws ConfigError when a field is out of its documented range.
  void validate() const;
};

struct Parameter {
  std::string name;
  Var value;
  std::vector<Tensor> slots;  // velocity, or first and second moments
};

/// Named trainable tensors of one network, in registration order.
class ParameterSet {
 public:
  /// Registers a leaf Var that requires grad. Names must be unique.
  Var add(std::string name, Tensor init);

  std::span<Parameter> items() noexcept { return params_; }
  std::span<const Parameter> items() const noexcept { return params_; }
  const Parameter* find(const std::string& name) const;
  Parameter* find(const std::string& name);

  void zero_grad();
  std::size_t scalar_count() const;

 private:
  std::vector<Parameter> params_;
};

/// v <- mu * v - lr * g; p <- p + v. Parameters without a gradient are skipped.
void momentum_step(std::span<Parameter> params, const OptimizerConfig& config);

/// Bias-corrected Adam update; `step_count` starts at 1.
void adam_step(std::span<Parameter> params, std::size_t step_count, const OptimizerConfig& config);

/// Keeps the step counter and dispatches to the configured update rule.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config);

  void step(ParameterSet& params);
  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  const OptimizerConfig& config() const noexcept { return config_; }
  std::size_t steps_taken() const noexcept { return steps_; }

 private:
  OptimizerConfig config_;
  std::size_t steps_ = 0;
};

/// He-uniform initialisation for a weight whose fan-in is `fan_in`.
Tensor he_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng);

}  // namespace insloc
