/*
 * SPDX-License-Identifier: Apache-2.0
 */
#include "insloc/optim.hpp"

#include <cmath>

#include "insloc/error.hpp"

namespace insloc {

OptimizerConfig OptimizerConfig::momentum_defaults() {
  OptimizerConfig c;
  c.kind = OptimizerKind::kMomentum;
  c.learning_rate = 0.0003;
  c.momentum_mu = 0.9;
  return c;
}

OptimizerConfig OptimizerConfig::adam_defaults() {
  OptimizerConfig c;
  c.kind = OptimizerKind::kAdam;
  c.learning_rate = 1e-3;
  c.adam_beta1 = 0.9;
  c.adam_beta2 = 0.999;
  c.adam_epsilon = 1e-8;
  return c;
}

void OptimizerConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  if (!(momentum_mu >= 0.0 && momentum_mu < 1.0)) throw ConfigError("momentum_mu must be in [0,1)");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ConfigError("adam_beta1 must be in [0,1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ConfigError("adam_beta2 must be in [0,1)");
  if (!(adam_epsilon > 0.0)) throw ConfigError("adam_epsilon must be > 0");
}

Var ParameterSet::add(std::string name, Tensor init) {
  if (find(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  Var v(std::move(init), true);
  params_.push_back({std::move(name), v, {}});
  return v;
}

const Parameter* ParameterSet::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

Parameter* ParameterSet::find(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.value().numel();
  return n;
}

namespace {

void ensure_slots(Parameter& p, std::size_t count) {
  if (p.slots.size() == count) return;
  p.slots.assign(count, Tensor::zeros_like(p.value.value()));
}

void check_grad_shape(const Parameter& p) {
  if (p.value.grad().shape() != p.value.shape()) {
    throw ShapeError("gradient of '" + p.name + "' has shape " +
                     shape_str(p.value.grad().shape()) + ", parameter has " +
                     shape_str(p.value.shape()));
  }
}

}  // namespace

void momentum_step(std::span<Parameter> params, const OptimizerConfig& config) {
  for (auto& p : params) {
    if (!p.value.has_grad()) continue;
    check_grad_shape(p);
    ensure_slots(p, 1);
    Tensor& v = p.slots[0];
    Tensor& w = p.value.mutable_value();
    const Tensor& g = p.value.grad();
    for (std::size_t i = 0; i < w.numel(); ++i) {
      v[i] = config.momentum_mu * v[i] - config.learning_rate * g[i];
      w[i] += v[i];
    }
  }
}

void adam_step(std::span<Parameter> params, std::size_t step_count, const OptimizerConfig& config) {
  if (step_count == 0) throw ConfigError("adam_step: step_count starts at 1");
  const double c1 = 1.0 - std::pow(config.adam_beta1, static_cast<double>(step_count));
  const double c2 = 1.0 - std::pow(config.adam_beta2, static_cast<double>(step_count));
  for (auto& p : params) {
    if (!p.value.has_grad()) continue;
    check_grad_shape(p);
    ensure_slots(p, 2);
    Tensor& m = p.slots[0];
    Tensor& v = p.slots[1];
    Tensor& w = p.value.mutable_value();
    const Tensor& g = p.value.grad();
    for (std::size_t i = 0; i < w.numel(); ++i) {
      m[i] = config.adam_beta1 * m[i] + (1.0 - config.adam_beta1) * g[i];
      v[i] = config.adam_beta2 * v[i] + (1.0 - config.adam_beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.adam_epsilon);
    }
  }
}

Optimizer::Optimizer(OptimizerConfig config) : config_(config) { config_.validate(); }

void Optimizer::step(ParameterSet& params) {
  ++steps_;
  if (config_.kind == OptimizerKind::kMomentum) {
    momentum_step(params.items(), config_);
  } else {
    adam_step(params.items(), steps_, config_);
  }
}

Tensor he_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

}  // namespace insloc
