/*
 * SPDX-License-Identifier: Apache-2.0
 */
#include "insloc/layers.hpp"

#include "insloc/error.hpp"

namespace insloc {

namespace {

Tensor init_weight(Shape shape, std::size_t fan_in, std::mt19937_64& rng, Init init) {
  if (init == Init::kZeros) return Tensor(std::move(shape), 0.0);
  return he_uniform(std::move(shape), fan_in, rng);
}

}  // namespace

Conv2d::Conv2d(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out,
               std::size_t kernel, std::mt19937_64& rng, Init init, bool with_bias)
    : weight(params.add(name + ".weight",
                        init_weight({out, in, kernel, kernel}, in * kernel * kernel, rng, init))) {
  if (with_bias) bias = params.add(name + ".bias", Tensor({out}, 0.0));
}

Var Conv2d::operator()(const Var& x, std::size_t stride) const {
  return ops::conv2d(x, weight, bias, stride);
}

TConv2x2::TConv2x2(ParameterSet& params, const std::string& name, std::size_t in,
                   std::size_t out, std::mt19937_64& rng, Init init)
    : weight(params.add(name + ".weight", init_weight({in, out, 2, 2}, in * 4, rng, init))),
      bias(params.add(name + ".bias", Tensor({out}, 0.0))) {}

Var TConv2x2::operator()(const Var& x) const { return ops::transposed_conv2d(x, weight, bias); }

Linear::Linear(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out,
               std::mt19937_64& rng, Init init)
    : weight(params.add(name + ".weight", init_weight({out, in}, in, rng, init))),
      bias(params.add(name + ".bias", Tensor({out}, 0.0))) {}

Var Linear::operator()(const Var& x) const { return ops::linear(x, weight, bias); }

BatchNorm2d::BatchNorm2d(ParameterSet& params, std::string name_in, std::size_t channels)
    : name(std::move(name_in)),
      gamma(params.add(name + ".gamma", Tensor({channels}, 1.0))),
      beta(params.add(name + ".beta", Tensor({channels}, 0.0))),
      state(channels) {}

Var BatchNorm2d::operator()(const Var& x, ops::Mode mode) {
  return ops::batchnorm2d(x, gamma, beta, state, mode);
}

std::vector<NamedTensor> export_state(const ParameterSet& params,
                                      const std::deque<BatchNorm2d>& norms) {
  std::vector<NamedTensor> out;
  for (const auto& p : params.items()) out.push_back({p.name, p.value.value()});
  for (const auto& bn : norms) {
    out.push_back({bn.name + ".running_mean", bn.state.running_mean});
    out.push_back({bn.name + ".running_var", bn.state.running_var});
  }
  return out;
}

const NamedTensor* find_entry(std::span<const NamedTensor> entries, const std::string& name) {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

namespace {

void copy_into(std::span<const NamedTensor> entries, const std::string& name, Tensor& dst) {
  const auto* e = find_entry(entries, name);
  if (!e) throw FormatError("checkpoint is missing '" + name + "'");
  if (e->value.shape() != dst.shape()) {
    throw FormatError("checkpoint entry '" + name + "' has shape " + shape_str(e->value.shape()) +
                      ", expected " + shape_str(dst.shape()));
  }
  dst = e->value;
}

}  // namespace

void import_state(std::span<const NamedTensor> entries, ParameterSet& params,
                  std::deque<BatchNorm2d>& norms) {
  for (auto& p : params.items()) copy_into(entries, p.name, p.value.mutable_value());
  for (auto& bn : norms) {
    copy_into(entries, bn.name + ".running_mean", bn.state.running_mean);
    copy_into(entries, bn.name + ".running_var", bn.state.running_var);
  }
}

}  // namespace insloc
