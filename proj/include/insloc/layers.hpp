/*
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

// Thin parameter-owning wrappers over ops, plus named-state export.

#include <deque>
#include <random>
#include <string>
#include <vector>

#include "insloc/checkpoint.hpp"
#include "insloc/ops.hpp"
#include "insloc/optim.hpp"

namespace insloc {

enum class Init { kHeUniform, kZeros };

class Conv2d {
 public:
  Conv2d(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out,
         std::size_t kernel, std::mt19937_64& rng, Init init = Init::kHeUniform,
         bool with_bias = true);
  Var operator()(const Var& x, std::size_t stride = 1) const;

  Var weight;
  Var bias;  // undefined when constructed without bias
};

/// 2x2 stride-2 transposed convolution.
class TConv2x2 {
 public:
  TConv2x2(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out,
           std::mt19937_64& rng, Init init = Init::kHeUniform);
  Var operator()(const Var& x) const;

  Var weight;
  Var bias;
};

class Linear {
 public:
  Linear(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out,
         std::mt19937_64& rng, Init init = Init::kHeUniform);
  Var operator()(const Var& x) const;

  Var weight;
  Var bias;
};

class BatchNorm2d {
 public:
  BatchNorm2d(ParameterSet& params, std::string name, std::size_t channels);
  Var operator()(const Var& x, ops::Mode mode);

  std::string name;
  Var gamma;
  Var beta;
  ops::BatchNormState state;
};

/// Parameters followed by batch-norm running statistics, in creation order.
std::vector<NamedTensor> export_state(const ParameterSet& params,
                                      const std::deque<BatchNorm2d>& norms);

/// Copies values by name; every parameter and running statistic must be
/// present with a matching shape. Extra entries are ignored.
void import_state(std::span<const NamedTensor> entries, ParameterSet& params,
                  std::deque<BatchNorm2d>& norms);

const NamedTensor* find_entry(std::span<const NamedTensor> entries, const std::string& name);

}  // namespace insloc
