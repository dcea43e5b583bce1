/*
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

// Differentiable operations on Vars. Every op validates its shapes and
// throws ShapeError (or EvenSizeViolation) with the offending extents.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "insloc/autograd.hpp"

namespace insloc::ops {

enum class Padding { kSame, kValid };

/// NCHW input, OIKK weights, optional bias (pass an undefined Var for none).
Var conv2d(const Var& input, const Var& weight, const Var& bias, std::size_t stride = 1,
           Padding padding = Padding::kSame);

/// 2x2 stride-2 transposed convolution; weight is [in, out, 2, 2].
Var transposed_conv2d(const Var& input, const Var& weight, const Var& bias);

/// Halves both spatial extents; odd extents raise EvenSizeViolation.
Var maxpool2x2(const Var& input);

struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  double decay = 0.9;
  double eps = 1e-5;

  explicit BatchNormState(std::size_t channels = 0);
};

enum class Mode { kTrain, kInfer };

/// Per-channel normalization over batch and spatial axes. Train mode uses
/// batch statistics and updates the running averages in `state`.
Var batchnorm2d(const Var& input, const Var& gamma, const Var& beta, BatchNormState& state,
                Mode mode);

Var relu(const Var& x);
Var sigmoid(const Var& x);
Var add(const Var& a, const Var& b);
Var scale(const Var& x, double factor);
Var sum(const Var& x);
Var mean(const Var& x);

/// Channel concatenation of two NCHW tensors with equal N, H, W.
Var concat_channels(const Var& first, const Var& second);
/// Channels [begin, begin + count) of an NCHW tensor.
Var slice_channels(const Var& x, std::size_t begin, std::size_t count);
Var reshape(const Var& x, Shape shape);

/// x [N, in] times weight [out, in] transposed, plus bias [out].
Var linear(const Var& x, const Var& weight, const Var& bias);

/// Flat elements of x at `indices`, as a rank-1 tensor.
Var gather(const Var& x, std::span<const std::size_t> indices);

/// Region in image coordinates: x_min, y_min, x_max, y_max.
using Region = std::array<double, 4>;

/// Bilinear crop-and-resize of a single-image feature map [1, C, H, W] to
/// [K, C, size, size]. `spatial_scale` maps image to feature coordinates;
/// each output bin averages sampling x sampling bilinear samples.
Var roi_align(const Var& features, std::span<const Region> regions, std::size_t size,
              double spatial_scale, std::size_t sampling = 2);

/// Mean over rows of -log softmax(logits)[target]; logits are [N, C].
/// Optional per-class weights multiply each row's loss (weighted mean).
Var softmax_cross_entropy(const Var& logits, std::span<const int> targets,
                          std::span<const double> class_weights = {});

/// Per-pixel variant: logits [N, C, H, W], targets N*H*W in NHW order.
Var softmax_cross_entropy_2d(const Var& logits, std::span<const std::uint8_t> targets,
                             std::span<const double> class_weights = {});

/// Mean binary cross-entropy of sigmoid(logits) against targets in [0, 1].
Var sigmoid_bce(const Var& logits, const Tensor& targets);

/// Sum of smooth-L1 terms divided by `normalizer`; quadratic below `beta`.
Var smooth_l1(const Var& prediction, const Tensor& target, double beta, double normalizer);

/// Row-wise softmax of a [N, C] tensor (no gradient).
Tensor softmax_rows(const Tensor& logits);

}  // namespace insloc::ops
