/*
 * SPDX-License-Identifier: Apache-2.0
 */
#include <algorithm>
#include <cmath>

#include "insloc/error.hpp"
#include "insloc/ops.hpp"

namespace insloc::ops {

Tensor softmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax_rows expects [N, C]");
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  Tensor out(logits.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = logits.ptr() + i * c;
    const double m = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - m);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = std::exp(row[j] - m) / z;
  }
  return out;
}

namespace {

double class_weight(std::span<const double> weights, std::size_t cls) {
  return weights.empty() ? 1.0 : weights[cls];
}

void check_weights(std::span<const double> weights, std::size_t classes) {
  if (!weights.empty() && weights.size() != classes) {
    throw ShapeError("class weight count " + std::to_string(weights.size()) +
                     " does not match " + std::to_string(classes) + " classes");
  }
}

}  // namespace

Var softmax_cross_entropy(const Var& logits, std::span<const int> targets,
                          std::span<const double> class_weights) {
  const Shape& s = logits.shape();
  if (s.size() != 2) throw ShapeError("softmax_cross_entropy expects [N, C] logits");
  const std::size_t n = s[0], c = s[1];
  if (targets.size() != n) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(targets.size()) +
                     " targets for " + std::to_string(n) + " rows");
  }
  check_weights(class_weights, c);
  for (int t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= c) {
      throw ShapeError("softmax_cross_entropy: target index " + std::to_string(t) +
                       " out of range [0, " + std::to_string(c) + ")");
    }
  }
  Tensor prob = softmax_rows(logits.value());
  double loss = 0.0, wsum = 0.0;
  std::vector<double> row_w(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto t = static_cast<std::size_t>(targets[i]);
    row_w[i] = class_weight(class_weights, t);
    wsum += row_w[i];
    loss -= row_w[i] * std::log(std::max(prob[i * c + t], 1e-300));
  }
  if (!(wsum > 0.0)) throw ShapeError("softmax_cross_entropy: total weight is zero");
  loss /= wsum;
  std::vector<int> tg(targets.begin(), targets.end());
  return Var::from_op(Tensor({1}, loss), {logits},
                      [prob = std::move(prob), tg = std::move(tg), row_w = std::move(row_w), wsum,
                       n, c](Node& self) {
                        Tensor& g = self.parents[0]->grad_buffer();
                        const double up = self.grad[0] / wsum;
                        for (std::size_t i = 0; i < n; ++i) {
                          for (std::size_t j = 0; j < c; ++j) {
                            const double onehot = static_cast<int>(j) == tg[i] ? 1.0 : 0.0;
                            g[i * c + j] += up * row_w[i] * (prob[i * c + j] - onehot);
                          }
                        }
                      });
}

Var softmax_cross_entropy_2d(const Var& logits, std::span<const std::uint8_t> targets,
                             std::span<const double> class_weights) {
  require_rank4(logits.value(), "softmax_cross_entropy_2d");
  const Shape& s = logits.shape();
  const std::size_t n = s[0], c = s[1], hw = s[2] * s[3];
  if (targets.size() != n * hw) {
    throw ShapeError("softmax_cross_entropy_2d: " + std::to_string(targets.size()) +
                     " targets for " + std::to_string(n * hw) + " pixels");
  }
  check_weights(class_weights, c);
  const Tensor& x = logits.value();
  Tensor prob(s);
  std::vector<double> pix_w(n * hw);
  double loss = 0.0, wsum = 0.0;
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < hw; ++i) {
      const std::size_t t = targets[b * hw + i];
      if (t >= c) {
        throw ShapeError("softmax_cross_entropy_2d: target " + std::to_string(t) +
                         " out of range");
      }
      double m = -INFINITY;
      for (std::size_t j = 0; j < c; ++j) m = std::max(m, x[(b * c + j) * hw + i]);
      double z = 0.0;
      for (std::size_t j = 0; j < c; ++j) z += std::exp(x[(b * c + j) * hw + i] - m);
      for (std::size_t j = 0; j < c; ++j) {
        prob[(b * c + j) * hw + i] = std::exp(x[(b * c + j) * hw + i] - m) / z;
      }
      const double w = class_weight(class_weights, t);
      pix_w[b * hw + i] = w;
      wsum += w;
      loss -= w * std::log(std::max(prob[(b * c + t) * hw + i], 1e-300));
    }
  }
  if (!(wsum > 0.0)) throw ShapeError("softmax_cross_entropy_2d: total weight is zero");
  loss /= wsum;
  std::vector<std::uint8_t> tg(targets.begin(), targets.end());
  return Var::from_op(Tensor({1}, loss), {logits},
                      [prob = std::move(prob), tg = std::move(tg), pix_w = std::move(pix_w), wsum,
                       n, c, hw](Node& self) {
                        Tensor& g = self.parents[0]->grad_buffer();
                        const double up = self.grad[0] / wsum;
                        for (std::size_t b = 0; b < n; ++b) {
                          for (std::size_t j = 0; j < c; ++j) {
                            for (std::size_t i = 0; i < hw; ++i) {
                              const std::size_t at = (b * c + j) * hw + i;
                              const double onehot = tg[b * hw + i] == j ? 1.0 : 0.0;
                              g[at] += up * pix_w[b * hw + i] * (prob[at] - onehot);
                            }
                          }
                        }
                      });
}

Var sigmoid_bce(const Var& logits, const Tensor& targets) {
  if (logits.value().numel() != targets.numel()) {
    throw ShapeError("sigmoid_bce: " + std::to_string(targets.numel()) + " targets for " +
                     std::to_string(logits.value().numel()) + " logits");
  }
  const std::size_t n = targets.numel();
  const Tensor& x = logits.value();
  double loss = 0.0;
  Tensor prob(x.shape());
  for (std::size_t i = 0; i < n; ++i) {
    // log(1 + exp(-|x|)) form keeps large logits finite.
    const double v = x[i];
    loss += std::max(v, 0.0) - v * targets[i] + std::log1p(std::exp(-std::abs(v)));
    prob[i] = 1.0 / (1.0 + std::exp(-v));
  }
  loss /= static_cast<double>(n);
  return Var::from_op(Tensor({1}, loss), {logits},
                      [prob = std::move(prob), targets, n](Node& self) {
                        Tensor& g = self.parents[0]->grad_buffer();
                        const double up = self.grad[0] / static_cast<double>(n);
                        for (std::size_t i = 0; i < n; ++i) g[i] += up * (prob[i] - targets[i]);
                      });
}

Var smooth_l1(const Var& prediction, const Tensor& target, double beta, double normalizer) {
  if (prediction.value().numel() != target.numel()) {
    throw ShapeError("smooth_l1: prediction " + shape_str(prediction.shape()) +
                     " vs target " + shape_str(target.shape()));
  }
  if (!(beta > 0.0) || !(normalizer > 0.0)) {
    throw ShapeError("smooth_l1: beta and normalizer must be positive");
  }
  const Tensor& p = prediction.value();
  double loss = 0.0;
  Tensor slope(p.shape());
  for (std::size_t i = 0; i < p.numel(); ++i) {
    const double d = p[i] - target[i];
    const double a = std::abs(d);
    if (a < beta) {
      loss += 0.5 * d * d / beta;
      slope[i] = d / beta;
    } else {
      loss += a - 0.5 * beta;
      slope[i] = d > 0 ? 1.0 : -1.0;
    }
  }
  loss /= normalizer;
  return Var::from_op(Tensor({1}, loss), {prediction},
                      [slope = std::move(slope), normalizer](Node& self) {
                        Tensor& g = self.parents[0]->grad_buffer();
                        const double up = self.grad[0] / normalizer;
                        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += up * slope[i];
                      });
}

}  // namespace insloc::ops
