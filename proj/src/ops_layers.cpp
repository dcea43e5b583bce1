/*
 * SPDX-License-Identifier: Apache-2.0
 */
#include <cmath>
#include <vector>

#include "insloc/error.hpp"
#include "insloc/kernels.hpp"
#include "insloc/ops.hpp"

namespace insloc::ops {

namespace {

kernels::ConvGeometry conv_geometry(const Shape& in, const Shape& w, std::size_t stride,
                                    Padding padding) {
  if (stride == 0) throw ShapeError("conv2d stride must be positive");
  if (w.size() != 4 || w[2] != w[3]) {
    throw ShapeError("conv2d weight must be [out, in, k, k], got " + shape_str(w));
  }
  if (in[1] != w[1]) {
    throw ShapeError("conv2d input has " + std::to_string(in[1]) + " channels but weight " +
                     shape_str(w) + " expects " + std::to_string(w[1]));
  }
  kernels::ConvGeometry g;
  g.batch = in[0];
  g.in_channels = in[1];
  g.in_h = in[2];
  g.in_w = in[3];
  g.out_channels = w[0];
  g.kernel = w[2];
  g.stride = stride;
  if (padding == Padding::kSame) {
    g.out_h = (g.in_h + stride - 1) / stride;
    g.out_w = (g.in_w + stride - 1) / stride;
    const auto total = [&](std::size_t out, std::size_t extent) -> std::size_t {
      const std::size_t need = (out - 1) * stride + g.kernel;
      return need > extent ? need - extent : 0;
    };
    g.pad_top = total(g.out_h, g.in_h) / 2;
    g.pad_left = total(g.out_w, g.in_w) / 2;
  } else {
    if (g.in_h < g.kernel || g.in_w < g.kernel) {
      throw ShapeError("conv2d kernel " + std::to_string(g.kernel) + " does not fit input " +
                       shape_str(in) + " without padding (zero-size output)");
    }
    g.out_h = (g.in_h - g.kernel) / stride + 1;
    g.out_w = (g.in_w - g.kernel) / stride + 1;
  }
  if (g.out_h == 0 || g.out_w == 0) throw ShapeError("conv2d produces a zero-size output");
  return g;
}

double* grad_ptr(Node& parent) {
  return parent.requires_grad ? parent.grad_buffer().ptr() : nullptr;
}

}  // namespace

Var conv2d(const Var& input, const Var& weight, const Var& bias, std::size_t stride,
           Padding padding) {
  require_rank4(input.value(), "conv2d");
  const auto g = conv_geometry(input.shape(), weight.shape(), stride, padding);
  const bool has_bias = bias.defined();
  if (has_bias && (bias.value().rank() != 1 || bias.value().numel() != g.out_channels)) {
    throw ShapeError("conv2d bias must have " + std::to_string(g.out_channels) + " entries, got " +
                     shape_str(bias.shape()));
  }
  Tensor out({g.batch, g.out_channels, g.out_h, g.out_w});
  kernels::conv2d_forward(g, input.value().ptr(), weight.value().ptr(),
                          has_bias ? bias.value().ptr() : nullptr, out.ptr());
  std::vector<Var> parents{input, weight};
  if (has_bias) parents.push_back(bias);
  return Var::from_op(std::move(out), std::move(parents), [g, has_bias](Node& self) {
    Node& in = *self.parents[0];
    Node& w = *self.parents[1];
    double* gb = has_bias ? grad_ptr(*self.parents[2]) : nullptr;
    kernels::conv2d_backward(g, in.value.ptr(), w.value.ptr(), self.grad.ptr(), grad_ptr(in),
                             grad_ptr(w), gb);
  });
}

Var transposed_conv2d(const Var& input, const Var& weight, const Var& bias) {
  require_rank4(input.value(), "transposed_conv2d");
  const Shape& in = input.shape();
  const Shape& w = weight.shape();
  if (w.size() != 4 || w[2] != 2 || w[3] != 2) {
    throw ShapeError("transposed_conv2d supports only 2x2 kernels [in, out, 2, 2], got " +
                     shape_str(w));
  }
  if (w[0] != in[1]) {
    throw ShapeError("transposed_conv2d input has " + std::to_string(in[1]) +
                     " channels but weight " + shape_str(w) + " expects " + std::to_string(w[0]));
  }
  const std::size_t n = in[0], c = in[1], h = in[2], wd = in[3], o = w[1];
  const bool has_bias = bias.defined();
  if (has_bias && bias.value().numel() != o) {
    throw ShapeError("transposed_conv2d bias must have " + std::to_string(o) + " entries");
  }
  Tensor out({n, o, 2 * h, 2 * wd});
  kernels::tconv2x2_forward(n, c, h, wd, o, input.value().ptr(), weight.value().ptr(),
                            has_bias ? bias.value().ptr() : nullptr, out.ptr());
  std::vector<Var> parents{input, weight};
  if (has_bias) parents.push_back(bias);
  return Var::from_op(std::move(out), std::move(parents), [=](Node& self) {
    Node& x = *self.parents[0];
    Node& k = *self.parents[1];
    double* gb = has_bias ? grad_ptr(*self.parents[2]) : nullptr;
    kernels::tconv2x2_backward(n, c, h, wd, o, x.value.ptr(), k.value.ptr(), self.grad.ptr(),
                               grad_ptr(x), grad_ptr(k), gb);
  });
}

Var maxpool2x2(const Var& input) {
  require_rank4(input.value(), "maxpool2x2");
  const Shape& s = input.shape();
  if (s[2] % 2 != 0) throw EvenSizeViolation("height", s[2]);
  if (s[3] % 2 != 0) throw EvenSizeViolation("width", s[3]);
  Tensor out({s[0], s[1], s[2] / 2, s[3] / 2});
  std::vector<std::size_t> argmax(out.numel());
  kernels::maxpool2x2_forward(s[0] * s[1], s[2], s[3], input.value().ptr(), out.ptr(),
                              argmax.data());
  return Var::from_op(std::move(out), {input}, [argmax = std::move(argmax)](Node& self) {
    Tensor& gi = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < argmax.size(); ++i) gi[argmax[i]] += self.grad[i];
  });
}

BatchNormState::BatchNormState(std::size_t channels)
    : running_mean(channels ? Tensor({channels}, 0.0) : Tensor{}),
      running_var(channels ? Tensor({channels}, 1.0) : Tensor{}) {}

Var batchnorm2d(const Var& input, const Var& gamma, const Var& beta, BatchNormState& state,
                Mode mode) {
  require_rank4(input.value(), "batchnorm2d");
  const Shape& s = input.shape();
  const std::size_t n = s[0], c = s[1], hw = s[2] * s[3];
  if (c == 0) throw ShapeError("batchnorm2d needs at least one channel");
  if (gamma.value().numel() != c || beta.value().numel() != c) {
    throw ShapeError("batchnorm2d gamma/beta must have " + std::to_string(c) + " entries");
  }
  if (!(state.eps > 0.0)) throw ShapeError("batchnorm2d eps must be positive");
  if (state.running_mean.numel() != c) state = BatchNormState(c);

  const Tensor& x = input.value();
  const double count = static_cast<double>(n * hw);
  Tensor mu({c}), inv_std({c});
  if (mode == Mode::kTrain) {
#pragma omp parallel for schedule(static)
    for (std::size_t ch = 0; ch < c; ++ch) {
      double m = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const double* p = x.ptr() + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) m += p[i];
      }
      m /= count;
      double v = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const double* p = x.ptr() + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) v += (p[i] - m) * (p[i] - m);
      }
      v /= count;
      mu[ch] = m;
      inv_std[ch] = 1.0 / std::sqrt(v + state.eps);
      state.running_mean[ch] = state.decay * state.running_mean[ch] + (1.0 - state.decay) * m;
      state.running_var[ch] = state.decay * state.running_var[ch] + (1.0 - state.decay) * v;
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mu[ch] = state.running_mean[ch];
      inv_std[ch] = 1.0 / std::sqrt(state.running_var[ch] + state.eps);
    }
  }

  Tensor out(s);
  Tensor xhat(s);
  const Tensor& gm = gamma.value();
  const Tensor& bt = beta.value();
#pragma omp parallel for collapse(2) schedule(static)
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t off = (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const double xh = (x[off + i] - mu[ch]) * inv_std[ch];
        xhat[off + i] = xh;
        out[off + i] = gm[ch] * xh + bt[ch];
      }
    }
  }

  const bool train = mode == Mode::kTrain;
  return Var::from_op(
      std::move(out), {input, gamma, beta},
      [xhat = std::move(xhat), inv_std, n, c, hw, count, train](Node& self) {
        Node& in = *self.parents[0];
        Node& g = *self.parents[1];
        Node& be = *self.parents[2];
        const Tensor& dy = self.grad;
        std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
        for (std::size_t b = 0; b < n; ++b) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t off = (b * c + ch) * hw;
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t i = 0; i < hw; ++i) {
              s1 += dy[off + i];
              s2 += dy[off + i] * xhat[off + i];
            }
            sum_dy[ch] += s1;
            sum_dy_xhat[ch] += s2;
          }
        }
        if (g.requires_grad) {
          Tensor& gg = g.grad_buffer();
          for (std::size_t ch = 0; ch < c; ++ch) gg[ch] += sum_dy_xhat[ch];
        }
        if (be.requires_grad) {
          Tensor& gb = be.grad_buffer();
          for (std::size_t ch = 0; ch < c; ++ch) gb[ch] += sum_dy[ch];
        }
        if (!in.requires_grad) return;
        Tensor& gi = in.grad_buffer();
        const Tensor& gamma_v = g.value;
        for (std::size_t b = 0; b < n; ++b) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t off = (b * c + ch) * hw;
            const double k = gamma_v[ch] * inv_std[ch];
            if (train) {
              const double m1 = sum_dy[ch] / count;
              const double m2 = sum_dy_xhat[ch] / count;
              for (std::size_t i = 0; i < hw; ++i) {
                gi[off + i] += k * (dy[off + i] - m1 - xhat[off + i] * m2);
              }
            } else {
              for (std::size_t i = 0; i < hw; ++i) gi[off + i] += k * dy[off + i];
            }
          }
        }
      });
}

}  // namespace insloc::ops
