/*
 * SPDX-License-Identifier: Apache-2.0
 */
// Straightforward serial loops. Slow; used only to cross-check the
// parallel kernels and as the baseline in the kernel benchmark.
#include "insloc/kernels.hpp"

#include <limits>

namespace insloc::kernels::reference {

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, double alpha,
          const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta,
          double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = ta == Trans::kNo ? a[i * lda + p] : a[p * lda + i];
        const double bv = tb == Trans::kNo ? b[p * ldb + j] : b[j * ldb + p];
        acc += av * bv;
      }
      double& out = c[i * ldc + j];
      out = (beta == 0.0 ? 0.0 : beta * out) + alpha * acc;
    }
  }
}

namespace {

// Input coordinate touched by output position `o` and kernel tap `t`;
// returns false when it falls in the zero padding.
bool source_coord(std::size_t o, std::size_t t, std::size_t stride, std::size_t pad,
                  std::size_t extent, std::size_t& src) {
  const long long s = static_cast<long long>(o * stride + t) - static_cast<long long>(pad);
  if (s < 0 || s >= static_cast<long long>(extent)) return false;
  src = static_cast<std::size_t>(s);
  return true;
}

}  // namespace

void conv2d_forward(const ConvGeometry& g, const double* in, const double* weight,
                    const double* bias, double* out) {
  const std::size_t kk = g.kernel;
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      for (std::size_t y = 0; y < g.out_h; ++y) {
        for (std::size_t x = 0; x < g.out_w; ++x) {
          double acc = bias ? bias[o] : 0.0;
          for (std::size_t c = 0; c < g.in_channels; ++c) {
            for (std::size_t ky = 0; ky < kk; ++ky) {
              std::size_t sy;
              if (!source_coord(y, ky, g.stride, g.pad_top, g.in_h, sy)) continue;
              for (std::size_t kx = 0; kx < kk; ++kx) {
                std::size_t sx;
                if (!source_coord(x, kx, g.stride, g.pad_left, g.in_w, sx)) continue;
                acc += in[((n * g.in_channels + c) * g.in_h + sy) * g.in_w + sx] *
                       weight[((o * g.in_channels + c) * kk + ky) * kk + kx];
              }
            }
          }
          out[((n * g.out_channels + o) * g.out_h + y) * g.out_w + x] = acc;
        }
      }
    }
  }
}

void conv2d_backward(const ConvGeometry& g, const double* in, const double* weight,
                     const double* grad_out, double* grad_in, double* grad_weight,
                     double* grad_bias) {
  const std::size_t kk = g.kernel;
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      for (std::size_t y = 0; y < g.out_h; ++y) {
        for (std::size_t x = 0; x < g.out_w; ++x) {
          const double go = grad_out[((n * g.out_channels + o) * g.out_h + y) * g.out_w + x];
          if (grad_bias) grad_bias[o] += go;
          for (std::size_t c = 0; c < g.in_channels; ++c) {
            for (std::size_t ky = 0; ky < kk; ++ky) {
              std::size_t sy;
              if (!source_coord(y, ky, g.stride, g.pad_top, g.in_h, sy)) continue;
              for (std::size_t kx = 0; kx < kk; ++kx) {
                std::size_t sx;
                if (!source_coord(x, kx, g.stride, g.pad_left, g.in_w, sx)) continue;
                const std::size_t ii = ((n * g.in_channels + c) * g.in_h + sy) * g.in_w + sx;
                const std::size_t wi = ((o * g.in_channels + c) * kk + ky) * kk + kx;
                if (grad_in) grad_in[ii] += go * weight[wi];
                if (grad_weight) grad_weight[wi] += go * in[ii];
              }
            }
          }
        }
      }
    }
  }
}

void tconv2x2_forward(std::size_t batch, std::size_t in_channels, std::size_t h, std::size_t w,
                      std::size_t out_channels, const double* in, const double* weight,
                      const double* bias, double* out) {
  const std::size_t oh = 2 * h, ow = 2 * w;
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t o = 0; o < out_channels; ++o) {
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
          double acc = bias ? bias[o] : 0.0;
          for (std::size_t c = 0; c < in_channels; ++c) {
            acc += in[((n * in_channels + c) * h + y / 2) * w + x / 2] *
                   weight[((c * out_channels + o) * 2 + y % 2) * 2 + x % 2];
          }
          out[((n * out_channels + o) * oh + y) * ow + x] = acc;
        }
      }
    }
  }
}

void tconv2x2_backward(std::size_t batch, std::size_t in_channels, std::size_t h, std::size_t w,
                       std::size_t out_channels, const double* in, const double* weight,
                       const double* grad_out, double* grad_in, double* grad_weight,
                       double* grad_bias) {
  const std::size_t oh = 2 * h, ow = 2 * w;
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t o = 0; o < out_channels; ++o) {
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
          const double go = grad_out[((n * out_channels + o) * oh + y) * ow + x];
          if (grad_bias) grad_bias[o] += go;
          for (std::size_t c = 0; c < in_channels; ++c) {
            const std::size_t ii = ((n * in_channels + c) * h + y / 2) * w + x / 2;
            const std::size_t wi = ((c * out_channels + o) * 2 + y % 2) * 2 + x % 2;
            if (grad_in) grad_in[ii] += go * weight[wi];
            if (grad_weight) grad_weight[wi] += go * in[ii];
          }
        }
      }
    }
  }
}

void maxpool2x2_forward(std::size_t planes, std::size_t h, std::size_t w, const double* in,
                        double* out, std::size_t* argmax) {
  const std::size_t oh = h / 2, ow = w / 2;
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_i = 0;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t i = (p * h + 2 * y + dy) * w + 2 * x + dx;
            if (in[i] > best) {
              best = in[i];
              best_i = i;
            }
          }
        }
        out[(p * oh + y) * ow + x] = best;
        argmax[(p * oh + y) * ow + x] = best_i;
      }
    }
  }
}

}  // namespace insloc::kernels::reference
