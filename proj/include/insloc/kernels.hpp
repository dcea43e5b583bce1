/*
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

// Numeric kernels behind the differentiable ops.
//
// Two implementations share one set of signatures:
//   insloc::kernels             blocked/packed, OpenMP-parallel (used by ops)
//   insloc::kernels::reference  plain serial loops, kept as a test oracle
//
// All backward kernels accumulate (+=) into their gradient outputs, and any
// gradient pointer may be null to skip that output.

#include <cstddef>

namespace insloc::kernels {

enum class Trans { kNo, kYes };

/// C = alpha * op(A) * op(B) + beta * C, row-major. op(A) is MxK, op(B) is KxN.
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, double alpha,
          const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta,
          double* c, std::size_t ldc);

struct ConvGeometry {
  std::size_t batch = 0;
  std::size_t in_channels = 0;
  std::size_t in_h = 0;
  std::size_t in_w = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t pad_top = 0;
  std::size_t pad_left = 0;
  std::size_t out_h = 0;
  std::size_t out_w = 0;
};

/// NCHW input, OIKK weights, optional bias of length O.
void conv2d_forward(const ConvGeometry& g, const double* in, const double* weight,
                    const double* bias, double* out);
void conv2d_backward(const ConvGeometry& g, const double* in, const double* weight,
                     const double* grad_out, double* grad_in, double* grad_weight,
                     double* grad_bias);

/// 2x2 stride-2 transposed convolution; weights are laid out [in, out, 2, 2].
void tconv2x2_forward(std::size_t batch, std::size_t in_channels, std::size_t h, std::size_t w,
                      std::size_t out_channels, const double* in, const double* weight,
                      const double* bias, double* out);
void tconv2x2_backward(std::size_t batch, std::size_t in_channels, std::size_t h, std::size_t w,
                       std::size_t out_channels, const double* in, const double* weight,
                       const double* grad_out, double* grad_in, double* grad_weight,
                       double* grad_bias);

/// planes = batch * channels; h and w are the (even) input extents.
/// `argmax` receives, per output element, the flat input offset of the winner.
void maxpool2x2_forward(std::size_t planes, std::size_t h, std::size_t w, const double* in,
                        double* out, std::size_t* argmax);

namespace reference {

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, double alpha,
          const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta,
          double* c, std::size_t ldc);
void conv2d_forward(const ConvGeometry& g, const double* in, const double* weight,
                    const double* bias, double* out);
void conv2d_backward(const ConvGeometry& g, const double* in, const double* weight,
                     const double* grad_out, double* grad_in, double* grad_weight,
                     double* grad_bias);
void tconv2x2_forward(std::size_t batch, std::size_t in_channels, std::size_t h, std::size_t w,
                      std::size_t out_channels, const double* in, const double* weight,
                      const double* bias, double* out);
void tconv2x2_backward(std::size_t batch, std::size_t in_channels, std::size_t h, std::size_t w,
                       std::size_t out_channels, const double* in, const double* weight,
                       const double* grad_out, double* grad_in, double* grad_weight,
                       double* grad_bias);
void maxpool2x2_forward(std::size_t planes, std::size_t h, std::size_t w, const double* in,
                        double* out, std::size_t* argmax);

}  // namespace reference

/// Number of OpenMP threads the parallel kernels will use (1 without OpenMP).
int max_threads();

}  // namespace insloc::kernels
