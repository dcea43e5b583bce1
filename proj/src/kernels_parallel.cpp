/*
 * SPDX-License-Identifier: Apache-2.0
 */
#include <algorithm>
#include <cstring>
#include <limits>
#include <vector>

#include "insloc/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace insloc::kernels {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace {

// Register tile: MR rows of A times NR columns of B, held in MR*NR/8 vectors.
constexpr std::size_t kMR = 4;
constexpr std::size_t kNR = 24;
constexpr std::size_t kKC = 256;
constexpr std::size_t kMC = 128;
constexpr std::size_t kNC = 1536;

using v8d = double __attribute__((vector_size(64)));

inline v8d load8(const double* p) {
  v8d v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline v8d splat(double x) { return v8d{x, x, x, x, x, x, x, x}; }

// acc += Ap(kMR x kc) * Bp(kc x kNR); both panels packed and zero-padded.
inline void micro_kernel(std::size_t kc, const double* ap, const double* bp, std::size_t bstride,
                         double* out) {
  v8d c00{}, c01{}, c02{}, c10{}, c11{}, c12{}, c20{}, c21{}, c22{}, c30{}, c31{}, c32{};
  for (std::size_t p = 0; p < kc; ++p) {
    const v8d b0 = load8(bp);
    const v8d b1 = load8(bp + 8);
    const v8d b2 = load8(bp + 16);
    v8d a = splat(ap[0]);
    c00 += a * b0;
    c01 += a * b1;
    c02 += a * b2;
    a = splat(ap[1]);
    c10 += a * b0;
    c11 += a * b1;
    c12 += a * b2;
    a = splat(ap[2]);
    c20 += a * b0;
    c21 += a * b1;
    c22 += a * b2;
    a = splat(ap[3]);
    c30 += a * b0;
    c31 += a * b1;
    c32 += a * b2;
    ap += kMR;
    bp += bstride;
  }
  const v8d rows[kMR][3] = {{c00, c01, c02}, {c10, c11, c12}, {c20, c21, c22}, {c30, c31, c32}};
  std::memcpy(out, rows, sizeof rows);
}

void pack_a(Trans ta, const double* a, std::size_t lda, std::size_t i0, std::size_t mc,
            std::size_t p0, std::size_t kc, double* dst) {
  const std::size_t panels = (mc + kMR - 1) / kMR;
  for (std::size_t pi = 0; pi < panels; ++pi) {
    double* d = dst + pi * kc * kMR;
    for (std::size_t p = 0; p < kc; ++p) {
      for (std::size_t r = 0; r < kMR; ++r) {
        const std::size_t i = pi * kMR + r;
        double v = 0.0;
        if (i < mc) {
          v = ta == Trans::kNo ? a[(i0 + i) * lda + p0 + p] : a[(p0 + p) * lda + i0 + i];
        }
        d[p * kMR + r] = v;
      }
    }
  }
}

void pack_b(Trans tb, const double* b, std::size_t ldb, std::size_t p0, std::size_t kc,
            std::size_t j0, std::size_t nc, double* dst) {
  const std::size_t panels = (nc + kNR - 1) / kNR;
#pragma omp parallel for schedule(static) if (panels > 8)
  for (std::size_t pj = 0; pj < panels; ++pj) {
    double* d = dst + pj * kc * kNR;
    const std::size_t jbase = pj * kNR;
    const std::size_t width = std::min(kNR, nc - jbase);
    for (std::size_t p = 0; p < kc; ++p) {
      double* row = d + p * kNR;
      if (tb == Trans::kNo) {
        const double* src = b + (p0 + p) * ldb + j0 + jbase;
        std::memcpy(row, src, width * sizeof(double));
      } else {
        for (std::size_t j = 0; j < width; ++j) row[j] = b[(j0 + jbase + j) * ldb + p0 + p];
      }
      for (std::size_t j = width; j < kNR; ++j) row[j] = 0.0;
    }
  }
}

}  // namespace

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, double alpha,
          const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta,
          double* c, std::size_t ldc) {
  if (m == 0 || n == 0) return;
  for (std::size_t i = 0; i < m; ++i) {
    double* row = c + i * ldc;
    if (beta == 0.0) {
      std::fill(row, row + n, 0.0);
    } else if (beta != 1.0) {
      for (std::size_t j = 0; j < n; ++j) row[j] *= beta;
    }
  }
  if (k == 0 || alpha == 0.0) return;

  // Skinny products (a few output columns) do not fill a register tile.
  if (n < kNR / 2) {
    const std::size_t rs_a = ta == Trans::kNo ? lda : 1, cs_a = ta == Trans::kNo ? 1 : lda;
    const std::size_t rs_b = tb == Trans::kNo ? ldb : 1, cs_b = tb == Trans::kNo ? 1 : ldb;
#pragma omp parallel for schedule(static) if (m * n * k > 65536)
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) acc += a[i * rs_a + p * cs_a] * b[p * rs_b + j * cs_b];
        c[i * ldc + j] += alpha * acc;
      }
    }
    return;
  }

  const bool direct_b = tb == Trans::kNo;
  // Packing buffers are reused across calls; packing overwrites padding.
  thread_local std::vector<double> bpack, apack;
  const std::size_t kc_max = std::min(kKC, k);
  const std::size_t nc_max = std::min(kNC, (n + kNR - 1) / kNR * kNR);
  const std::size_t mc_max = std::min(kMC, (m + kMR - 1) / kMR * kMR);
  const std::size_t bneed = kc_max * (direct_b ? kNR : nc_max);
  if (bpack.size() < bneed) bpack.resize(bneed);
  if (apack.size() < kc_max * mc_max) apack.resize(kc_max * mc_max);
  for (std::size_t jc = 0; jc < n; jc += kNC) {
    const std::size_t nc = std::min(kNC, n - jc);
    const std::size_t npanels = (nc + kNR - 1) / kNR;
    const std::size_t last_cols = nc - (npanels - 1) * kNR;
    for (std::size_t pc = 0; pc < k; pc += kKC) {
      const std::size_t kc = std::min(kKC, k - pc);
      // Row-major B is streamed in place except for a ragged last panel,
      // which is copied once into a zero-padded buffer.
      if (!direct_b) {
        pack_b(tb, b, ldb, pc, kc, jc, nc, bpack.data());
      } else if (last_cols != kNR) {
        const std::size_t j0 = jc + (npanels - 1) * kNR;
        for (std::size_t p = 0; p < kc; ++p) {
          double* row = bpack.data() + p * kNR;
          std::memcpy(row, b + (pc + p) * ldb + j0, last_cols * sizeof(double));
          std::fill(row + last_cols, row + kNR, 0.0);
        }
      }
      for (std::size_t ic = 0; ic < m; ic += kMC) {
        const std::size_t mc = std::min(kMC, m - ic);
        const std::size_t mpanels = (mc + kMR - 1) / kMR;
        pack_a(ta, a, lda, ic, mc, pc, kc, apack.data());
        const std::size_t tiles = mpanels * npanels;
#pragma omp parallel for schedule(static) if (tiles > 16)
        for (std::size_t t = 0; t < tiles; ++t) {
          const std::size_t pj = t / mpanels;
          const std::size_t pi = t % mpanels;
          alignas(64) double tile[kMR * kNR];
          const std::size_t rows = std::min(kMR, mc - pi * kMR);
          const std::size_t cols = std::min(kNR, nc - pj * kNR);
          const double* ap = apack.data() + pi * kc * kMR;
          if (!direct_b) {
            micro_kernel(kc, ap, bpack.data() + pj * kc * kNR, kNR, tile);
          } else if (cols == kNR) {
            micro_kernel(kc, ap, b + pc * ldb + jc + pj * kNR, ldb, tile);
          } else {
            micro_kernel(kc, ap, bpack.data(), kNR, tile);
          }
          for (std::size_t r = 0; r < rows; ++r) {
            double* dst = c + (ic + pi * kMR + r) * ldc + jc + pj * kNR;
            const double* src = tile + r * kNR;
            for (std::size_t j = 0; j < cols; ++j) dst[j] += alpha * src[j];
          }
        }
      }
    }
  }
}

namespace {

// Valid output-column range [x_lo, x_hi) for kernel column kx and the source
// column of x_lo. Only used for stride 1.
struct ColumnSpan {
  std::size_t x_lo, x_hi;
};

ColumnSpan valid_columns(const ConvGeometry& g, std::size_t kx) {
  const long long off = static_cast<long long>(kx) - static_cast<long long>(g.pad_left);
  const long long lo = std::max<long long>(0, -off);
  const long long hi = std::min<long long>(static_cast<long long>(g.out_w),
                                           static_cast<long long>(g.in_w) - off);
  if (hi <= lo) return {0, 0};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// Columns for output rows [y0, y1); the block is K x ((y1 - y0) * out_w).
void im2col_rows(const ConvGeometry& g, const double* in, std::size_t y0, std::size_t y1,
                 double* col) {
  const std::size_t kk = g.kernel;
  const std::size_t width = (y1 - y0) * g.out_w;
#pragma omp parallel for schedule(static) if (g.in_channels * width > 65536)
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    const double* src = in + c * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < kk; ++ky) {
      for (std::size_t kx = 0; kx < kk; ++kx) {
        double* dst = col + ((c * kk + ky) * kk + kx) * width;
        const ColumnSpan span = valid_columns(g, kx);
        for (std::size_t y = y0; y < y1; ++y) {
          const long long sy = static_cast<long long>(y * g.stride + ky) -
                               static_cast<long long>(g.pad_top);
          double* drow = dst + (y - y0) * g.out_w;
          if (sy < 0 || sy >= static_cast<long long>(g.in_h)) {
            std::fill(drow, drow + g.out_w, 0.0);
            continue;
          }
          const double* srow = src + static_cast<std::size_t>(sy) * g.in_w;
          if (g.stride == 1) {
            std::fill(drow, drow + span.x_lo, 0.0);
            if (span.x_hi > span.x_lo) {
              std::memcpy(drow + span.x_lo, srow + span.x_lo + kx - g.pad_left,
                          (span.x_hi - span.x_lo) * sizeof(double));
            }
            std::fill(drow + std::max(span.x_hi, span.x_lo), drow + g.out_w, 0.0);
            continue;
          }
          for (std::size_t x = 0; x < g.out_w; ++x) {
            const long long sx = static_cast<long long>(x * g.stride + kx) -
                                 static_cast<long long>(g.pad_left);
            drow[x] = (sx < 0 || sx >= static_cast<long long>(g.in_w))
                          ? 0.0
                          : srow[static_cast<std::size_t>(sx)];
          }
        }
      }
    }
  }
}

void col2im_add_rows(const ConvGeometry& g, const double* col, std::size_t y0, std::size_t y1,
                     double* in) {
  const std::size_t kk = g.kernel;
  const std::size_t width = (y1 - y0) * g.out_w;
#pragma omp parallel for schedule(static) if (g.in_channels * width > 65536)
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    double* dst = in + c * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < kk; ++ky) {
      for (std::size_t kx = 0; kx < kk; ++kx) {
        const double* src = col + ((c * kk + ky) * kk + kx) * width;
        const ColumnSpan span = valid_columns(g, kx);
        for (std::size_t y = y0; y < y1; ++y) {
          const long long sy = static_cast<long long>(y * g.stride + ky) -
                               static_cast<long long>(g.pad_top);
          if (sy < 0 || sy >= static_cast<long long>(g.in_h)) continue;
          double* drow = dst + static_cast<std::size_t>(sy) * g.in_w;
          const double* srow = src + (y - y0) * g.out_w;
          if (g.stride == 1) {
            double* d = drow + kx - g.pad_left;
            for (std::size_t x = span.x_lo; x < span.x_hi; ++x) d[x] += srow[x];
            continue;
          }
          for (std::size_t x = 0; x < g.out_w; ++x) {
            const long long sx = static_cast<long long>(x * g.stride + kx) -
                                 static_cast<long long>(g.pad_left);
            if (sx < 0 || sx >= static_cast<long long>(g.in_w)) continue;
            drow[static_cast<std::size_t>(sx)] += srow[x];
          }
        }
      }
    }
  }
}

// Output rows per column block, sized so a block of columns stays in L2.
std::size_t rows_per_block(const ConvGeometry& g) {
  constexpr std::size_t kBlockDoubles = 96 * 1024;
  const std::size_t ckk = g.in_channels * g.kernel * g.kernel;
  const std::size_t rows = kBlockDoubles / std::max<std::size_t>(1, ckk * g.out_w);
  return std::clamp<std::size_t>(rows, 1, g.out_h);
}

bool is_pointwise(const ConvGeometry& g) {
  return g.kernel == 1 && g.stride == 1 && g.pad_top == 0 && g.pad_left == 0;
}

}  // namespace

namespace {

// out = beta * out + conv(in); beta is 0 or 1.
void conv_accumulate(const ConvGeometry& g, const double* in, const double* weight, double beta,
                     double* out) {
  const std::size_t ckk = g.in_channels * g.kernel * g.kernel;
  const std::size_t plane = g.out_h * g.out_w;
  const bool pointwise = is_pointwise(g);
  const std::size_t block = rows_per_block(g);
  std::vector<double> col(pointwise ? 0 : ckk * block * g.out_w);
  for (std::size_t n = 0; n < g.batch; ++n) {
    const double* src = in + n * g.in_channels * g.in_h * g.in_w;
    double* dst = out + n * g.out_channels * plane;
    if (pointwise) {
      gemm(Trans::kNo, Trans::kNo, g.out_channels, plane, ckk, 1.0, weight, ckk, src, plane, beta,
           dst, plane);
      continue;
    }
    for (std::size_t y0 = 0; y0 < g.out_h; y0 += block) {
      const std::size_t y1 = std::min(g.out_h, y0 + block);
      const std::size_t width = (y1 - y0) * g.out_w;
      im2col_rows(g, src, y0, y1, col.data());
      gemm(Trans::kNo, Trans::kNo, g.out_channels, width, ckk, 1.0, weight, ckk, col.data(), width,
           beta, dst + y0 * g.out_w, plane);
    }
  }
}

}  // namespace

void conv2d_forward(const ConvGeometry& g, const double* in, const double* weight,
                    const double* bias, double* out) {
  const std::size_t plane = g.out_h * g.out_w;
  if (bias) {
    for (std::size_t n = 0; n < g.batch; ++n) {
      double* dst = out + n * g.out_channels * plane;
      for (std::size_t o = 0; o < g.out_channels; ++o) {
        std::fill(dst + o * plane, dst + (o + 1) * plane, bias[o]);
      }
    }
  }
  conv_accumulate(g, in, weight, bias ? 1.0 : 0.0, out);
}

void conv2d_backward(const ConvGeometry& g, const double* in, const double* weight,
                     const double* grad_out, double* grad_in, double* grad_weight,
                     double* grad_bias) {
  const std::size_t ckk = g.in_channels * g.kernel * g.kernel;
  const std::size_t plane = g.out_h * g.out_w;
  const std::size_t in_plane = g.in_channels * g.in_h * g.in_w;
  const bool pointwise = is_pointwise(g);
  const std::size_t block = rows_per_block(g);
  // Stride-1 input gradients are a forward convolution of grad_out with the
  // spatially flipped, channel-transposed kernel.
  const bool flipped = grad_in && !pointwise && g.stride == 1 && g.pad_top < g.kernel &&
                       g.pad_left < g.kernel;
  if (flipped) {
    const std::size_t kk = g.kernel * g.kernel;
    std::vector<double> wt(g.out_channels * ckk);
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      for (std::size_t c = 0; c < g.in_channels; ++c) {
        for (std::size_t q = 0; q < kk; ++q) {
          wt[(c * g.out_channels + o) * kk + (kk - 1 - q)] = weight[(o * g.in_channels + c) * kk + q];
        }
      }
    }
    ConvGeometry t = g;
    t.in_channels = g.out_channels;
    t.out_channels = g.in_channels;
    t.in_h = g.out_h;
    t.in_w = g.out_w;
    t.out_h = g.in_h;
    t.out_w = g.in_w;
    t.pad_top = g.kernel - 1 - g.pad_top;
    t.pad_left = g.kernel - 1 - g.pad_left;
    conv_accumulate(t, grad_out, wt.data(), 1.0, grad_in);
    grad_in = nullptr;
  }
  std::vector<double> col(pointwise || !grad_weight ? 0 : ckk * block * g.out_w);
  std::vector<double> dcol(pointwise || !grad_in ? 0 : ckk * block * g.out_w);
  for (std::size_t n = 0; n < g.batch; ++n) {
    const double* src = in + n * in_plane;
    const double* go = grad_out + n * g.out_channels * plane;
    if (grad_bias) {
      for (std::size_t o = 0; o < g.out_channels; ++o) {
        double s = 0.0;
        const double* row = go + o * plane;
        for (std::size_t i = 0; i < plane; ++i) s += row[i];
        grad_bias[o] += s;
      }
    }
    if (pointwise) {
      if (grad_weight) {
        gemm(Trans::kNo, Trans::kYes, g.out_channels, ckk, plane, 1.0, go, plane, src, plane, 1.0,
             grad_weight, ckk);
      }
      if (grad_in) {
        gemm(Trans::kYes, Trans::kNo, ckk, plane, g.out_channels, 1.0, weight, ckk, go, plane,
             1.0, grad_in + n * in_plane, plane);
      }
      continue;
    }
    for (std::size_t y0 = 0; y0 < g.out_h; y0 += block) {
      const std::size_t y1 = std::min(g.out_h, y0 + block);
      const std::size_t width = (y1 - y0) * g.out_w;
      const double* go_block = go + y0 * g.out_w;
      if (grad_weight) {
        im2col_rows(g, src, y0, y1, col.data());
        gemm(Trans::kNo, Trans::kYes, g.out_channels, ckk, width, 1.0, go_block, plane,
             col.data(), width, 1.0, grad_weight, ckk);
      }
      if (grad_in) {
        gemm(Trans::kYes, Trans::kNo, ckk, width, g.out_channels, 1.0, weight, ckk, go_block,
             plane, 0.0, dcol.data(), width);
        col2im_add_rows(g, dcol.data(), y0, y1, grad_in + n * in_plane);
      }
    }
  }
}

void tconv2x2_forward(std::size_t batch, std::size_t in_channels, std::size_t h, std::size_t w,
                      std::size_t out_channels, const double* in, const double* weight,
                      const double* bias, double* out) {
  const std::size_t hw = h * w;
  const std::size_t ow = 2 * w;
  std::vector<double> cols(out_channels * 4 * hw);
  for (std::size_t n = 0; n < batch; ++n) {
    gemm(Trans::kYes, Trans::kNo, out_channels * 4, hw, in_channels, 1.0, weight,
         out_channels * 4, in + n * in_channels * hw, hw, 0.0, cols.data(), hw);
    double* dst = out + n * out_channels * 4 * hw;
#pragma omp parallel for schedule(static)
    for (std::size_t o = 0; o < out_channels; ++o) {
      const double b = bias ? bias[o] : 0.0;
      for (std::size_t q = 0; q < 4; ++q) {
        const std::size_t dy = q / 2, dx = q % 2;
        const double* src = cols.data() + (o * 4 + q) * hw;
        double* plane = dst + o * 4 * hw;
        for (std::size_t y = 0; y < h; ++y) {
          double* row = plane + (2 * y + dy) * ow + dx;
          const double* srow = src + y * w;
          for (std::size_t x = 0; x < w; ++x) row[2 * x] = srow[x] + b;
        }
      }
    }
  }
}

void tconv2x2_backward(std::size_t batch, std::size_t in_channels, std::size_t h, std::size_t w,
                       std::size_t out_channels, const double* in, const double* weight,
                       const double* grad_out, double* grad_in, double* grad_weight,
                       double* grad_bias) {
  const std::size_t hw = h * w;
  const std::size_t ow = 2 * w;
  std::vector<double> dcols(out_channels * 4 * hw);
  for (std::size_t n = 0; n < batch; ++n) {
    const double* go = grad_out + n * out_channels * 4 * hw;
#pragma omp parallel for schedule(static)
    for (std::size_t o = 0; o < out_channels; ++o) {
      double bsum = 0.0;
      for (std::size_t q = 0; q < 4; ++q) {
        const std::size_t dy = q / 2, dx = q % 2;
        double* dst = dcols.data() + (o * 4 + q) * hw;
        const double* plane = go + o * 4 * hw;
        for (std::size_t y = 0; y < h; ++y) {
          const double* row = plane + (2 * y + dy) * ow + dx;
          for (std::size_t x = 0; x < w; ++x) {
            dst[y * w + x] = row[2 * x];
            bsum += row[2 * x];
          }
        }
      }
      if (grad_bias) grad_bias[o] += bsum;
    }
    if (grad_in) {
      gemm(Trans::kNo, Trans::kNo, in_channels, hw, out_channels * 4, 1.0, weight,
           out_channels * 4, dcols.data(), hw, 1.0, grad_in + n * in_channels * hw, hw);
    }
    if (grad_weight) {
      gemm(Trans::kNo, Trans::kYes, in_channels, out_channels * 4, hw, 1.0,
           in + n * in_channels * hw, hw, dcols.data(), hw, 1.0, grad_weight, out_channels * 4);
    }
  }
}

void maxpool2x2_forward(std::size_t planes, std::size_t h, std::size_t w, const double* in,
                        double* out, std::size_t* argmax) {
  const std::size_t oh = h / 2, ow = w / 2;
#pragma omp parallel for schedule(static)
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < oh; ++y) {
      const std::size_t r0 = (p * h + 2 * y) * w;
      const std::size_t r1 = r0 + w;
      for (std::size_t x = 0; x < ow; ++x) {
        // Scan order matches the reference: first strict maximum wins.
        std::size_t best = r0 + 2 * x;
        if (in[r0 + 2 * x + 1] > in[best]) best = r0 + 2 * x + 1;
        if (in[r1 + 2 * x] > in[best]) best = r1 + 2 * x;
        if (in[r1 + 2 * x + 1] > in[best]) best = r1 + 2 * x + 1;
        out[(p * oh + y) * ow + x] = in[best];
        argmax[(p * oh + y) * ow + x] = best;
      }
    }
  }
}

}  // namespace insloc::kernels
