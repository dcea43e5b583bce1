/*
 * SPDX-License-Identifier: Apache-2.0
 */
#include <algorithm>
#include <cmath>

#include "insloc/error.hpp"
#include "insloc/kernels.hpp"
#include "insloc/ops.hpp"

namespace insloc::ops {

using kernels::Trans;

Var relu(const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  return Var::from_op(std::move(out), {x}, [](Node& self) {
    Node& in = *self.parents[0];
    Tensor& gi = in.grad_buffer();
    for (std::size_t i = 0; i < gi.numel(); ++i) {
      if (in.value[i] > 0.0) gi[i] += self.grad[i];
    }
  });
}

Var sigmoid(const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.data()) v = 1.0 / (1.0 + std::exp(-v));
  return Var::from_op(out, {x}, [y = out](Node& self) {
    Tensor& gi = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < gi.numel(); ++i) gi[i] += self.grad[i] * y[i] * (1.0 - y[i]);
  });
}

Var add(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                     " differ");
  }
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b.value()[i];
  return Var::from_op(std::move(out), {a, b}, [](Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      Tensor& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    }
  });
}

Var scale(const Var& x, double factor) {
  Tensor out = x.value();
  for (auto& v : out.data()) v *= factor;
  return Var::from_op(std::move(out), {x}, [factor](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += factor * self.grad[i];
  });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return Var::from_op(Tensor({1}, s), {x}, [](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (auto& v : g.data()) v += self.grad[0];
  });
}

Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().numel())); }

Var concat_channels(const Var& first, const Var& second) {
  require_rank4(first.value(), "concat_channels");
  require_rank4(second.value(), "concat_channels");
  const Shape& a = first.shape();
  const Shape& b = second.shape();
  if (a[0] != b[0] || a[2] != b[2] || a[3] != b[3]) {
    throw ShapeError("concat_channels: spatial/batch mismatch " + shape_str(a) + " vs " +
                     shape_str(b));
  }
  const std::size_t n = a[0], ca = a[1], cb = b[1], hw = a[2] * a[3];
  Tensor out({n, ca + cb, a[2], a[3]});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(first.value().ptr() + i * ca * hw, ca * hw, out.ptr() + i * (ca + cb) * hw);
    std::copy_n(second.value().ptr() + i * cb * hw, cb * hw,
                out.ptr() + i * (ca + cb) * hw + ca * hw);
  }
  return Var::from_op(std::move(out), {first, second}, [n, ca, cb, hw](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    for (std::size_t i = 0; i < n; ++i) {
      const double* g = self.grad.ptr() + i * (ca + cb) * hw;
      if (pa.requires_grad) {
        double* d = pa.grad_buffer().ptr() + i * ca * hw;
        for (std::size_t j = 0; j < ca * hw; ++j) d[j] += g[j];
      }
      if (pb.requires_grad) {
        double* d = pb.grad_buffer().ptr() + i * cb * hw;
        for (std::size_t j = 0; j < cb * hw; ++j) d[j] += g[ca * hw + j];
      }
    }
  });
}

Var slice_channels(const Var& x, std::size_t begin, std::size_t count) {
  require_rank4(x.value(), "slice_channels");
  const Shape& s = x.shape();
  if (count == 0 || begin + count > s[1]) {
    throw ShapeError("slice_channels: [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") outside " + shape_str(s));
  }
  const std::size_t n = s[0], c = s[1], hw = s[2] * s[3];
  Tensor out({n, count, s[2], s[3]});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(x.value().ptr() + (i * c + begin) * hw, count * hw, out.ptr() + i * count * hw);
  }
  return Var::from_op(std::move(out), {x}, [n, c, hw, begin, count](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < count * hw; ++j) {
        g[(i * c + begin) * hw + j] += self.grad[i * count * hw + j];
      }
    }
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return Var::from_op(std::move(out), {x}, [](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (xs.size() != 2 || ws.size() != 2 || xs[1] != ws[1]) {
    throw ShapeError("linear: input " + shape_str(xs) + " incompatible with weight " +
                     shape_str(ws));
  }
  const std::size_t n = xs[0], in = xs[1], out_f = ws[0];
  const bool has_bias = bias.defined();
  if (has_bias && bias.value().numel() != out_f) {
    throw ShapeError("linear: bias must have " + std::to_string(out_f) + " entries");
  }
  Tensor out({n, out_f});
  if (has_bias) {
    for (std::size_t i = 0; i < n; ++i) {
      std::copy_n(bias.value().ptr(), out_f, out.ptr() + i * out_f);
    }
  }
  kernels::gemm(Trans::kNo, Trans::kYes, n, out_f, in, 1.0, x.value().ptr(), in,
                weight.value().ptr(), in, has_bias ? 1.0 : 0.0, out.ptr(), out_f);
  std::vector<Var> parents{x, weight};
  if (has_bias) parents.push_back(bias);
  return Var::from_op(std::move(out), std::move(parents), [=](Node& self) {
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    if (px.requires_grad) {
      kernels::gemm(Trans::kNo, Trans::kNo, n, in, out_f, 1.0, self.grad.ptr(), out_f,
                    pw.value.ptr(), in, 1.0, px.grad_buffer().ptr(), in);
    }
    if (pw.requires_grad) {
      kernels::gemm(Trans::kYes, Trans::kNo, out_f, in, n, 1.0, self.grad.ptr(), out_f,
                    px.value.ptr(), in, 1.0, pw.grad_buffer().ptr(), in);
    }
    if (has_bias && self.parents[2]->requires_grad) {
      Tensor& gb = self.parents[2]->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < out_f; ++j) gb[j] += self.grad[i * out_f + j];
      }
    }
  });
}

Var gather(const Var& x, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ShapeError("gather: empty index list");
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  Tensor out({idx.size()});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= x.value().numel()) {
      throw ShapeError("gather: index " + std::to_string(idx[i]) + " outside " +
                       shape_str(x.shape()));
    }
    out[i] = x.value()[idx[i]];
  }
  return Var::from_op(std::move(out), {x}, [idx = std::move(idx)](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < idx.size(); ++i) g[idx[i]] += self.grad[i];
  });
}

namespace {

struct Tap {
  std::size_t offset;
  double weight;
};

// Four bilinear taps at continuous feature coordinate (u, v), clamped to the map.
void bilinear_taps(double u, double v, std::size_t h, std::size_t w, Tap taps[4]) {
  u = std::clamp(u, 0.0, static_cast<double>(w - 1));
  v = std::clamp(v, 0.0, static_cast<double>(h - 1));
  const auto x0 = static_cast<std::size_t>(std::floor(u));
  const auto y0 = static_cast<std::size_t>(std::floor(v));
  const std::size_t x1 = std::min(x0 + 1, w - 1);
  const std::size_t y1 = std::min(y0 + 1, h - 1);
  const double fx = u - static_cast<double>(x0);
  const double fy = v - static_cast<double>(y0);
  taps[0] = {y0 * w + x0, (1 - fy) * (1 - fx)};
  taps[1] = {y0 * w + x1, (1 - fy) * fx};
  taps[2] = {y1 * w + x0, fy * (1 - fx)};
  taps[3] = {y1 * w + x1, fy * fx};
}

}  // namespace

Var roi_align(const Var& features, std::span<const Region> regions, std::size_t size,
              double spatial_scale, std::size_t sampling) {
  require_rank4(features.value(), "roi_align");
  const Shape& s = features.shape();
  if (s[0] != 1) throw ShapeError("roi_align expects a single-image feature map");
  if (regions.empty()) throw ShapeError("roi_align: no regions");
  if (size == 0 || sampling == 0) throw ShapeError("roi_align: size and sampling must be > 0");
  const std::size_t c = s[1], h = s[2], w = s[3];
  const std::size_t k = regions.size();
  const std::size_t taps_per_bin = sampling * sampling * 4;

  // Precompute taps per (region, bin); reused for every channel and in backward.
  std::vector<Tap> taps(k * size * size * taps_per_bin);
  for (std::size_t r = 0; r < k; ++r) {
    const Region& reg = regions[r];
    const double x0 = reg[0] * spatial_scale - 0.5;
    const double y0 = reg[1] * spatial_scale - 0.5;
    const double bw = (reg[2] - reg[0]) * spatial_scale / static_cast<double>(size);
    const double bh = (reg[3] - reg[1]) * spatial_scale / static_cast<double>(size);
    if (!(bw > 0.0) || !(bh > 0.0)) {
      throw ShapeError("roi_align: degenerate region mapped to feature map");
    }
    for (std::size_t by = 0; by < size; ++by) {
      for (std::size_t bx = 0; bx < size; ++bx) {
        Tap* t = &taps[((r * size + by) * size + bx) * taps_per_bin];
        for (std::size_t sy = 0; sy < sampling; ++sy) {
          for (std::size_t sx = 0; sx < sampling; ++sx) {
            const double v =
                y0 + (static_cast<double>(by) + (static_cast<double>(sy) + 0.5) / sampling) * bh;
            const double u =
                x0 + (static_cast<double>(bx) + (static_cast<double>(sx) + 0.5) / sampling) * bw;
            bilinear_taps(u, v, h, w, t);
            t += 4;
          }
        }
      }
    }
  }
  const double norm = 1.0 / static_cast<double>(sampling * sampling);
  Tensor out({k, c, size, size});
  const Tensor& f = features.value();
#pragma omp parallel for collapse(2) schedule(static)
  for (std::size_t r = 0; r < k; ++r) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double* plane = f.ptr() + ch * h * w;
      for (std::size_t b = 0; b < size * size; ++b) {
        const Tap* t = &taps[(r * size * size + b) * taps_per_bin];
        double acc = 0.0;
        for (std::size_t q = 0; q < taps_per_bin; ++q) acc += t[q].weight * plane[t[q].offset];
        out[((r * c + ch) * size * size) + b] = acc * norm;
      }
    }
  }
  return Var::from_op(std::move(out), {features},
                      [taps = std::move(taps), k, c, h, w, size, taps_per_bin, norm](Node& self) {
                        Tensor& g = self.parents[0]->grad_buffer();
#pragma omp parallel for schedule(static)
                        for (std::size_t ch = 0; ch < c; ++ch) {
                          double* plane = g.ptr() + ch * h * w;
                          for (std::size_t r = 0; r < k; ++r) {
                            for (std::size_t b = 0; b < size * size; ++b) {
                              const double go = self.grad[(r * c + ch) * size * size + b] * norm;
                              if (go == 0.0) continue;
                              const Tap* t = &taps[(r * size * size + b) * taps_per_bin];
                              for (std::size_t q = 0; q < taps_per_bin; ++q) {
                                plane[t[q].offset] += t[q].weight * go;
                              }
                            }
                          }
                        }
                      });
}

}  // namespace insloc::ops
