#include "dyronet/numcore/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <cblas.h>

#include "dyronet/error.hpp"

namespace dyronet::num {

void ParamTensor::accumulate(const NdArray& g) {
  require_same_shape(value, g, "ParamTensor::accumulate");
  if (!trainable) return;
  grad += g;
}

// ---- matrix helpers -------------------------------------------------------

NdArray matmul(const NdArray& a, const NdArray& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0)) {
    throw DimensionError("matmul: incompatible " + shape_string(a.shape()) + " * " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  NdArray out({m, n});
  double* o = out.raw();
  const double* pa = a.raw();
  const double* pb = b.raw();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = o + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = pa[i * k + p];
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += s * brow[j];
    }
  }
  return out;
}

NdArray transpose(const NdArray& a) {
  if (a.rank() != 2) throw DimensionError("transpose expects a matrix");
  const std::size_t m = a.extent(0), n = a.extent(1);
  NdArray out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  return out;
}

// ---- dense ----------------------------------------------------------------

NdArray dense_forward(const NdArray& w, const NdArray& x) {
  if (w.rank() != 2 || x.rank() != 1 || w.extent(1) != x.extent(0)) {
    throw DimensionError("dense_forward: W " + shape_string(w.shape()) + " vs x " +
                         shape_string(x.shape()));
  }
  const std::size_t d = w.extent(0), k = w.extent(1);
  NdArray y({d});
  for (std::size_t i = 0; i < d; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < k; ++j) acc += w[i * k + j] * x[j];
    y[i] = acc;
  }
  return y;
}

NdArray dense_forward(const ParamTensor& w, const NdArray& x) { return dense_forward(w.value, x); }

NdArray dense_backward(ParamTensor& w, const NdArray& x, const NdArray& grad_y) {
  const std::size_t d = w.value.extent(0), k = w.value.extent(1);
  if (x.size() != k || grad_y.size() != d) throw DimensionError("dense_backward: shape mismatch");
  if (w.trainable) {
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < k; ++j) w.grad[i * k + j] += grad_y[i] * x[j];
  }
  NdArray gx({k});
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < k; ++j) gx[j] += w.value[i * k + j] * grad_y[i];
  return gx;
}

// ---- convolution ----------------------------------------------------------

namespace {

struct ConvGeometry {
  std::size_t c_out, c_in, kh, kw, h, w, oh, ow;
  std::size_t stride, pad;
};

ConvGeometry conv_geometry(const Shape& kernel, const Shape& input, Conv2dSpec spec) {
  if (kernel.size() != 4 || input.size() != 3) {
    throw DimensionError("conv2d: kernel must be rank 4 and input rank 3, got " +
                         shape_string(kernel) + " and " + shape_string(input));
  }
  if (spec.stride == 0) throw DimensionError("conv2d: stride must be >= 1");
  if (kernel[1] != input[0]) {
    throw DimensionError("conv2d: channel mismatch " + shape_string(kernel) + " vs " +
                         shape_string(input));
  }
  const std::size_t ph = input[1] + 2 * spec.padding;
  const std::size_t pw = input[2] + 2 * spec.padding;
  if (kernel[2] > ph || kernel[3] > pw) {
    throw DimensionError("conv2d: kernel " + shape_string(kernel) + " larger than input " +
                         shape_string(input));
  }
  ConvGeometry g{};
  g.c_out = kernel[0];
  g.c_in = kernel[1];
  g.kh = kernel[2];
  g.kw = kernel[3];
  g.h = input[1];
  g.w = input[2];
  g.oh = (ph - g.kh) / spec.stride + 1;
  g.ow = (pw - g.kw) / spec.stride + 1;
  g.stride = spec.stride;
  g.pad = spec.padding;
  return g;
}

// C[m x n] += op(A) * op(B), row-major, k the inner dimension.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c) {
  const auto lda = static_cast<blasint>(trans_a ? m : k);
  const auto ldb = static_cast<blasint>(trans_b ? k : n);
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
              static_cast<blasint>(m), static_cast<blasint>(n), static_cast<blasint>(k), 1.0, a, lda, b,
              ldb, 1.0, c, static_cast<blasint>(n));
}

// col[(c*kh + i)*kw + j][oy*ow + ox] = x[c][oy*s + i - pad][ox*s + j - pad]
std::vector<double> im2col(const ConvGeometry& g, const double* x) {
  const std::size_t n = g.oh * g.ow;
  std::vector<double> col(g.c_in * g.kh * g.kw * n, 0.0);
  for (std::size_t c = 0; c < g.c_in; ++c) {
    const double* xc = x + c * g.h * g.w;
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        double* row = col.data() + ((c * g.kh + i) * g.kw + j) * n;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + i) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          const double* xrow = xc + static_cast<std::size_t>(iy) * g.w;
          double* orow = row + oy * g.ow;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + j) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
            orow[ox] = xrow[ix];
          }
        }
      }
    }
  }
  return col;
}

void col2im_add(const ConvGeometry& g, const std::vector<double>& col, double* gx) {
  const std::size_t n = g.oh * g.ow;
  for (std::size_t c = 0; c < g.c_in; ++c) {
    double* xc = gx + c * g.h * g.w;
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const double* row = col.data() + ((c * g.kh + i) * g.kw + j) * n;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + i) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          double* xrow = xc + static_cast<std::size_t>(iy) * g.w;
          const double* orow = row + oy * g.ow;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + j) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
            xrow[ix] += orow[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Shape conv2d_output_shape(const Shape& kernel, const Shape& input, Conv2dSpec spec) {
  const ConvGeometry g = conv_geometry(kernel, input, spec);
  return {g.c_out, g.oh, g.ow};
}

std::size_t conv2d_macs(const Shape& kernel, const Shape& input, Conv2dSpec spec) {
  const ConvGeometry g = conv_geometry(kernel, input, spec);
  return g.c_out * g.oh * g.ow * g.c_in * g.kh * g.kw;
}

NdArray conv2d_forward(const NdArray& kernel, const NdArray& x, Conv2dSpec spec,
                       const NdArray* bias) {
  const ConvGeometry g = conv_geometry(kernel.shape(), x.shape(), spec);
  if (bias && bias->size() != g.c_out) throw DimensionError("conv2d: bias length mismatch");
  const std::size_t n = g.oh * g.ow;
  const std::size_t depth = g.c_in * g.kh * g.kw;
  const std::vector<double> col = im2col(g, x.raw());
  NdArray y({g.c_out, g.oh, g.ow});
  double* out = y.raw();
  if (bias) {
    for (std::size_t co = 0; co < g.c_out; ++co) std::fill(out + co * n, out + (co + 1) * n, (*bias)[co]);
  }
  gemm(false, false, g.c_out, n, depth, kernel.raw(), col.data(), out);
  return y;
}

NdArray conv2d_forward(const ParamTensor& kernel, const NdArray& x, Conv2dSpec spec) {
  return conv2d_forward(kernel.value, x, spec);
}

Conv2dGrads conv2d_backward(const NdArray& kernel, const NdArray& x, const NdArray& grad_y,
                            Conv2dSpec spec, bool need_input_grad) {
  const ConvGeometry g = conv_geometry(kernel.shape(), x.shape(), spec);
  if (grad_y.shape() != Shape{g.c_out, g.oh, g.ow}) {
    throw DimensionError("conv2d_backward: grad shape " + shape_string(grad_y.shape()));
  }
  const std::size_t n = g.oh * g.ow;
  const std::size_t depth = g.c_in * g.kh * g.kw;
  const std::vector<double> col = im2col(g, x.raw());
  Conv2dGrads grads;
  grads.kernel = NdArray(kernel.shape());
  grads.bias = NdArray({g.c_out});
  const double* gy = grad_y.raw();
  for (std::size_t co = 0; co < g.c_out; ++co) {
    const double* grow = gy + co * n;
    double bsum = 0.0;
    for (std::size_t q = 0; q < n; ++q) bsum += grow[q];
    grads.bias[co] = bsum;
  }
  gemm(false, true, g.c_out, depth, n, gy, col.data(), grads.kernel.raw());
  if (need_input_grad) {
    std::vector<double> gcol(depth * n, 0.0);
    gemm(true, false, depth, n, g.c_out, kernel.raw(), gy, gcol.data());
    grads.input = NdArray(x.shape());
    col2im_add(g, gcol, grads.input.raw());
  }
  return grads;
}

NdArray conv2d_backward(ParamTensor& kernel, const NdArray& x, const NdArray& grad_y,
                        Conv2dSpec spec) {
  Conv2dGrads g = conv2d_backward(kernel.value, x, grad_y, spec, true);
  kernel.accumulate(g.kernel);
  return std::move(g.input);
}

// ---- elementwise / reductions ---------------------------------------------

NdArray relu(const NdArray& x) {
  NdArray y = x;
  for (double& v : y.data()) v = v > 0.0 ? v : 0.0;
  return y;
}

NdArray relu_backward(const NdArray& y, const NdArray& grad_y) {
  require_same_shape(y, grad_y, "relu_backward");
  NdArray g = grad_y;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!(y[i] > 0.0)) g[i] = 0.0;
  return g;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

NdArray sigmoid(const NdArray& x) {
  NdArray y = x;
  for (double& v : y.data()) v = sigmoid(v);
  return y;
}

NdArray softmax(const NdArray& v) {
  if (v.empty()) throw DimensionError("softmax of empty vector");
  require_finite(v, "softmax");
  double m = v[0];
  for (double e : v.data()) m = std::max(m, e);
  NdArray p(v.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    p[i] = std::exp(v[i] - m);
    total += p[i];
  }
  for (double& e : p.data()) e /= total;
  return p;
}

NdArray softmax_backward(const NdArray& p, const NdArray& grad_p) {
  require_same_shape(p, grad_p, "softmax_backward");
  double dot = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) dot += p[i] * grad_p[i];
  NdArray g(p.shape());
  for (std::size_t i = 0; i < p.size(); ++i) g[i] = p[i] * (grad_p[i] - dot);
  return g;
}

NdArray global_avg_pool(const NdArray& x) {
  if (x.rank() != 3) throw DimensionError("global_avg_pool expects [c x H x W]");
  const std::size_t c = x.extent(0), hw = x.extent(1) * x.extent(2);
  NdArray y({c});
  for (std::size_t k = 0; k < c; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < hw; ++i) acc += x[k * hw + i];
    y[k] = acc / static_cast<double>(hw);
  }
  return y;
}

NdArray global_avg_pool_backward(const Shape& input_shape, const NdArray& grad_y) {
  NdArray g(input_shape);
  const std::size_t c = input_shape[0], hw = input_shape[1] * input_shape[2];
  if (grad_y.size() != c) throw DimensionError("global_avg_pool_backward: length mismatch");
  for (std::size_t k = 0; k < c; ++k) {
    const double v = grad_y[k] / static_cast<double>(hw);
    for (std::size_t i = 0; i < hw; ++i) g[k * hw + i] = v;
  }
  return g;
}

namespace {

// weights[o] = list of (input index, overlap fraction of output cell)
std::vector<std::vector<std::pair<std::size_t, double>>> area_weights(std::size_t in,
                                                                      std::size_t out) {
  std::vector<std::vector<std::pair<std::size_t, double>>> w(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    const double lo = static_cast<double>(o) * scale;
    const double hi = static_cast<double>(o + 1) * scale;
    const auto first = static_cast<std::size_t>(std::floor(lo));
    const auto last = std::min(in, static_cast<std::size_t>(std::ceil(hi)));
    for (std::size_t i = first; i < last; ++i) {
      const double overlap =
          std::min(hi, static_cast<double>(i + 1)) - std::max(lo, static_cast<double>(i));
      if (overlap > 0.0) w[o].emplace_back(i, overlap / scale);
    }
  }
  return w;
}

}  // namespace

NdArray resize_area(const NdArray& x, std::size_t out_h, std::size_t out_w) {
  if (x.rank() != 3) throw DimensionError("resize_area expects [c x H x W]");
  if (out_h == 0 || out_w == 0) throw DimensionError("resize_area: zero output extent");
  const std::size_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
  if (h == out_h && w == out_w) return x;
  const auto wy = area_weights(h, out_h);
  const auto wx = area_weights(w, out_w);
  NdArray tmp({c, h, out_w});
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t o = 0; o < out_w; ++o) {
        double acc = 0.0;
        for (const auto& [j, f] : wx[o]) acc += f * x[(k * h + i) * w + j];
        tmp[(k * h + i) * out_w + o] = acc;
      }
  NdArray y({c, out_h, out_w});
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t o = 0; o < out_h; ++o)
      for (std::size_t j = 0; j < out_w; ++j) {
        double acc = 0.0;
        for (const auto& [i, f] : wy[o]) acc += f * tmp[(k * h + i) * out_w + j];
        y[(k * out_h + o) * out_w + j] = acc;
      }
  return y;
}

NdArray concat_channels(const std::vector<const NdArray*>& parts) {
  if (parts.empty()) throw DimensionError("concat_channels: no inputs");
  const std::size_t h = parts[0]->extent(1), w = parts[0]->extent(2);
  std::size_t c = 0;
  for (const NdArray* p : parts) {
    if (p->rank() != 3 || p->extent(1) != h || p->extent(2) != w) {
      throw DimensionError("concat_channels: spatial mismatch");
    }
    c += p->extent(0);
  }
  NdArray out({c, h, w});
  std::size_t offset = 0;
  for (const NdArray* p : parts) {
    std::copy(p->data().begin(), p->data().end(), out.data().begin() + offset);
    offset += p->size();
  }
  return out;
}

double mse(const NdArray& pred, const NdArray& target) {
  require_same_shape(pred, target, "mse");
  if (pred.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double r = pred[i] - target[i];
    acc += r * r;
  }
  return acc / static_cast<double>(pred.size());
}

NdArray mse_grad(const NdArray& pred, const NdArray& target) {
  require_same_shape(pred, target, "mse_grad");
  NdArray g(pred.shape());
  const double scale = pred.empty() ? 0.0 : 2.0 / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) g[i] = scale * (pred[i] - target[i]);
  return g;
}

double kl_div(const NdArray& p, const NdArray& q) {
  require_same_shape(p, q, "kl_div");
  if (p.empty()) throw DimensionError("kl_div of empty distributions");
  double sp = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < 0.0 || q[i] < 0.0 || !std::isfinite(p[i]) || !std::isfinite(q[i])) {
      throw ValueError("kl_div: distributions must be finite and non-negative");
    }
    sp += p[i];
    sq += q[i];
  }
  if (std::abs(sp - 1.0) > 1e-9 || std::abs(sq - 1.0) > 1e-9) {
    throw ValueError("kl_div: distributions must sum to 1");
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) {
      throw SupportError("kl_div: q is zero where p is positive at index " + std::to_string(i));
    }
    kl += p[i] * std::log(p[i] / q[i]);
  }
  // Rounding can push tiny positive sums below zero.
  return std::max(kl, 0.0);
}

std::size_t argmax(const NdArray& v) {
  if (v.empty()) throw DimensionError("argmax of empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

std::size_t argmin(const NdArray& v) {
  if (v.empty()) throw DimensionError("argmin of empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] < v[best]) best = i;
  return best;
}

}  // namespace dyronet::num
