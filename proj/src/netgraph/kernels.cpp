// Copyright 2026 The ESNAS Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace esnas::kernels {

namespace {

constexpr double kLayerNormEps = 1e-6;
constexpr double kInvSqrt2 = 0.70710678118654752440;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

struct ConvGeom {
  std::int64_t cin, h, w, cout, ho, wo, k, stride, pad, groups, cin_g, cout_g;
};

ConvGeom conv_geom(const Conv2dOp& op, const Shape& in, const Shape& out) {
  ConvGeom g{};
  g.cin = in[0];
  g.h = in[1];
  g.w = in[2];
  g.cout = out[0];
  g.ho = out[1];
  g.wo = out[2];
  g.k = op.kernel;
  g.stride = op.stride;
  g.pad = op.kernel / 2;
  g.groups = op.groups;
  g.cin_g = g.cin / g.groups;
  g.cout_g = g.cout / g.groups;
  return g;
}

// Valid output-column range [lo, hi) for kernel column kx.
std::pair<std::int64_t, std::int64_t> col_range(const ConvGeom& g,
                                                std::int64_t kx) {
  std::int64_t lo = 0;
  const std::int64_t first = g.pad - kx;  // need ox*s >= first
  if (first > 0) lo = (first + g.stride - 1) / g.stride;
  std::int64_t hi = 0;
  const std::int64_t last = g.w - 1 + g.pad - kx;  // need ox*s <= last
  if (last >= 0) hi = last / g.stride + 1;
  hi = std::min(hi, g.wo);
  return {lo, std::max(lo, hi)};
}

TensorBuf conv_forward(const Conv2dOp& op, const OpNode& node,
                       const TensorBuf& x) {
  const ConvGeom g = conv_geom(op, x.shape, node.shape);
  TensorBuf y(node.shape);
  const double* w = node.params[0].value.data.data();
  const std::int64_t out_plane = g.ho * g.wo;
  const std::int64_t in_plane = g.h * g.w;
  const bool pointwise = g.k == 1 && g.stride == 1;
  for (std::int64_t oc = 0; oc < g.cout; ++oc) {
    double* out = y.data.data() + oc * out_plane;
    if (op.bias) std::fill(out, out + out_plane, node.params[1].value.data[oc]);
    const std::int64_t grp = oc / g.cout_g;
    for (std::int64_t icg = 0; icg < g.cin_g; ++icg) {
      const std::int64_t ic = grp * g.cin_g + icg;
      const double* in = x.data.data() + ic * in_plane;
      const double* wk = w + (oc * g.cin_g + icg) * g.k * g.k;
      if (pointwise) {
        const double wv = wk[0];
        for (std::int64_t i = 0; i < out_plane; ++i) out[i] += wv * in[i];
        continue;
      }
      for (std::int64_t ky = 0; ky < g.k; ++ky) {
        for (std::int64_t kx = 0; kx < g.k; ++kx) {
          const double wv = wk[ky * g.k + kx];
          const auto [lo, hi] = col_range(g, kx);
          for (std::int64_t oy = 0; oy < g.ho; ++oy) {
            const std::int64_t iy = oy * g.stride - g.pad + ky;
            if (iy < 0 || iy >= g.h) continue;
            double* orow = out + oy * g.wo;
            const double* irow = in + iy * g.w - g.pad + kx;
            if (g.stride == 1) {
              for (std::int64_t ox = lo; ox < hi; ++ox) orow[ox] += wv * irow[ox];
            } else {
              for (std::int64_t ox = lo; ox < hi; ++ox) {
                orow[ox] += wv * irow[ox * g.stride];
              }
            }
          }
        }
      }
    }
  }
  return y;
}

void conv_backward(const Conv2dOp& op, const OpNode& node, const TensorBuf& x,
                   const TensorBuf& gy, TensorBuf* gx,
                   std::vector<TensorBuf>& pg) {
  const ConvGeom g = conv_geom(op, x.shape, node.shape);
  const double* w = node.params[0].value.data.data();
  double* gw = pg[0].data.data();
  const std::int64_t out_plane = g.ho * g.wo;
  const std::int64_t in_plane = g.h * g.w;
  const bool pointwise = g.k == 1 && g.stride == 1;
  for (std::int64_t oc = 0; oc < g.cout; ++oc) {
    const double* go = gy.data.data() + oc * out_plane;
    if (op.bias) {
      double acc = 0.0;
      for (std::int64_t i = 0; i < out_plane; ++i) acc += go[i];
      pg[1].data[oc] += acc;
    }
    const std::int64_t grp = oc / g.cout_g;
    for (std::int64_t icg = 0; icg < g.cin_g; ++icg) {
      const std::int64_t ic = grp * g.cin_g + icg;
      const double* in = x.data.data() + ic * in_plane;
      double* gin = gx ? gx->data.data() + ic * in_plane : nullptr;
      const std::int64_t widx = (oc * g.cin_g + icg) * g.k * g.k;
      if (pointwise) {
        const double wv = w[widx];
        double acc = 0.0;
        for (std::int64_t i = 0; i < out_plane; ++i) acc += go[i] * in[i];
        gw[widx] += acc;
        if (gin) {
          for (std::int64_t i = 0; i < out_plane; ++i) gin[i] += wv * go[i];
        }
        continue;
      }
      for (std::int64_t ky = 0; ky < g.k; ++ky) {
        for (std::int64_t kx = 0; kx < g.k; ++kx) {
          const double wv = w[widx + ky * g.k + kx];
          const auto [lo, hi] = col_range(g, kx);
          double acc = 0.0;
          for (std::int64_t oy = 0; oy < g.ho; ++oy) {
            const std::int64_t iy = oy * g.stride - g.pad + ky;
            if (iy < 0 || iy >= g.h) continue;
            const double* grow = go + oy * g.wo;
            const std::int64_t base = iy * g.w - g.pad + kx;
            for (std::int64_t ox = lo; ox < hi; ++ox) {
              const std::int64_t ii = base + ox * g.stride;
              acc += grow[ox] * in[ii];
              if (gin) gin[ii] += wv * grow[ox];
            }
          }
          gw[widx + ky * g.k + kx] += acc;
        }
      }
    }
  }
}

// Linear maps axis 0: [in, T] -> [out, T].
TensorBuf linear_forward(const LinearOp& op, const OpNode& node,
                         const TensorBuf& x) {
  TensorBuf y(node.shape);
  const std::int64_t t = x.size() / op.in;
  const double* w = node.params[0].value.data.data();
  for (std::int64_t o = 0; o < op.out; ++o) {
    double* out = y.data.data() + o * t;
    if (op.bias) std::fill(out, out + t, node.params[1].value.data[o]);
    for (std::int64_t i = 0; i < op.in; ++i) {
      const double wv = w[o * op.in + i];
      const double* in = x.data.data() + i * t;
      for (std::int64_t j = 0; j < t; ++j) out[j] += wv * in[j];
    }
  }
  return y;
}

void linear_backward(const LinearOp& op, const OpNode& node,
                     const TensorBuf& x, const TensorBuf& gy, TensorBuf* gx,
                     std::vector<TensorBuf>& pg) {
  const std::int64_t t = x.size() / op.in;
  const double* w = node.params[0].value.data.data();
  for (std::int64_t o = 0; o < op.out; ++o) {
    const double* go = gy.data.data() + o * t;
    if (op.bias) {
      double acc = 0.0;
      for (std::int64_t j = 0; j < t; ++j) acc += go[j];
      pg[1].data[o] += acc;
    }
    for (std::int64_t i = 0; i < op.in; ++i) {
      const double* in = x.data.data() + i * t;
      double acc = 0.0;
      for (std::int64_t j = 0; j < t; ++j) acc += go[j] * in[j];
      pg[0].data[o * op.in + i] += acc;
      if (gx) {
        const double wv = w[o * op.in + i];
        double* gin = gx->data.data() + i * t;
        for (std::int64_t j = 0; j < t; ++j) gin[j] += wv * go[j];
      }
    }
  }
}

struct MatDims {
  std::int64_t m, k, n, ca, cb;
  bool ta, tb;
  std::int64_t a(std::int64_t i, std::int64_t kk) const {
    return ta ? kk * ca + i : i * ca + kk;
  }
  std::int64_t b(std::int64_t kk, std::int64_t j) const {
    return tb ? j * cb + kk : kk * cb + j;
  }
};

MatDims mat_dims(const MatMulOp& op, const Shape& a, const Shape& b) {
  MatDims d{};
  d.ta = op.transpose_a;
  d.tb = op.transpose_b;
  d.ca = a[1];
  d.cb = b[1];
  d.m = d.ta ? a[1] : a[0];
  d.k = d.ta ? a[0] : a[1];
  d.n = d.tb ? b[0] : b[1];
  return d;
}

double gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
}

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  const double pdf =
      std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi * kInvSqrt2;
  return cdf + x * pdf;
}

}  // namespace

TensorBuf forward_node(const OpNode& node,
                       const std::vector<const TensorBuf*>& inputs) {
  return std::visit(
      Overloaded{
          [&](const InputOp&) { return *inputs.at(0); },
          [&](const Conv2dOp& op) {
            return conv_forward(op, node, *inputs[0]);
          },
          [&](const LinearOp& op) {
            return linear_forward(op, node, *inputs[0]);
          },
          [&](const ReluOp&) {
            TensorBuf y = *inputs[0];
            for (double& v : y.data) v = v > 0.0 ? v : 0.0;
            return y;
          },
          [&](const GeluOp&) {
            TensorBuf y = *inputs[0];
            for (double& v : y.data) v = gelu(v);
            return y;
          },
          [&](const BatchNormOp& op) {
            // Inference-mode batch norm with initial running statistics
            // (mean 0, variance 1) reduces to a per-channel affine map.
            TensorBuf y = *inputs[0];
            const std::int64_t plane = y.size() / op.ch;
            const auto& gamma = node.params[0].value.data;
            const auto& beta = node.params[1].value.data;
            for (std::int64_t c = 0; c < op.ch; ++c) {
              double* p = y.data.data() + c * plane;
              for (std::int64_t i = 0; i < plane; ++i) {
                p[i] = gamma[c] * p[i] + beta[c];
              }
            }
            return y;
          },
          [&](const LayerNormOp& op) {
            // Normalizes over the channel axis at every position.
            const TensorBuf& x = *inputs[0];
            TensorBuf y(node.shape);
            const std::int64_t pos = x.size() / op.dim;
            const auto& gamma = node.params[0].value.data;
            const auto& beta = node.params[1].value.data;
            for (std::int64_t p = 0; p < pos; ++p) {
              double mean = 0.0;
              for (std::int64_t c = 0; c < op.dim; ++c) mean += x.data[c * pos + p];
              mean /= op.dim;
              double var = 0.0;
              for (std::int64_t c = 0; c < op.dim; ++c) {
                const double d = x.data[c * pos + p] - mean;
                var += d * d;
              }
              var /= op.dim;
              const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
              for (std::int64_t c = 0; c < op.dim; ++c) {
                y.data[c * pos + p] =
                    gamma[c] * (x.data[c * pos + p] - mean) * inv + beta[c];
              }
            }
            return y;
          },
          [&](const SoftmaxOp&) {
            TensorBuf y = *inputs[0];
            const std::int64_t cols = y.shape.back();
            const std::int64_t rows = y.size() / cols;
            for (std::int64_t r = 0; r < rows; ++r) {
              double* row = y.data.data() + r * cols;
              const double m = *std::max_element(row, row + cols);
              double sum = 0.0;
              for (std::int64_t j = 0; j < cols; ++j) {
                row[j] = std::exp(row[j] - m);
                sum += row[j];
              }
              for (std::int64_t j = 0; j < cols; ++j) row[j] /= sum;
            }
            return y;
          },
          [&](const MatMulOp& op) {
            const TensorBuf& a = *inputs[0];
            const TensorBuf& b = *inputs[1];
            const MatDims d = mat_dims(op, a.shape, b.shape);
            TensorBuf y(node.shape);
            for (std::int64_t i = 0; i < d.m; ++i) {
              double* row = y.data.data() + i * d.n;
              for (std::int64_t kk = 0; kk < d.k; ++kk) {
                const double av = a.data[d.a(i, kk)];
                if (!d.tb) {
                  const double* brow = b.data.data() + kk * d.cb;
                  for (std::int64_t j = 0; j < d.n; ++j) row[j] += av * brow[j];
                } else {
                  for (std::int64_t j = 0; j < d.n; ++j) {
                    row[j] += av * b.data[d.b(kk, j)];
                  }
                }
              }
            }
            return y;
          },
          [&](const ScaleOp& op) {
            TensorBuf y = *inputs[0];
            for (double& v : y.data) v *= op.factor;
            return y;
          },
          [&](const AddOp&) {
            TensorBuf y = *inputs[0];
            const auto& b = inputs[1]->data;
            for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += b[i];
            return y;
          },
          [&](const ZeroPadChannelsOp&) {
            TensorBuf y(node.shape);
            std::copy(inputs[0]->data.begin(), inputs[0]->data.end(),
                      y.data.begin());
            return y;
          },
          [&](const AvgPoolOp& op) {
            const TensorBuf& x = *inputs[0];
            TensorBuf y(node.shape);
            const std::int64_t c = x.shape[0], h = x.shape[1], w = x.shape[2];
            const std::int64_t ho = node.shape[1], wo = node.shape[2];
            const double inv = 1.0 / (static_cast<double>(op.k) * op.k);
            for (std::int64_t ch = 0; ch < c; ++ch) {
              for (std::int64_t oy = 0; oy < ho; ++oy) {
                for (std::int64_t ox = 0; ox < wo; ++ox) {
                  double acc = 0.0;
                  for (int ky = 0; ky < op.k; ++ky) {
                    const double* row = x.data.data() + ch * h * w +
                                        (oy * op.stride + ky) * w +
                                        ox * op.stride;
                    for (int kx = 0; kx < op.k; ++kx) acc += row[kx];
                  }
                  y.data[(ch * ho + oy) * wo + ox] = acc * inv;
                }
              }
            }
            return y;
          },
          [&](const ReshapeOp& op) {
            TensorBuf y = *inputs[0];
            y.shape = op.shape;
            return y;
          },
          [&](const IdentityOp&) { return *inputs[0]; },
      },
      node.kind);
}

void backward_node(const OpNode& node,
                   const std::vector<const TensorBuf*>& inputs,
                   const TensorBuf& output, const TensorBuf& gy,
                   const std::vector<TensorBuf*>& gx,
                   std::vector<TensorBuf>& pg) {
  auto elementwise = [&](auto&& dydx) {
    if (!gx[0]) return;
    const auto& x = inputs[0]->data;
    for (std::size_t i = 0; i < x.size(); ++i) {
      gx[0]->data[i] += gy.data[i] * dydx(i, x[i]);
    }
  };
  std::visit(
      Overloaded{
          [&](const InputOp&) {},
          [&](const Conv2dOp& op) {
            conv_backward(op, node, *inputs[0], gy, gx[0], pg);
          },
          [&](const LinearOp& op) {
            linear_backward(op, node, *inputs[0], gy, gx[0], pg);
          },
          [&](const ReluOp&) {
            elementwise([](std::size_t, double x) { return x > 0.0 ? 1.0 : 0.0; });
          },
          [&](const GeluOp&) {
            elementwise([](std::size_t, double x) { return gelu_grad(x); });
          },
          [&](const BatchNormOp& op) {
            const TensorBuf& x = *inputs[0];
            const std::int64_t plane = x.size() / op.ch;
            const auto& gamma = node.params[0].value.data;
            for (std::int64_t c = 0; c < op.ch; ++c) {
              double g_gamma = 0.0, g_beta = 0.0;
              for (std::int64_t i = 0; i < plane; ++i) {
                const std::int64_t idx = c * plane + i;
                g_gamma += gy.data[idx] * x.data[idx];
                g_beta += gy.data[idx];
                if (gx[0]) gx[0]->data[idx] += gy.data[idx] * gamma[c];
              }
              pg[0].data[c] += g_gamma;
              pg[1].data[c] += g_beta;
            }
          },
          [&](const LayerNormOp& op) {
            const TensorBuf& x = *inputs[0];
            const std::int64_t pos = x.size() / op.dim;
            const auto& gamma = node.params[0].value.data;
            std::vector<double> xhat(op.dim), gxhat(op.dim);
            for (std::int64_t p = 0; p < pos; ++p) {
              double mean = 0.0;
              for (std::int64_t c = 0; c < op.dim; ++c) mean += x.data[c * pos + p];
              mean /= op.dim;
              double var = 0.0;
              for (std::int64_t c = 0; c < op.dim; ++c) {
                const double d = x.data[c * pos + p] - mean;
                var += d * d;
              }
              var /= op.dim;
              const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
              double mean_g = 0.0, mean_gx = 0.0;
              for (std::int64_t c = 0; c < op.dim; ++c) {
                const std::int64_t idx = c * pos + p;
                xhat[c] = (x.data[idx] - mean) * inv;
                pg[0].data[c] += gy.data[idx] * xhat[c];
                pg[1].data[c] += gy.data[idx];
                gxhat[c] = gy.data[idx] * gamma[c];
                mean_g += gxhat[c];
                mean_gx += gxhat[c] * xhat[c];
              }
              if (!gx[0]) continue;
              mean_g /= op.dim;
              mean_gx /= op.dim;
              for (std::int64_t c = 0; c < op.dim; ++c) {
                gx[0]->data[c * pos + p] +=
                    inv * (gxhat[c] - mean_g - xhat[c] * mean_gx);
              }
            }
          },
          [&](const SoftmaxOp&) {
            if (!gx[0]) return;
            const std::int64_t cols = output.shape.back();
            const std::int64_t rows = output.size() / cols;
            for (std::int64_t r = 0; r < rows; ++r) {
              const double* y = output.data.data() + r * cols;
              const double* g = gy.data.data() + r * cols;
              double dot = 0.0;
              for (std::int64_t j = 0; j < cols; ++j) dot += g[j] * y[j];
              double* out = gx[0]->data.data() + r * cols;
              for (std::int64_t j = 0; j < cols; ++j) out[j] += y[j] * (g[j] - dot);
            }
          },
          [&](const MatMulOp& op) {
            const TensorBuf& a = *inputs[0];
            const TensorBuf& b = *inputs[1];
            const MatDims d = mat_dims(op, a.shape, b.shape);
            for (std::int64_t i = 0; i < d.m; ++i) {
              const double* g = gy.data.data() + i * d.n;
              for (std::int64_t kk = 0; kk < d.k; ++kk) {
                if (gx[0]) {
                  double acc = 0.0;
                  for (std::int64_t j = 0; j < d.n; ++j) {
                    acc += g[j] * b.data[d.b(kk, j)];
                  }
                  gx[0]->data[d.a(i, kk)] += acc;
                }
                if (gx[1]) {
                  const double av = a.data[d.a(i, kk)];
                  for (std::int64_t j = 0; j < d.n; ++j) {
                    gx[1]->data[d.b(kk, j)] += av * g[j];
                  }
                }
              }
            }
          },
          [&](const ScaleOp& op) {
            elementwise([&](std::size_t, double) { return op.factor; });
          },
          [&](const AddOp&) {
            for (int s = 0; s < 2; ++s) {
              if (!gx[s]) continue;
              for (std::size_t i = 0; i < gy.data.size(); ++i) {
                gx[s]->data[i] += gy.data[i];
              }
            }
          },
          [&](const ZeroPadChannelsOp&) {
            if (!gx[0]) return;
            for (std::size_t i = 0; i < gx[0]->data.size(); ++i) {
              gx[0]->data[i] += gy.data[i];
            }
          },
          [&](const AvgPoolOp& op) {
            if (!gx[0]) return;
            const TensorBuf& x = *inputs[0];
            const std::int64_t c = x.shape[0], h = x.shape[1], w = x.shape[2];
            const std::int64_t ho = node.shape[1], wo = node.shape[2];
            const double inv = 1.0 / (static_cast<double>(op.k) * op.k);
            for (std::int64_t ch = 0; ch < c; ++ch) {
              for (std::int64_t oy = 0; oy < ho; ++oy) {
                for (std::int64_t ox = 0; ox < wo; ++ox) {
                  const double g = gy.data[(ch * ho + oy) * wo + ox] * inv;
                  for (int ky = 0; ky < op.k; ++ky) {
                    double* row = gx[0]->data.data() + ch * h * w +
                                  (oy * op.stride + ky) * w + ox * op.stride;
                    for (int kx = 0; kx < op.k; ++kx) row[kx] += g;
                  }
                }
              }
            }
          },
          [&](const ReshapeOp&) {
            if (!gx[0]) return;
            for (std::size_t i = 0; i < gy.data.size(); ++i) {
              gx[0]->data[i] += gy.data[i];
            }
          },
          [&](const IdentityOp&) {
            elementwise([](std::size_t, double) { return 1.0; });
          },
      },
      node.kind);
}

}  // namespace esnas::kernels
