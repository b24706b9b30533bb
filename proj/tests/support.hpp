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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "esnas/archspace.hpp"
#include "esnas/netgraph.hpp"
#include "esnas/rng.hpp"

namespace esnas::testing {

// Two stages, one attention block, 32x32 input. Small enough to score in a
// couple of milliseconds.
inline SearchSpaceConfig toy_config() {
  SearchSpaceConfig c;
  c.name = "toy";
  c.num_stages = 2;
  c.blocks_per_stage = {1, 2};
  c.attention_stages = {2};
  c.attention_blocks = {0, 1};
  c.stem_channels = 8;
  c.channel_domain = {8, 16, 24};
  c.kernel_domain = {3, 5};
  c.expansion_domain = {2, 3};
  c.heads_domain = {1, 2};
  c.head_dim_domain = {4, 8};
  c.input_resolution = 32;
  c.num_classes = 10;
  c.max_params = 20'000;
  return c;
}

// Convolution-only space with no attention.
inline SearchSpaceConfig conv_config() {
  SearchSpaceConfig c = toy_config();
  c.name = "conv";
  c.attention_stages = {};
  c.attention_blocks = {0, 0};
  return c;
}

inline FfnGene ibn(int channels, int expansion, int kernel) {
  return FfnGene{FfnType::InvertedBottleneck, channels, kernel, expansion};
}

inline FfnGene convnext(int channels, int expansion, int kernel) {
  return FfnGene{FfnType::ConvNeXt, channels, kernel, expansion};
}

inline TensorBuf random_tensor(const Shape& shape, std::uint64_t seed,
                               double lo = -1.0, double hi = 1.0) {
  TensorBuf t(shape);
  Rng rng = make_rng(seed);
  for (double& v : t.data) v = uniform_real(rng, lo, hi);
  return t;
}

inline void randomize_params(Graph& g, std::uint64_t seed, double lo = -1.0,
                             double hi = 1.0) {
  Rng rng = make_rng(seed, 7);
  for (TensorBuf* p : param_tensors(g)) {
    for (double& v : p->data) v = uniform_real(rng, lo, hi);
  }
}

inline double max_abs_diff(const std::vector<double>& a,
                           const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double rel_err(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Bias-free Conv/Linear/ReLU/Add/AvgPool graph. The scale-invariance and
// homogeneity properties hold exactly on these.
inline Graph random_conv_relu_graph(std::uint64_t seed, bool residual = true) {
  Rng rng = make_rng(seed, 1);
  const int c0 = 2 + static_cast<int>(uniform_index(rng, 3));
  const int hw = 6 + static_cast<int>(uniform_index(rng, 5));
  GraphBuilder b({c0, hw, hw});
  int x = b.input();
  const int depth = 2 + static_cast<int>(uniform_index(rng, 3));
  int ch = c0;
  for (int i = 0; i < depth; ++i) {
    const int out = 2 + static_cast<int>(uniform_index(rng, 6));
    const int k = uniform_index(rng, 2) ? 3 : 1;
    const int y = b.relu(b.conv2d(x, out, k, 1, 1, false));
    if (residual && out == ch && uniform_index(rng, 2)) {
      x = b.add(x, y);
    } else {
      x = y;
    }
    ch = out;
  }
  x = b.avg_pool(x, 2, 2);
  const auto& s = b.shape_of(x);
  x = b.reshape(x, {s[0] * s[1] * s[2]});
  x = b.relu(b.linear(x, 3 + static_cast<int>(uniform_index(rng, 4)), false));
  x = b.linear(x, 2, false);
  return std::move(b).finish(x, seed);
}

// Graph touching every builder op, in an order that exercises both
// convolutional and token-matrix layouts.
// With `randomize`, every parameter (including norm affine terms) is redrawn
// from U(-0.8, 0.8); otherwise the builder's fan-in init is kept.
inline Graph random_full_graph(std::uint64_t seed, bool randomize = true) {
  Rng rng = make_rng(seed, 2);
  const int c0 = 2 + static_cast<int>(uniform_index(rng, 2));
  const int hw = 4 + static_cast<int>(uniform_index(rng, 3));
  GraphBuilder b({c0, hw, hw});
  int x = b.input();
  const int c1 = 2 + static_cast<int>(uniform_index(rng, 3));
  const int stride = uniform_index(rng, 2) ? 2 : 1;
  x = b.gelu(b.batch_norm(b.conv2d(x, c1, 3, stride, 1)));
  const int dw = b.relu(b.conv2d(x, c1, 3, 1, c1, uniform_index(rng, 2) == 1));
  x = b.add(x, dw);
  const int c2 = c1 + static_cast<int>(uniform_index(rng, 3));
  x = b.zero_pad_channels(x, c2);
  x = b.layer_norm(x);
  if (b.shape_of(x)[1] >= 3) x = b.avg_pool(x, 2, 1);
  const Shape s = b.shape_of(x);
  const std::int64_t tokens = s[1] * s[2];
  int t = b.reshape(x, {s[0], tokens});
  const int hd = 2 + static_cast<int>(uniform_index(rng, 2));
  const int q = b.linear(t, hd);
  const int k = b.linear(t, hd);
  const int v = b.linear(t, hd);
  int scores = b.matmul(q, k, true, false);
  scores = b.scale(scores, 1.0 / std::sqrt(static_cast<double>(hd)));
  const int p = b.softmax(scores);
  const int ctx = b.matmul(v, p, false, true);
  t = b.add(t, b.linear(ctx, static_cast<int>(s[0]), false));
  // Exercise MatMul with a transposed right operand in the other orientation.
  const int gram =
      b.scale(b.matmul(t, t, false, true), 1.0 / static_cast<double>(tokens));
  int y = b.reshape(gram, {s[0] * s[0]});
  y = b.relu(b.linear(y, 4));
  y = b.linear(y, 2);
  Graph g = std::move(b).finish(y, seed);
  if (randomize) randomize_params(g, seed, -0.8, 0.8);
  return g;
}

// Central finite differences of L = sum(output * weights) with respect to
// every parameter element. Elements whose +h/-h evaluations land on opposite
// sides of a ReLU kink are reported as NaN.
inline std::vector<std::vector<double>> finite_difference_grads(
    Graph graph, const TensorBuf& input, const TensorBuf& out_weights,
    double h) {
  auto loss_and_pattern = [&](const Graph& g, std::vector<bool>& pattern) {
    const auto values = forward_all(g, input);
    pattern.clear();
    for (const auto& node : g.nodes) {
      if (std::holds_alternative<ReluOp>(node.kind)) {
        for (double v : values[node.inputs[0]].data) pattern.push_back(v > 0.0);
      }
    }
    const auto& out = values[g.output_node_id].data;
    double l = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) l += out[i] * out_weights.data[i];
    return l;
  };
  std::vector<std::vector<double>> grads;
  auto params = param_tensors(graph);
  std::vector<bool> plus_pattern;
  std::vector<bool> minus_pattern;
  for (TensorBuf* p : params) {
    std::vector<double> g(p->data.size());
    for (std::size_t i = 0; i < p->data.size(); ++i) {
      const double orig = p->data[i];
      p->data[i] = orig + h;
      const double lp = loss_and_pattern(graph, plus_pattern);
      p->data[i] = orig - h;
      const double lm = loss_and_pattern(graph, minus_pattern);
      p->data[i] = orig;
      g[i] = plus_pattern == minus_pattern ? (lp - lm) / (2.0 * h) : NAN;
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

struct GradCheck {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // elements straddling a ReLU kink
};

// Reverse-mode parameter gradients of sum(output * w) against central
// differences. Relative error uses max(|a|, |b|, floor) as denominator.
inline GradCheck check_param_grads(const Graph& graph, std::uint64_t seed,
                                   double h, double floor) {
  const TensorBuf input = random_tensor(graph.input_shape, seed, -1.0, 1.0);
  const TensorBuf w =
      random_tensor(graph.nodes[graph.output_node_id].shape, seed + 1, 0.5, 1.5);
  const auto values = forward_all(graph, input);
  const auto analytic = backward(graph, values, w);
  const auto numeric = finite_difference_grads(graph, input, w, h);
  GradCheck out;
  for (std::size_t t = 0; t < analytic.size(); ++t) {
    for (std::size_t i = 0; i < analytic[t].data.size(); ++i) {
      if (std::isnan(numeric[t][i])) {
        ++out.skipped;
        continue;
      }
      ++out.checked;
      out.max_rel_err = std::max(
          out.max_rel_err, rel_err(analytic[t].data[i], numeric[t][i], floor));
    }
  }
  return out;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("esnas_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace esnas::testing
