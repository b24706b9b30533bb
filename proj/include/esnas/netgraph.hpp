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

// Minimal dense-tensor computational graph used to score candidate networks:
// op nodes over batch-1 tensors, forward evaluation with activation taps,
// scoring-mode preparation and reverse-mode parameter gradients.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "esnas/archspace.hpp"

namespace esnas {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Row-major 64-bit tensor. Activations use [C, H, W] or [C, T] layouts.
struct TensorBuf {
  Shape shape;
  std::vector<double> data;

  TensorBuf() = default;
  explicit TensorBuf(Shape s, double fill = 0.0);
  TensorBuf(Shape s, std::vector<double> values);

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
  bool operator==(const TensorBuf&) const = default;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  NumericError(int node, const std::string& what);
  int node() const { return node_; }

 private:
  int node_;
};

struct InputOp {};
struct Conv2dOp {
  int in_ch, out_ch, kernel, stride, groups;
  bool bias;
};
struct LinearOp {
  int in, out;
  bool bias;
};
struct ReluOp {};
struct GeluOp {};
struct BatchNormOp {
  int ch;
};
struct LayerNormOp {
  int dim;
};
// Softmax over the last axis of a 2-D tensor.
struct SoftmaxOp {
  int axis;
};
struct MatMulOp {
  bool transpose_a = false;
  bool transpose_b = false;
};
struct ScaleOp {
  double factor;
};
struct AddOp {};
struct ZeroPadChannelsOp {
  int from, to;
};
struct AvgPoolOp {
  int k, stride;
};
struct ReshapeOp {
  Shape shape;
};
// Stand-in for a suppressed normalization layer.
struct IdentityOp {};

using OpKind = std::variant<InputOp, Conv2dOp, LinearOp, ReluOp, GeluOp,
                            BatchNormOp, LayerNormOp, SoftmaxOp, MatMulOp,
                            ScaleOp, AddOp, ZeroPadChannelsOp, AvgPoolOp,
                            ReshapeOp, IdentityOp>;

const char* kind_name(const OpKind& kind);
bool is_activation(const OpKind& kind);
bool is_normalization(const OpKind& kind);

enum class ParamInit { FanInUniform, Ones, Zeros };

struct Param {
  TensorBuf value;
  ParamInit init = ParamInit::FanInUniform;
  int fan_in = 1;
};

struct OpNode {
  int id = 0;
  OpKind kind;
  std::vector<int> inputs;
  std::vector<Param> params;
  Shape shape;      // output shape
  int block = -1;   // network-order block index, -1 outside searchable blocks
};

struct Graph {
  std::vector<OpNode> nodes;
  Shape input_shape;
  int output_node_id = 0;
  std::vector<int> activation_taps;
  bool scoring_mode = false;

  std::int64_t param_count() const;
  std::size_t param_tensor_count() const;
};

// Incremental builder; infers and checks shapes as nodes are added.
class GraphBuilder {
 public:
  explicit GraphBuilder(Shape input_shape);

  int input() const { return 0; }
  void set_block(int block) { block_ = block; }

  int conv2d(int x, int out_ch, int kernel, int stride, int groups,
             bool bias = true);
  int linear(int x, int out, bool bias = true);
  int relu(int x);
  int gelu(int x);
  int batch_norm(int x);
  int layer_norm(int x);
  int softmax(int x);
  int matmul(int a, int b, bool transpose_a = false, bool transpose_b = false);
  int scale(int x, double factor);
  int add(int a, int b);
  int zero_pad_channels(int x, int to);
  int avg_pool(int x, int k, int stride);
  int reshape(int x, Shape shape);

  const Shape& shape_of(int id) const { return graph_.nodes.at(id).shape; }
  // Finalizes output and taps and fills parameters from `seed`.
  Graph finish(int output, std::uint64_t seed) &&;

 private:
  int push(OpKind kind, std::vector<int> inputs, Shape shape,
           std::vector<Param> params = {});

  Graph graph_;
  int block_ = -1;
};

// Redraws every parameter from its init rule. Same seed, same values.
Graph reinitialize(const Graph& graph, std::uint64_t seed);

Graph build_graph(const ArchGenome& genome, const SearchSpaceConfig& config,
                  std::uint64_t seed);

struct ForwardResult {
  TensorBuf output;
  std::vector<TensorBuf> taps;
};

ForwardResult forward(const Graph& graph, const TensorBuf& input);

// Forward pass that hands each activation tap to `on_tap` (tap index, value)
// as soon as it is computed and releases intermediates after their last use.
TensorBuf forward_streaming(
    const Graph& graph, const TensorBuf& input,
    const std::function<void(std::size_t, const TensorBuf&)>& on_tap);

// Output of every node, indexed by node id.
std::vector<TensorBuf> forward_all(const Graph& graph, const TensorBuf& input);

Graph prepare_for_scoring(const Graph& graph);

// Reverse-mode gradients of sum(output * output_grad) w.r.t. every parameter
// tensor, flattened in node order. Works for every node kind.
std::vector<TensorBuf> backward(const Graph& graph,
                                const std::vector<TensorBuf>& values,
                                const TensorBuf& output_grad);

// Gradients of R = sum(output) under an all-ones input; graph must be in
// scoring mode.
std::vector<TensorBuf> backward_param_grads(const Graph& graph);

// Parameter tensors in the order used by backward().
std::vector<const TensorBuf*> param_tensors(const Graph& graph);
std::vector<TensorBuf*> param_tensors(Graph& graph);

// Node listing with kinds, inputs and parameter shapes.
std::string dump_graph_json(const Graph& graph);

// Multiply-accumulates of one forward pass, summed node by node.
std::int64_t node_macs(const Graph& graph, const OpNode& node);
std::int64_t graph_macs(const Graph& graph);

// Builds a graph from a hand-written spec:
//   {"input_shape": [4], "nodes": [{"kind": "Linear", "out": 3}, ...]}
// Each node reads the previous node unless "inputs" lists earlier node ids
// (0 is the input). The last node is the output.
Graph graph_from_spec(const std::string& json_text, std::uint64_t seed);

}  // namespace esnas
