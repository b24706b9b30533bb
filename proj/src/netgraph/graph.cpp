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

#include <algorithm>
#include <cmath>
#include <sstream>

#include "esnas/io.hpp"
#include "esnas/netgraph.hpp"
#include "esnas/rng.hpp"
#include "kernels.hpp"

namespace esnas {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

Param fan_in_param(Shape shape, int fan_in) {
  Param p;
  p.value = TensorBuf(std::move(shape));
  p.init = ParamInit::FanInUniform;
  p.fan_in = fan_in;
  return p;
}

Param const_param(Shape shape, ParamInit init) {
  Param p;
  p.value = TensorBuf(std::move(shape), init == ParamInit::Ones ? 1.0 : 0.0);
  p.init = init;
  return p;
}

void fill_params(Graph& graph, std::uint64_t seed) {
  std::uint64_t index = 0;
  for (auto& node : graph.nodes) {
    for (auto& p : node.params) {
      const std::uint64_t stream = index++;
      switch (p.init) {
        case ParamInit::Ones:
          std::fill(p.value.data.begin(), p.value.data.end(), 1.0);
          break;
        case ParamInit::Zeros:
          std::fill(p.value.data.begin(), p.value.data.end(), 0.0);
          break;
        case ParamInit::FanInUniform: {
          Rng rng = make_rng(seed, stream);
          const double bound = std::sqrt(1.0 / std::max(p.fan_in, 1));
          for (double& v : p.value.data) v = uniform_real(rng, -bound, bound);
          break;
        }
      }
    }
  }
}

std::vector<int> compute_taps(const Graph& graph) {
  std::vector<int> taps;
  for (const auto& node : graph.nodes) {
    if (is_activation(node.kind)) taps.push_back(node.id);
  }
  return taps;
}

std::vector<const TensorBuf*> gather(const OpNode& node,
                                     const std::vector<TensorBuf>& values) {
  std::vector<const TensorBuf*> in;
  in.reserve(node.inputs.size());
  for (int id : node.inputs) in.push_back(&values[id]);
  return in;
}

void check_input(const Graph& graph, const TensorBuf& input) {
  if (input.shape != graph.input_shape) {
    throw ShapeError("node 0 (input): expected shape " +
                     shape_string(graph.input_shape) + ", got " +
                     shape_string(input.shape));
  }
  if (static_cast<std::int64_t>(input.data.size()) != numel(input.shape)) {
    throw ShapeError("node 0 (input): data length does not match shape " +
                     shape_string(input.shape));
  }
}

}  // namespace

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

TensorBuf::TensorBuf(Shape s, double fill)
    : shape(std::move(s)), data(static_cast<std::size_t>(numel(shape)), fill) {}

TensorBuf::TensorBuf(Shape s, std::vector<double> values)
    : shape(std::move(s)), data(std::move(values)) {
  if (static_cast<std::int64_t>(data.size()) != numel(shape)) {
    throw ShapeError("tensor data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_string(shape));
  }
}

NumericError::NumericError(int node, const std::string& what)
    : Error("non-finite value at node " + std::to_string(node) + ": " + what),
      node_(node) {}

const char* kind_name(const OpKind& kind) {
  return std::visit(
      Overloaded{
          [](const InputOp&) { return "Input"; },
          [](const Conv2dOp&) { return "Conv2d"; },
          [](const LinearOp&) { return "Linear"; },
          [](const ReluOp&) { return "ReLU"; },
          [](const GeluOp&) { return "GELU"; },
          [](const BatchNormOp&) { return "BatchNorm"; },
          [](const LayerNormOp&) { return "LayerNorm"; },
          [](const SoftmaxOp&) { return "Softmax"; },
          [](const MatMulOp&) { return "MatMul"; },
          [](const ScaleOp&) { return "Scale"; },
          [](const AddOp&) { return "Add"; },
          [](const ZeroPadChannelsOp&) { return "ZeroPadChannels"; },
          [](const AvgPoolOp&) { return "AvgPool"; },
          [](const ReshapeOp&) { return "Reshape"; },
          [](const IdentityOp&) { return "Identity"; },
      },
      kind);
}

bool is_activation(const OpKind& kind) {
  return std::holds_alternative<ReluOp>(kind) ||
         std::holds_alternative<GeluOp>(kind);
}

bool is_normalization(const OpKind& kind) {
  return std::holds_alternative<BatchNormOp>(kind) ||
         std::holds_alternative<LayerNormOp>(kind);
}

std::int64_t Graph::param_count() const {
  std::int64_t n = 0;
  for (const auto& node : nodes) {
    for (const auto& p : node.params) n += p.value.size();
  }
  return n;
}

std::size_t Graph::param_tensor_count() const {
  std::size_t n = 0;
  for (const auto& node : nodes) n += node.params.size();
  return n;
}

GraphBuilder::GraphBuilder(Shape input_shape) {
  graph_.input_shape = input_shape;
  push(InputOp{}, {}, std::move(input_shape));
}

int GraphBuilder::push(OpKind kind, std::vector<int> inputs, Shape shape,
                       std::vector<Param> params) {
  const int id = static_cast<int>(graph_.nodes.size());
  for (int in : inputs) {
    if (in < 0 || in >= id) {
      throw Error("node " + std::to_string(id) + " references input " +
                  std::to_string(in) + " which is not an earlier node");
    }
  }
  OpNode node;
  node.id = id;
  node.kind = std::move(kind);
  node.inputs = std::move(inputs);
  node.params = std::move(params);
  node.shape = std::move(shape);
  node.block = block_;
  graph_.nodes.push_back(std::move(node));
  return id;
}

int GraphBuilder::conv2d(int x, int out_ch, int kernel, int stride, int groups,
                         bool bias) {
  const Shape& in = shape_of(x);
  const int id = static_cast<int>(graph_.nodes.size());
  if (in.size() != 3) {
    throw ShapeError("node " + std::to_string(id) +
                     " (Conv2d): expected [C, H, W] input, got " +
                     shape_string(in));
  }
  const int in_ch = static_cast<int>(in[0]);
  if (groups < 1 || in_ch % groups != 0 || out_ch % groups != 0) {
    throw ShapeError("node " + std::to_string(id) +
                     " (Conv2d): groups must divide both channel counts");
  }
  const Shape out{out_ch, conv_out_size(static_cast<int>(in[1]), kernel, stride),
                  conv_out_size(static_cast<int>(in[2]), kernel, stride)};
  const int fan_in = in_ch / groups * kernel * kernel;
  std::vector<Param> params;
  params.push_back(fan_in_param({out_ch, in_ch / groups, kernel, kernel}, fan_in));
  if (bias) params.push_back(fan_in_param({out_ch}, fan_in));
  return push(Conv2dOp{in_ch, out_ch, kernel, stride, groups, bias}, {x}, out,
              std::move(params));
}

int GraphBuilder::linear(int x, int out, bool bias) {
  Shape shape = shape_of(x);
  const int in = static_cast<int>(shape.at(0));
  shape[0] = out;
  std::vector<Param> params;
  params.push_back(fan_in_param({out, in}, in));
  if (bias) params.push_back(fan_in_param({out}, in));
  return push(LinearOp{in, out, bias}, {x}, std::move(shape), std::move(params));
}

int GraphBuilder::relu(int x) { return push(ReluOp{}, {x}, shape_of(x)); }
int GraphBuilder::gelu(int x) { return push(GeluOp{}, {x}, shape_of(x)); }

int GraphBuilder::batch_norm(int x) {
  const int ch = static_cast<int>(shape_of(x).at(0));
  std::vector<Param> params;
  params.push_back(const_param({ch}, ParamInit::Ones));
  params.push_back(const_param({ch}, ParamInit::Zeros));
  return push(BatchNormOp{ch}, {x}, shape_of(x), std::move(params));
}

int GraphBuilder::layer_norm(int x) {
  const int dim = static_cast<int>(shape_of(x).at(0));
  std::vector<Param> params;
  params.push_back(const_param({dim}, ParamInit::Ones));
  params.push_back(const_param({dim}, ParamInit::Zeros));
  return push(LayerNormOp{dim}, {x}, shape_of(x), std::move(params));
}

int GraphBuilder::softmax(int x) {
  const Shape& s = shape_of(x);
  if (s.size() != 2) {
    throw ShapeError("node " + std::to_string(graph_.nodes.size()) +
                     " (Softmax): expected a 2-D input, got " + shape_string(s));
  }
  return push(SoftmaxOp{1}, {x}, s);
}

int GraphBuilder::matmul(int a, int b, bool transpose_a, bool transpose_b) {
  const Shape& sa = shape_of(a);
  const Shape& sb = shape_of(b);
  const int id = static_cast<int>(graph_.nodes.size());
  if (sa.size() != 2 || sb.size() != 2) {
    throw ShapeError("node " + std::to_string(id) +
                     " (MatMul): expected 2-D inputs, got " + shape_string(sa) +
                     " and " + shape_string(sb));
  }
  const auto m = transpose_a ? sa[1] : sa[0];
  const auto ka = transpose_a ? sa[0] : sa[1];
  const auto kb = transpose_b ? sb[1] : sb[0];
  const auto n = transpose_b ? sb[0] : sb[1];
  if (ka != kb) {
    throw ShapeError("node " + std::to_string(id) +
                     " (MatMul): inner dimensions differ: " + shape_string(sa) +
                     " vs " + shape_string(sb));
  }
  return push(MatMulOp{transpose_a, transpose_b}, {a, b}, Shape{m, n});
}

int GraphBuilder::scale(int x, double factor) {
  return push(ScaleOp{factor}, {x}, shape_of(x));
}

int GraphBuilder::add(int a, int b) {
  if (shape_of(a) != shape_of(b)) {
    throw ShapeError("node " + std::to_string(graph_.nodes.size()) +
                     " (Add): shapes differ: " + shape_string(shape_of(a)) +
                     " vs " + shape_string(shape_of(b)));
  }
  return push(AddOp{}, {a, b}, shape_of(a));
}

int GraphBuilder::zero_pad_channels(int x, int to) {
  Shape shape = shape_of(x);
  const int from = static_cast<int>(shape.at(0));
  if (to < from) {
    throw ShapeError("node " + std::to_string(graph_.nodes.size()) +
                     " (ZeroPadChannels): cannot pad " + std::to_string(from) +
                     " channels down to " + std::to_string(to));
  }
  shape[0] = to;
  return push(ZeroPadChannelsOp{from, to}, {x}, std::move(shape));
}

int GraphBuilder::avg_pool(int x, int k, int stride) {
  const Shape& in = shape_of(x);
  if (in.size() != 3 || in[1] < k || in[2] < k) {
    throw ShapeError("node " + std::to_string(graph_.nodes.size()) +
                     " (AvgPool): window " + std::to_string(k) +
                     " does not fit input " + shape_string(in));
  }
  return push(AvgPoolOp{k, stride}, {x},
              Shape{in[0], (in[1] - k) / stride + 1, (in[2] - k) / stride + 1});
}

int GraphBuilder::reshape(int x, Shape shape) {
  if (numel(shape) != numel(shape_of(x))) {
    throw ShapeError("node " + std::to_string(graph_.nodes.size()) +
                     " (Reshape): cannot reshape " + shape_string(shape_of(x)) +
                     " to " + shape_string(shape));
  }
  Shape copy = shape;
  return push(ReshapeOp{std::move(shape)}, {x}, std::move(copy));
}

Graph GraphBuilder::finish(int output, std::uint64_t seed) && {
  graph_.output_node_id = output;
  graph_.activation_taps = compute_taps(graph_);
  fill_params(graph_, seed);
  return std::move(graph_);
}

Graph reinitialize(const Graph& graph, std::uint64_t seed) {
  Graph out = graph;
  fill_params(out, seed);
  if (out.scoring_mode) {
    for (TensorBuf* p : param_tensors(out)) {
      for (double& v : p->data) v = std::abs(v);
    }
  }
  return out;
}

std::vector<TensorBuf> forward_all(const Graph& graph, const TensorBuf& input) {
  check_input(graph, input);
  std::vector<TensorBuf> values(graph.nodes.size());
  values[0] = input;
  for (std::size_t i = 1; i < graph.nodes.size(); ++i) {
    const OpNode& node = graph.nodes[i];
    values[i] = kernels::forward_node(node, gather(node, values));
  }
  return values;
}

TensorBuf forward_streaming(
    const Graph& graph, const TensorBuf& input,
    const std::function<void(std::size_t, const TensorBuf&)>& on_tap) {
  check_input(graph, input);
  const std::size_t n = graph.nodes.size();
  std::vector<int> last_use(n, -1);
  for (const auto& node : graph.nodes) {
    for (int in : node.inputs) last_use[in] = std::max(last_use[in], node.id);
  }
  last_use[graph.output_node_id] = static_cast<int>(n);
  std::vector<TensorBuf> values(n);
  values[0] = input;
  std::size_t tap = 0;
  for (std::size_t i = 1; i < n; ++i) {
    const OpNode& node = graph.nodes[i];
    values[i] = kernels::forward_node(node, gather(node, values));
    if (tap < graph.activation_taps.size() &&
        graph.activation_taps[tap] == static_cast<int>(i)) {
      on_tap(tap, values[i]);
      ++tap;
    }
    for (int in : node.inputs) {
      if (last_use[in] == static_cast<int>(i)) {
        values[in] = TensorBuf();
      }
    }
  }
  return std::move(values[graph.output_node_id]);
}

ForwardResult forward(const Graph& graph, const TensorBuf& input) {
  ForwardResult result;
  result.taps.resize(graph.activation_taps.size());
  result.output = forward_streaming(
      graph, input,
      [&](std::size_t i, const TensorBuf& t) { result.taps[i] = t; });
  return result;
}

Graph prepare_for_scoring(const Graph& graph) {
  Graph out = graph;
  for (auto& node : out.nodes) {
    if (is_normalization(node.kind)) {
      node.kind = IdentityOp{};
      node.params.clear();
    } else if (std::holds_alternative<GeluOp>(node.kind)) {
      node.kind = ReluOp{};
    }
    for (auto& p : node.params) {
      for (double& v : p.value.data) v = std::abs(v);
    }
  }
  out.activation_taps = compute_taps(out);
  out.scoring_mode = true;
  return out;
}

std::vector<const TensorBuf*> param_tensors(const Graph& graph) {
  std::vector<const TensorBuf*> out;
  for (const auto& node : graph.nodes) {
    for (const auto& p : node.params) out.push_back(&p.value);
  }
  return out;
}

std::vector<TensorBuf*> param_tensors(Graph& graph) {
  std::vector<TensorBuf*> out;
  for (auto& node : graph.nodes) {
    for (auto& p : node.params) out.push_back(&p.value);
  }
  return out;
}

std::vector<TensorBuf> backward(const Graph& graph,
                                const std::vector<TensorBuf>& values,
                                const TensorBuf& output_grad) {
  const std::size_t n = graph.nodes.size();
  if (output_grad.shape != graph.nodes[graph.output_node_id].shape) {
    throw ShapeError("output gradient shape " + shape_string(output_grad.shape) +
                     " does not match node " +
                     std::to_string(graph.output_node_id) + " shape " +
                     shape_string(graph.nodes[graph.output_node_id].shape));
  }
  // Only nodes upstream of the output receive gradients.
  std::vector<bool> live(n, false);
  live[graph.output_node_id] = true;
  for (std::size_t i = n; i-- > 0;) {
    if (!live[i]) continue;
    for (int in : graph.nodes[i].inputs) live[in] = true;
  }
  std::vector<TensorBuf> grads(n);
  grads[graph.output_node_id] = output_grad;
  std::vector<std::vector<TensorBuf>> pgrads(n);
  for (std::size_t i = n; i-- > 1;) {
    const OpNode& node = graph.nodes[i];
    for (const auto& p : node.params) pgrads[i].emplace_back(p.value.shape);
    if (!live[i]) continue;
    if (grads[i].data.empty()) grads[i] = TensorBuf(node.shape);
    std::vector<TensorBuf*> in_grads;
    for (int in : node.inputs) {
      if (in == 0) {
        in_grads.push_back(nullptr);
        continue;
      }
      if (grads[in].data.empty()) grads[in] = TensorBuf(graph.nodes[in].shape);
      in_grads.push_back(&grads[in]);
    }
    kernels::backward_node(node, gather(node, values), values[i], grads[i],
                           in_grads, pgrads[i]);
    for (std::size_t k = 0; k < pgrads[i].size(); ++k) {
      for (double v : pgrads[i][k].data) {
        if (!std::isfinite(v)) {
          throw NumericError(node.id, std::string("gradient of ") +
                                          kind_name(node.kind) + " parameter " +
                                          std::to_string(k));
        }
      }
    }
    grads[i] = TensorBuf();
  }
  std::vector<TensorBuf> out;
  for (auto& list : pgrads) {
    for (auto& g : list) out.push_back(std::move(g));
  }
  return out;
}

std::vector<TensorBuf> backward_param_grads(const Graph& graph) {
  if (!graph.scoring_mode) {
    throw Error("backward_param_grads requires a scoring-mode graph");
  }
  const auto values = forward_all(graph, TensorBuf(graph.input_shape, 1.0));
  for (std::size_t i = 0; i < values.size(); ++i) {
    for (double v : values[i].data) {
      if (!std::isfinite(v)) {
        throw NumericError(static_cast<int>(i),
                           std::string("forward output of ") +
                               kind_name(graph.nodes[i].kind));
      }
    }
  }
  const TensorBuf ones(graph.nodes[graph.output_node_id].shape, 1.0);
  return backward(graph, values, ones);
}

std::string dump_graph_json(const Graph& graph) {
  Json nodes = Json::array();
  for (const auto& node : graph.nodes) {
    Json n;
    n["id"] = node.id;
    n["kind"] = kind_name(node.kind);
    n["input_ids"] = node.inputs;
    Json shapes = Json::array();
    for (const auto& p : node.params) shapes.push_back(p.value.shape);
    n["param_shapes"] = std::move(shapes);
    n["output_shape"] = node.shape;
    n["block"] = node.block;
    nodes.push_back(std::move(n));
  }
  Json out;
  out["schema_version"] = kSchemaVersion;
  out["input_shape"] = graph.input_shape;
  out["output_node_id"] = graph.output_node_id;
  out["activation_taps"] = graph.activation_taps;
  out["scoring_mode"] = graph.scoring_mode;
  out["nodes"] = std::move(nodes);
  return out.dump(2) + "\n";
}

}  // namespace esnas
