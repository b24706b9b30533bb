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

#include "esnas/io.hpp"
#include "esnas/netgraph.hpp"

namespace esnas {

std::int64_t node_macs(const Graph& graph, const OpNode& node) {
  if (const auto* conv = std::get_if<Conv2dOp>(&node.kind)) {
    return static_cast<std::int64_t>(conv->kernel) * conv->kernel *
           (conv->in_ch / conv->groups) * conv->out_ch * node.shape[1] *
           node.shape[2];
  }
  if (const auto* lin = std::get_if<LinearOp>(&node.kind)) {
    return static_cast<std::int64_t>(lin->in) * numel(node.shape);
  }
  if (const auto* mm = std::get_if<MatMulOp>(&node.kind)) {
    const Shape& a = graph.nodes[node.inputs[0]].shape;
    const std::int64_t inner = mm->transpose_a ? a[0] : a[1];
    return inner * numel(node.shape);
  }
  return 0;
}

std::int64_t graph_macs(const Graph& graph) {
  std::int64_t total = 0;
  for (const auto& node : graph.nodes) total += node_macs(graph, node);
  return total;
}

Graph graph_from_spec(const std::string& json_text, std::uint64_t seed) {
  Json spec;
  try {
    spec = Json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(std::string("cannot parse graph spec: ") + e.what());
  }
  if (!spec.contains("input_shape") || !spec.contains("nodes")) {
    throw Error("graph spec needs 'input_shape' and 'nodes'");
  }
  GraphBuilder b(spec.at("input_shape").get<Shape>());
  int last = b.input();
  for (const auto& n : spec.at("nodes")) {
    const auto kind = n.at("kind").get<std::string>();
    std::vector<int> in{last};
    if (n.contains("inputs")) in = n.at("inputs").get<std::vector<int>>();
    auto arg = [&](std::size_t i) {
      if (i >= in.size()) throw Error(kind + " node needs more inputs");
      return in[i];
    };
    const bool bias = n.value("bias", true);
    if (kind == "Conv2d") {
      last = b.conv2d(arg(0), n.at("out_ch").get<int>(), n.value("kernel", 1),
                      n.value("stride", 1), n.value("groups", 1), bias);
    } else if (kind == "Linear") {
      last = b.linear(arg(0), n.at("out").get<int>(), bias);
    } else if (kind == "ReLU") {
      last = b.relu(arg(0));
    } else if (kind == "GELU") {
      last = b.gelu(arg(0));
    } else if (kind == "BatchNorm") {
      last = b.batch_norm(arg(0));
    } else if (kind == "LayerNorm") {
      last = b.layer_norm(arg(0));
    } else if (kind == "Softmax") {
      last = b.softmax(arg(0));
    } else if (kind == "MatMul") {
      last = b.matmul(arg(0), arg(1), n.value("transpose_a", false),
                      n.value("transpose_b", false));
    } else if (kind == "Scale") {
      last = b.scale(arg(0), n.at("factor").get<double>());
    } else if (kind == "Add") {
      last = b.add(arg(0), arg(1));
    } else if (kind == "ZeroPadChannels") {
      last = b.zero_pad_channels(arg(0), n.at("to").get<int>());
    } else if (kind == "AvgPool") {
      last = b.avg_pool(arg(0), n.at("k").get<int>(), n.value("stride", 1));
    } else if (kind == "Reshape") {
      last = b.reshape(arg(0), n.at("shape").get<Shape>());
    } else {
      throw Error("unknown node kind '" + kind + "' in graph spec");
    }
  }
  return std::move(b).finish(last, seed);
}

}  // namespace esnas
