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

// Per-op numeric kernels for forward evaluation and reverse-mode gradients.

#pragma once

#include <vector>

#include "esnas/netgraph.hpp"

namespace esnas::kernels {

// Forward output of `node` given its input tensors.
TensorBuf forward_node(const OpNode& node,
                       const std::vector<const TensorBuf*>& inputs);

// Accumulates input and parameter gradients of `node` given the gradient of
// its output. `input_grads` and `param_grads` are parallel to the node's
// inputs and params; null input slots are skipped.
void backward_node(const OpNode& node,
                   const std::vector<const TensorBuf*>& inputs,
                   const TensorBuf& output, const TensorBuf& output_grad,
                   const std::vector<TensorBuf*>& input_grads,
                   std::vector<TensorBuf>& param_grads);

}  // namespace esnas::kernels
