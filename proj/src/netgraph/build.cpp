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

#include <cmath>

#include "esnas/netgraph.hpp"

namespace esnas {

namespace {

int ffn(GraphBuilder& b, int x, FfnType type, int cout, int expansion,
        int kernel) {
  const int cin = static_cast<int>(b.shape_of(x)[0]);
  const int hidden = expansion * cin;
  int y;
  if (type == FfnType::InvertedBottleneck) {
    y = b.gelu(b.batch_norm(b.conv2d(x, hidden, 1, 1, 1)));
    y = b.gelu(b.batch_norm(b.conv2d(y, hidden, kernel, 1, hidden)));
    y = b.batch_norm(b.conv2d(y, cout, 1, 1, 1));
  } else {
    y = b.layer_norm(b.conv2d(x, cin, kernel, 1, cin));
    y = b.gelu(b.conv2d(y, hidden, 1, 1, 1));
    y = b.conv2d(y, cout, 1, 1, 1);
  }
  const int skip = cout > cin ? b.zero_pad_channels(x, cout) : x;
  return b.add(skip, y);
}

// Multi-head self-attention over the H*W tokens of a [C, H, W] map with
// per-head query/key/value projections; head outputs are projected back to
// C channels and summed, which equals concatenation plus one projection.
int attention(GraphBuilder& b, int x, int heads, int head_dim) {
  const Shape in = b.shape_of(x);
  const std::int64_t ch = in[0];
  const std::int64_t tokens = in[1] * in[2];
  const int seq = b.reshape(x, {ch, tokens});
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  int merged = -1;
  for (int h = 0; h < heads; ++h) {
    const int q = b.linear(seq, head_dim);
    const int k = b.linear(seq, head_dim);
    const int v = b.linear(seq, head_dim);
    const int scores = b.scale(b.matmul(q, k, true, false), scale);  // [T, T]
    const int probs = b.softmax(scores);
    const int ctx = b.matmul(v, probs, false, true);  // [d, T]
    const int proj = b.linear(ctx, static_cast<int>(ch), h == 0);
    merged = merged < 0 ? proj : b.add(merged, proj);
  }
  const int out = b.reshape(merged, in);
  return b.add(x, out);
}

}  // namespace

Graph build_graph(const ArchGenome& genome, const SearchSpaceConfig& config,
                  std::uint64_t seed) {
  require_valid(genome, config);
  GraphBuilder b(Shape{config.input_channels, config.input_resolution,
                       config.input_resolution});
  const int stem_mid = std::max(config.stem_channels / 2, 1);
  int x = b.gelu(b.batch_norm(b.conv2d(b.input(), stem_mid, 3, 2, 1)));
  x = b.gelu(b.batch_norm(b.conv2d(x, config.stem_channels, 3, 2, 1)));
  int block = 0;
  for (int s = 0; s < config.num_stages; ++s) {
    if (s > 0) {
      b.set_block(-1);
      const int ch = static_cast<int>(b.shape_of(x)[0]);
      x = b.batch_norm(b.conv2d(x, ch, 3, 2, 1));
    }
    for (const auto& gene : genome.stages[s]) {
      b.set_block(block++);
      if (const auto* attn = std::get_if<AttnGene>(&gene)) {
        x = attention(b, x, attn->num_heads, attn->head_dim);
      }
      x = ffn(b, x, ffn_type(gene), out_channels(gene), expansion_ratio(gene),
              kernel_size(gene));
    }
  }
  b.set_block(-1);
  const Shape last = b.shape_of(x);
  x = b.batch_norm(x);
  x = b.avg_pool(x, static_cast<int>(last[1]), 1);
  x = b.reshape(x, {last[0]});
  x = b.linear(x, config.num_classes);
  return std::move(b).finish(x, seed);
}

}  // namespace esnas
