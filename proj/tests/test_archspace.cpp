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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "esnas/archspace.hpp"
#include "esnas/io.hpp"
#include "esnas/netgraph.hpp"
#include "support.hpp"

namespace esnas {
namespace {

using testing::conv_config;
using testing::ibn;
using testing::toy_config;

SearchSpaceConfig single_block_config() {
  SearchSpaceConfig c = conv_config();
  c.name = "single";
  c.num_stages = 1;
  c.blocks_per_stage = {1};
  c.attention_blocks = {0};
  return c;
}

ArchGenome four_block_genome(std::vector<int> channels) {
  ArchGenome g;
  g.config_ref = "default";
  g.stages = {{ibn(channels[0], 2, 3), ibn(channels[1], 2, 3)},
              {ibn(channels[2], 2, 5), ibn(channels[3], 3, 7)}};
  return g;
}

SearchSpaceConfig four_block_config() {
  SearchSpaceConfig c;
  c.num_stages = 2;
  c.blocks_per_stage = {2, 2};
  c.attention_stages = {};
  c.attention_blocks = {0, 0};
  c.input_resolution = 32;
  return c;
}

bool has_message(const std::vector<Violation>& v, const std::string& text) {
  return std::any_of(v.begin(), v.end(), [&](const Violation& x) {
    return x.message.find(text) != std::string::npos;
  });
}

std::multiset<int> role_values(const ArchGenome& g, GeneRole role) {
  std::multiset<int> out;
  for (const auto& ref : gene_fields(g)) {
    if (role_of(ref.field) == role) {
      out.insert(static_cast<int>(ref.field) * 1000 + get_field(g, ref));
    }
  }
  return out;
}

TEST(archspace, monotone_channels_are_valid) {
  EXPECT_TRUE(validate(four_block_genome({32, 64, 64, 128}), four_block_config())
                  .empty());
}

TEST(archspace, decreasing_channels_named_by_block) {
  const auto v = validate(four_block_genome({64, 32, 64, 128}), four_block_config());
  ASSERT_FALSE(v.empty());
  EXPECT_TRUE(has_message(v, "decreasing channels at block 2"));
  EXPECT_EQ(v.front().stage, 0);
  EXPECT_EQ(v.front().block, 1);
}

TEST(archspace, kernel_outside_domain) {
  ArchGenome g = four_block_genome({32, 64, 64, 128});
  std::get<FfnGene>(g.stages[1][0]).kernel_size = 4;
  const auto v = validate(g, four_block_config());
  ASSERT_EQ(v.size(), 1u);
  EXPECT_TRUE(has_message(v, "kernel 4 not in domain [3,5,7]"));
  EXPECT_EQ(v.front().stage, 1);
  EXPECT_EQ(v.front().block, 0);
}

TEST(archspace, layout_violations) {
  const SearchSpaceConfig c = toy_config();
  ArchGenome g = random_genome(c, 1);
  g.stages[1][1] = ibn(24, 2, 3);  // attention slot holding an FFN gene
  EXPECT_FALSE(validate(g, c).empty());
  g = random_genome(c, 1);
  g.stages[0].push_back(g.stages[0][0]);
  EXPECT_FALSE(validate(g, c).empty());
}

TEST(archspace, config_checks) {
  SearchSpaceConfig c = toy_config();
  EXPECT_TRUE(check_config(c).empty());
  c.channel_domain = {4, 8};
  EXPECT_FALSE(check_config(c).empty());
  c = toy_config();
  c.blocks_per_stage = {1};
  EXPECT_THROW(require_valid_config(c), ValidationError);
  EXPECT_THROW(preset_config("S9"), Error);
}

TEST(archspace, presets) {
  EXPECT_EQ(preset_config("S0").max_params, 3'500'000);
  EXPECT_EQ(preset_config("S1").max_params, 6'000'000);
  EXPECT_EQ(preset_config("S2").max_params, 12'500'000);
  for (const char* name : {"S0", "S1", "S2"}) {
    EXPECT_TRUE(check_config(preset_config(name)).empty()) << name;
  }
}

TEST(archspace, random_genome_valid_and_deterministic) {
  for (const auto& c : {toy_config(), preset_config("S0"), preset_config("S2")}) {
    for (std::uint64_t s = 0; s < 20; ++s) {
      const ArchGenome g = random_genome(c, s);
      EXPECT_TRUE(validate(g, c).empty());
      EXPECT_EQ(g, random_genome(c, s));
    }
  }
}

TEST(archspace, size_mutation_touches_only_size_fields) {
  const SearchSpaceConfig c = toy_config();
  for (std::uint64_t s = 0; s < 200; ++s) {
    const ArchGenome g = random_genome(c, s);
    const ArchGenome m = mutate(g, c, MutationScope::Size, 1, s + 1000);
    EXPECT_TRUE(validate(m, c).empty());
    for (const auto& ref : gene_fields(g)) {
      if (role_of(ref.field) == GeneRole::Topology) {
        EXPECT_EQ(get_field(g, ref), get_field(m, ref));
      }
    }
  }
}

TEST(archspace, topology_mutation_keeps_size_multiset) {
  const SearchSpaceConfig c = toy_config();
  for (std::uint64_t s = 0; s < 200; ++s) {
    const ArchGenome g = random_genome(c, s);
    const ArchGenome m = mutate(g, c, MutationScope::Topology, 1, s + 7);
    EXPECT_TRUE(validate(m, c).empty());
    EXPECT_EQ(role_values(g, GeneRole::Size), role_values(m, GeneRole::Size));
  }
}

TEST(archspace, mutation_changes_at_most_n_fields) {
  const SearchSpaceConfig c = toy_config();
  for (std::uint64_t s = 0; s < 200; ++s) {
    const ArchGenome g = random_genome(c, s);
    const ArchGenome m = mutate(g, c, MutationScope::Topology, 2, s);
    int changed = 0;
    for (const auto& ref : gene_fields(g)) changed += get_field(g, ref) != get_field(m, ref);
    EXPECT_LE(changed, 2);
  }
}

// One FFN block has two topology fields (ffn_type, kernel). A single mutation
// picks the kernel with probability 1/2 and then draws uniformly from
// {3, 5}, so the kernel keeps its value with probability 3/4.
TEST(archspace, single_field_mutation_is_uniform) {
  const SearchSpaceConfig c = single_block_config();
  ArchGenome g;
  g.config_ref = c.name;
  g.stages = {{ibn(16, 2, 3)}};
  ASSERT_TRUE(validate(g, c).empty());
  const int trials = 10'000;
  std::map<int, int> counts;
  for (int t = 0; t < trials; ++t) {
    const ArchGenome m = mutate(g, c, MutationScope::Topology, 1, t);
    ++counts[std::get<FfnGene>(m.stages[0][0]).kernel_size];
  }
  const double expect3 = trials * 0.75;
  const double sigma = std::sqrt(trials * 0.75 * 0.25);
  EXPECT_LE(std::abs(counts[3] - expect3), 3 * sigma);
  EXPECT_EQ(counts[3] + counts[5], trials);

  // Chi-square over the three channel values: picked w.p. 1/2, uniform on 3.
  std::map<int, int> ch;
  for (int t = 0; t < trials; ++t) {
    ++ch[out_channels(mutate(g, c, MutationScope::Size, 1, t).stages[0][0])];
  }
  const std::map<int, double> p{{8, 1.0 / 6}, {16, 0.5 + 1.0 / 6}, {24, 1.0 / 6}};
  double chi2 = 0.0;
  for (const auto& [value, prob] : p) {
    const double e = trials * prob;
    chi2 += (ch[value] - e) * (ch[value] - e) / e;
  }
  EXPECT_LT(chi2, 13.82);  // chi-square, 2 dof, p = 0.001
}

TEST(archspace, crossover_of_identical_parents) {
  const SearchSpaceConfig c = toy_config();
  for (std::uint64_t s = 0; s < 50; ++s) {
    const ArchGenome g = random_genome(c, s);
    EXPECT_EQ(crossover(g, g, s * 3), g);
  }
}

TEST(archspace, crossover_fields_come_from_parents) {
  const SearchSpaceConfig c = toy_config();
  for (std::uint64_t s = 0; s < 100; ++s) {
    const ArchGenome a = random_genome(c, s);
    const ArchGenome b = random_genome(c, s + 500);
    const ArchGenome child = crossover_unrepaired(a, b, s);
    for (const auto& ref : gene_fields(child)) {
      const int v = get_field(child, ref);
      EXPECT_TRUE(v == get_field(a, ref) || v == get_field(b, ref));
    }
    EXPECT_TRUE(validate(crossover(a, b, s), c).empty());
  }
}

TEST(archspace, crossover_origin_is_fair) {
  const SearchSpaceConfig c = single_block_config();
  ArchGenome a;
  a.stages = {{FfnGene{FfnType::InvertedBottleneck, 8, 3, 2}}};
  ArchGenome b;
  b.stages = {{FfnGene{FfnType::ConvNeXt, 24, 5, 3}}};
  const int trials = 10'000;
  const double sigma = std::sqrt(trials * 0.25);
  std::map<GeneField, int> from_a;
  for (int t = 0; t < trials; ++t) {
    const ArchGenome child = crossover_unrepaired(a, b, t);
    for (const auto& ref : gene_fields(child)) {
      from_a[ref.field] += get_field(child, ref) == get_field(a, ref);
    }
  }
  ASSERT_EQ(from_a.size(), 4u);
  // Four simultaneous checks: 3 sigma per field is Bonferroni-widened to 3.5.
  double chi2 = 0.0;
  for (const auto& [field, n] : from_a) {
    const double z = (n - trials / 2.0) / sigma;
    EXPECT_LE(std::abs(z), 3.5) << field_name(field);
    chi2 += z * z;
  }
  EXPECT_LT(chi2, 18.47);  // chi-square, 4 dof, p = 0.001
}

TEST(archspace, operators_preserve_validity) {
  const SearchSpaceConfig c = preset_config("S0");
  ArchGenome g = random_genome(c, 11);
  for (std::uint64_t s = 0; s < 300; ++s) {
    const auto scope = static_cast<MutationScope>(s % 3);
    g = mutate(g, c, scope, 1 + static_cast<int>(s % 4), s);
    ASSERT_TRUE(validate(g, c).empty());
    g = crossover(g, random_genome(c, s), s);
    ASSERT_TRUE(validate(g, c).empty());
  }
}

TEST(archspace, repair_is_idempotent_and_preserves_multiset) {
  const SearchSpaceConfig c = toy_config();
  for (std::uint64_t s = 0; s < 100; ++s) {
    ArchGenome g = crossover_unrepaired(random_genome(c, s), random_genome(c, s + 1), s);
    auto before = channel_sequence(g);
    const ArchGenome r = repair_channels(g);
    auto after = channel_sequence(r);
    EXPECT_TRUE(std::is_sorted(after.begin(), after.end()));
    std::sort(before.begin(), before.end());
    EXPECT_EQ(before, after);
    EXPECT_EQ(repair_channels(r), r);
  }
}

TEST(archspace, linear_layer_params) {
  GraphBuilder b({4});
  const int y = b.linear(b.input(), 3, true);
  EXPECT_EQ(std::move(b).finish(y, 0).param_count(), 15);
}

// Enumerate the parameter tensors of one IBN block (16 -> 16, e = 4, k = 3).
TEST(archspace, ibn_block_params) {
  SearchSpaceConfig c = single_block_config();
  c.stem_channels = 16;
  c.channel_domain = {16, 32};
  c.expansion_domain = {4};
  ArchGenome g;
  g.stages = {{ibn(16, 4, 3)}};
  ASSERT_TRUE(validate(g, c).empty());
  const Graph graph = build_graph(g, c, 0);
  std::int64_t block = 0;
  std::int64_t block_norm = 0;
  for (const auto& node : graph.nodes) {
    if (node.block != 0) continue;
    for (const auto& p : node.params) {
      (is_normalization(node.kind) ? block_norm : block) += p.value.size();
    }
  }
  EXPECT_EQ(block, 16 * 64 + 64 + 9 * 64 + 64 + 64 * 16 + 16);
  EXPECT_EQ(block, 2768);
  EXPECT_EQ(block_norm, 2 * (64 + 64 + 16));
}

TEST(archspace, count_params_matches_graph) {
  for (const auto& c : {toy_config(), preset_config("S0")}) {
    for (std::uint64_t s = 0; s < 10; ++s) {
      const ArchGenome g = random_genome(c, s);
      const Graph graph = build_graph(g, c, s);
      std::int64_t total = 0;
      std::int64_t norm = 0;
      for (const auto& node : graph.nodes) {
        for (const auto& p : node.params) {
          total += p.value.size();
          if (is_normalization(node.kind)) norm += p.value.size();
        }
      }
      const ParamCount pc = count_params_detailed(g, c);
      EXPECT_EQ(pc.total, total);
      EXPECT_EQ(pc.norm, norm);
      EXPECT_EQ(count_params(g, c), pc.total);
    }
  }
}

TEST(archspace, conv_macs) {
  GraphBuilder b({8, 4, 4});
  const int pw = b.conv2d(b.input(), 16, 1, 1, 1);
  const int dw = b.conv2d(b.input(), 8, 3, 1, 8);
  const Graph g = std::move(b).finish(b.add(pw, pw), 0);
  EXPECT_EQ(node_macs(g, g.nodes[pw]), 2048);
  EXPECT_EQ(node_macs(g, g.nodes[dw]), 1152);
}

// Independent per-node MAC accumulation straight from shapes.
std::int64_t oracle_macs(const Graph& g) {
  std::int64_t total = 0;
  for (const auto& node : g.nodes) {
    const Shape& out = node.shape;
    if (const auto* c = std::get_if<Conv2dOp>(&node.kind)) {
      total += static_cast<std::int64_t>(c->kernel) * c->kernel *
               (c->in_ch / c->groups) * c->out_ch * out[1] * out[2];
    } else if (const auto* l = std::get_if<LinearOp>(&node.kind)) {
      total += static_cast<std::int64_t>(l->in) * numel(out);
    } else if (const auto* m = std::get_if<MatMulOp>(&node.kind)) {
      const Shape& a = g.nodes[node.inputs[0]].shape;
      total += numel(out) * (m->transpose_a ? a[0] : a[1]);
    }
  }
  return total;
}

TEST(archspace, count_macs_matches_graph_walk) {
  for (const auto& c : {toy_config(), preset_config("S0")}) {
    for (std::uint64_t s = 0; s < 10; ++s) {
      const ArchGenome g = random_genome(c, s);
      const Graph graph = build_graph(g, c, 0);
      EXPECT_EQ(count_macs(g, c), oracle_macs(graph));
      EXPECT_EQ(count_macs(g, c), graph_macs(graph));
    }
  }
}

TEST(archspace, genome_json_round_trip) {
  const SearchSpaceConfig c = toy_config();
  for (std::uint64_t s = 0; s < 20; ++s) {
    const ArchGenome g = random_genome(c, s);
    const Json j = genome_to_json(g);
    EXPECT_EQ(j.at("schema_version"), kSchemaVersion);
    EXPECT_EQ(genome_from_json(j), g);
    EXPECT_EQ(dump_canonical(genome_to_json(genome_from_json(j))), dump_canonical(j));
  }
}

TEST(archspace, config_json_round_trip) {
  const SearchSpaceConfig c = preset_config("S1");
  const SearchSpaceConfig back = config_from_json(config_to_json(c));
  EXPECT_EQ(dump_canonical(config_to_json(back)), dump_canonical(config_to_json(c)));
  Json partial = {{"max_params", 1234}, {"unknown_field", true}};
  EXPECT_EQ(config_from_json(partial, c).max_params, 1234);
}

}  // namespace
}  // namespace esnas
