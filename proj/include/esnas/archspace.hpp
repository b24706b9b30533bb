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

// Searchable hybrid CNN/attention architecture space: configuration, genome
// encoding, validation, role-filtered variation operators and analytic
// parameter/MAC counting.

#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace esnas {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Violation {
  int stage = -1;  // 0-based, -1 when not tied to a stage
  int block = -1;  // 0-based within the stage
  std::string rule;
  std::string message;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<Violation> violations);
  const std::vector<Violation>& violations() const { return violations_; }

 private:
  std::vector<Violation> violations_;
};

enum class FfnType { InvertedBottleneck, ConvNeXt };

struct SearchSpaceConfig {
  std::string name = "custom";
  int num_stages = 4;
  std::vector<int> blocks_per_stage{2, 2, 6, 4};
  // 1-based stage indices that may hold attention blocks.
  std::vector<int> attention_stages{3, 4};
  // Number of trailing attention blocks in each stage.
  std::vector<int> attention_blocks{0, 0, 2, 2};
  int stem_channels = 32;
  std::vector<FfnType> ffn_types{FfnType::InvertedBottleneck, FfnType::ConvNeXt};
  std::vector<int> channel_domain{32, 48, 64, 96, 128, 160, 192};
  std::vector<int> kernel_domain{3, 5, 7};
  std::vector<int> expansion_domain{2, 3, 4};
  std::vector<int> heads_domain{2, 4, 8};
  std::vector<int> head_dim_domain{8, 16, 32};
  int input_resolution = 224;
  int input_channels = 3;
  int num_classes = 1000;
  std::int64_t max_params = 3'500'000;

  bool is_attention_stage(int stage) const;  // 0-based stage
  bool is_attention_block(int stage, int block) const;
};

// Violations of the config's own invariants; empty when valid.
std::vector<Violation> check_config(const SearchSpaceConfig& config);
// Throws ValidationError on an invalid config.
void require_valid_config(const SearchSpaceConfig& config);

SearchSpaceConfig preset_config(const std::string& name);  // "S0" | "S1" | "S2"

// Kernel of the FFN that follows an attention block.
inline constexpr int kAttentionFfnKernel = 3;

struct FfnGene {
  FfnType ffn_type = FfnType::InvertedBottleneck;
  int out_channels = 0;
  int kernel_size = 3;
  int expansion_ratio = 1;

  bool operator==(const FfnGene&) const = default;
};

struct AttnGene {
  FfnType ffn_type = FfnType::InvertedBottleneck;
  int out_channels = 0;
  int expansion_ratio = 1;
  int num_heads = 1;
  int head_dim = 1;

  bool operator==(const AttnGene&) const = default;
};

using BlockGene = std::variant<FfnGene, AttnGene>;

struct ArchGenome {
  std::vector<std::vector<BlockGene>> stages;
  std::string config_ref;

  bool operator==(const ArchGenome&) const = default;
};

int out_channels(const BlockGene& gene);
int expansion_ratio(const BlockGene& gene);
FfnType ffn_type(const BlockGene& gene);
// Kernel of the block's depthwise conv (fixed for attention blocks).
int kernel_size(const BlockGene& gene);

// Output channels of every block in network order.
std::vector<int> channel_sequence(const ArchGenome& genome);

enum class GeneRole { Topology, Size };

enum class GeneField {
  FfnType,
  KernelSize,
  NumHeads,
  OutChannels,
  ExpansionRatio,
  HeadDim,
};

GeneRole role_of(GeneField field);
const char* field_name(GeneField field);

// One searchable field of one block.
struct FieldRef {
  int stage = 0;
  int block = 0;
  GeneField field = GeneField::OutChannels;

  bool operator==(const FieldRef&) const = default;
};

// Every searchable field of the genome in network order. Fields whose gene
// does not carry them (kernel of an attention block) are not listed.
std::vector<FieldRef> gene_fields(const ArchGenome& genome);

// Allowed values of a field under the config; FfnType maps to {0, 1}.
std::vector<int> field_domain(GeneField field, const SearchSpaceConfig& config);
int get_field(const ArchGenome& genome, const FieldRef& ref);
void set_field(ArchGenome& genome, const FieldRef& ref, int value);

ArchGenome random_genome(const SearchSpaceConfig& config, std::uint64_t seed);

std::vector<Violation> validate(const ArchGenome& genome,
                                const SearchSpaceConfig& config);
void require_valid(const ArchGenome& genome, const SearchSpaceConfig& config);

// Sorts out_channels non-decreasingly in network order, keeping the multiset.
ArchGenome repair_channels(ArchGenome genome);

// Which fields a mutation may touch. All covers both roles.
enum class MutationScope { Topology, Size, All };

MutationScope scope_of(GeneRole role);

ArchGenome mutate(const ArchGenome& genome, const SearchSpaceConfig& config,
                  MutationScope scope, int n_mutations, std::uint64_t seed);

// Per-field uniform crossover before the channel repair; exposed for tests.
ArchGenome crossover_unrepaired(const ArchGenome& parent_a,
                                const ArchGenome& parent_b,
                                std::uint64_t seed);
ArchGenome crossover(const ArchGenome& parent_a, const ArchGenome& parent_b,
                     std::uint64_t seed);

struct ParamCount {
  std::int64_t total = 0;
  std::int64_t norm = 0;  // BatchNorm/LayerNorm affine parameters
};

ParamCount count_params_detailed(const ArchGenome& genome,
                                 const SearchSpaceConfig& config);
std::int64_t count_params(const ArchGenome& genome,
                          const SearchSpaceConfig& config);
std::int64_t count_macs(const ArchGenome& genome,
                        const SearchSpaceConfig& config);

// Spatial side length after the stem and after each stage's downsampler.
int stage_resolution(const SearchSpaceConfig& config, int stage);
int conv_out_size(int in, int kernel, int stride);

}  // namespace esnas
