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

#include "esnas/archspace.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "esnas/rng.hpp"

namespace esnas {

namespace {

const char* ffn_type_label(FfnType type) {
  return type == FfnType::InvertedBottleneck ? "ibn" : "convnext";
}

std::string describe(const std::vector<Violation>& violations) {
  std::ostringstream os;
  os << violations.size() << " violation(s)";
  for (const auto& v : violations) os << "; " << v.message;
  return os.str();
}

bool contains(const std::vector<int>& domain, int value) {
  return std::find(domain.begin(), domain.end(), value) != domain.end();
}

std::string domain_string(const std::vector<int>& domain) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < domain.size(); ++i) {
    if (i) os << ',';
    os << domain[i];
  }
  os << ']';
  return os.str();
}

void check_domain(const std::vector<int>& domain, const char* name,
                  std::vector<Violation>& out) {
  if (domain.empty()) {
    out.push_back({-1, -1, "domain", std::string(name) + " is empty"});
    return;
  }
  for (std::size_t i = 1; i < domain.size(); ++i) {
    if (domain[i] <= domain[i - 1]) {
      out.push_back({-1, -1, "domain",
                     std::string(name) + " is not strictly increasing"});
      return;
    }
  }
  if (domain.front() < 1) {
    out.push_back({-1, -1, "domain", std::string(name) + " has values < 1"});
  }
}

int sample(Rng& rng, const std::vector<int>& domain) {
  return domain[uniform_index(rng, domain.size())];
}

}  // namespace

ValidationError::ValidationError(std::vector<Violation> violations)
    : Error(describe(violations)), violations_(std::move(violations)) {}

bool SearchSpaceConfig::is_attention_stage(int stage) const {
  return contains(attention_stages, stage + 1);
}

bool SearchSpaceConfig::is_attention_block(int stage, int block) const {
  if (stage < 0 || stage >= static_cast<int>(blocks_per_stage.size()) ||
      stage >= static_cast<int>(attention_blocks.size())) {
    return false;
  }
  return block >= blocks_per_stage[stage] - attention_blocks[stage];
}

std::vector<Violation> check_config(const SearchSpaceConfig& config) {
  std::vector<Violation> out;
  if (config.num_stages < 1) {
    out.push_back({-1, -1, "config", "num_stages must be >= 1"});
  }
  if (static_cast<int>(config.blocks_per_stage.size()) != config.num_stages) {
    out.push_back({-1, -1, "config",
                   "blocks_per_stage must have num_stages entries"});
  }
  for (std::size_t s = 0; s < config.blocks_per_stage.size(); ++s) {
    if (config.blocks_per_stage[s] < 1) {
      out.push_back({static_cast<int>(s), -1, "config",
                     "blocks_per_stage entries must be >= 1"});
    }
  }
  if (static_cast<int>(config.attention_blocks.size()) != config.num_stages) {
    out.push_back({-1, -1, "config",
                   "attention_blocks must have num_stages entries"});
  } else {
    for (int s = 0; s < config.num_stages &&
                    s < static_cast<int>(config.blocks_per_stage.size());
         ++s) {
      const int n_attn = config.attention_blocks[s];
      if (n_attn < 0 || n_attn > config.blocks_per_stage[s]) {
        out.push_back({s, -1, "config",
                       "attention_blocks out of range for stage " +
                           std::to_string(s + 1)});
      } else if (n_attn > 0 && !config.is_attention_stage(s)) {
        out.push_back({s, -1, "config",
                       "attention blocks in stage " + std::to_string(s + 1) +
                           " which is not an attention stage"});
      }
    }
  }
  for (int s : config.attention_stages) {
    if (s < 1 || s > config.num_stages) {
      out.push_back({-1, -1, "config",
                     "attention stage " + std::to_string(s) + " out of range"});
    }
  }
  if (config.ffn_types.empty()) {
    out.push_back({-1, -1, "config", "ffn_types is empty"});
  }
  for (std::size_t i = 0; i < config.ffn_types.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (config.ffn_types[i] == config.ffn_types[j]) {
        out.push_back({-1, -1, "config", "ffn_types has duplicates"});
      }
    }
  }
  check_domain(config.channel_domain, "channel_domain", out);
  check_domain(config.kernel_domain, "kernel_domain", out);
  check_domain(config.expansion_domain, "expansion_domain", out);
  check_domain(config.heads_domain, "heads_domain", out);
  check_domain(config.head_dim_domain, "head_dim_domain", out);
  for (int k : config.kernel_domain) {
    if (k < 3 || k % 2 == 0) {
      out.push_back({-1, -1, "config",
                     "kernel_domain value " + std::to_string(k) +
                         " is not an odd value >= 3"});
    }
  }
  if (config.stem_channels < 1) {
    out.push_back({-1, -1, "config", "stem_channels must be >= 1"});
  } else if (!config.channel_domain.empty() &&
             config.channel_domain.front() < config.stem_channels) {
    out.push_back({-1, -1, "config",
                   "channel_domain values must be >= stem_channels"});
  }
  if (config.input_resolution < 1 || config.input_channels < 1 ||
      config.num_classes < 1) {
    out.push_back({-1, -1, "config",
                   "input_resolution, input_channels and num_classes must be "
                   ">= 1"});
  }
  if (config.max_params < 1) {
    out.push_back({-1, -1, "config", "max_params must be >= 1"});
  }
  return out;
}

void require_valid_config(const SearchSpaceConfig& config) {
  auto violations = check_config(config);
  if (!violations.empty()) throw ValidationError(std::move(violations));
}

SearchSpaceConfig preset_config(const std::string& name) {
  SearchSpaceConfig config;
  config.name = name;
  if (name == "S0") {
    config.blocks_per_stage = {2, 2, 6, 4};
    config.stem_channels = 32;
    config.channel_domain = {32, 48, 64, 96, 128, 160, 192, 224, 256};
    config.max_params = 3'500'000;
  } else if (name == "S1") {
    config.blocks_per_stage = {3, 3, 9, 6};
    config.stem_channels = 32;
    config.channel_domain = {32, 48, 64, 96, 128, 160, 192, 224, 256, 320};
    config.max_params = 6'000'000;
  } else if (name == "S2") {
    config.blocks_per_stage = {4, 4, 12, 8};
    config.stem_channels = 32;
    config.channel_domain = {32, 48, 64, 96, 144, 192, 240, 288, 352, 448};
    config.max_params = 12'500'000;
  } else {
    throw Error("unknown preset '" + name + "' (expected S0, S1 or S2)");
  }
  return config;
}

int out_channels(const BlockGene& gene) {
  return std::visit([](const auto& g) { return g.out_channels; }, gene);
}

int expansion_ratio(const BlockGene& gene) {
  return std::visit([](const auto& g) { return g.expansion_ratio; }, gene);
}

FfnType ffn_type(const BlockGene& gene) {
  return std::visit([](const auto& g) { return g.ffn_type; }, gene);
}

int kernel_size(const BlockGene& gene) {
  if (const auto* ffn = std::get_if<FfnGene>(&gene)) return ffn->kernel_size;
  return kAttentionFfnKernel;
}

std::vector<int> channel_sequence(const ArchGenome& genome) {
  std::vector<int> out;
  for (const auto& stage : genome.stages) {
    for (const auto& gene : stage) out.push_back(out_channels(gene));
  }
  return out;
}

GeneRole role_of(GeneField field) {
  switch (field) {
    case GeneField::FfnType:
    case GeneField::KernelSize:
    case GeneField::NumHeads:
      return GeneRole::Topology;
    case GeneField::OutChannels:
    case GeneField::ExpansionRatio:
    case GeneField::HeadDim:
      return GeneRole::Size;
  }
  return GeneRole::Size;
}

const char* field_name(GeneField field) {
  switch (field) {
    case GeneField::FfnType: return "ffn_type";
    case GeneField::KernelSize: return "kernel_size";
    case GeneField::NumHeads: return "num_heads";
    case GeneField::OutChannels: return "out_channels";
    case GeneField::ExpansionRatio: return "expansion_ratio";
    case GeneField::HeadDim: return "head_dim";
  }
  return "?";
}

std::vector<FieldRef> gene_fields(const ArchGenome& genome) {
  std::vector<FieldRef> out;
  for (int s = 0; s < static_cast<int>(genome.stages.size()); ++s) {
    const auto& stage = genome.stages[s];
    for (int b = 0; b < static_cast<int>(stage.size()); ++b) {
      out.push_back({s, b, GeneField::FfnType});
      out.push_back({s, b, GeneField::OutChannels});
      out.push_back({s, b, GeneField::ExpansionRatio});
      if (std::holds_alternative<FfnGene>(stage[b])) {
        out.push_back({s, b, GeneField::KernelSize});
      } else {
        out.push_back({s, b, GeneField::NumHeads});
        out.push_back({s, b, GeneField::HeadDim});
      }
    }
  }
  return out;
}

std::vector<int> field_domain(GeneField field,
                              const SearchSpaceConfig& config) {
  switch (field) {
    case GeneField::FfnType: {
      std::vector<int> out;
      for (FfnType t : config.ffn_types) out.push_back(static_cast<int>(t));
      return out;
    }
    case GeneField::KernelSize: return config.kernel_domain;
    case GeneField::NumHeads: return config.heads_domain;
    case GeneField::OutChannels: return config.channel_domain;
    case GeneField::ExpansionRatio: return config.expansion_domain;
    case GeneField::HeadDim: return config.head_dim_domain;
  }
  return {};
}

int get_field(const ArchGenome& genome, const FieldRef& ref) {
  const BlockGene& gene = genome.stages.at(ref.stage).at(ref.block);
  switch (ref.field) {
    case GeneField::FfnType: return static_cast<int>(ffn_type(gene));
    case GeneField::OutChannels: return out_channels(gene);
    case GeneField::ExpansionRatio: return expansion_ratio(gene);
    case GeneField::KernelSize: return std::get<FfnGene>(gene).kernel_size;
    case GeneField::NumHeads: return std::get<AttnGene>(gene).num_heads;
    case GeneField::HeadDim: return std::get<AttnGene>(gene).head_dim;
  }
  return 0;
}

void set_field(ArchGenome& genome, const FieldRef& ref, int value) {
  BlockGene& gene = genome.stages.at(ref.stage).at(ref.block);
  switch (ref.field) {
    case GeneField::FfnType:
      std::visit([&](auto& g) { g.ffn_type = static_cast<FfnType>(value); },
                 gene);
      return;
    case GeneField::OutChannels:
      std::visit([&](auto& g) { g.out_channels = value; }, gene);
      return;
    case GeneField::ExpansionRatio:
      std::visit([&](auto& g) { g.expansion_ratio = value; }, gene);
      return;
    case GeneField::KernelSize:
      std::get<FfnGene>(gene).kernel_size = value;
      return;
    case GeneField::NumHeads:
      std::get<AttnGene>(gene).num_heads = value;
      return;
    case GeneField::HeadDim:
      std::get<AttnGene>(gene).head_dim = value;
      return;
  }
}

ArchGenome random_genome(const SearchSpaceConfig& config, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0x67656e6f6d65ULL);
  ArchGenome genome;
  genome.config_ref = config.name;
  genome.stages.resize(config.num_stages);
  for (int s = 0; s < config.num_stages; ++s) {
    for (int b = 0; b < config.blocks_per_stage[s]; ++b) {
      const auto type =
          config.ffn_types[uniform_index(rng, config.ffn_types.size())];
      const int channels = sample(rng, config.channel_domain);
      const int expansion = sample(rng, config.expansion_domain);
      if (config.is_attention_block(s, b)) {
        AttnGene gene{type, channels, expansion, 0, 0};
        gene.num_heads = sample(rng, config.heads_domain);
        gene.head_dim = sample(rng, config.head_dim_domain);
        genome.stages[s].push_back(gene);
      } else {
        FfnGene gene{type, channels, sample(rng, config.kernel_domain),
                     expansion};
        genome.stages[s].push_back(gene);
      }
    }
  }
  return repair_channels(std::move(genome));
}

std::vector<Violation> validate(const ArchGenome& genome,
                                const SearchSpaceConfig& config) {
  std::vector<Violation> out = check_config(config);
  if (!out.empty()) return out;
  if (static_cast<int>(genome.stages.size()) != config.num_stages) {
    out.push_back({-1, -1, "stage_count",
                   "genome has " + std::to_string(genome.stages.size()) +
                       " stages, config expects " +
                       std::to_string(config.num_stages)});
    return out;
  }
  int prev_channels = config.stem_channels;
  int global_block = 0;
  for (int s = 0; s < config.num_stages; ++s) {
    const auto& stage = genome.stages[s];
    if (static_cast<int>(stage.size()) != config.blocks_per_stage[s]) {
      out.push_back({s, -1, "block_count",
                     "stage " + std::to_string(s + 1) + " has " +
                         std::to_string(stage.size()) + " blocks, expected " +
                         std::to_string(config.blocks_per_stage[s])});
    }
    for (int b = 0; b < static_cast<int>(stage.size()); ++b) {
      ++global_block;
      const BlockGene& gene = stage[b];
      const std::string where = "stage " + std::to_string(s + 1) +
                                " block " + std::to_string(b + 1);
      const bool is_attn = std::holds_alternative<AttnGene>(gene);
      if (is_attn && !config.is_attention_stage(s)) {
        out.push_back({s, b, "attention_stage",
                       "attention block at " + where +
                           " outside attention stages"});
      } else if (is_attn != config.is_attention_block(s, b) &&
                 b < config.blocks_per_stage[s]) {
        out.push_back({s, b, "block_layout",
                       std::string(is_attn ? "attention" : "ffn") +
                           " block at " + where +
                           " does not match the configured layout"});
      }
      const int ch = out_channels(gene);
      if (!contains(config.channel_domain, ch)) {
        out.push_back({s, b, "domain",
                       "channels " + std::to_string(ch) + " not in domain " +
                           domain_string(config.channel_domain) + " at " +
                           where});
      }
      if (ch < prev_channels) {
        out.push_back({s, b, "monotonic_channels",
                       "decreasing channels at block " +
                           std::to_string(global_block) + " (" + where +
                           ": " + std::to_string(prev_channels) + " -> " +
                           std::to_string(ch) + ")"});
      }
      prev_channels = std::max(prev_channels, ch);
      const int e = expansion_ratio(gene);
      if (!contains(config.expansion_domain, e)) {
        out.push_back({s, b, "domain",
                       "expansion " + std::to_string(e) + " not in domain " +
                           domain_string(config.expansion_domain) + " at " +
                           where});
      }
      const FfnType type = ffn_type(gene);
      if (std::find(config.ffn_types.begin(), config.ffn_types.end(), type) ==
          config.ffn_types.end()) {
        const int t = static_cast<int>(type);
        out.push_back({s, b, "domain",
                       std::string("ffn_type ") +
                           (t == 0 || t == 1 ? ffn_type_label(type) : "unknown") +
                           " not in domain at " + where});
      }
      if (const auto* ffn = std::get_if<FfnGene>(&gene)) {
        if (!contains(config.kernel_domain, ffn->kernel_size)) {
          out.push_back({s, b, "domain",
                         "kernel " + std::to_string(ffn->kernel_size) +
                             " not in domain " +
                             domain_string(config.kernel_domain) + " at " +
                             where});
        }
      } else {
        const auto& attn = std::get<AttnGene>(gene);
        if (!contains(config.heads_domain, attn.num_heads)) {
          out.push_back({s, b, "domain",
                         "heads " + std::to_string(attn.num_heads) +
                             " not in domain " +
                             domain_string(config.heads_domain) + " at " +
                             where});
        }
        if (!contains(config.head_dim_domain, attn.head_dim)) {
          out.push_back({s, b, "domain",
                         "head_dim " + std::to_string(attn.head_dim) +
                             " not in domain " +
                             domain_string(config.head_dim_domain) + " at " +
                             where});
        }
      }
    }
  }
  return out;
}

void require_valid(const ArchGenome& genome, const SearchSpaceConfig& config) {
  auto violations = validate(genome, config);
  if (!violations.empty()) throw ValidationError(std::move(violations));
}

ArchGenome repair_channels(ArchGenome genome) {
  std::vector<int> channels = channel_sequence(genome);
  if (std::is_sorted(channels.begin(), channels.end())) return genome;
  std::sort(channels.begin(), channels.end());
  std::size_t i = 0;
  for (auto& stage : genome.stages) {
    for (auto& gene : stage) {
      const int value = channels[i++];
      std::visit([&](auto& g) { g.out_channels = value; }, gene);
    }
  }
  return genome;
}

MutationScope scope_of(GeneRole role) {
  return role == GeneRole::Topology ? MutationScope::Topology
                                    : MutationScope::Size;
}

ArchGenome mutate(const ArchGenome& genome, const SearchSpaceConfig& config,
                  MutationScope scope, int n_mutations, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0x6d757461746fULL);
  std::vector<FieldRef> candidates;
  for (const auto& ref : gene_fields(genome)) {
    if (scope == MutationScope::All || scope_of(role_of(ref.field)) == scope) {
      candidates.push_back(ref);
    }
  }
  ArchGenome child = genome;
  const auto n = std::min<std::size_t>(std::max(n_mutations, 0),
                                       candidates.size());
  // Partial Fisher-Yates: the first n entries are a uniform sample of
  // distinct fields.
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + uniform_index(rng, candidates.size() - i);
    std::swap(candidates[i], candidates[j]);
    const FieldRef& ref = candidates[i];
    const auto domain = field_domain(ref.field, config);
    set_field(child, ref, domain[uniform_index(rng, domain.size())]);
  }
  return repair_channels(std::move(child));
}

ArchGenome crossover_unrepaired(const ArchGenome& parent_a,
                                const ArchGenome& parent_b,
                                std::uint64_t seed) {
  if (parent_a.stages.size() != parent_b.stages.size()) {
    throw Error("crossover parents have different stage counts");
  }
  Rng rng = make_rng(seed, 0x63726f7373ULL);
  ArchGenome child = parent_a;
  for (const auto& ref : gene_fields(parent_a)) {
    const bool from_b = (rng() >> 63) != 0;
    if (!from_b) continue;
    const auto& stage_b = parent_b.stages.at(ref.stage);
    if (stage_b.size() != parent_a.stages[ref.stage].size() ||
        stage_b[ref.block].index() !=
            parent_a.stages[ref.stage][ref.block].index()) {
      throw Error("crossover parents have different block layouts");
    }
    set_field(child, ref, get_field(parent_b, ref));
  }
  return child;
}

ArchGenome crossover(const ArchGenome& parent_a, const ArchGenome& parent_b,
                     std::uint64_t seed) {
  return repair_channels(crossover_unrepaired(parent_a, parent_b, seed));
}

int conv_out_size(int in, int kernel, int stride) {
  const int pad = kernel / 2;
  return (in + 2 * pad - kernel) / stride + 1;
}

int stage_resolution(const SearchSpaceConfig& config, int stage) {
  int res = conv_out_size(conv_out_size(config.input_resolution, 3, 2), 3, 2);
  for (int s = 1; s <= stage; ++s) res = conv_out_size(res, 3, 2);
  return res;
}

namespace {

// Walks the fixed network template shared with the graph builder and
// accumulates parameter and MAC counts block by block.
struct Tally {
  ParamCount params;
  std::int64_t macs = 0;

  void conv(std::int64_t cin, std::int64_t cout, std::int64_t k,
            std::int64_t groups, std::int64_t out_pixels) {
    params.total += k * k * (cin / groups) * cout + cout;
    macs += k * k * (cin / groups) * cout * out_pixels;
  }
  void norm(std::int64_t ch) {
    params.total += 2 * ch;
    params.norm += 2 * ch;
  }
  void linear(std::int64_t in, std::int64_t out, bool bias,
              std::int64_t tokens) {
    params.total += in * out + (bias ? out : 0);
    macs += in * out * tokens;
  }

  void ffn(FfnType type, std::int64_t cin, std::int64_t cout, std::int64_t e,
           std::int64_t k, std::int64_t pixels) {
    const std::int64_t hidden = e * cin;
    if (type == FfnType::InvertedBottleneck) {
      conv(cin, hidden, 1, 1, pixels);
      norm(hidden);
      conv(hidden, hidden, k, hidden, pixels);
      norm(hidden);
      conv(hidden, cout, 1, 1, pixels);
      norm(cout);
    } else {
      conv(cin, cin, k, cin, pixels);
      norm(cin);
      conv(cin, hidden, 1, 1, pixels);
      conv(hidden, cout, 1, 1, pixels);
    }
  }

  void attention(std::int64_t ch, std::int64_t heads, std::int64_t head_dim,
                 std::int64_t tokens) {
    for (std::int64_t h = 0; h < heads; ++h) {
      linear(ch, head_dim, true, tokens);  // query
      linear(ch, head_dim, true, tokens);  // key
      linear(ch, head_dim, true, tokens);  // value
      macs += 2 * head_dim * tokens * tokens;
      linear(head_dim, ch, h == 0, tokens);  // output projection slice
    }
  }
};

Tally tally(const ArchGenome& genome, const SearchSpaceConfig& config) {
  require_valid(genome, config);
  Tally t;
  const std::int64_t stem_mid = std::max(config.stem_channels / 2, 1);
  const std::int64_t r1 = conv_out_size(config.input_resolution, 3, 2);
  const std::int64_t r0 = conv_out_size(r1, 3, 2);
  t.conv(config.input_channels, stem_mid, 3, 1, r1 * r1);
  t.norm(stem_mid);
  t.conv(stem_mid, config.stem_channels, 3, 1, r0 * r0);
  t.norm(config.stem_channels);
  std::int64_t ch = config.stem_channels;
  for (int s = 0; s < config.num_stages; ++s) {
    const std::int64_t res = stage_resolution(config, s);
    const std::int64_t pixels = res * res;
    if (s > 0) {
      t.conv(ch, ch, 3, 1, pixels);
      t.norm(ch);
    }
    for (const auto& gene : genome.stages[s]) {
      const std::int64_t cout = out_channels(gene);
      if (const auto* attn = std::get_if<AttnGene>(&gene)) {
        t.attention(ch, attn->num_heads, attn->head_dim, pixels);
      }
      t.ffn(ffn_type(gene), ch, cout, expansion_ratio(gene),
            kernel_size(gene), pixels);
      ch = cout;
    }
  }
  t.norm(ch);
  t.linear(ch, config.num_classes, true, 1);
  return t;
}

}  // namespace

ParamCount count_params_detailed(const ArchGenome& genome,
                                 const SearchSpaceConfig& config) {
  return tally(genome, config).params;
}

std::int64_t count_params(const ArchGenome& genome,
                          const SearchSpaceConfig& config) {
  return tally(genome, config).params.total;
}

std::int64_t count_macs(const ArchGenome& genome,
                        const SearchSpaceConfig& config) {
  return tally(genome, config).macs;
}

}  // namespace esnas
