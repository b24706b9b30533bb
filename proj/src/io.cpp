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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace esnas {

namespace {

int get_int(const Json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw Error(std::string("missing field '") + key + "'");
  }
  if (!it->is_number_integer()) {
    throw Error(std::string("field '") + key + "' must be an integer");
  }
  return it->get<int>();
}

FfnType parse_ffn_type(const Json& obj) {
  auto it = obj.find("ffn_type");
  if (it == obj.end()) throw Error("missing field 'ffn_type'");
  if (it->is_string()) {
    const auto s = it->get<std::string>();
    if (s == "ibn") return FfnType::InvertedBottleneck;
    if (s == "convnext") return FfnType::ConvNeXt;
    throw Error("unknown ffn_type '" + s + "'");
  }
  if (it->is_number_integer()) {
    const int v = it->get<int>();
    if (v == 0 || v == 1) return static_cast<FfnType>(v);
  }
  throw Error("ffn_type must be \"ibn\" or \"convnext\"");
}

std::vector<int> int_list(const Json& value, const char* key) {
  if (!value.is_array()) {
    throw Error(std::string("field '") + key + "' must be an integer list");
  }
  std::vector<int> out;
  for (const auto& v : value) {
    if (!v.is_number_integer()) {
      throw Error(std::string("field '") + key + "' must be an integer list");
    }
    out.push_back(v.get<int>());
  }
  return out;
}

}  // namespace

const char* ffn_type_name(FfnType type) {
  return type == FfnType::InvertedBottleneck ? "ibn" : "convnext";
}

Json genome_to_json(const ArchGenome& genome) {
  Json stages = Json::array();
  for (const auto& stage : genome.stages) {
    Json blocks = Json::array();
    for (const auto& gene : stage) {
      Json block;
      if (const auto* ffn = std::get_if<FfnGene>(&gene)) {
        block["type"] = "ffn";
        block["ffn_type"] = ffn_type_name(ffn->ffn_type);
        block["out_channels"] = ffn->out_channels;
        block["kernel_size"] = ffn->kernel_size;
        block["expansion_ratio"] = ffn->expansion_ratio;
      } else {
        const auto& attn = std::get<AttnGene>(gene);
        block["type"] = "attn";
        block["ffn_type"] = ffn_type_name(attn.ffn_type);
        block["out_channels"] = attn.out_channels;
        block["expansion_ratio"] = attn.expansion_ratio;
        block["num_heads"] = attn.num_heads;
        block["head_dim"] = attn.head_dim;
      }
      blocks.push_back(std::move(block));
    }
    stages.push_back(std::move(blocks));
  }
  Json out;
  out["schema_version"] = kSchemaVersion;
  out["config_ref"] = genome.config_ref;
  out["stages"] = std::move(stages);
  return out;
}

ArchGenome genome_from_json(const Json& json) {
  if (!json.is_object()) throw Error("genome JSON must be an object");
  if (auto it = json.find("schema_version");
      it != json.end() && (!it->is_number_integer() ||
                           it->get<int>() > kSchemaVersion)) {
    throw Error("unsupported genome schema_version");
  }
  ArchGenome genome;
  if (auto it = json.find("config_ref"); it != json.end() && it->is_string()) {
    genome.config_ref = it->get<std::string>();
  }
  auto stages = json.find("stages");
  if (stages == json.end() || !stages->is_array()) {
    throw Error("genome JSON needs a 'stages' array");
  }
  for (const auto& stage : *stages) {
    if (!stage.is_array()) throw Error("each stage must be an array of blocks");
    std::vector<BlockGene> genes;
    for (const auto& block : stage) {
      if (!block.is_object()) throw Error("each block must be an object");
      const auto type = block.value("type", std::string("ffn"));
      if (type == "ffn") {
        genes.push_back(FfnGene{parse_ffn_type(block),
                                get_int(block, "out_channels"),
                                get_int(block, "kernel_size"),
                                get_int(block, "expansion_ratio")});
      } else if (type == "attn") {
        genes.push_back(AttnGene{parse_ffn_type(block),
                                 get_int(block, "out_channels"),
                                 get_int(block, "expansion_ratio"),
                                 get_int(block, "num_heads"),
                                 get_int(block, "head_dim")});
      } else {
        throw Error("unknown block type '" + type + "'");
      }
    }
    genome.stages.push_back(std::move(genes));
  }
  return genome;
}

Json config_to_json(const SearchSpaceConfig& c) {
  Json out;
  out["name"] = c.name;
  out["num_stages"] = c.num_stages;
  out["blocks_per_stage"] = c.blocks_per_stage;
  out["attention_stages"] = c.attention_stages;
  out["attention_blocks"] = c.attention_blocks;
  out["stem_channels"] = c.stem_channels;
  Json types = Json::array();
  for (FfnType t : c.ffn_types) types.push_back(ffn_type_name(t));
  out["ffn_types"] = std::move(types);
  out["channel_domain"] = c.channel_domain;
  out["kernel_domain"] = c.kernel_domain;
  out["expansion_domain"] = c.expansion_domain;
  out["heads_domain"] = c.heads_domain;
  out["head_dim_domain"] = c.head_dim_domain;
  out["input_resolution"] = c.input_resolution;
  out["input_channels"] = c.input_channels;
  out["num_classes"] = c.num_classes;
  out["max_params"] = c.max_params;
  return out;
}

SearchSpaceConfig config_from_json(const Json& json, SearchSpaceConfig c) {
  if (!json.is_object()) throw Error("search space config must be an object");
  auto read_int = [&](const char* key, int& dst) {
    if (json.contains(key)) dst = get_int(json, key);
  };
  auto read_list = [&](const char* key, std::vector<int>& dst) {
    if (json.contains(key)) dst = int_list(json.at(key), key);
  };
  if (json.contains("name")) c.name = json.at("name").get<std::string>();
  read_int("num_stages", c.num_stages);
  read_list("blocks_per_stage", c.blocks_per_stage);
  read_list("attention_stages", c.attention_stages);
  read_list("attention_blocks", c.attention_blocks);
  read_int("stem_channels", c.stem_channels);
  if (json.contains("ffn_types")) {
    const auto& list = json.at("ffn_types");
    if (!list.is_array()) throw Error("field 'ffn_types' must be a list");
    c.ffn_types.clear();
    for (const auto& item : list) {
      c.ffn_types.push_back(parse_ffn_type(Json{{"ffn_type", item}}));
    }
  }
  read_list("channel_domain", c.channel_domain);
  read_list("kernel_domain", c.kernel_domain);
  read_list("expansion_domain", c.expansion_domain);
  read_list("heads_domain", c.heads_domain);
  read_list("head_dim_domain", c.head_dim_domain);
  read_int("input_resolution", c.input_resolution);
  read_int("input_channels", c.input_channels);
  read_int("num_classes", c.num_classes);
  if (json.contains("max_params")) {
    const auto& v = json.at("max_params");
    if (!v.is_number_integer()) throw Error("max_params must be an integer");
    c.max_params = v.get<std::int64_t>();
  }
  return c;
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("cannot parse '" + path + "': " + e.what());
  }
}

void write_text_atomic(const std::string& path, const std::string& text) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out << text;
    if (!out) throw Error("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, target);
}

std::string dump_canonical(const Json& json) { return json.dump(2) + "\n"; }

std::string genome_key(const ArchGenome& genome) {
  std::ostringstream os;
  for (const auto& stage : genome.stages) {
    os << '|';
    for (const auto& gene : stage) {
      if (const auto* f = std::get_if<FfnGene>(&gene)) {
        os << 'f' << static_cast<int>(f->ffn_type) << ',' << f->out_channels
           << ',' << f->kernel_size << ',' << f->expansion_ratio << ';';
      } else {
        const auto& a = std::get<AttnGene>(gene);
        os << 'a' << static_cast<int>(a.ffn_type) << ',' << a.out_channels
           << ',' << a.expansion_ratio << ',' << a.num_heads << ','
           << a.head_dim << ';';
      }
    }
  }
  return os.str();
}

}  // namespace esnas
