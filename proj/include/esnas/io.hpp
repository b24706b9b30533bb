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

#include <string>

#include "esnas/archspace.hpp"
#include "json.hpp"

namespace esnas {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

Json genome_to_json(const ArchGenome& genome);
// Unknown fields are ignored; missing or non-integer gene fields throw Error.
ArchGenome genome_from_json(const Json& json);

Json config_to_json(const SearchSpaceConfig& config);
// Starts from `base` and overrides every field present in `json`.
SearchSpaceConfig config_from_json(const Json& json,
                                   SearchSpaceConfig base = {});

Json read_json_file(const std::string& path);
// Writes to a temporary sibling and renames it into place.
void write_text_atomic(const std::string& path, const std::string& text);
std::string dump_canonical(const Json& json);

std::string genome_key(const ArchGenome& genome);

const char* ffn_type_name(FfnType type);

}  // namespace esnas
