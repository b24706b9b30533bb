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

// Command-line front end: score, search, correlate and stats subcommands.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "esnas/archspace.hpp"
#include "esnas/evolve.hpp"
#include "esnas/io.hpp"
#include "esnas/metrics.hpp"

namespace esnas {

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode { kExitOk = 0, kExitInternal = 1, kExitInvalidInput = 2 };

// Malformed or invalid user input; maps to exit code 2.
class InputError : public Error {
 public:
  using Error::Error;
};

struct RunConfig {
  SearchSpaceConfig space;
  SearchSchedule schedule;
  EntropicConfig entropic;
};

// Reads a run config file. The file is either a bare search-space object or
// {"preset": "S0", "search_space": {...}, "schedule": {...},
//  "entropic": {...}} with every key optional.
RunConfig load_run_config(const std::optional<std::string>& path,
                          const std::optional<std::string>& preset);
Json run_config_to_json(const RunConfig& config);

// Hex FNV-1a 64 digest of the canonical JSON text.
std::string config_hash(const Json& canonical);

struct RunManifest {
  std::string tool_version = kToolVersion;
  std::string config_hash;
  std::uint64_t master_seed = 0;
  std::string start_time;
  std::string end_time;
  std::string subcommand;
  std::vector<std::string> outputs;
};

Json manifest_to_json(const RunManifest& manifest);
std::string utc_timestamp();

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

}  // namespace esnas
