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

// Rank correlation between training-free scores and benchmark accuracies.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "esnas/archspace.hpp"
#include "esnas/io.hpp"
#include "esnas/metrics.hpp"

namespace esnas {

// Tie-corrected Kendall tau-b with exact pair counting in O(n log n).
double kendall_tau(std::span<const double> xs, std::span<const double> ys);

// Pearson correlation of average ranks.
double spearman_rho(std::span<const double> xs, std::span<const double> ys);

// 1-based ranks; tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

struct BenchmarkEntry {
  std::string id;
  std::optional<ArchGenome> arch;
  std::string arch_error;  // why `arch` is missing, if a descriptor was given
  double accuracy = 0.0;
  std::map<std::string, double> precomputed_scores;
};

struct RowError {
  std::size_t row = 0;  // 0-based data row
  std::string message;
};

struct BenchmarkTable {
  std::vector<BenchmarkEntry> entries;
  std::vector<RowError> load_errors;
};

// Splits CSV text into records of fields (RFC 4180 quoting).
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

// Columns are matched by header name: `id`, `arch_json`, `accuracy` and any
// number of `score_<metric>` columns.
BenchmarkTable parse_benchmark_csv(const std::string& text);
BenchmarkTable load_benchmark_csv(const std::string& path);

// Uniform sample of n rows without replacement, in original order.
BenchmarkTable sample_rows(const BenchmarkTable& table, std::size_t n,
                           std::uint64_t seed);

struct CorrelationReport {
  std::string metric_name;
  double kendall_tau = 0.0;
  double spearman_rho = 0.0;
  std::int64_t n = 0;
  std::string ties_policy = "kendall tau-b; spearman average ranks";
  std::int64_t skipped = 0;
  std::vector<RowError> errors;
  // (score, accuracy) of every row used, in table order.
  std::vector<std::pair<double, double>> points;
};

Json correlation_to_json(const CorrelationReport& report);

struct CorrelateOptions {
  SearchSpaceConfig config;
  EntropicConfig entropic;
  std::uint64_t seed = 0;
  int workers = 1;
};

CorrelationReport correlate_benchmark(const BenchmarkTable& table,
                                      MetricKind metric,
                                      const CorrelateOptions& options);

std::string scatter_csv(const CorrelationReport& report);
std::string scatter_svg(const CorrelationReport& report);

}  // namespace esnas
