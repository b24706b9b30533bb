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

// Training-free proxies: Entropic Score (summed mean element-wise entropy of
// max-normalized activations) and LogSynflow (log-damped synaptic flow).

#pragma once

#include <cstdint>
#include <vector>

#include "esnas/archspace.hpp"
#include "esnas/io.hpp"
#include "esnas/netgraph.hpp"

namespace esnas {

enum class NormAxis { AcrossChannels, PerChannel };

struct EntropicConfig {
  double epsilon = 1e-8;
  int repeats = 3;
  double input_low = -0.5;
  double input_high = 0.5;
  NormAxis norm_axis = NormAxis::AcrossChannels;
};

void require_valid(const EntropicConfig& cfg);

Json entropic_to_json(const EntropicConfig& cfg);
EntropicConfig entropic_from_json(const Json& json, EntropicConfig base = {});

struct ScoreReport {
  double entropic = 0.0;
  std::vector<double> entropic_per_repeat;
  double logsynflow = 0.0;
  std::int64_t params = 0;
  std::int64_t macs = 0;
  std::vector<std::uint64_t> seeds;
  std::int64_t eval_millis = 0;
};

Json report_to_json(const ScoreReport& report);
ScoreReport report_from_json(const Json& json);

// Divides a non-negative tap by the maximum of its reduction group. Axis 0 is
// the channel axis. Groups whose maximum is 0 stay 0.
TensorBuf normalize_activations(const TensorBuf& tap, const EntropicConfig& cfg);

// Mean of -a * ln(a + epsilon) over all elements, clamped at 0.
double layer_entropy(const TensorBuf& normalized, double epsilon);

// Seeds used for `repeats` evaluations derived from one base seed.
std::vector<std::uint64_t> entropic_seeds(std::uint64_t base, int repeats);

// One evaluation on the graph's current weights and a given input: prepares
// the graph and sums layer entropies over every activation tap.
double entropic_score_once(const Graph& graph, const TensorBuf& input,
                           const EntropicConfig& cfg);

// Per-repeat scores: each seed re-initializes the weights and draws the input
// on independent sub-streams.
std::vector<double> entropic_score_repeats(const Graph& graph,
                                           const EntropicConfig& cfg,
                                           const std::vector<std::uint64_t>& seeds,
                                           int workers = 1);

// Mean of entropic_score_repeats. seeds.size() must equal cfg.repeats.
double entropic_score(const Graph& graph, const EntropicConfig& cfg,
                      const std::vector<std::uint64_t>& seeds, int workers = 1);

// Saliency from parameter values and their gradients: sum |theta| ln(1+|g|).
double logsynflow_saliency(const std::vector<const TensorBuf*>& params,
                           const std::vector<TensorBuf>& grads);

// Prepares the graph, feeds ones, and scores the current weights.
double logsynflow(const Graph& graph);

enum class MetricKind { Entropic, LogSynflow };

const char* metric_name(MetricKind metric);
MetricKind parse_metric(const std::string& name);

struct ScoreOptions {
  bool entropic = true;
  bool logsynflow = true;
  int workers = 1;
};

// Builds the genome's graph and fills a report. The LogSynflow graph is
// initialized from `seeds.front()`.
ScoreReport score_genome(const ArchGenome& genome,
                         const SearchSpaceConfig& config,
                         const EntropicConfig& cfg,
                         const std::vector<std::uint64_t>& seeds,
                         const ScoreOptions& options = {});

}  // namespace esnas
