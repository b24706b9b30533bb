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

#include "esnas/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>

#include "esnas/rng.hpp"

namespace esnas {

namespace {

constexpr std::uint64_t kWeightStream = 1;
constexpr std::uint64_t kInputStream = 2;

}  // namespace

void require_valid(const EntropicConfig& cfg) {
  if (!(cfg.epsilon > 0.0)) throw Error("epsilon must be > 0");
  if (cfg.repeats < 1) throw Error("repeats must be >= 1");
  if (!(cfg.input_low < cfg.input_high)) {
    throw Error("input_low must be < input_high");
  }
}

Json entropic_to_json(const EntropicConfig& cfg) {
  Json out;
  out["epsilon"] = cfg.epsilon;
  out["repeats"] = cfg.repeats;
  out["input_low"] = cfg.input_low;
  out["input_high"] = cfg.input_high;
  out["norm_axis"] = cfg.norm_axis == NormAxis::AcrossChannels
                         ? "across_channels"
                         : "per_channel";
  return out;
}

EntropicConfig entropic_from_json(const Json& json, EntropicConfig cfg) {
  if (!json.is_object()) throw Error("entropic config must be an object");
  cfg.epsilon = json.value("epsilon", cfg.epsilon);
  cfg.repeats = json.value("repeats", cfg.repeats);
  cfg.input_low = json.value("input_low", cfg.input_low);
  cfg.input_high = json.value("input_high", cfg.input_high);
  if (json.contains("norm_axis")) {
    const auto axis = json.at("norm_axis").get<std::string>();
    if (axis == "across_channels") {
      cfg.norm_axis = NormAxis::AcrossChannels;
    } else if (axis == "per_channel") {
      cfg.norm_axis = NormAxis::PerChannel;
    } else {
      throw Error("norm_axis must be across_channels or per_channel");
    }
  }
  return cfg;
}

Json report_to_json(const ScoreReport& r) {
  Json out;
  out["schema_version"] = kSchemaVersion;
  out["entropic"] = r.entropic;
  out["entropic_per_repeat"] = r.entropic_per_repeat;
  out["logsynflow"] = r.logsynflow;
  out["params"] = r.params;
  out["macs"] = r.macs;
  out["seeds"] = r.seeds;
  out["eval_millis"] = r.eval_millis;
  return out;
}

ScoreReport report_from_json(const Json& json) {
  ScoreReport r;
  r.entropic = json.at("entropic").get<double>();
  r.entropic_per_repeat =
      json.at("entropic_per_repeat").get<std::vector<double>>();
  r.logsynflow = json.at("logsynflow").get<double>();
  r.params = json.at("params").get<std::int64_t>();
  r.macs = json.at("macs").get<std::int64_t>();
  r.seeds = json.at("seeds").get<std::vector<std::uint64_t>>();
  r.eval_millis = json.value("eval_millis", std::int64_t{0});
  return r;
}

TensorBuf normalize_activations(const TensorBuf& tap,
                                const EntropicConfig& cfg) {
  TensorBuf out = tap;
  if (tap.data.empty()) return out;
  const std::int64_t channels = tap.shape.empty() ? 1 : tap.shape[0];
  const std::int64_t positions = tap.size() / channels;
  auto divide = [&](std::int64_t idx, double max) {
    out.data[idx] = max > 0.0 ? tap.data[idx] / max : 0.0;
  };
  if (cfg.norm_axis == NormAxis::AcrossChannels) {
    if (positions == 1) {
      // A flat feature vector is one group.
      const double max = *std::max_element(tap.data.begin(), tap.data.end());
      for (std::int64_t i = 0; i < tap.size(); ++i) divide(i, max);
      return out;
    }
    for (std::int64_t p = 0; p < positions; ++p) {
      double max = 0.0;
      for (std::int64_t c = 0; c < channels; ++c) {
        max = std::max(max, tap.data[c * positions + p]);
      }
      for (std::int64_t c = 0; c < channels; ++c) divide(c * positions + p, max);
    }
  } else {
    for (std::int64_t c = 0; c < channels; ++c) {
      const auto begin = tap.data.begin() + c * positions;
      const double max = *std::max_element(begin, begin + positions);
      for (std::int64_t p = 0; p < positions; ++p) divide(c * positions + p, max);
    }
  }
  return out;
}

double layer_entropy(const TensorBuf& normalized, double epsilon) {
  if (normalized.data.empty()) return 0.0;
  double sum = 0.0;
  for (double a : normalized.data) sum -= a * std::log(a + epsilon);
  return std::max(0.0, sum / static_cast<double>(normalized.data.size()));
}

std::vector<std::uint64_t> entropic_seeds(std::uint64_t base, int repeats) {
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < repeats; ++i) seeds.push_back(derive_seed(base, 0x1000 + i));
  return seeds;
}

double entropic_score_once(const Graph& graph, const TensorBuf& input,
                           const EntropicConfig& cfg) {
  Graph prepared;
  const Graph* g = &graph;
  if (!graph.scoring_mode) {
    prepared = prepare_for_scoring(graph);
    g = &prepared;
  }
  std::vector<double> per_tap(g->activation_taps.size(), 0.0);
  forward_streaming(*g, input, [&](std::size_t i, const TensorBuf& tap) {
    per_tap[i] = layer_entropy(normalize_activations(tap, cfg), cfg.epsilon);
  });
  double total = 0.0;
  for (double v : per_tap) total += v;
  return total;
}

std::vector<double> entropic_score_repeats(
    const Graph& graph, const EntropicConfig& cfg,
    const std::vector<std::uint64_t>& seeds, int workers) {
  require_valid(cfg);
  auto one = [&](std::uint64_t seed) {
    const Graph g = prepare_for_scoring(
        reinitialize(graph, derive_seed(seed, kWeightStream)));
    Rng rng = make_rng(seed, kInputStream);
    TensorBuf input(g.input_shape);
    for (double& v : input.data) {
      v = uniform_real(rng, cfg.input_low, cfg.input_high);
    }
    return entropic_score_once(g, input, cfg);
  };
  std::vector<double> scores(seeds.size());
  if (workers <= 1 || seeds.size() <= 1) {
    for (std::size_t i = 0; i < seeds.size(); ++i) scores[i] = one(seeds[i]);
    return scores;
  }
  std::vector<std::future<double>> pending;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    pending.push_back(std::async(std::launch::async, one, seeds[i]));
  }
  for (std::size_t i = 0; i < seeds.size(); ++i) scores[i] = pending[i].get();
  return scores;
}

double entropic_score(const Graph& graph, const EntropicConfig& cfg,
                      const std::vector<std::uint64_t>& seeds, int workers) {
  if (static_cast<int>(seeds.size()) != cfg.repeats) {
    throw Error("entropic_score needs exactly " + std::to_string(cfg.repeats) +
                " seeds, got " + std::to_string(seeds.size()));
  }
  const auto scores = entropic_score_repeats(graph, cfg, seeds, workers);
  double sum = 0.0;
  for (double s : scores) sum += s;
  return sum / static_cast<double>(scores.size());
}

double logsynflow_saliency(const std::vector<const TensorBuf*>& params,
                           const std::vector<TensorBuf>& grads) {
  if (params.size() != grads.size()) {
    throw Error("parameter and gradient lists differ in length");
  }
  double total = 0.0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    const auto& theta = params[t]->data;
    const auto& g = grads[t].data;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      total += std::abs(theta[i]) * std::log1p(std::abs(g[i]));
    }
  }
  return total;
}

double logsynflow(const Graph& graph) {
  const Graph prepared = prepare_for_scoring(graph);
  const auto grads = backward_param_grads(prepared);
  return logsynflow_saliency(param_tensors(prepared), grads);
}

const char* metric_name(MetricKind metric) {
  return metric == MetricKind::Entropic ? "entropic" : "logsynflow";
}

MetricKind parse_metric(const std::string& name) {
  if (name == "entropic") return MetricKind::Entropic;
  if (name == "logsynflow") return MetricKind::LogSynflow;
  throw Error("unknown metric '" + name + "' (expected entropic or logsynflow)");
}

ScoreReport score_genome(const ArchGenome& genome,
                         const SearchSpaceConfig& config,
                         const EntropicConfig& cfg,
                         const std::vector<std::uint64_t>& seeds,
                         const ScoreOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  if (seeds.empty()) throw Error("score_genome needs at least one seed");
  ScoreReport report;
  report.seeds = seeds;
  report.params = count_params(genome, config);
  report.macs = count_macs(genome, config);
  const Graph graph = build_graph(genome, config, seeds.front());
  if (options.entropic) {
    report.entropic_per_repeat =
        entropic_score_repeats(graph, cfg, seeds, options.workers);
    double sum = 0.0;
    for (double s : report.entropic_per_repeat) sum += s;
    report.entropic = sum / static_cast<double>(report.entropic_per_repeat.size());
  }
  if (options.logsynflow) report.logsynflow = logsynflow(graph);
  report.eval_millis = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - start)
                           .count();
  return report;
}

}  // namespace esnas
