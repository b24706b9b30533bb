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

// Decoupled cyclic evolutionary search: Entropic-Score-driven multi-start
// followed by alternating topology (Entropic Score) and size (LogSynflow)
// phases, each an aging (regularized) tournament evolution under a hard
// parameter budget.

#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "esnas/archspace.hpp"
#include "esnas/io.hpp"
#include "esnas/metrics.hpp"

namespace esnas {

struct Budget {
  enum class Kind { WallClockSeconds, Evaluations };
  Kind kind = Kind::Evaluations;
  std::int64_t amount = 1;

  static Budget seconds(std::int64_t s) { return {Kind::WallClockSeconds, s}; }
  static Budget evaluations(std::int64_t n) { return {Kind::Evaluations, n}; }
};

struct SearchSchedule {
  int multistart_populations = 5;
  Budget multistart_budget = Budget::seconds(180);
  Budget phase_budget = Budget::seconds(300);
  Budget total_budget = Budget::seconds(2700);
  int multistart_population_size = 25;
  int multistart_tournament_size = 5;
  int main_population_size = 50;
  int main_tournament_size = 10;
  int mutations_per_step = 2;
  double crossover_prob = 0.5;
  bool multistart_crossover = true;
  int carry_top_k = 5;
  int max_resample = 10;
};

// Throws Error describing the first misconfiguration.
void require_valid(const SearchSchedule& schedule);

// Full-scale presets: S0/S1 use 5-minute phases over 45 minutes, S2 uses
// 6-minute phases over 55 minutes; all use five 3-minute multi-starts.
SearchSchedule preset_schedule(const std::string& name);

Json schedule_to_json(const SearchSchedule& schedule);
SearchSchedule schedule_from_json(const Json& json, SearchSchedule base = {});

enum class Phase { Topology, Size };

const char* phase_name(Phase phase);
MetricKind phase_metric(Phase phase);

struct Individual {
  ArchGenome genome;
  ScoreReport report;  // params/macs always set; metrics lazily
  bool has_entropic = false;
  bool has_logsynflow = false;
  std::int64_t birth_step = 0;

  bool has(MetricKind metric) const;
  double metric(MetricKind metric) const;
};

// Aging population: oldest first, admitting beyond capacity evicts the
// oldest member regardless of fitness.
struct Population {
  std::deque<Individual> members;
  int capacity = 1;

  void admit(Individual ind);
  std::size_t size() const { return members.size(); }
};

using MetricKey = std::function<double(const Individual&)>;

MetricKey metric_key(MetricKind metric);

// Samples k distinct members uniformly and returns the best by key; ties go
// to the younger member (larger birth_step).
const Individual& tournament_select(const Population& pop, int k,
                                    const MetricKey& key, std::uint64_t seed);

// Overrides metric evaluation, e.g. with a synthetic ground truth.
using MetricFn = std::function<double(const ArchGenome&, MetricKind)>;

// Caching candidate scorer shared by every stage of one search. Scoring seeds
// are fixed per search so a genome's score is a function of the genome.
class CandidateScorer {
 public:
  CandidateScorer(SearchSpaceConfig config, EntropicConfig entropic,
                  std::uint64_t seed, int workers = 1, MetricFn override = {});

  // Counts as one evaluation even when served from the cache.
  double score(const ArchGenome& genome, MetricKind metric);
  std::int64_t evaluations() const { return evaluations_; }
  const std::vector<std::uint64_t>& seeds() const { return seeds_; }
  const SearchSpaceConfig& config() const { return config_; }
  const EntropicConfig& entropic() const { return entropic_; }

 private:
  SearchSpaceConfig config_;
  EntropicConfig entropic_;
  std::vector<std::uint64_t> seeds_;
  int workers_;
  MetricFn override_;
  std::map<std::pair<std::string, int>, double> cache_;
  std::int64_t evaluations_ = 0;
};

// Tracks one budget against the scorer's evaluation counter or a clock.
class BudgetClock {
 public:
  BudgetClock(Budget budget, const CandidateScorer& scorer);
  bool exhausted() const;

 private:
  Budget budget_;
  const CandidateScorer* scorer_;
  std::int64_t start_evals_;
  std::chrono::steady_clock::time_point start_time_;
};

struct SearchContext {
  SearchSpaceConfig config;
  SearchSchedule schedule;
  CandidateScorer* scorer = nullptr;
  std::int64_t next_birth = 0;
  std::vector<Json>* history = nullptr;
  // Every individual ever admitted, for feasibility audits.
  std::vector<std::int64_t>* admitted_params = nullptr;
  std::map<int, Individual> best_by_metric;  // keyed by MetricKind

  Individual make_individual(ArchGenome genome);
  void ensure_scored(Individual& ind, MetricKind metric);
  void log(Json event);
  void note_admitted(const Individual& ind, MetricKind metric);
};

struct StepOutcome {
  bool admitted = false;
  int attempts = 0;
  bool used_crossover = false;
  std::optional<Individual> child;
};

// One aging-evolution step. The child comes from crossover of two
// tournament winners with probability crossover_prob, else from mutating a
// winner within `scope`; infeasible children are resampled up to
// max_resample times before the step is skipped.
StepOutcome evolution_step(Population& pop, MutationScope scope,
                           MetricKind metric, int tournament_size,
                           bool allow_crossover, SearchContext& ctx,
                           std::uint64_t seed, const Json& tags = {});

// Convenience form for the main search phases.
StepOutcome evolution_step(Population& pop, Phase phase, SearchContext& ctx,
                           std::uint64_t seed);

// Best individual of each independently evolved Entropic-Score population.
std::vector<Individual> multi_start(SearchContext& ctx, std::uint64_t seed);

struct SearchResult {
  Individual best;
  Phase final_phase = Phase::Topology;
  std::vector<Json> history;
  std::vector<std::int64_t> admitted_params;
  std::map<int, Individual> best_by_metric;
  std::int64_t evaluations = 0;
};

SearchResult cyclic_search(const SearchSpaceConfig& config,
                           const SearchSchedule& schedule,
                           const EntropicConfig& entropic, std::uint64_t seed,
                           int workers = 1, MetricFn override = {});

}  // namespace esnas
