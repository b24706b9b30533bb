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

#include "esnas/evolve.hpp"

#include <algorithm>

#include "esnas/rng.hpp"

namespace esnas {

namespace {

// Consecutive skipped steps after which a stage is declared stalled; only
// reachable when nearly every child violates the parameter budget.
constexpr int kMaxConsecutiveSkips = 64;
constexpr int kMaxRandomDraws = 10000;

const char* budget_kind_name(Budget::Kind kind) {
  return kind == Budget::Kind::WallClockSeconds ? "wallclock_seconds"
                                                : "evaluations";
}

Json budget_to_json(const Budget& b) {
  Json out;
  out["kind"] = budget_kind_name(b.kind);
  out["amount"] = b.amount;
  return out;
}

Budget budget_from_json(const Json& json, const char* key) {
  if (!json.is_object()) {
    throw Error(std::string("budget '") + key + "' must be an object");
  }
  Budget b;
  const auto kind = json.value("kind", std::string("evaluations"));
  if (kind == "wallclock_seconds" || kind == "wallclock") {
    b.kind = Budget::Kind::WallClockSeconds;
  } else if (kind == "evaluations" || kind == "evals") {
    b.kind = Budget::Kind::Evaluations;
  } else {
    throw Error(std::string("budget '") + key + "' has unknown kind '" + kind +
                "'");
  }
  if (!json.contains("amount") || !json.at("amount").is_number_integer()) {
    throw Error(std::string("budget '") + key + "' needs an integer amount");
  }
  b.amount = json.at("amount").get<std::int64_t>();
  return b;
}

bool better(const Individual& a, const Individual& b, const MetricKey& key) {
  const double ka = key(a), kb = key(b);
  if (ka != kb) return ka > kb;
  return a.birth_step > b.birth_step;
}

ArchGenome random_feasible(const SearchSpaceConfig& config,
                           std::uint64_t seed) {
  for (int i = 0; i < kMaxRandomDraws; ++i) {
    ArchGenome g = random_genome(config, derive_seed(seed, i));
    if (count_params(g, config) <= config.max_params) return g;
  }
  throw Error("no genome within max_params=" +
              std::to_string(config.max_params) + " found after " +
              std::to_string(kMaxRandomDraws) + " random draws");
}

}  // namespace

void require_valid(const SearchSchedule& s) {
  auto check_budget = [](const Budget& b, const char* name) {
    if (b.amount <= 0) {
      throw Error(std::string(name) + " must be positive");
    }
  };
  check_budget(s.multistart_budget, "multistart_budget");
  check_budget(s.phase_budget, "phase_budget");
  check_budget(s.total_budget, "total_budget");
  if (s.multistart_populations < 1) {
    throw Error("multistart_populations must be >= 1");
  }
  if (s.multistart_population_size < 1 || s.main_population_size < 1) {
    throw Error("population sizes must be >= 1");
  }
  if (s.multistart_tournament_size < 1 ||
      s.multistart_tournament_size > s.multistart_population_size) {
    throw Error("multistart_tournament_size must be in [1, population size]");
  }
  if (s.main_tournament_size < 1 ||
      s.main_tournament_size > s.main_population_size) {
    throw Error("main_tournament_size must be in [1, population size]");
  }
  if (s.mutations_per_step < 1) throw Error("mutations_per_step must be >= 1");
  if (!(s.crossover_prob >= 0.0 && s.crossover_prob <= 1.0)) {
    throw Error("crossover_prob must be in [0, 1]");
  }
  if (s.carry_top_k < 1 || s.carry_top_k > s.main_population_size) {
    throw Error("carry_top_k must be in [1, main_population_size]");
  }
  if (s.max_resample < 0) throw Error("max_resample must be >= 0");
  if (s.phase_budget.kind == s.total_budget.kind &&
      s.phase_budget.amount > s.total_budget.amount) {
    throw Error("phase_budget exceeds total_budget");
  }
}

SearchSchedule preset_schedule(const std::string& name) {
  SearchSchedule s;
  s.multistart_budget = Budget::seconds(180);
  if (name == "S0" || name == "S1") {
    s.phase_budget = Budget::seconds(300);
    s.total_budget = Budget::seconds(2700);
  } else if (name == "S2") {
    s.phase_budget = Budget::seconds(360);
    s.total_budget = Budget::seconds(3300);
  } else {
    throw Error("unknown preset '" + name + "' (expected S0, S1 or S2)");
  }
  return s;
}

Json schedule_to_json(const SearchSchedule& s) {
  Json out;
  out["multistart_populations"] = s.multistart_populations;
  out["multistart_budget"] = budget_to_json(s.multistart_budget);
  out["phase_budget"] = budget_to_json(s.phase_budget);
  out["total_budget"] = budget_to_json(s.total_budget);
  out["multistart_population_size"] = s.multistart_population_size;
  out["multistart_tournament_size"] = s.multistart_tournament_size;
  out["main_population_size"] = s.main_population_size;
  out["main_tournament_size"] = s.main_tournament_size;
  out["mutations_per_step"] = s.mutations_per_step;
  out["crossover_prob"] = s.crossover_prob;
  out["multistart_crossover"] = s.multistart_crossover;
  out["carry_top_k"] = s.carry_top_k;
  out["max_resample"] = s.max_resample;
  return out;
}

SearchSchedule schedule_from_json(const Json& json, SearchSchedule s) {
  if (!json.is_object()) throw Error("schedule must be an object");
  auto read_int = [&](const char* key, int& dst) {
    if (!json.contains(key)) return;
    if (!json.at(key).is_number_integer()) {
      throw Error(std::string("schedule field '") + key +
                  "' must be an integer");
    }
    dst = json.at(key).get<int>();
  };
  auto read_budget = [&](const char* key, Budget& dst) {
    if (json.contains(key)) dst = budget_from_json(json.at(key), key);
  };
  read_int("multistart_populations", s.multistart_populations);
  read_budget("multistart_budget", s.multistart_budget);
  read_budget("phase_budget", s.phase_budget);
  read_budget("total_budget", s.total_budget);
  read_int("multistart_population_size", s.multistart_population_size);
  read_int("multistart_tournament_size", s.multistart_tournament_size);
  read_int("main_population_size", s.main_population_size);
  read_int("main_tournament_size", s.main_tournament_size);
  read_int("mutations_per_step", s.mutations_per_step);
  if (json.contains("crossover_prob")) {
    s.crossover_prob = json.at("crossover_prob").get<double>();
  }
  if (json.contains("multistart_crossover")) {
    s.multistart_crossover = json.at("multistart_crossover").get<bool>();
  }
  read_int("carry_top_k", s.carry_top_k);
  read_int("max_resample", s.max_resample);
  return s;
}

const char* phase_name(Phase phase) {
  return phase == Phase::Topology ? "topology" : "size";
}

MetricKind phase_metric(Phase phase) {
  return phase == Phase::Topology ? MetricKind::Entropic
                                  : MetricKind::LogSynflow;
}

bool Individual::has(MetricKind metric) const {
  return metric == MetricKind::Entropic ? has_entropic : has_logsynflow;
}

double Individual::metric(MetricKind metric) const {
  if (!has(metric)) {
    throw Error(std::string("individual has no ") + metric_name(metric) +
                " score");
  }
  return metric == MetricKind::Entropic ? report.entropic : report.logsynflow;
}

void Population::admit(Individual ind) {
  members.push_back(std::move(ind));
  while (static_cast<int>(members.size()) > capacity) members.pop_front();
}

MetricKey metric_key(MetricKind metric) {
  return [metric](const Individual& ind) { return ind.metric(metric); };
}

const Individual& tournament_select(const Population& pop, int k,
                                    const MetricKey& key, std::uint64_t seed) {
  if (pop.members.empty()) throw Error("tournament on an empty population");
  const int n = static_cast<int>(pop.members.size());
  if (k < 1 || k > n) {
    throw Error("tournament size " + std::to_string(k) +
                " outside [1, " + std::to_string(n) + "]");
  }
  Rng rng = make_rng(seed, 0x746f75726eULL);
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  const Individual* best = nullptr;
  for (int i = 0; i < k; ++i) {
    const int j = i + static_cast<int>(uniform_index(rng, n - i));
    std::swap(idx[i], idx[j]);
    const Individual& cand = pop.members[idx[i]];
    if (!best || better(cand, *best, key)) best = &cand;
  }
  return *best;
}

CandidateScorer::CandidateScorer(SearchSpaceConfig config,
                                 EntropicConfig entropic, std::uint64_t seed,
                                 int workers, MetricFn override)
    : config_(std::move(config)),
      entropic_(entropic),
      seeds_(entropic_seeds(derive_seed(seed, 0x73636f7265ULL),
                            entropic.repeats)),
      workers_(workers),
      override_(std::move(override)) {}

double CandidateScorer::score(const ArchGenome& genome, MetricKind metric) {
  ++evaluations_;
  const auto key = std::make_pair(genome_key(genome), static_cast<int>(metric));
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  double value;
  if (override_) {
    value = override_(genome, metric);
  } else {
    ScoreOptions opts;
    opts.entropic = metric == MetricKind::Entropic;
    opts.logsynflow = metric == MetricKind::LogSynflow;
    opts.workers = workers_;
    const auto report = score_genome(genome, config_, entropic_, seeds_, opts);
    value = opts.entropic ? report.entropic : report.logsynflow;
  }
  cache_.emplace(key, value);
  return value;
}

BudgetClock::BudgetClock(Budget budget, const CandidateScorer& scorer)
    : budget_(budget),
      scorer_(&scorer),
      start_evals_(scorer.evaluations()),
      start_time_(std::chrono::steady_clock::now()) {}

bool BudgetClock::exhausted() const {
  if (budget_.kind == Budget::Kind::Evaluations) {
    return scorer_->evaluations() - start_evals_ >= budget_.amount;
  }
  const auto elapsed = std::chrono::steady_clock::now() - start_time_;
  return elapsed >= std::chrono::seconds(budget_.amount);
}

Individual SearchContext::make_individual(ArchGenome genome) {
  Individual ind;
  ind.report.params = count_params(genome, config);
  ind.report.macs = count_macs(genome, config);
  ind.report.seeds = scorer->seeds();
  ind.genome = std::move(genome);
  ind.birth_step = next_birth++;
  return ind;
}

void SearchContext::ensure_scored(Individual& ind, MetricKind metric) {
  if (ind.has(metric)) return;
  const double value = scorer->score(ind.genome, metric);
  if (metric == MetricKind::Entropic) {
    ind.report.entropic = value;
    ind.has_entropic = true;
  } else {
    ind.report.logsynflow = value;
    ind.has_logsynflow = true;
  }
}

void SearchContext::log(Json event) {
  if (history) history->push_back(std::move(event));
}

void SearchContext::note_admitted(const Individual& ind, MetricKind metric) {
  if (ind.report.params > config.max_params) {
    throw Error("internal: infeasible individual admitted");
  }
  if (admitted_params) admitted_params->push_back(ind.report.params);
  auto it = best_by_metric.find(static_cast<int>(metric));
  if (it == best_by_metric.end()) {
    best_by_metric.emplace(static_cast<int>(metric), ind);
  } else if (ind.metric(metric) > it->second.metric(metric)) {
    it->second = ind;
  }
}

StepOutcome evolution_step(Population& pop, MutationScope scope,
                           MetricKind metric, int tournament_size,
                           bool allow_crossover, SearchContext& ctx,
                           std::uint64_t seed, const Json& tags) {
  if (pop.members.empty()) throw Error("evolution step on an empty population");
  const auto key = metric_key(metric);
  const int k = std::min<int>(tournament_size, static_cast<int>(pop.size()));
  StepOutcome outcome;
  std::optional<ArchGenome> child;
  std::uint64_t parent_birth = 0;
  for (int attempt = 0; attempt <= ctx.schedule.max_resample; ++attempt) {
    const std::uint64_t s = derive_seed(seed, attempt);
    Rng rng = make_rng(s, 0x73746570ULL);
    outcome.attempts = attempt + 1;
    ArchGenome candidate;
    outcome.used_crossover = allow_crossover && pop.size() >= 2 &&
                             uniform_unit(rng) < ctx.schedule.crossover_prob;
    if (outcome.used_crossover) {
      const Individual& a = tournament_select(pop, k, key, derive_seed(s, 1));
      const Individual& b = tournament_select(pop, k, key, derive_seed(s, 2));
      candidate = crossover(a.genome, b.genome, derive_seed(s, 3));
      parent_birth = static_cast<std::uint64_t>(a.birth_step);
    } else {
      const Individual& parent =
          tournament_select(pop, k, key, derive_seed(s, 1));
      candidate = mutate(parent.genome, ctx.config, scope,
                         ctx.schedule.mutations_per_step, derive_seed(s, 3));
      parent_birth = static_cast<std::uint64_t>(parent.birth_step);
    }
    if (count_params(candidate, ctx.config) <= ctx.config.max_params) {
      child = std::move(candidate);
      break;
    }
  }
  Json event = tags.is_object() ? tags : Json::object();
  event["event"] = "step";
  event["seed"] = seed;
  event["operator"] = outcome.used_crossover ? "crossover" : "mutation";
  event["parent_birth"] = parent_birth;
  event["attempts"] = outcome.attempts;
  if (!child) {
    event["admitted"] = false;
    event["reason"] = "params_exceed_budget";
    ctx.log(std::move(event));
    return outcome;
  }
  Individual ind = ctx.make_individual(std::move(*child));
  ctx.ensure_scored(ind, metric);
  event["admitted"] = true;
  event["birth_step"] = ind.birth_step;
  event["metric"] = metric_name(metric);
  event["score"] = ind.metric(metric);
  event["params"] = ind.report.params;
  event["macs"] = ind.report.macs;
  ctx.log(std::move(event));
  ctx.note_admitted(ind, metric);
  outcome.admitted = true;
  outcome.child = ind;
  pop.admit(std::move(ind));
  return outcome;
}

StepOutcome evolution_step(Population& pop, Phase phase, SearchContext& ctx,
                           std::uint64_t seed) {
  Json tags;
  tags["stage"] = "main";
  tags["phase"] = phase_name(phase);
  return evolution_step(pop, scope_of(phase == Phase::Topology
                                          ? GeneRole::Topology
                                          : GeneRole::Size),
                        phase_metric(phase), ctx.schedule.main_tournament_size,
                        true, ctx, seed, tags);
}

namespace {

// Runs steps until `clock` (or `outer`) is exhausted or the stage stalls.
void run_steps(Population& pop, MutationScope scope, MetricKind metric,
               int tournament_size, bool allow_crossover, SearchContext& ctx,
               std::uint64_t seed, const Json& tags, const BudgetClock& clock,
               const BudgetClock* outer) {
  int skips = 0;
  for (std::uint64_t step = 0;; ++step) {
    if (clock.exhausted() || (outer && outer->exhausted())) return;
    const auto outcome =
        evolution_step(pop, scope, metric, tournament_size, allow_crossover,
                       ctx, derive_seed(seed, step), tags);
    skips = outcome.admitted ? 0 : skips + 1;
    if (skips >= kMaxConsecutiveSkips) {
      Json event = tags;
      event["event"] = "stalled";
      event["consecutive_skips"] = skips;
      ctx.log(std::move(event));
      return;
    }
  }
}

void log_member(SearchContext& ctx, const Json& tags, const char* kind,
                const Individual& ind, MetricKind metric) {
  Json event = tags;
  event["event"] = kind;
  event["birth_step"] = ind.birth_step;
  event["metric"] = metric_name(metric);
  event["score"] = ind.metric(metric);
  event["params"] = ind.report.params;
  event["macs"] = ind.report.macs;
  ctx.log(std::move(event));
}

std::vector<Individual> top_k(const Population& pop, MetricKind metric,
                              int k) {
  std::vector<Individual> sorted(pop.members.begin(), pop.members.end());
  const auto key = metric_key(metric);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [&](const Individual& a, const Individual& b) {
                     return better(a, b, key);
                   });
  if (static_cast<int>(sorted.size()) > k) sorted.resize(k);
  return sorted;
}

}  // namespace

std::vector<Individual> multi_start(SearchContext& ctx, std::uint64_t seed) {
  const auto& s = ctx.schedule;
  std::vector<Individual> seeds;
  for (int p = 0; p < s.multistart_populations; ++p) {
    const std::uint64_t pop_seed = derive_seed(seed, 0x6d730000ULL + p);
    BudgetClock clock(s.multistart_budget, *ctx.scorer);
    Json tags;
    tags["stage"] = "multistart";
    tags["phase"] = "multistart";
    tags["population"] = p;
    Json start = tags;
    start["event"] = "phase_start";
    ctx.log(std::move(start));

    Population pop;
    pop.capacity = s.multistart_population_size;
    for (int i = 0; i < pop.capacity; ++i) {
      if (i > 0 && clock.exhausted()) break;
      Individual ind = ctx.make_individual(
          random_feasible(ctx.config, derive_seed(pop_seed, 0x10000 + i)));
      ctx.ensure_scored(ind, MetricKind::Entropic);
      ctx.note_admitted(ind, MetricKind::Entropic);
      log_member(ctx, tags, "init", ind, MetricKind::Entropic);
      pop.admit(std::move(ind));
    }
    run_steps(pop, MutationScope::All, MetricKind::Entropic,
              s.multistart_tournament_size, s.multistart_crossover, ctx,
              derive_seed(pop_seed, 0x20000), tags, clock, nullptr);

    const Individual best = top_k(pop, MetricKind::Entropic, 1).front();
    Json end = tags;
    end["event"] = "phase_end";
    end["best_birth_step"] = best.birth_step;
    end["best_score"] = best.report.entropic;
    end["evaluations"] = ctx.scorer->evaluations();
    ctx.log(std::move(end));
    seeds.push_back(best);
  }
  return seeds;
}

SearchResult cyclic_search(const SearchSpaceConfig& config,
                           const SearchSchedule& schedule,
                           const EntropicConfig& entropic, std::uint64_t seed,
                           int workers, MetricFn override) {
  require_valid_config(config);
  require_valid(schedule);
  require_valid(entropic);
  SearchResult result;
  CandidateScorer scorer(config, entropic, seed, workers, std::move(override));
  SearchContext ctx;
  ctx.config = config;
  ctx.schedule = schedule;
  ctx.scorer = &scorer;
  ctx.history = &result.history;
  ctx.admitted_params = &result.admitted_params;

  std::vector<Individual> carried = multi_start(ctx, derive_seed(seed, 1));

  BudgetClock total(schedule.total_budget, scorer);
  Phase phase = Phase::Topology;
  Phase final_phase = Phase::Topology;
  for (int phase_index = 0; !total.exhausted(); ++phase_index) {
    const std::uint64_t phase_seed = derive_seed(seed, 0x70680000ULL + phase_index);
    const MetricKind metric = phase_metric(phase);
    const MutationScope scope = phase == Phase::Topology ? MutationScope::Topology
                                                         : MutationScope::Size;
    BudgetClock clock(schedule.phase_budget, scorer);
    Json tags;
    tags["stage"] = "main";
    tags["phase"] = phase_name(phase);
    tags["phase_index"] = phase_index;
    Json start = tags;
    start["event"] = "phase_start";
    start["carried"] = static_cast<int>(carried.size());
    ctx.log(std::move(start));

    Population pop;
    pop.capacity = schedule.main_population_size;
    for (Individual ind : carried) {
      ind.birth_step = ctx.next_birth++;
      ctx.ensure_scored(ind, metric);
      ctx.note_admitted(ind, metric);
      log_member(ctx, tags, "carry", ind, metric);
      pop.admit(std::move(ind));
    }
    // Refill with phase-scoped mutants of the carried seeds.
    int skips = 0;
    for (std::uint64_t i = 0; static_cast<int>(pop.size()) < pop.capacity &&
                              skips < kMaxConsecutiveSkips;
         ++i) {
      if (clock.exhausted() || total.exhausted()) break;
      const Individual& parent = carried[i % carried.size()];
      const std::uint64_t s = derive_seed(phase_seed, 0x10000 + i);
      std::optional<ArchGenome> child;
      for (int a = 0; a <= schedule.max_resample && !child; ++a) {
        ArchGenome g = mutate(parent.genome, config, scope,
                              schedule.mutations_per_step, derive_seed(s, a));
        if (count_params(g, config) <= config.max_params) child = std::move(g);
      }
      if (!child) {
        ++skips;
        continue;
      }
      skips = 0;
      Individual ind = ctx.make_individual(std::move(*child));
      ctx.ensure_scored(ind, metric);
      ctx.note_admitted(ind, metric);
      log_member(ctx, tags, "refill", ind, metric);
      pop.admit(std::move(ind));
    }
    run_steps(pop, scope, metric, schedule.main_tournament_size, true, ctx,
              derive_seed(phase_seed, 0x20000), tags, clock, &total);

    carried = top_k(pop, metric, schedule.carry_top_k);
    Json end = tags;
    end["event"] = "phase_end";
    end["best_birth_step"] = carried.front().birth_step;
    end["best_score"] = carried.front().metric(metric);
    end["evaluations"] = scorer.evaluations();
    ctx.log(std::move(end));
    final_phase = phase;
    phase = phase == Phase::Topology ? Phase::Size : Phase::Topology;
  }

  result.final_phase = final_phase;
  result.best = ctx.best_by_metric.at(static_cast<int>(phase_metric(final_phase)));
  result.best_by_metric = ctx.best_by_metric;
  result.evaluations = scorer.evaluations();
  return result;
}

}  // namespace esnas
