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

#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <map>
#include <set>

#include "esnas/evolve.hpp"
#include "support.hpp"

namespace esnas {
namespace {

using testing::toy_config;

// Cheap deterministic stand-in metric: a different weighting of the gene
// fields per metric kind, so Topology and Size phases disagree.
double synthetic_metric(const ArchGenome& g, MetricKind metric) {
  double v = 0.0;
  int i = 0;
  for (const auto& ref : gene_fields(g)) {
    const double w = metric == MetricKind::Entropic ? 1.0 + 0.1 * i : 2.0 - 0.05 * i;
    v += w * get_field(g, ref);
    ++i;
  }
  return v;
}

SearchSchedule small_schedule() {
  SearchSchedule s;
  s.multistart_populations = 3;
  s.multistart_budget = Budget::evaluations(30);
  s.phase_budget = Budget::evaluations(40);
  s.total_budget = Budget::evaluations(200);
  s.multistart_population_size = 8;
  s.multistart_tournament_size = 3;
  s.main_population_size = 16;
  s.main_tournament_size = 4;
  return s;
}

Individual member(double score, std::int64_t birth) {
  Individual ind;
  ind.report.entropic = score;
  ind.has_entropic = true;
  ind.birth_step = birth;
  return ind;
}

TEST(evolve, schedule_default_population_sizes) {
  const SearchSchedule s;
  EXPECT_EQ(s.multistart_populations, 5);
  EXPECT_EQ(s.multistart_population_size, 25);
  EXPECT_EQ(s.multistart_tournament_size, 5);
  EXPECT_EQ(s.main_population_size, 2 * s.multistart_population_size);
  EXPECT_EQ(s.main_tournament_size, 2 * s.multistart_tournament_size);
  EXPECT_EQ(s.carry_top_k, 5);
  EXPECT_EQ(s.max_resample, 10);
  EXPECT_EQ(s.mutations_per_step, 2);
}

TEST(evolve, preset_schedules) {
  const SearchSchedule s0 = preset_schedule("S0");
  EXPECT_EQ(s0.multistart_budget.amount, 180);
  EXPECT_EQ(s0.phase_budget.amount, 300);
  EXPECT_EQ(s0.total_budget.amount, 2700);
  EXPECT_EQ(s0.total_budget.kind, Budget::Kind::WallClockSeconds);
  EXPECT_EQ(preset_schedule("S1").total_budget.amount, 2700);
  EXPECT_EQ(preset_schedule("S2").phase_budget.amount, 360);
  EXPECT_EQ(preset_schedule("S2").total_budget.amount, 3300);
  EXPECT_THROW(preset_schedule("S3"), Error);
}

TEST(evolve, schedule_validation_and_json) {
  SearchSchedule s = small_schedule();
  EXPECT_NO_THROW(require_valid(s));
  const SearchSchedule back = schedule_from_json(schedule_to_json(s));
  EXPECT_EQ(schedule_to_json(back).dump(), schedule_to_json(s).dump());
  s.main_tournament_size = 17;
  EXPECT_THROW(require_valid(s), Error);
  s = small_schedule();
  s.total_budget.amount = 0;
  EXPECT_THROW(require_valid(s), Error);
  s = small_schedule();
  s.crossover_prob = 1.5;
  EXPECT_THROW(require_valid(s), Error);
  EXPECT_THROW(schedule_from_json(Json{{"phase_budget", {{"kind", "hours"}, {"amount", 1}}}}),
               Error);
}

TEST(evolve, population_evicts_oldest) {
  Population pop;
  pop.capacity = 3;
  const double scores[] = {9.0, 1.0, 2.0, 3.0, 0.5};
  for (int i = 0; i < 5; ++i) pop.admit(member(scores[i], i));
  ASSERT_EQ(pop.size(), 3u);
  // The best (score 9) was the oldest and is gone.
  EXPECT_EQ(pop.members[0].birth_step, 2);
  EXPECT_EQ(pop.members[1].birth_step, 3);
  EXPECT_EQ(pop.members[2].birth_step, 4);
}

TEST(evolve, full_tournament_returns_global_best) {
  Population pop;
  pop.capacity = 10;
  for (int i = 0; i < 10; ++i) pop.admit(member(std::sin(i * 1.7), i));
  std::int64_t argmax = 0;
  for (int i = 1; i < 10; ++i) {
    if (std::sin(i * 1.7) > std::sin(argmax * 1.7)) argmax = i;
  }
  const auto key = metric_key(MetricKind::Entropic);
  for (std::uint64_t s = 0; s < 20; ++s) {
    EXPECT_EQ(tournament_select(pop, 10, key, s).birth_step, argmax);
  }
}

TEST(evolve, tournament_ties_favor_younger) {
  Population pop;
  pop.capacity = 4;
  pop.admit(member(1.0, 0));
  pop.admit(member(2.0, 1));
  pop.admit(member(2.0, 2));
  pop.admit(member(0.0, 3));
  const auto key = metric_key(MetricKind::Entropic);
  EXPECT_EQ(tournament_select(pop, 4, key, 0).birth_step, 2);
}

TEST(evolve, single_entry_tournament_is_uniform) {
  Population pop;
  pop.capacity = 5;
  for (int i = 0; i < 5; ++i) pop.admit(member(i, i));
  const auto key = metric_key(MetricKind::Entropic);
  const int trials = 10'000;
  std::map<std::int64_t, int> counts;
  for (int t = 0; t < trials; ++t) ++counts[tournament_select(pop, 1, key, t).birth_step];
  const double p = 0.2;
  const double sigma = std::sqrt(trials * p * (1 - p));
  for (const auto& [birth, n] : counts) {
    EXPECT_LE(std::abs(n - trials * p), 3 * sigma) << birth;
  }
}

TEST(evolve, tournament_errors) {
  Population pop;
  pop.capacity = 2;
  const auto key = metric_key(MetricKind::Entropic);
  EXPECT_THROW(tournament_select(pop, 1, key, 0), Error);
  pop.admit(member(1.0, 0));
  EXPECT_THROW(tournament_select(pop, 2, key, 0), Error);
}

TEST(evolve, scorer_counts_cache_hits) {
  const SearchSpaceConfig c = toy_config();
  CandidateScorer scorer(c, EntropicConfig{}, 1);
  const ArchGenome g = random_genome(c, 1);
  const double a = scorer.score(g, MetricKind::Entropic);
  EXPECT_EQ(scorer.score(g, MetricKind::Entropic), a);
  EXPECT_EQ(scorer.evaluations(), 2);
  const ScoreReport r = score_genome(g, c, EntropicConfig{}, scorer.seeds(),
                                     ScoreOptions{true, false, 1});
  EXPECT_EQ(r.entropic, a);
}

struct StepFixture {
  SearchSpaceConfig config = toy_config();
  SearchSchedule schedule = small_schedule();
  CandidateScorer scorer{config, EntropicConfig{}, 3, 1, synthetic_metric};
  std::vector<Json> history;
  std::vector<std::int64_t> admitted;
  SearchContext ctx;
  Population pop;

  explicit StepFixture(double crossover_prob) {
    schedule.crossover_prob = crossover_prob;
    ctx.config = config;
    ctx.schedule = schedule;
    ctx.scorer = &scorer;
    ctx.history = &history;
    ctx.admitted_params = &admitted;
    pop.capacity = schedule.main_population_size;
    for (int i = 0; pop.size() < static_cast<std::size_t>(pop.capacity); ++i) {
      ArchGenome g = random_genome(config, i);
      if (count_params(g, config) > config.max_params) continue;
      Individual ind = ctx.make_individual(std::move(g));
      ctx.ensure_scored(ind, MetricKind::Entropic);
      ctx.ensure_scored(ind, MetricKind::LogSynflow);
      pop.admit(std::move(ind));
    }
  }
};

TEST(evolve, mutation_steps_respect_phase_roles) {
  for (Phase phase : {Phase::Topology, Phase::Size}) {
    StepFixture f(0.0);
    const GeneRole frozen = phase == Phase::Topology ? GeneRole::Size : GeneRole::Topology;
    int admitted = 0;
    for (std::uint64_t step = 0; step < 1000; ++step) {
      std::map<std::int64_t, ArchGenome> before;
      for (const auto& m : f.pop.members) before[m.birth_step] = m.genome;
      const auto outcome = evolution_step(f.pop, phase, f.ctx, step);
      EXPECT_EQ(f.pop.size(), static_cast<std::size_t>(f.pop.capacity));
      if (!outcome.admitted) continue;
      ++admitted;
      ASSERT_FALSE(outcome.used_crossover);
      const auto parent_birth = f.history.back().at("parent_birth").get<std::int64_t>();
      const ArchGenome& parent = before.at(parent_birth);
      const ArchGenome& child = outcome.child->genome;
      EXPECT_LE(outcome.child->report.params, f.config.max_params);
      for (const auto& ref : gene_fields(parent)) {
        if (role_of(ref.field) == frozen) {
          ASSERT_EQ(get_field(parent, ref), get_field(child, ref));
        }
      }
    }
    EXPECT_GT(admitted, 900);
  }
}

TEST(evolve, crossover_steps_stay_feasible) {
  StepFixture f(1.0);
  int crossovers = 0;
  for (std::uint64_t step = 0; step < 300; ++step) {
    const auto outcome = evolution_step(f.pop, Phase::Size, f.ctx, step);
    crossovers += outcome.used_crossover;
    if (outcome.admitted) {
      EXPECT_TRUE(validate(outcome.child->genome, f.config).empty());
    }
  }
  EXPECT_EQ(crossovers, 300);
  for (auto p : f.admitted) EXPECT_LE(p, f.config.max_params);
}

TEST(evolve, infeasible_children_are_skipped) {
  StepFixture f(0.0);
  // Shrink the budget below every member so every child is rejected.
  std::int64_t smallest = INT64_MAX;
  for (const auto& m : f.pop.members) smallest = std::min(smallest, m.report.params);
  f.ctx.config.max_params = 1;
  const auto before = f.pop.members.front().birth_step;
  const auto outcome = evolution_step(f.pop, Phase::Topology, f.ctx, 0);
  EXPECT_FALSE(outcome.admitted);
  EXPECT_EQ(outcome.attempts, f.schedule.max_resample + 1);
  EXPECT_EQ(f.pop.members.front().birth_step, before);
  EXPECT_EQ(f.history.back().at("reason"), "params_exceed_budget");
  EXPECT_GT(smallest, 1);
}

// Rebuilds each multi-start population from init/step events and checks the
// returned seed is its best member.
TEST(evolve, multi_start_returns_population_bests) {
  const SearchSpaceConfig c = toy_config();
  SearchSchedule s = small_schedule();
  s.multistart_populations = 5;
  CandidateScorer scorer(c, EntropicConfig{}, 9);
  std::vector<Json> history;
  SearchContext ctx;
  ctx.config = c;
  ctx.schedule = s;
  ctx.scorer = &scorer;
  ctx.history = &history;
  const auto seeds = multi_start(ctx, 77);
  ASSERT_EQ(seeds.size(), 5u);

  std::map<int, std::deque<std::pair<double, std::int64_t>>> pops;
  for (const auto& e : history) {
    const std::string kind = e.at("event");
    if (kind != "init" && !(kind == "step" && e.at("admitted").get<bool>())) continue;
    auto& q = pops[e.at("population").get<int>()];
    q.emplace_back(e.at("score").get<double>(), e.at("birth_step").get<std::int64_t>());
    if (static_cast<int>(q.size()) > s.multistart_population_size) q.pop_front();
  }
  ASSERT_EQ(pops.size(), 5u);
  for (int p = 0; p < 5; ++p) {
    double best = -1.0;
    for (const auto& [score, birth] : pops[p]) best = std::max(best, score);
    EXPECT_EQ(seeds[p].report.entropic, best);
    EXPECT_TRUE(seeds[p].has_entropic);
  }

  CandidateScorer scorer2(c, EntropicConfig{}, 9);
  SearchContext ctx2;
  ctx2.config = c;
  ctx2.schedule = s;
  ctx2.scorer = &scorer2;
  const auto again = multi_start(ctx2, 77);
  for (int p = 0; p < 5; ++p) EXPECT_EQ(again[p].genome, seeds[p].genome);
}

TEST(evolve, one_point_space) {
  SearchSpaceConfig c = testing::conv_config();
  c.num_stages = 1;
  c.blocks_per_stage = {1};
  c.attention_blocks = {0};
  c.ffn_types = {FfnType::ConvNeXt};
  c.channel_domain = {16};
  c.kernel_domain = {5};
  c.expansion_domain = {3};
  const auto result = cyclic_search(c, small_schedule(), EntropicConfig{}, 1);
  ArchGenome only;
  only.config_ref = c.name;
  only.stages = {{testing::convnext(16, 3, 5)}};
  EXPECT_EQ(result.best.genome, only);
}

TEST(evolve, cyclic_search_structure) {
  const SearchSpaceConfig c = toy_config();
  const SearchSchedule s = small_schedule();
  const auto result = cyclic_search(c, s, EntropicConfig{}, 5, 1, synthetic_metric);
  std::vector<std::string> phases;
  std::int64_t multistart_evals = 0;
  for (const auto& e : result.history) {
    if (e.at("event") != "phase_end") continue;
    if (e.at("stage") == "multistart") {
      multistart_evals = e.at("evaluations").get<std::int64_t>();
      continue;
    }
    EXPECT_EQ(e.at("phase_index").get<int>(), static_cast<int>(phases.size()));
    phases.push_back(e.at("phase"));
  }
  ASSERT_GE(phases.size(), 4u);
  for (std::size_t i = 0; i < phases.size(); ++i) {
    EXPECT_EQ(phases[i], i % 2 == 0 ? "topology" : "size");
  }
  EXPECT_EQ(phase_name(result.final_phase), phases.back());
  EXPECT_LE(result.evaluations - multistart_evals, s.total_budget.amount);
  for (auto p : result.admitted_params) EXPECT_LE(p, c.max_params);
  EXPECT_TRUE(validate(result.best.genome, c).empty());

  // The winner maximizes the final phase metric over every admitted individual.
  const std::string metric = metric_name(phase_metric(result.final_phase));
  double best = -1e300;
  for (const auto& e : result.history) {
    if (e.contains("metric") && e.at("metric") == metric &&
        e.value("admitted", true)) {
      best = std::max(best, e.at("score").get<double>());
    }
  }
  EXPECT_EQ(result.best.metric(phase_metric(result.final_phase)), best);
}

TEST(evolve, cyclic_search_is_deterministic) {
  const SearchSpaceConfig c = toy_config();
  const auto a = cyclic_search(c, small_schedule(), EntropicConfig{}, 11);
  const auto b = cyclic_search(c, small_schedule(), EntropicConfig{}, 11);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    ASSERT_EQ(a.history[i].dump(), b.history[i].dump());
  }
  EXPECT_EQ(a.best.genome, b.best.genome);
  const auto other = cyclic_search(c, small_schedule(), EntropicConfig{}, 12);
  EXPECT_NE(other.history.back().dump(), a.history.back().dump());
}

TEST(evolve, wall_clock_budget_stops) {
  const SearchSpaceConfig c = toy_config();
  SearchSchedule s = small_schedule();
  s.multistart_budget = Budget::seconds(1);
  s.phase_budget = Budget::seconds(1);
  s.total_budget = Budget::seconds(2);
  const auto start = std::chrono::steady_clock::now();
  const auto result = cyclic_search(c, s, EntropicConfig{}, 2);
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(elapsed, 3 * 1 + 2 + 2.0);
  EXPECT_TRUE(validate(result.best.genome, c).empty());
}

}  // namespace
}  // namespace esnas
