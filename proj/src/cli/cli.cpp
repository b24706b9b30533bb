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

#include "esnas/cli.hpp"

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "esnas/bench.hpp"
#include "esnas/netgraph.hpp"

namespace esnas {

namespace fs = std::filesystem;

namespace {

void setup_logging() {
  auto logger = spdlog::get("esnas");
  if (!logger) {
    logger = spdlog::stderr_logger_mt("esnas");
    spdlog::set_default_logger(logger);
  }
  const char* env = std::getenv("ESNAS_LOG");
  spdlog::set_level(env ? spdlog::level::from_str(env) : spdlog::level::warn);
}

Json violations_json(const std::vector<Violation>& violations) {
  Json out = Json::array();
  for (const auto& v : violations) {
    Json j;
    j["stage"] = v.stage;
    j["block"] = v.block;
    j["rule"] = v.rule;
    j["message"] = v.message;
    out.push_back(std::move(j));
  }
  return out;
}

int report_error(std::ostream& err, int code, const std::string& message,
                 const std::vector<Violation>& violations = {}) {
  Json body;
  body["code"] = code;
  body["message"] = message;
  if (!violations.empty()) body["violations"] = violations_json(violations);
  Json out;
  out["error"] = std::move(body);
  err << out.dump() << "\n";
  return code;
}

Json read_input_json(const std::string& path) {
  try {
    return read_json_file(path);
  } catch (const Error& e) {
    throw InputError(e.what());
  }
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ArchGenome load_genome(const std::string& path) {
  try {
    return genome_from_json(read_input_json(path));
  } catch (const InputError&) {
    throw;
  } catch (const std::exception& e) {
    throw InputError("invalid genome file '" + path + "': " + e.what());
  }
}

void emit(const std::string& text, const std::optional<std::string>& path,
          std::ostream& out) {
  if (path) {
    write_text_atomic(*path, text);
  } else {
    out << text;
  }
}

struct GlobalOptions {
  std::optional<std::string> config;
  std::uint64_t seed = 0;
  std::optional<std::string> out;
  int workers = 1;
  std::optional<std::string> budget_mode;
};

void apply_budget_mode(SearchSchedule& s, const std::string& mode) {
  Budget::Kind kind;
  if (mode == "wallclock") {
    kind = Budget::Kind::WallClockSeconds;
  } else if (mode == "evals") {
    kind = Budget::Kind::Evaluations;
  } else {
    throw InputError("--budget-mode must be wallclock or evals");
  }
  s.multistart_budget.kind = kind;
  s.phase_budget.kind = kind;
  s.total_budget.kind = kind;
}

void write_manifest(const fs::path& path, RunManifest manifest) {
  manifest.end_time = utc_timestamp();
  write_text_atomic(path.string(), dump_canonical(manifest_to_json(manifest)));
}

RunManifest start_manifest(const std::string& subcommand, const Json& config,
                           std::uint64_t seed) {
  RunManifest m;
  m.subcommand = subcommand;
  m.config_hash = config_hash(config);
  m.master_seed = seed;
  m.start_time = utc_timestamp();
  return m;
}

fs::path sibling(const std::string& file, const std::string& name) {
  const fs::path p(file);
  return p.has_parent_path() ? p.parent_path() / name : fs::path(name);
}

int cmd_score(const GlobalOptions& g, const std::string& arch_path,
              std::ostream& out, std::ostream& err) {
  const RunConfig rc = load_run_config(g.config, std::nullopt);
  const ArchGenome genome = load_genome(arch_path);
  if (auto v = validate(genome, rc.space); !v.empty()) {
    return report_error(err, kExitInvalidInput, "genome failed validation", v);
  }
  auto manifest = start_manifest("score", run_config_to_json(rc), g.seed);
  ScoreOptions opts;
  opts.workers = g.workers;
  const ScoreReport report = score_genome(
      genome, rc.space, rc.entropic, entropic_seeds(g.seed, rc.entropic.repeats),
      opts);
  emit(dump_canonical(report_to_json(report)), g.out, out);
  if (g.out) {
    manifest.outputs.push_back(*g.out);
    write_manifest(sibling(*g.out, "manifest.json"), manifest);
  }
  return kExitOk;
}

int cmd_stats(const GlobalOptions& g, const std::string& arch_path,
              const std::optional<std::string>& dump_path, std::ostream& out,
              std::ostream& err) {
  const std::string text = read_text(arch_path);
  Json parsed;
  try {
    parsed = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError("cannot parse '" + arch_path + "': " + e.what());
  }
  Json stats;
  std::optional<Graph> graph;
  RunConfig rc;
  if (parsed.is_object() && parsed.contains("nodes")) {
    try {
      graph = graph_from_spec(text, g.seed);
    } catch (const std::exception& e) {
      throw InputError(std::string("invalid graph spec: ") + e.what());
    }
    stats["kind"] = "graph";
    stats["params"] = graph->param_count();
    stats["macs"] = graph_macs(*graph);
  } else {
    rc = load_run_config(g.config, std::nullopt);
    ArchGenome genome;
    try {
      genome = genome_from_json(parsed);
    } catch (const std::exception& e) {
      throw InputError("invalid genome file '" + arch_path + "': " + e.what());
    }
    if (auto v = validate(genome, rc.space); !v.empty()) {
      return report_error(err, kExitInvalidInput, "genome failed validation", v);
    }
    const auto counts = count_params_detailed(genome, rc.space);
    graph = build_graph(genome, rc.space, g.seed);
    stats["kind"] = "genome";
    stats["params"] = counts.total;
    stats["norm_params"] = counts.norm;
    stats["macs"] = count_macs(genome, rc.space);
    stats["graph_params"] = graph->param_count();
    stats["graph_macs"] = graph_macs(*graph);
  }
  stats["nodes"] = graph->nodes.size();
  stats["activation_taps"] = graph->activation_taps.size();
  if (dump_path) write_text_atomic(*dump_path, dump_graph_json(*graph));
  emit(dump_canonical(stats), g.out, out);
  if (g.out) {
    auto manifest = start_manifest("stats", run_config_to_json(rc), g.seed);
    manifest.outputs.push_back(*g.out);
    if (dump_path) manifest.outputs.push_back(*dump_path);
    write_manifest(sibling(*g.out, "manifest.json"), manifest);
  }
  return kExitOk;
}

int cmd_search(const GlobalOptions& g, const std::optional<std::string>& preset,
               std::ostream& out, std::ostream& /*err*/) {
  RunConfig rc = load_run_config(g.config, preset);
  if (g.budget_mode) apply_budget_mode(rc.schedule, *g.budget_mode);
  try {
    require_valid_config(rc.space);
    require_valid(rc.schedule);
    require_valid(rc.entropic);
  } catch (const ValidationError&) {
    throw;
  } catch (const Error& e) {
    throw InputError(e.what());
  }
  const fs::path dir = g.out.value_or("search_out");
  const Json config_json = run_config_to_json(rc);
  auto manifest = start_manifest("search", config_json, g.seed);
  spdlog::info("search: max_params={} seed={}", rc.space.max_params, g.seed);

  const SearchResult result = cyclic_search(rc.space, rc.schedule, rc.entropic,
                                            g.seed, g.workers);

  CandidateScorer seeds_of(rc.space, rc.entropic, g.seed);
  ScoreOptions opts;
  opts.workers = g.workers;
  const ScoreReport best_report = score_genome(
      result.best.genome, rc.space, rc.entropic, seeds_of.seeds(), opts);

  std::string history;
  for (const auto& event : result.history) history += event.dump() + "\n";
  const auto p_genome = dir / "best_genome.json";
  const auto p_report = dir / "best_report.json";
  const auto p_history = dir / "history.ndjson";
  write_text_atomic(p_genome.string(),
                    dump_canonical(genome_to_json(result.best.genome)));
  write_text_atomic(p_report.string(), dump_canonical(report_to_json(best_report)));
  write_text_atomic(p_history.string(), history);
  manifest.outputs = {p_genome.string(), p_report.string(), p_history.string()};
  write_manifest(dir / "manifest.json", manifest);

  Json summary;
  summary["best_genome"] = p_genome.string();
  summary["final_phase"] = phase_name(result.final_phase);
  summary["params"] = best_report.params;
  summary["macs"] = best_report.macs;
  summary["entropic"] = best_report.entropic;
  summary["logsynflow"] = best_report.logsynflow;
  summary["evaluations"] = result.evaluations;
  out << summary.dump(2) << "\n";
  return kExitOk;
}

int cmd_correlate(const GlobalOptions& g, const std::string& bench_path,
                  const std::string& metric_arg,
                  const std::optional<std::size_t>& sample, std::ostream& out,
                  std::ostream& /*err*/) {
  const RunConfig rc = load_run_config(g.config, std::nullopt);
  MetricKind metric;
  try {
    metric = parse_metric(metric_arg);
  } catch (const Error& e) {
    throw InputError(e.what());
  }
  BenchmarkTable table;
  try {
    table = load_benchmark_csv(bench_path);
  } catch (const Error& e) {
    throw InputError(e.what());
  }
  if (sample) table = sample_rows(table, *sample, g.seed);
  if (table.entries.empty()) throw InputError("benchmark table has no valid rows");
  auto manifest = start_manifest("correlate", run_config_to_json(rc), g.seed);
  CorrelateOptions opts;
  opts.config = rc.space;
  opts.entropic = rc.entropic;
  opts.seed = g.seed;
  opts.workers = g.workers;
  CorrelationReport report;
  try {
    report = correlate_benchmark(table, metric, opts);
  } catch (const Error& e) {
    throw InputError(e.what());
  }
  emit(dump_canonical(correlation_to_json(report)), g.out, out);
  if (g.out) {
    const auto csv = sibling(*g.out, "scatter.csv");
    const auto svg = sibling(*g.out, "scatter.svg");
    write_text_atomic(csv.string(), scatter_csv(report));
    write_text_atomic(svg.string(), scatter_svg(report));
    manifest.outputs = {*g.out, csv.string(), svg.string()};
    write_manifest(sibling(*g.out, "manifest.json"), manifest);
  }
  return kExitOk;
}

}  // namespace

RunConfig load_run_config(const std::optional<std::string>& path,
                          const std::optional<std::string>& preset) {
  RunConfig rc;
  Json json = Json::object();
  if (path) json = read_input_json(*path);
  try {
    if (!json.is_object()) throw Error("config file must hold a JSON object");
    std::optional<std::string> name = preset;
    if (!name && json.contains("preset")) name = json.at("preset").get<std::string>();
    if (name) {
      rc.space = preset_config(*name);
      rc.schedule = preset_schedule(*name);
    }
    const bool sectioned = json.contains("search_space") ||
                           json.contains("schedule") || json.contains("entropic") ||
                           json.contains("preset");
    if (sectioned) {
      if (json.contains("search_space")) {
        rc.space = config_from_json(json.at("search_space"), rc.space);
      }
      if (json.contains("schedule")) {
        rc.schedule = schedule_from_json(json.at("schedule"), rc.schedule);
      }
      if (json.contains("entropic")) {
        rc.entropic = entropic_from_json(json.at("entropic"), rc.entropic);
      }
    } else {
      rc.space = config_from_json(json, rc.space);
    }
    if (preset) {
      // An explicit preset flag pins the parameter budget.
      rc.space.max_params = preset_config(*preset).max_params;
    }
  } catch (const std::exception& e) {
    throw InputError(std::string("invalid config: ") + e.what());
  }
  return rc;
}

Json run_config_to_json(const RunConfig& rc) {
  Json out;
  out["search_space"] = config_to_json(rc.space);
  out["schedule"] = schedule_to_json(rc.schedule);
  out["entropic"] = entropic_to_json(rc.entropic);
  return out;
}

std::string config_hash(const Json& canonical) {
  const std::string text = canonical.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

Json manifest_to_json(const RunManifest& m) {
  Json out;
  out["schema_version"] = kSchemaVersion;
  out["tool_version"] = m.tool_version;
  out["subcommand"] = m.subcommand;
  out["config_hash"] = m.config_hash;
  out["master_seed"] = m.master_seed;
  out["start_time"] = m.start_time;
  out["end_time"] = m.end_time;
  out["outputs"] = m.outputs;
  return out;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  setup_logging();
  CLI::App app{"Training-free architecture search with Entropic Score and "
               "LogSynflow", "esnas"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--config", g.config, "Run config JSON file");
  app.add_option("--seed", g.seed, "Master seed");
  app.add_option("--out", g.out, "Output file (score, stats, correlate) or "
                                 "directory (search)");
  app.add_option("--workers", g.workers, "Scoring threads; 1 is fully serial")
      ->check(CLI::PositiveNumber);
  app.add_option("--budget-mode", g.budget_mode,
                 "Interpret every budget as wallclock seconds or evaluations")
      ->check(CLI::IsMember({"wallclock", "evals"}));

  std::string arch;
  auto* score = app.add_subcommand("score", "Score one genome");
  score->add_option("--arch", arch, "Genome JSON file")->required();

  std::optional<std::string> preset;
  auto* search = app.add_subcommand("search", "Run the cyclic evolutionary search");
  search->add_option("--preset", preset, "S0, S1 or S2")
      ->check(CLI::IsMember({"S0", "S1", "S2"}));

  std::string bench;
  std::string metric = "entropic";
  std::optional<std::size_t> sample;
  auto* correlate =
      app.add_subcommand("correlate", "Rank-correlate a metric with accuracy");
  correlate->add_option("--bench", bench, "Benchmark CSV file")->required();
  correlate->add_option("--metric", metric, "entropic or logsynflow")
      ->check(CLI::IsMember({"entropic", "logsynflow"}));
  correlate->add_option("--sample", sample, "Use a random sample of N rows");

  std::optional<std::string> dump;
  auto* stats = app.add_subcommand("stats", "Parameter and MAC counts");
  stats->add_option("--arch", arch, "Genome JSON or graph spec file")->required();
  stats->add_option("--dump-graph", dump, "Write the graph node listing here");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return kExitOk;
    }
    return report_error(err, kExitInvalidInput, e.what());
  }

  try {
    if (score->parsed()) return cmd_score(g, arch, out, err);
    if (search->parsed()) return cmd_search(g, preset, out, err);
    if (correlate->parsed()) {
      return cmd_correlate(g, bench, metric, sample, out, err);
    }
    if (stats->parsed()) return cmd_stats(g, arch, dump, out, err);
  } catch (const ValidationError& e) {
    return report_error(err, kExitInvalidInput, e.what(), e.violations());
  } catch (const InputError& e) {
    return report_error(err, kExitInvalidInput, e.what());
  } catch (const nlohmann::json::exception& e) {
    return report_error(err, kExitInvalidInput, e.what());
  } catch (const std::exception& e) {
    return report_error(err, kExitInternal, e.what());
  }
  return kExitInternal;
}

}  // namespace esnas
