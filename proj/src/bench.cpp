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

#include "esnas/bench.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "esnas/rng.hpp"

namespace esnas {

namespace {

void check_inputs(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) {
    throw Error("correlation inputs differ in length (" +
                std::to_string(xs.size()) + " vs " + std::to_string(ys.size()) +
                ")");
  }
  if (xs.size() < 2) throw Error("correlation needs at least 2 points");
}

std::int64_t tie_pairs(std::int64_t run) { return run * (run - 1) / 2; }

// Sorts `v` in place and returns the number of inversions.
std::int64_t merge_count(std::vector<double>& v, std::vector<double>& buf,
                         std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::int64_t swaps = merge_count(v, buf, lo, mid) + merge_count(v, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      swaps += static_cast<std::int64_t>(mid - i);
      buf[k++] = v[j++];
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + lo, buf.begin() + hi, v.begin() + lo);
  return swaps;
}

double parse_double(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  double v;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw Error(what + " '" + s + "' is not a number");
  }
  while (used < s.size() && std::isspace(static_cast<unsigned char>(s[used]))) {
    ++used;
  }
  if (used != s.size()) throw Error(what + " '" + s + "' is not a number");
  return v;
}

std::string trim(std::string s) {
  auto ws = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && ws(s.back())) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && ws(s[i])) ++i;
  return s.substr(i);
}

}  // namespace

double kendall_tau(std::span<const double> xs, std::span<const double> ys) {
  check_inputs(xs, ys);
  const std::size_t n = xs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return xs[a] != xs[b] ? xs[a] < xs[b] : ys[a] < ys[b];
  });
  // Knight's algorithm.
  std::int64_t x_ties = 0, joint_ties = 0;
  std::int64_t run_x = 1, run_xy = 1;
  for (std::size_t i = 1; i < n; ++i) {
    const double px = xs[order[i - 1]], cx = xs[order[i]];
    const double py = ys[order[i - 1]], cy = ys[order[i]];
    if (cx == px) {
      ++run_x;
      if (cy == py) {
        ++run_xy;
      } else {
        joint_ties += tie_pairs(run_xy);
        run_xy = 1;
      }
    } else {
      x_ties += tie_pairs(run_x);
      joint_ties += tie_pairs(run_xy);
      run_x = 1;
      run_xy = 1;
    }
  }
  x_ties += tie_pairs(run_x);
  joint_ties += tie_pairs(run_xy);

  std::vector<double> sorted_y(n), buf(n);
  for (std::size_t i = 0; i < n; ++i) sorted_y[i] = ys[order[i]];
  const std::int64_t swaps = merge_count(sorted_y, buf, 0, n);
  std::int64_t y_ties = 0, run_y = 1;
  for (std::size_t i = 1; i < n; ++i) {
    if (sorted_y[i] == sorted_y[i - 1]) {
      ++run_y;
    } else {
      y_ties += tie_pairs(run_y);
      run_y = 1;
    }
  }
  y_ties += tie_pairs(run_y);

  const std::int64_t total = tie_pairs(static_cast<std::int64_t>(n));
  const std::int64_t concordant_minus_discordant =
      total - x_ties - y_ties + joint_ties - 2 * swaps;
  const std::int64_t untied_x = total - x_ties;
  const std::int64_t untied_y = total - y_ties;
  if (untied_x == 0 || untied_y == 0) {
    throw Error("kendall tau undefined: an input has all values equal");
  }
  return static_cast<double>(concordant_minus_discordant) /
         std::sqrt(static_cast<double>(untied_x) *
                   static_cast<double>(untied_y));
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return values[a] < values[b];
                   });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    // Positions i..j-1 (0-based) share rank mean((i+1)..j).
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

double spearman_rho(std::span<const double> xs, std::span<const double> ys) {
  check_inputs(xs, ys);
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  const double n = static_cast<double>(rx.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    const double dx = rx[i] - mx, dy = ry[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw Error("spearman rho undefined: an input has all values equal");
  }
  return sxy / std::sqrt(sxx * syy);
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false, field_started = false;
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    if (!(record.size() == 1 && record[0].empty())) {
      records.push_back(std::move(record));
    }
    record.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"' && !field_started) {
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n') {
      end_record();
    } else if (c != '\r') {
      field += c;
      field_started = true;
    }
  }
  if (quoted) throw Error("CSV ends inside a quoted field");
  if (field_started || !record.empty()) end_record();
  return records;
}

BenchmarkTable parse_benchmark_csv(const std::string& text) {
  const auto records = parse_csv(text);
  if (records.empty()) throw Error("benchmark CSV is empty");
  const auto& header = records.front();
  int col_id = -1, col_arch = -1, col_acc = -1;
  std::vector<std::pair<int, std::string>> score_cols;
  for (int c = 0; c < static_cast<int>(header.size()); ++c) {
    const std::string name = trim(header[c]);
    if (name == "id") {
      col_id = c;
    } else if (name == "arch_json") {
      col_arch = c;
    } else if (name == "accuracy") {
      col_acc = c;
    } else if (name.rfind("score_", 0) == 0 && name.size() > 6) {
      score_cols.emplace_back(c, name.substr(6));
    }
  }
  if (col_acc < 0) throw Error("benchmark CSV has no 'accuracy' column");
  if (col_arch < 0 && score_cols.empty()) {
    throw Error("benchmark CSV needs an 'arch_json' or 'score_<metric>' column");
  }
  BenchmarkTable table;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    const std::size_t row = r - 1;
    auto cell = [&](int c) -> std::string {
      return c >= 0 && c < static_cast<int>(rec.size()) ? rec[c] : "";
    };
    try {
      BenchmarkEntry e;
      e.id = col_id >= 0 ? trim(cell(col_id)) : std::to_string(row);
      e.accuracy = parse_double(trim(cell(col_acc)), "accuracy");
      if (!(e.accuracy >= 0.0 && e.accuracy <= 100.0)) {
        throw Error("accuracy " + trim(cell(col_acc)) + " outside [0, 100]");
      }
      for (const auto& [c, metric] : score_cols) {
        const std::string v = trim(cell(c));
        if (!v.empty()) {
          e.precomputed_scores[metric] = parse_double(v, "score_" + metric);
        }
      }
      if (col_arch >= 0) {
        const std::string arch = trim(cell(col_arch));
        if (!arch.empty()) {
          try {
            e.arch = genome_from_json(Json::parse(arch));
          } catch (const std::exception& ex) {
            e.arch_error = ex.what();
          }
        }
      }
      table.entries.push_back(std::move(e));
    } catch (const std::exception& ex) {
      table.load_errors.push_back({row, ex.what()});
    }
  }
  return table;
}

BenchmarkTable load_benchmark_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_benchmark_csv(ss.str());
}

BenchmarkTable sample_rows(const BenchmarkTable& table, std::size_t n,
                           std::uint64_t seed) {
  if (n >= table.entries.size()) return table;
  std::vector<std::size_t> idx(table.entries.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng = make_rng(seed, 0x73616d706c65ULL);
  for (std::size_t i = 0; i < n; ++i) {
    std::swap(idx[i], idx[i + uniform_index(rng, idx.size() - i)]);
  }
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  BenchmarkTable out;
  out.load_errors = table.load_errors;
  for (std::size_t i : idx) out.entries.push_back(table.entries[i]);
  return out;
}

Json correlation_to_json(const CorrelationReport& r) {
  Json out;
  out["schema_version"] = kSchemaVersion;
  out["metric_name"] = r.metric_name;
  out["kendall_tau"] = r.kendall_tau;
  out["spearman_rho"] = r.spearman_rho;
  out["n"] = r.n;
  out["ties_policy"] = r.ties_policy;
  out["skipped"] = r.skipped;
  Json errors = Json::array();
  for (const auto& e : r.errors) {
    Json j;
    j["row"] = e.row;
    j["message"] = e.message;
    errors.push_back(std::move(j));
  }
  out["errors"] = std::move(errors);
  return out;
}

CorrelationReport correlate_benchmark(const BenchmarkTable& table,
                                      MetricKind metric,
                                      const CorrelateOptions& options) {
  if (table.entries.empty()) throw Error("benchmark table has no rows");
  CorrelationReport report;
  report.metric_name = metric_name(metric);
  report.errors = table.load_errors;
  const auto seeds = entropic_seeds(options.seed, options.entropic.repeats);
  for (std::size_t row = 0; row < table.entries.size(); ++row) {
    const auto& e = table.entries[row];
    if (auto it = e.precomputed_scores.find(report.metric_name);
        it != e.precomputed_scores.end()) {
      report.points.emplace_back(it->second, e.accuracy);
      continue;
    }
    try {
      if (!e.arch) {
        throw Error(e.arch_error.empty()
                        ? "no architecture and no precomputed score"
                        : "architecture not instantiable: " + e.arch_error);
      }
      ScoreOptions opts;
      opts.entropic = metric == MetricKind::Entropic;
      opts.logsynflow = metric == MetricKind::LogSynflow;
      opts.workers = options.workers;
      const auto r =
          score_genome(*e.arch, options.config, options.entropic, seeds, opts);
      report.points.emplace_back(opts.entropic ? r.entropic : r.logsynflow,
                                 e.accuracy);
    } catch (const std::exception& ex) {
      report.errors.push_back({row, ex.what()});
    }
  }
  report.skipped = static_cast<std::int64_t>(report.errors.size());
  report.n = static_cast<std::int64_t>(report.points.size());
  // Canonical order keeps the result independent of row order.
  auto sorted = report.points;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> xs, ys;
  for (const auto& [s, a] : sorted) {
    xs.push_back(s);
    ys.push_back(a);
  }
  report.kendall_tau = kendall_tau(xs, ys);
  report.spearman_rho = spearman_rho(xs, ys);
  return report;
}

std::string scatter_csv(const CorrelationReport& report) {
  std::ostringstream os;
  os.precision(17);
  os << "score,accuracy\n";
  for (const auto& [s, a] : report.points) os << s << ',' << a << '\n';
  return os.str();
}

std::string scatter_svg(const CorrelationReport& report) {
  constexpr double kW = 480, kH = 360, kPad = 40;
  double xmin = 0, xmax = 1, ymin = 0, ymax = 100;
  if (!report.points.empty()) {
    xmin = xmax = report.points.front().first;
    ymin = ymax = report.points.front().second;
    for (const auto& [x, y] : report.points) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW
     << "\" height=\"" << kH << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 8
     << "\" text-anchor=\"middle\" font-size=\"12\">" << report.metric_name
     << "</text>\n";
  os << "<text x=\"12\" y=\"" << kH / 2 << "\" font-size=\"12\" transform=\"rotate(-90 12 "
     << kH / 2 << ")\" text-anchor=\"middle\">accuracy</text>\n";
  for (const auto& [x, y] : report.points) {
    const double px = kPad + (x - xmin) / (xmax - xmin) * (kW - 2 * kPad);
    const double py = kH - kPad - (y - ymin) / (ymax - ymin) * (kH - 2 * kPad);
    os << "<circle cx=\"" << px << "\" cy=\"" << py
       << "\" r=\"2\" fill=\"steelblue\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace esnas
