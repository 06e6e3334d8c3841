#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "gnnmp/errors.hpp"
#include "gnnmp/explorer.hpp"
#include "gnnmp/planners.hpp"
#include "gnnmp/report.hpp"

namespace gnnmp {

// ---------------------------------------------------------------------------
// Suites

/// A named planner configuration; the name fills the CSV planner column.
struct SuiteEntry {
  std::string name;
  PlannerConfig config;
};

struct SuiteOptions {
  std::vector<std::uint64_t> seeds{0};
  PlannerModels models;
  std::size_t workers = 1;
  /// Problem ids; defaults to problem_NNNN by position.
  std::vector<std::string> ids;
};

struct PlannerSummary {
  std::string planner;
  std::size_t runs = 0;
  std::size_t successes = 0;
  double success_rate = 0.0;
  double mean_checks = 0.0;
  double sd_checks = 0.0;
  double mean_cost = 0.0;  // over the common-success subset
  double sd_cost = 0.0;
  double mean_wall_ms = 0.0;
  double sd_wall_ms = 0.0;
  double mean_samples = 0.0;
};

struct SuiteSummary {
  std::vector<PlannerSummary> planners;
  std::size_t common_success = 0;  // (problem, seed) pairs every planner solved
};

struct SuiteResult {
  std::vector<RunReport> runs;
  SuiteSummary summary;
};

namespace detail {

inline std::string default_problem_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "problem_%04zu", i);
  return buf;
}

inline std::pair<double, double> mean_sd(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  return {m, xs.size() > 1 ? std::sqrt(v / static_cast<double>(xs.size() - 1)) : 0.0};
}

}  // namespace detail

/// Aggregates runs per planner (in first-appearance order). Costs average over the (problem, seed)
/// pairs that every planner solved.
inline SuiteSummary summarize(const std::vector<RunReport>& runs) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const RunReport*>> by_planner;
  std::map<std::pair<std::string, std::uint64_t>, std::size_t> solved_by;
  for (const auto& r : runs) {
    if (!by_planner.count(r.planner)) order.push_back(r.planner);
    by_planner[r.planner].push_back(&r);
    if (r.success) ++solved_by[{r.problem_id, r.seed}];
  }
  SuiteSummary s;
  std::map<std::pair<std::string, std::uint64_t>, bool> common;
  for (const auto& [key, n] : solved_by) {
    if (n == order.size()) common[key] = true;
  }
  s.common_success = common.size();
  for (const auto& name : order) {
    PlannerSummary p;
    p.planner = name;
    std::vector<double> checks, costs, wall, samples;
    for (const RunReport* r : by_planner[name]) {
      ++p.runs;
      p.successes += r->success;
      checks.push_back(static_cast<double>(r->edge_checks));
      wall.push_back(r->wall_ms);
      samples.push_back(static_cast<double>(r->samples));
      if (r->success && common.count({r->problem_id, r->seed})) costs.push_back(r->path_cost);
    }
    p.success_rate = p.runs ? static_cast<double>(p.successes) / static_cast<double>(p.runs) : 0.0;
    std::tie(p.mean_checks, p.sd_checks) = detail::mean_sd(checks);
    std::tie(p.mean_cost, p.sd_cost) = detail::mean_sd(costs);
    std::tie(p.mean_wall_ms, p.sd_wall_ms) = detail::mean_sd(wall);
    p.mean_samples = detail::mean_sd(samples).first;
    s.planners.push_back(p);
  }
  return s;
}

inline const PlannerSummary& summary_of(const SuiteSummary& s, const std::string& planner) {
  for (const auto& p : s.planners) {
    if (p.planner == planner) return p;
  }
  throw InvalidInput("no summary for planner " + planner);
}

/// One run on a private copy of the problem, so the checks ledger belongs to this run alone.
/// Exceptions become failed runs carrying the message.
inline RunReport run_one(const Problem& problem, const std::string& id, const SuiteEntry& entry, std::uint64_t seed,
                         const PlannerModels& models) {
  Problem own = problem;
  const std::uint64_t checks0 = own.env.check_count();
  PlannerConfig c = entry.config;
  c.seed = seed;
  RunReport r;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    r = plan(own, c, models).report;
  } catch (const std::exception& e) {
    r = RunReport{};
    r.success = false;
    r.edge_checks = own.env.check_count() - checks0;
    r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    r.diagnostic = e.what();
  }
  r.problem_id = id;
  r.planner = entry.name;
  r.seed = seed;
  return r;
}

/// Cross product problems x entries x seeds. Rows are ordered problem-major, then entry, then seed,
/// regardless of the worker count.
inline SuiteResult run_suite(const std::vector<Problem>& problems, const std::vector<SuiteEntry>& entries,
                             const SuiteOptions& opts) {
  if (problems.empty()) throw InvalidInput("suite needs at least one problem");
  if (entries.empty()) throw InvalidInput("suite needs at least one planner");
  if (opts.seeds.empty()) throw InvalidInput("suite needs at least one seed");
  if (!opts.ids.empty() && opts.ids.size() != problems.size()) throw InvalidInput("one id per problem required");
  for (const auto& e : entries) e.config.validate();
  struct Job {
    std::size_t problem, entry, seed;
  };
  std::vector<Job> jobs;
  for (std::size_t p = 0; p < problems.size(); ++p)
    for (std::size_t e = 0; e < entries.size(); ++e)
      for (std::size_t s = 0; s < opts.seeds.size(); ++s) jobs.push_back({p, e, s});
  SuiteResult out;
  out.runs.resize(jobs.size());
  auto work = [&](std::size_t j) {
    const Job& job = jobs[j];
    const std::string id = opts.ids.empty() ? detail::default_problem_id(job.problem) : opts.ids[job.problem];
    out.runs[j] = run_one(problems[job.problem], id, entries[job.entry], opts.seeds[job.seed], opts.models);
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(opts.workers, jobs.size()));
  if (workers == 1) {
    for (std::size_t j = 0; j < jobs.size(); ++j) work(j);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t j = next++; j < jobs.size(); j = next++) work(j);
      });
    for (auto& t : pool) t.join();
  }
  out.summary = summarize(out.runs);
  return out;
}

// ---------------------------------------------------------------------------
// CSV

inline constexpr const char* kRunsCsvSchema = "# gnnmp-runs v1";
inline constexpr const char* kRunsCsvHeader = "problem_id,planner,seed,success,edge_checks,path_cost,wall_ms,samples";

namespace detail {

inline std::string exact(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

}  // namespace detail

/// Per-run CSV. Wall time is the one nondeterministic column; `timing = false` writes it as 0 so that
/// reruns can be compared byte for byte.
inline std::string runs_csv(const std::vector<RunReport>& runs, bool timing = true) {
  std::ostringstream out;
  out << kRunsCsvSchema << '\n' << kRunsCsvHeader << '\n';
  for (const auto& r : runs) {
    out << r.problem_id << ',' << r.planner << ',' << r.seed << ',' << (r.success ? 1 : 0) << ',' << r.edge_checks << ','
        << detail::exact(r.path_cost) << ',' << (timing ? detail::exact(r.wall_ms) : "0") << ',' << r.samples << '\n';
  }
  return out.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write " + path);
  f << text;
  if (!f) throw FormatError("failed writing " + path);
}

inline std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot read " + path);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

inline std::vector<RunReport> parse_runs_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kRunsCsvSchema) throw FormatError("runs CSV: missing schema line");
  if (!std::getline(in, line) || line != kRunsCsvHeader) throw FormatError("runs CSV: unexpected header");
  std::vector<RunReport> runs;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = detail::split(line, ',');
    if (f.size() != 8) throw FormatError("runs CSV: expected 8 fields in: " + line);
    RunReport r;
    try {
      r.problem_id = f[0];
      r.planner = f[1];
      r.seed = std::stoull(f[2]);
      r.success = f[3] == "1";
      r.edge_checks = std::stoull(f[4]);
      r.path_cost = std::stod(f[5]);
      r.wall_ms = std::stod(f[6]);
      r.samples = std::stoull(f[7]);
    } catch (const std::logic_error&) {
      throw FormatError("runs CSV: bad number in: " + line);
    }
    runs.push_back(std::move(r));
  }
  return runs;
}

inline std::string format_summary(const SuiteSummary& s) {
  std::ostringstream out;
  out << std::left << std::setw(18) << "planner" << std::right << std::setw(9) << "success" << std::setw(12) << "checks"
      << std::setw(10) << "sd" << std::setw(10) << "cost" << std::setw(9) << "sd" << std::setw(11) << "wall_ms" << std::setw(9)
      << "samples" << '\n';
  out << std::fixed;
  for (const auto& p : s.planners) {
    out << std::left << std::setw(18) << p.planner << std::right << std::setprecision(3) << std::setw(9) << p.success_rate
        << std::setprecision(1) << std::setw(12) << p.mean_checks << std::setw(10) << p.sd_checks << std::setprecision(3)
        << std::setw(10) << p.mean_cost << std::setw(9) << p.sd_cost << std::setprecision(1) << std::setw(11) << p.mean_wall_ms
        << std::setw(9) << p.mean_samples << '\n';
  }
  out << "common-success pairs: " << s.common_success << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// Ablations

struct AblationRow {
  std::size_t setting = 0;
  PlannerSummary summary;
};

struct ProbingAblation {
  std::vector<AblationRow> rows;
  bool success_nondecreasing = false;  // within one problem of noise per seed
  bool checks_increasing = false;
  double cost_spread = 0.0;  // (max - min) / min of common-success mean cost
  bool cost_stable = false;  // spread < 15%
  bool trends_hold() const { return success_nondecreasing && checks_increasing && cost_stable; }
};

struct K0Ablation {
  std::vector<AblationRow> rows;
  bool low_k_degrades = false;  // k0 = 1 solves fewer than k0 = 10
  double cost_slope = 0.0;      // least-squares slope of mean cost against log k0
  bool cost_nonincreasing = false;
};

namespace detail {

inline std::vector<AblationRow> sweep(const std::vector<Problem>& problems, const SuiteEntry& base,
                                      const std::vector<std::size_t>& settings, const SuiteOptions& opts,
                                      const std::function<void(PlannerConfig&, std::size_t)>& apply, const std::string& label,
                                      std::vector<RunReport>* runs_out) {
  std::vector<SuiteEntry> entries;
  for (std::size_t s : settings) {
    SuiteEntry e = base;
    e.name = base.name + "@" + label + "=" + std::to_string(s);
    apply(e.config, s);
    entries.push_back(std::move(e));
  }
  SuiteResult res = run_suite(problems, entries, opts);
  std::vector<AblationRow> rows;
  for (std::size_t i = 0; i < settings.size(); ++i) rows.push_back({settings[i], summary_of(res.summary, entries[i].name)});
  if (runs_out) *runs_out = std::move(res.runs);
  return rows;
}

}  // namespace detail

inline const std::vector<std::size_t> kProbingSamples{100, 200, 300, 500, 1000};
inline const std::vector<std::size_t> kK0Settings{1, 2, 4, 10, 20, 40};

/// Probing-sample sweep. Each setting plans on a single graph of that many samples (batch = budget).
inline ProbingAblation ablation_probing(const std::vector<Problem>& problems, const SuiteEntry& base, const SuiteOptions& opts,
                                        const std::vector<std::size_t>& samples = kProbingSamples,
                                        std::vector<RunReport>* runs = nullptr) {
  if (samples.empty()) throw InvalidInput("probing sweep needs settings");
  ProbingAblation a;
  a.rows = detail::sweep(
      problems, base, samples, opts,
      [](PlannerConfig& c, std::size_t s) {
        c.batch_size = s;
        c.max_samples = s;
      },
      "samples", runs);
  const std::size_t tolerance = opts.seeds.size();
  a.success_nondecreasing = a.checks_increasing = true;
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    const auto& r = a.rows[i].summary;
    lo = std::min(lo, r.mean_cost);
    hi = std::max(hi, r.mean_cost);
    if (i == 0) continue;
    const auto& prev = a.rows[i - 1].summary;
    if (r.successes + tolerance < prev.successes) a.success_nondecreasing = false;
    if (!(r.mean_checks > prev.mean_checks)) a.checks_increasing = false;
  }
  a.cost_spread = lo > 0.0 ? (hi - lo) / lo : std::numeric_limits<double>::infinity();
  a.cost_stable = a.cost_spread < 0.15;
  return a;
}

inline K0Ablation ablation_k0(const std::vector<Problem>& problems, const SuiteEntry& base, const SuiteOptions& opts,
                              const std::vector<std::size_t>& k0s = kK0Settings, std::vector<RunReport>* runs = nullptr) {
  if (k0s.empty()) throw InvalidInput("k0 sweep needs settings");
  K0Ablation a;
  a.rows = detail::sweep(
      problems, base, k0s, opts, [](PlannerConfig& c, std::size_t k) { c.k0 = k; }, "k0", runs);
  std::optional<std::size_t> s1, s10;
  std::vector<double> xs, ys;
  for (const auto& r : a.rows) {
    if (r.setting == 1) s1 = r.summary.successes;
    if (r.setting == 10) s10 = r.summary.successes;
    xs.push_back(std::log(static_cast<double>(r.setting)));
    ys.push_back(r.summary.mean_cost);
  }
  a.low_k_degrades = s1 && s10 && *s1 < *s10;
  const double mx = detail::mean_sd(xs).first, my = detail::mean_sd(ys).first;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  a.cost_slope = sxx > 0.0 ? sxy / sxx : 0.0;
  a.cost_nonincreasing = a.cost_slope <= 0.0;
  return a;
}

inline std::string format_ablation(const std::vector<AblationRow>& rows, const std::string& label) {
  std::ostringstream out;
  out << label << ",success_rate,mean_checks,mean_cost,mean_wall_ms\n";
  for (const auto& r : rows)
    out << r.setting << ',' << detail::exact(r.summary.success_rate) << ',' << detail::exact(r.summary.mean_checks) << ','
        << detail::exact(r.summary.mean_cost) << ',' << detail::exact(r.summary.mean_wall_ms) << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// SVG

/// 2D scene: obstacles, free and collided samples, checked edges (green), tree edges (darker green),
/// the path (red) when given, start and goal.
inline std::string render_svg(const Problem& problem, const Rgg* graph, const Tree* tree, const std::optional<Path>& path,
                              double size = 600.0) {
  if (problem.env.dim() != 2) throw UnsupportedDimension("SVG rendering needs a 2D problem");
  auto X = [&](double x) { return detail::exact(x * size); };
  auto Y = [&](double y) { return detail::exact((1.0 - y) * size); };
  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size << "\" viewBox=\"0 0 " << size
    << ' ' << size << "\">\n";
  o << "<rect x=\"0\" y=\"0\" width=\"" << size << "\" height=\"" << size << "\" fill=\"white\" stroke=\"black\"/>\n";
  o << "<g id=\"obstacles\" fill=\"#555555\">\n";
  for (const auto& b : problem.env.obstacles()) {
    const double x0 = b.center[0] - b.half_extent[0], y1 = b.center[1] + b.half_extent[1];
    o << "<rect x=\"" << X(x0) << "\" y=\"" << Y(y1) << "\" width=\"" << detail::exact(2 * b.half_extent[0] * size) << "\" height=\""
      << detail::exact(2 * b.half_extent[1] * size) << "\"/>\n";
  }
  o << "</g>\n";
  auto line = [&](const Config& a, const Config& b, const char* attrs) {
    o << "<line x1=\"" << X(a[0]) << "\" y1=\"" << Y(a[1]) << "\" x2=\"" << X(b[0]) << "\" y2=\"" << Y(b[1]) << "\" " << attrs
      << "/>\n";
  };
  if (graph) {
    o << "<g id=\"samples\">\n";
    for (std::size_t v = 0; v < graph->num_vertices(); ++v) {
      if (v == graph->start || v == graph->goal) continue;
      const bool collided = graph->labels[v] == VertexLabel::Collided;
      o << "<circle cx=\"" << X(graph->vertices[v][0]) << "\" cy=\"" << Y(graph->vertices[v][1]) << "\" r=\"2\" fill=\""
        << (collided ? "#d08020" : "#3060c0") << "\"/>\n";
    }
    o << "</g>\n<g id=\"checked\">\n";
    for (const auto& e : graph->edges) {
      if (e.status == EdgeStatus::Free)
        line(graph->vertices[e.u], graph->vertices[e.v], "stroke=\"#30b030\" stroke-width=\"1\"");
      else if (e.status == EdgeStatus::Blocked)
        line(graph->vertices[e.u], graph->vertices[e.v], "stroke=\"#30b030\" stroke-width=\"1\" stroke-dasharray=\"3,2\"");
    }
    if (tree) {
      for (const auto& [a, b] : tree->edges())
        line(graph->vertices[a], graph->vertices[b], "stroke=\"#107010\" stroke-width=\"2\"");
    }
    o << "</g>\n";
  }
  if (path && path->configs.size() >= 2) {
    o << "<polyline id=\"path\" fill=\"none\" stroke=\"red\" stroke-width=\"3\" points=\"";
    for (std::size_t i = 0; i < path->configs.size(); ++i)
      o << (i ? " " : "") << X(path->configs[i][0]) << ',' << Y(path->configs[i][1]);
    o << "\"/>\n";
  }
  o << "<circle id=\"start\" cx=\"" << X(problem.start[0]) << "\" cy=\"" << Y(problem.start[1])
    << "\" r=\"6\" fill=\"black\"/>\n";
  o << "<rect id=\"goal\" x=\"" << detail::exact(problem.goal[0] * size - 6) << "\" y=\""
    << detail::exact((1.0 - problem.goal[1]) * size - 6) << "\" width=\"12\" height=\"12\" fill=\"#c02020\"/>\n";
  o << "</svg>\n";
  return o.str();
}

/// Explores a problem with the explorer and renders the outcome; the path is drawn only on success.
inline std::string render_run_svg(const Problem& problem, const ExploreResult& run) {
  return render_svg(problem, &run.graph, &run.tree, run.path);
}

}  // namespace gnnmp
