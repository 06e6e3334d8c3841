#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "gnnmp/env.hpp"
#include "gnnmp/explorer.hpp"
#include "gnnmp/graph.hpp"
#include "gnnmp/report.hpp"
#include "gnnmp/sampling.hpp"
#include "gnnmp/smoother.hpp"

namespace gnnmp {

enum class PlannerKind { RrtStar, LazySp, BitLite, Gnn, GnnSmooth };
enum class SmootherMode { Gnn, Oracle, None };

inline const char* to_string(PlannerKind k) {
  switch (k) {
    case PlannerKind::RrtStar: return "rrt_star";
    case PlannerKind::LazySp: return "lazy_sp";
    case PlannerKind::BitLite: return "bit_lite";
    case PlannerKind::Gnn: return "gnn";
    case PlannerKind::GnnSmooth: return "gnn_smooth";
  }
  return "?";
}

inline PlannerKind parse_planner_kind(const std::string& s) {
  for (auto k : {PlannerKind::RrtStar, PlannerKind::LazySp, PlannerKind::BitLite, PlannerKind::Gnn, PlannerKind::GnnSmooth})
    if (s == to_string(k)) return k;
  throw InvalidInput("unknown planner: " + s);
}

inline const char* to_string(SmootherMode m) {
  switch (m) {
    case SmootherMode::Gnn: return "gnn";
    case SmootherMode::Oracle: return "oracle";
    case SmootherMode::None: return "none";
  }
  return "?";
}

inline SmootherMode parse_smoother_mode(const std::string& s) {
  for (auto m : {SmootherMode::Gnn, SmootherMode::Oracle, SmootherMode::None})
    if (s == to_string(m)) return m;
  throw InvalidInput("unknown smoother mode: " + s);
}

struct PlannerConfig {
  PlannerKind kind = PlannerKind::Gnn;
  double step = 0.05;
  std::size_t batch_size = 100;
  std::size_t max_samples = 1000;
  std::size_t k0 = 10;
  double goal_bias = 0.05;
  std::uint64_t seed = 0;
  double heuristic_weight = 1.0;  // bit_lite: 0 gives Dijkstra order
  SmootherMode smoother = SmootherMode::Gnn;
  SmoothOptions smooth;
  std::size_t oracle_rounds = 5;
  std::size_t oracle_iters = 200;

  void validate() const {
    if (!(step > 0.0)) throw InvalidInput("step size must be positive");
    // RRT* reads max_samples as its iteration budget, which may be zero.
    if (kind != PlannerKind::RrtStar && (batch_size < 1 || max_samples < batch_size))
      throw InvalidInput("need 1 <= batch_size <= max_samples");
    if (k0 < 1) throw InvalidInput("k0 must be positive");
    if (!(goal_bias >= 0.0 && goal_bias <= 1.0)) throw InvalidInput("goal bias must lie in [0, 1]");
    if (!(heuristic_weight >= 0.0)) throw InvalidInput("heuristic weight must be non-negative");
  }
};

struct PlanResult {
  std::optional<Path> path;
  RunReport report;
};

namespace detail {

inline Path path_from_configs(std::vector<Config> configs) {
  Path p;
  p.configs = std::move(configs);
  return p;
}

inline void finish_report(RunReport& r, const char* planner, const PlannerConfig& c, const Environment& env,
                          std::uint64_t checks0, std::chrono::steady_clock::time_point t0, const std::optional<Path>& path) {
  r.planner = planner;
  r.seed = c.seed;
  r.success = path.has_value();
  r.path_cost = path ? path->cost() : 0.0;
  r.edge_checks = env.check_count() - checks0;
  r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

/// RRT*: goal-biased uniform sampling, steering by `step`, choose-parent and rewiring within
/// r = min(step, gamma (log n / n)^(1/d)). Runs the full sample budget and returns the best goal path.
inline PlanResult rrt_star(const Problem& problem, const PlannerConfig& c) {
  c.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const Environment& env = problem.env;
  const std::uint64_t checks0 = env.check_count();
  const std::size_t d = env.dim();
  Rng rng(derive_seed(problem.seed, derive_seed(c.seed, 0x4A7)));
  // gamma above the asymptotic-optimality bound (2 (1 + 1/d))^(1/d) (mu(X) / zeta_d)^(1/d) with mu(X) = 1.
  const double zeta = std::pow(std::numbers::pi, d / 2.0) / std::tgamma(d / 2.0 + 1.0);
  const double gamma = 1.1 * std::pow(2.0 * (1.0 + 1.0 / d), 1.0 / d) * std::pow(1.0 / zeta, 1.0 / d);

  std::vector<Config> nodes = {problem.start};
  std::vector<std::size_t> parent = {Tree::kNone};
  std::vector<double> cost = {0.0};
  std::vector<std::vector<std::size_t>> children(1);
  std::size_t goal_node = Tree::kNone;

  auto propagate = [&](std::size_t root, double delta) {
    std::vector<std::size_t> stack = {root};
    while (!stack.empty()) {
      const std::size_t v = stack.back();
      stack.pop_back();
      for (std::size_t ch : children[v]) {
        cost[ch] += delta;
        stack.push_back(ch);
      }
    }
  };

  for (std::size_t it = 0; it < c.max_samples; ++it) {
    const Config sample = rng.uniform() < c.goal_bias ? problem.goal : random_config(d, rng);
    std::size_t nearest = 0;
    double best = squared_distance(nodes[0], sample);
    for (std::size_t i = 1; i < nodes.size(); ++i) {
      const double s = squared_distance(nodes[i], sample);
      if (s < best) {
        best = s;
        nearest = i;
      }
    }
    const double dist = std::sqrt(best);
    if (dist == 0.0) continue;
    const Config x_new = dist <= c.step ? sample : lerp(nodes[nearest], sample, c.step / dist);
    if (!env.point_free(x_new)) continue;
    const bool is_goal = x_new == problem.goal;
    if (is_goal && goal_node != Tree::kNone) continue;

    const double n = static_cast<double>(nodes.size() + 1);
    const double radius = std::min(c.step, gamma * std::pow(std::log(n) / n, 1.0 / d));
    std::vector<std::size_t> near;
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (squared_distance(nodes[i], x_new) <= radius * radius) near.push_back(i);
    // Nearest is always a candidate even when the radius shrinks below the steering distance.
    if (std::find(near.begin(), near.end(), nearest) == near.end()) near.push_back(nearest);

    std::vector<char> free_to(near.size());
    std::size_t best_parent = Tree::kNone;
    double best_cost = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < near.size(); ++j) {
      free_to[j] = env.segment_free(nodes[near[j]], x_new);
      const double through = cost[near[j]] + distance(nodes[near[j]], x_new);
      if (free_to[j] && through < best_cost) {
        best_cost = through;
        best_parent = near[j];
      }
    }
    if (best_parent == Tree::kNone) continue;
    const std::size_t id = nodes.size();
    nodes.push_back(x_new);
    parent.push_back(best_parent);
    cost.push_back(best_cost);
    children.emplace_back();
    children[best_parent].push_back(id);
    if (is_goal) goal_node = id;
    for (std::size_t j = 0; j < near.size(); ++j) {
      const std::size_t v = near[j];
      if (!free_to[j] || v == best_parent) continue;
      const double through = best_cost + distance(x_new, nodes[v]);
      if (through < cost[v]) {
        auto& sib = children[parent[v]];
        sib.erase(std::find(sib.begin(), sib.end(), v));
        parent[v] = id;
        children[id].push_back(v);
        const double delta = through - cost[v];
        cost[v] = through;
        propagate(v, delta);
      }
    }
  }

  PlanResult res;
  if (goal_node != Tree::kNone) {
    std::vector<Config> configs;
    for (std::size_t v = goal_node; v != Tree::kNone; v = parent[v]) configs.push_back(nodes[v]);
    std::reverse(configs.begin(), configs.end());
    res.path = detail::path_from_configs(std::move(configs));
  }
  res.report.samples = c.max_samples;
  detail::finish_report(res.report, "rrt_star", c, env, checks0, t0, res.path);
  return res;
}

/// LazySP over the batch-sampled RGG: shortest path with unknown edges assumed free, check its unknown
/// edges in order, and restart on the first failure. A new batch is sampled when start and goal disconnect.
inline PlanResult lazy_sp(const Problem& problem, const PlannerConfig& c) {
  c.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const Environment& env = problem.env;
  const std::uint64_t checks0 = env.check_count();
  SampleStream stream(env, problem.seed, c.seed);
  BatchGraph builder(problem.start, problem.goal, c.k0);
  Rgg g = builder.add_batch(stream.next(c.batch_size), nullptr);
  PlanResult res;
  while (true) {
    auto candidate = dijkstra(g, g.start, g.goal, optimistic_edge);
    if (!candidate) {
      if (builder.num_free_samples() + c.batch_size > c.max_samples) break;
      g = builder.add_batch(stream.next(c.batch_size), &g);
      continue;
    }
    bool ok = true;
    for (std::size_t i = 1; i < candidate->vertices.size() && ok; ++i) {
      Edge& e = g.edges[*g.find_edge(candidate->vertices[i - 1], candidate->vertices[i])];
      if (e.status != EdgeStatus::Unknown) continue;
      ok = env.segment_free(g.vertices[e.u], g.vertices[e.v]);
      e.status = ok ? EdgeStatus::Free : EdgeStatus::Blocked;
    }
    if (ok) {
      res.path = std::move(candidate);
      break;
    }
  }
  res.report.samples = builder.num_free_samples();
  detail::finish_report(res.report, "lazy_sp", c, env, checks0, t0, res.path);
  return res;
}

/// Batch best-first tree growth: an edge queue ordered by g(u) + c(u, v) + w h(v) with the Euclidean cost
/// to go as h. Edges are checked lazily when popped; a new batch is sampled when the queue runs dry.
inline PlanResult bit_lite(const Problem& problem, const PlannerConfig& c) {
  c.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const Environment& env = problem.env;
  const std::uint64_t checks0 = env.check_count();
  SampleStream stream(env, problem.seed, c.seed);
  BatchGraph builder(problem.start, problem.goal, c.k0);
  Rgg g = builder.add_batch(stream.next(c.batch_size), nullptr);
  PlanResult res;
  struct Item {
    double key;
    std::size_t directed;
    bool operator>(const Item& o) const { return key > o.key || (key == o.key && directed > o.directed); }
  };
  while (!res.path) {
    const std::size_t nv = g.num_vertices();
    std::vector<double> cost_to(nv, std::numeric_limits<double>::infinity());
    std::vector<std::size_t> parent(nv, Tree::kNone);
    std::vector<char> in_tree(nv, 0);
    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
    auto expand = [&](std::size_t v) {
      for (std::size_t e : g.incident[v]) {
        const Edge& edge = g.edges[e];
        const std::size_t w = edge.other(v);
        if (!edge.traversable || edge.status == EdgeStatus::Blocked || in_tree[w]) continue;
        const double key = cost_to[v] + edge.length + c.heuristic_weight * distance(g.vertices[w], g.vertices[g.goal]);
        queue.push({key, Rgg::directed_from(edge, e, v)});
      }
    };
    cost_to[g.start] = 0.0;
    in_tree[g.start] = 1;
    expand(g.start);
    while (!queue.empty()) {
      const Item item = queue.top();
      queue.pop();
      const std::size_t u = g.source(item.directed);
      const std::size_t v = g.target(item.directed);
      if (in_tree[v]) continue;
      Edge& edge = g.edges[undirected_of(item.directed)];
      if (edge.status == EdgeStatus::Unknown) {
        edge.status = env.segment_free(g.vertices[u], g.vertices[v]) ? EdgeStatus::Free : EdgeStatus::Blocked;
      }
      if (edge.status != EdgeStatus::Free) continue;
      in_tree[v] = 1;
      parent[v] = u;
      cost_to[v] = cost_to[u] + edge.length;
      if (v == g.goal) {
        Path p;
        for (std::size_t w = v; w != Tree::kNone; w = parent[w]) p.vertices.push_back(w);
        std::reverse(p.vertices.begin(), p.vertices.end());
        for (std::size_t w : p.vertices) p.configs.push_back(g.vertices[w]);
        res.path = std::move(p);
        break;
      }
      expand(v);
    }
    if (res.path) break;
    if (builder.num_free_samples() + c.batch_size > c.max_samples) break;
    g = builder.add_batch(stream.next(c.batch_size), &g);
  }
  res.report.samples = builder.num_free_samples();
  detail::finish_report(res.report, "bit_lite", c, env, checks0, t0, res.path);
  return res;
}

/// Trained networks for the learned planners.
struct PlannerModels {
  const ExplorerWeights* explorer = nullptr;
  const SmootherWeights* smoother = nullptr;
};

inline PlanResult gnn_plan(const Problem& problem, const PlannerConfig& c, const PlannerModels& models, bool smoothing) {
  c.validate();
  if (!models.explorer) throw InvalidInput("the gnn planners need explorer weights");
  const auto t0 = std::chrono::steady_clock::now();
  const std::uint64_t checks0 = problem.env.check_count();
  ExploreResult run = explore(problem, *models.explorer, ExploreOptions{c.batch_size, c.max_samples, c.k0, c.seed});
  PlanResult res;
  res.report = run.report;
  res.report.explore_checks = run.report.edge_checks;
  res.path = std::move(run.path);
  const char* name = "gnn";
  if (smoothing && res.path && c.smoother != SmootherMode::None) {
    std::vector<Config> smoothed;
    if (c.smoother == SmootherMode::Gnn) {
      if (!models.smoother) throw InvalidInput("gnn smoothing needs smoother weights");
      smoothed = smooth(res.path->configs, run.free_samples, run.collided_samples, *models.smoother, problem.env, c.smooth);
    } else {
      Rng rng(derive_seed(problem.seed, derive_seed(c.seed, 0x0AC)));
      smoothed = oracle_smooth(res.path->configs, problem.env, c.smooth.eps, c.oracle_rounds, rng, c.oracle_iters);
    }
    res.path = detail::path_from_configs(std::move(smoothed));
  }
  if (smoothing) name = "gnn_smooth";
  detail::finish_report(res.report, name, c, problem.env, checks0, t0, res.path);
  return res;
}

/// Uniform entry point for every planner kind.
inline PlanResult plan(const Problem& problem, const PlannerConfig& c, const PlannerModels& models = {}) {
  switch (c.kind) {
    case PlannerKind::RrtStar: return rrt_star(problem, c);
    case PlannerKind::LazySp: return lazy_sp(problem, c);
    case PlannerKind::BitLite: return bit_lite(problem, c);
    case PlannerKind::Gnn: return gnn_plan(problem, c, models, false);
    case PlannerKind::GnnSmooth: return gnn_plan(problem, c, models, true);
  }
  throw InvalidInput("unknown planner kind");
}

}  // namespace gnnmp
