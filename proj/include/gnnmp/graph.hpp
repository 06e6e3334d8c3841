#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gnnmp/env.hpp"
#include "gnnmp/errors.hpp"
#include "gnnmp/kdtree.hpp"

namespace gnnmp {

enum class VertexLabel : std::uint8_t { Free = 0, Collided = 1, Goal = 2, Path = 3 };
enum class EdgeStatus : std::uint8_t { Unknown = 0, Free = 1, Blocked = 2 };

inline const char* to_string(VertexLabel l) {
  switch (l) {
    case VertexLabel::Free: return "free";
    case VertexLabel::Collided: return "collided";
    case VertexLabel::Goal: return "goal";
    case VertexLabel::Path: return "path";
  }
  return "?";
}

inline const char* to_string(EdgeStatus s) {
  switch (s) {
    case EdgeStatus::Unknown: return "unknown";
    case EdgeStatus::Free: return "free";
    case EdgeStatus::Blocked: return "blocked";
  }
  return "?";
}

/// Undirected edge. Only traversable edges may enter a tree or a path; the rest carry messages only.
struct Edge {
  std::size_t u;
  std::size_t v;
  double length;
  EdgeStatus status = EdgeStatus::Unknown;
  bool traversable = true;

  std::size_t other(std::size_t w) const { return w == u ? v : u; }
};

/// k = ceil(k0 * log|V_f| / log 100), clamped to |V_f| - 1.
inline std::size_t knn_k(std::size_t num_free_vertices, std::size_t k0) {
  if (num_free_vertices < 2) throw InvalidInput("knn_k needs at least two free vertices");
  if (k0 < 1) throw InvalidInput("k0 must be positive");
  const double raw = static_cast<double>(k0) * std::log(static_cast<double>(num_free_vertices)) / std::log(100.0);
  // Guard ceil against representation error, e.g. 10 * log(100)/log(100) = 10.000000000000002.
  auto k = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  k = std::max<std::size_t>(k, 1);
  return std::min(k, num_free_vertices - 1);
}

/// Directed edge ids: 2e is u->v and 2e+1 is v->u of undirected edge e.
inline std::size_t undirected_of(std::size_t directed) { return directed / 2; }

/// k-NN random geometric graph with labeled vertices and a per-edge collision status cache.
class Rgg {
 public:
  std::vector<Config> vertices;
  std::vector<VertexLabel> labels;
  std::vector<Edge> edges;
  std::vector<std::vector<std::size_t>> incident;  // undirected edge ids per vertex
  std::size_t k = 0;
  std::size_t start = 0;
  std::size_t goal = 1;

  std::size_t num_vertices() const { return vertices.size(); }
  std::size_t num_directed() const { return 2 * edges.size(); }

  std::size_t source(std::size_t d) const { return d % 2 == 0 ? edges[d / 2].u : edges[d / 2].v; }
  std::size_t target(std::size_t d) const { return d % 2 == 0 ? edges[d / 2].v : edges[d / 2].u; }

  /// Directed id of edge e leaving vertex w.
  static std::size_t directed_from(const Edge& e, std::size_t e_id, std::size_t w) { return 2 * e_id + (e.u == w ? 0 : 1); }

  std::optional<std::size_t> find_edge(std::size_t a, std::size_t b) const {
    for (std::size_t e : incident[a]) {
      if (edges[e].other(a) == b) return e;
    }
    return std::nullopt;
  }

  bool traversable_vertex(std::size_t v) const { return labels[v] != VertexLabel::Collided; }
};

namespace detail {

inline void add_edge(Rgg& g, std::map<std::pair<std::size_t, std::size_t>, std::size_t>& index, std::size_t a,
                     std::size_t b, bool traversable) {
  if (a == b) return;
  auto key = std::minmax(a, b);
  auto it = index.find(key);
  if (it != index.end()) {
    if (traversable) g.edges[it->second].traversable = true;
    return;
  }
  const std::size_t id = g.edges.size();
  index.emplace(key, id);
  g.edges.push_back({key.first, key.second, distance(g.vertices[a], g.vertices[b]), EdgeStatus::Unknown, traversable});
}

}  // namespace detail

/// Builds the graph over an explicit labeled vertex list. Traversable edges are the symmetrized k-NN over the
/// non-collided vertices; collided vertices get symmetrized k-NN feature edges over all vertices. `known` carries
/// previously discovered statuses keyed by vertex pair. `num_free_samples` drives the k rule.
inline Rgg build_rgg_over(std::vector<Config> vertices, std::vector<VertexLabel> labels, std::size_t start,
                          std::size_t goal, std::size_t num_free_samples, std::size_t k0,
                          const std::map<std::pair<std::size_t, std::size_t>, EdgeStatus>* known = nullptr) {
  Rgg g;
  g.vertices = std::move(vertices);
  g.labels = std::move(labels);
  g.start = start;
  g.goal = goal;
  std::vector<std::size_t> trav;
  std::vector<std::size_t> all(g.vertices.size());
  for (std::size_t i = 0; i < g.vertices.size(); ++i) {
    all[i] = i;
    if (g.labels[i] != VertexLabel::Collided) trav.push_back(i);
  }
  if (trav.size() < 2) throw InvalidInput("graph needs at least two free vertices");
  g.k = std::min(knn_k(std::max<std::size_t>(num_free_samples, 2), k0), trav.size() - 1);

  std::map<std::pair<std::size_t, std::size_t>, std::size_t> index;
  const auto trav_nn = knn_lists(g.vertices, trav, trav, g.k);
  for (std::size_t i = 0; i < trav.size(); ++i)
    for (std::size_t j : trav_nn[i]) detail::add_edge(g, index, trav[i], j, true);

  if (trav.size() < g.vertices.size()) {
    const auto all_nn = knn_lists(g.vertices, all, all, g.k);
    for (std::size_t i = 0; i < all.size(); ++i) {
      for (std::size_t j : all_nn[i]) {
        if (g.labels[i] == VertexLabel::Collided || g.labels[j] == VertexLabel::Collided)
          detail::add_edge(g, index, i, j, false);
      }
    }
  }
  // Stable edge order independent of discovery order.
  std::sort(g.edges.begin(), g.edges.end(), [](const Edge& a, const Edge& b) { return std::tie(a.u, a.v) < std::tie(b.u, b.v); });
  for (auto& e : g.edges) {
    if (known) {
      auto it = known->find({e.u, e.v});
      if (it != known->end()) e.status = it->second;
    }
  }
  g.incident.assign(g.vertices.size(), {});
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    g.incident[g.edges[e].u].push_back(e);
    g.incident[g.edges[e].v].push_back(e);
  }
  return g;
}

/// Vertex layout: 0 = start, 1 = goal, then free samples, then collided samples.
inline Rgg build_rgg(const std::vector<Config>& free, const std::vector<Config>& collided, const Config& start,
                     const Config& goal, std::size_t k0) {
  std::vector<Config> verts;
  std::vector<VertexLabel> labels;
  verts.reserve(free.size() + collided.size() + 2);
  verts.push_back(start);
  labels.push_back(VertexLabel::Free);
  verts.push_back(goal);
  labels.push_back(VertexLabel::Goal);
  for (const auto& q : free) {
    verts.push_back(q);
    labels.push_back(VertexLabel::Free);
  }
  for (const auto& q : collided) {
    verts.push_back(q);
    labels.push_back(VertexLabel::Collided);
  }
  return build_rgg_over(std::move(verts), std::move(labels), 0, 1, free.size(), k0);
}

/// Known statuses of traversable edges keyed by vertex pair, used to carry information across rebuilds.
inline std::map<std::pair<std::size_t, std::size_t>, EdgeStatus> known_statuses(const Rgg& g) {
  std::map<std::pair<std::size_t, std::size_t>, EdgeStatus> out;
  for (const auto& e : g.edges) {
    if (e.traversable && e.status != EdgeStatus::Unknown) out[{e.u, e.v}] = e.status;
  }
  return out;
}

/// Exploration tree rooted at the start vertex. Tree edges are always verified free.
class Tree {
 public:
  Tree() = default;
  Tree(std::size_t num_vertices, std::size_t root) : root_(root) {
    resize(num_vertices);
    member_[root] = 1;
    members_.push_back(root);
  }

  void resize(std::size_t num_vertices) {
    parent_.resize(num_vertices, kNone);
    member_.resize(num_vertices, 0);
  }

  std::size_t root() const { return root_; }
  bool contains(std::size_t v) const { return v < member_.size() && member_[v]; }
  const std::vector<std::size_t>& members() const { return members_; }
  std::size_t parent(std::size_t v) const { return parent_[v]; }
  const std::vector<std::pair<std::size_t, std::size_t>>& edges() const { return edges_; }

  void add(std::size_t child, std::size_t parent) {
    if (contains(child)) throw ContractViolation("vertex already in tree");
    if (!contains(parent)) throw ContractViolation("parent not in tree");
    parent_[child] = parent;
    member_[child] = 1;
    members_.push_back(child);
    edges_.emplace_back(parent, child);
  }

  std::vector<std::size_t> path_to(std::size_t v) const {
    std::vector<std::size_t> out;
    for (std::size_t w = v; w != kNone; w = parent_[w]) out.push_back(w);
    std::reverse(out.begin(), out.end());
    return out;
  }

  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

 private:
  std::size_t root_ = 0;
  std::vector<std::size_t> parent_;
  std::vector<char> member_;
  std::vector<std::size_t> members_;
  std::vector<std::pair<std::size_t, std::size_t>> edges_;
};

/// Unknown traversable edges leaving the tree, as directed ids oriented outward, sorted ascending.
inline std::vector<std::size_t> frontier(const Rgg& g, const Tree& tree) {
  std::vector<std::size_t> out;
  for (std::size_t v : tree.members()) {
    for (std::size_t e : g.incident[v]) {
      const Edge& edge = g.edges[e];
      if (!edge.traversable || edge.status != EdgeStatus::Unknown) continue;
      if (tree.contains(edge.other(v))) continue;
      out.push_back(Rgg::directed_from(edge, e, v));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline double path_cost(const std::vector<Config>& configs) {
  double c = 0.0;
  for (std::size_t i = 1; i < configs.size(); ++i) c += distance(configs[i - 1], configs[i]);
  return c;
}

struct Path {
  std::vector<std::size_t> vertices;  // graph indices when the path lives on a graph
  std::vector<Config> configs;
  double cost() const { return path_cost(configs); }
};

using EdgeFilter = std::function<bool(const Edge&, std::size_t)>;

/// Traversable and not known to be blocked.
inline bool optimistic_edge(const Edge& e, std::size_t) { return e.traversable && e.status != EdgeStatus::Blocked; }

/// Multi-source shortest path. Sources start at distance zero; among equal-cost predecessors the lowest index wins.
inline std::optional<Path> dijkstra_multi(const Rgg& g, const std::vector<std::size_t>& sources, std::size_t target,
                                          const EdgeFilter& filter) {
  const double inf = std::numeric_limits<double>::infinity();
  const std::size_t none = Tree::kNone;
  std::vector<double> dist(g.num_vertices(), inf);
  std::vector<std::size_t> pred(g.num_vertices(), none);
  std::vector<char> done(g.num_vertices(), 0);
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  for (std::size_t s : sources) {
    dist[s] = 0.0;
    queue.push({0.0, s});
  }
  while (!queue.empty()) {
    auto [d, v] = queue.top();
    queue.pop();
    if (done[v]) continue;
    done[v] = 1;
    if (v == target) break;
    for (std::size_t e : g.incident[v]) {
      const Edge& edge = g.edges[e];
      if (!filter(edge, e)) continue;
      const std::size_t w = edge.other(v);
      if (done[w]) continue;
      const double nd = d + edge.length;
      if (nd < dist[w] || (nd == dist[w] && v < pred[w])) {
        dist[w] = nd;
        pred[w] = v;
        queue.push({nd, w});
      }
    }
  }
  if (dist[target] == inf) return std::nullopt;
  Path p;
  for (std::size_t w = target; w != none; w = pred[w]) p.vertices.push_back(w);
  std::reverse(p.vertices.begin(), p.vertices.end());
  for (std::size_t v : p.vertices) p.configs.push_back(g.vertices[v]);
  return p;
}

inline std::optional<Path> dijkstra(const Rgg& g, std::size_t source, std::size_t target, const EdgeFilter& filter) {
  return dijkstra_multi(g, {source}, target, filter);
}

inline nlohmann::json graph_to_json(const Rgg& g) {
  nlohmann::json j;
  j["k"] = g.k;
  j["start"] = g.start;
  j["goal"] = g.goal;
  j["vertices"] = nlohmann::json::array();
  for (std::size_t i = 0; i < g.num_vertices(); ++i)
    j["vertices"].push_back({{"config", g.vertices[i].coords()}, {"label", to_string(g.labels[i])}});
  j["edges"] = nlohmann::json::array();
  for (const auto& e : g.edges)
    j["edges"].push_back({{"u", e.u}, {"v", e.v}, {"length", e.length}, {"status", to_string(e.status)}, {"traversable", e.traversable}});
  return j;
}

}  // namespace gnnmp
