#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "gnnmp/env.hpp"
#include "gnnmp/graph.hpp"
#include "gnnmp/nn/layers.hpp"
#include "gnnmp/nn/weights_io.hpp"
#include "gnnmp/report.hpp"
#include "gnnmp/sampling.hpp"

namespace gnnmp {

/// Edge-list view of an Rgg in the shape the message-passing networks consume: every undirected edge
/// (traversable or feature-only) appears as two directed rows, row 2e = u->v and row 2e+1 = v->u.
struct MessageGraph {
  std::size_t num_vertices = 0;
  std::vector<std::size_t> src;
  std::vector<std::size_t> dst;
};

inline MessageGraph message_graph(const Rgg& g) {
  MessageGraph m;
  m.num_vertices = g.num_vertices();
  m.src.reserve(g.num_directed());
  m.dst.reserve(g.num_directed());
  for (const auto& e : g.edges) {
    m.src.push_back(e.u);
    m.dst.push_back(e.v);
    m.src.push_back(e.v);
    m.dst.push_back(e.u);
  }
  return m;
}

/// One-hot label slot per vertex: free, collided, goal for the explorer; path, free, collided for the smoother.
inline std::size_t explorer_label_slot(VertexLabel l) {
  switch (l) {
    case VertexLabel::Collided: return 1;
    case VertexLabel::Goal: return 2;
    default: return 0;
  }
}

/// Obstacle matrix with rows (center, full side length).
inline nn::Matrix obstacle_matrix(const Environment& env) {
  const std::size_t n = env.dim();
  nn::Matrix o(env.obstacles().size(), 2 * n);
  for (std::size_t r = 0; r < env.obstacles().size(); ++r) {
    const auto& b = env.obstacles()[r];
    for (std::size_t i = 0; i < n; ++i) {
      o(r, i) = b.center[i];
      o(r, n + i) = 2.0 * b.half_extent[i];
    }
  }
  return o;
}

namespace detail {

/// First layer of an MLP whose input is the concatenation [x_dst - x_src, x_dst, x_src, extra]; evaluated
/// blockwise so the vertex projections are computed once per vertex instead of once per edge.
inline nn::Var pairwise_first_layer(const nn::Linear& layer, const nn::Var& x, const nn::Var* extra,
                                    const MessageGraph& mg) {
  const std::size_t d = x.cols();
  nn::Var w = nn::leaf(*layer.weight);
  nn::Var w_diff = nn::slice_rows(w, 0, d);
  nn::Var w_dst = nn::slice_rows(w, d, 2 * d);
  nn::Var w_src = nn::slice_rows(w, 2 * d, 3 * d);
  nn::Var at_dst = nn::matmul(x, nn::add(w_diff, w_dst));
  nn::Var at_src = nn::matmul(x, nn::sub(w_src, w_diff));
  nn::Var pre = nn::add(nn::gather_rows(at_dst, mg.dst), nn::gather_rows(at_src, mg.src));
  if (extra) {
    nn::Var w_extra = nn::slice_rows(w, 3 * d, 3 * d + extra->cols());
    pre = nn::add(pre, nn::matmul(*extra, w_extra));
  }
  return nn::add_row(pre, nn::leaf(*layer.bias));
}

inline nn::Var pairwise_mlp(const nn::Mlp& mlp, const nn::Var& x, const nn::Var* extra, const MessageGraph& mg,
                            bool training) {
  return mlp.second(mlp.hidden(pairwise_first_layer(mlp.first, x, extra, mg), training));
}

/// Edge input rows (v_dst - v_src, v_dst, v_src) from labeled vertex rows.
inline nn::Matrix edge_inputs(const nn::Matrix& vertex_rows, const MessageGraph& mg) {
  const std::size_t w = vertex_rows.cols;
  nn::Matrix out(mg.src.size(), 3 * w);
  for (std::size_t l = 0; l < mg.src.size(); ++l) {
    const double* vi = vertex_rows.row_ptr(mg.src[l]);
    const double* vj = vertex_rows.row_ptr(mg.dst[l]);
    double* o = out.row_ptr(l);
    for (std::size_t c = 0; c < w; ++c) {
      o[c] = vj[c] - vi[c];
      o[w + c] = vj[c];
      o[2 * w + c] = vi[c];
    }
  }
  return out;
}

}  // namespace detail

struct ExplorerSpec {
  std::size_t dim = 2;
  std::size_t hidden = 32;
  bool obstacle_encoding = true;
  std::size_t attention_blocks = 3;
};

/// Parameters of the path explorer: embeddings h_x, h_y; core update f_x, f_y; readout f_eta; and
/// optional obstacle-encoding attention blocks for x and y.
class ExplorerWeights {
 public:
  explicit ExplorerWeights(const ExplorerSpec& spec, std::uint64_t seed = 0) : spec_(spec) {
    Rng rng(derive_seed(seed, 0xE1));
    const std::size_t n = spec.dim;
    const std::size_t d = spec.hidden;
    h_x = nn::Mlp::create(store, "explorer/h_x", 4 * n + 3, d, d, true, rng);
    h_y = nn::Mlp::create(store, "explorer/h_y", 3 * (n + 3), d, d, true, rng);
    f_x = nn::Mlp::create(store, "explorer/f_x", 4 * d, d, d, false, rng);
    f_y = nn::Mlp::create(store, "explorer/f_y", 3 * d, d, d, false, rng);
    f_eta = nn::Mlp::create(store, "explorer/f_eta", d, d, 1, false, rng);
    if (spec.obstacle_encoding) {
      for (std::size_t b = 0; b < spec.attention_blocks; ++b) {
        att_x.push_back(nn::AttentionBlock::create(store, "explorer/att_x/" + std::to_string(b), d, 2 * n, rng));
        att_y.push_back(nn::AttentionBlock::create(store, "explorer/att_y/" + std::to_string(b), d, 2 * n, rng));
      }
    }
  }

  ExplorerWeights(const ExplorerWeights& other) : ExplorerWeights(other.spec_) { store = other.store; }
  ExplorerWeights& operator=(const ExplorerWeights& other) {
    if (this != &other) {
      if (spec_.dim != other.spec_.dim || spec_.hidden != other.spec_.hidden ||
          spec_.obstacle_encoding != other.spec_.obstacle_encoding)
        throw InvalidInput("explorer spec mismatch on assignment");
      store = other.store;
    }
    return *this;
  }

  const ExplorerSpec& spec() const { return spec_; }

  nn::WeightMeta meta() const {
    return {{"network", "explorer"},
            {"dim", std::to_string(spec_.dim)},
            {"hidden", std::to_string(spec_.hidden)},
            {"obstacle_encoding", spec_.obstacle_encoding ? "1" : "0"},
            {"attention_blocks", std::to_string(spec_.attention_blocks)}};
  }

  void save(const std::string& path) const { nn::write_bytes(path, nn::serialize_weights(store, meta())); }

  static ExplorerWeights load(const std::string& path) { return from_bytes(nn::read_bytes(path)); }

  static ExplorerWeights from_bytes(const std::vector<std::uint8_t>& bytes) {
    const nn::WeightFile f = nn::parse_weights(bytes);
    auto get = [&](const char* key) {
      auto it = f.meta.find(key);
      if (it == f.meta.end()) throw FormatError(std::string("weight file lacks meta field ") + key);
      return it->second;
    };
    if (get("network") != "explorer") throw FormatError("weight file does not hold an explorer");
    ExplorerSpec spec;
    spec.dim = std::stoul(get("dim"));
    spec.hidden = std::stoul(get("hidden"));
    spec.obstacle_encoding = get("obstacle_encoding") == "1";
    spec.attention_blocks = std::stoul(get("attention_blocks"));
    ExplorerWeights w(spec);
    nn::apply_weights(f, w.store);
    return w;
  }

  nn::ParameterStore store;
  nn::Mlp h_x;
  nn::Mlp h_y;
  nn::Mlp f_x;
  nn::Mlp f_y;
  nn::Mlp f_eta;
  std::vector<nn::AttentionBlock> att_x;
  std::vector<nn::AttentionBlock> att_y;

 private:
  ExplorerSpec spec_;
};

/// Vertex rows (config, one-hot label), width n + 3.
inline nn::Matrix explorer_vertex_rows(const Rgg& g) {
  const std::size_t n = g.vertices.front().size();
  nn::Matrix v(g.num_vertices(), n + 3);
  for (std::size_t i = 0; i < g.num_vertices(); ++i) {
    for (std::size_t c = 0; c < n; ++c) v(i, c) = g.vertices[i][c];
    v(i, n + explorer_label_slot(g.labels[i])) = 1.0;
  }
  return v;
}

/// Goal-relative vertex inputs (v, v_g, (v - v_g)^2, v - v_g, label) of width 4n + 3.
inline nn::Matrix explorer_vertex_inputs(const Rgg& g, const Config& goal) {
  const std::size_t n = goal.size();
  nn::Matrix x(g.num_vertices(), 4 * n + 3);
  for (std::size_t i = 0; i < g.num_vertices(); ++i) {
    const Config& v = g.vertices[i];
    for (std::size_t c = 0; c < n; ++c) {
      const double diff = v[c] - goal[c];
      x(i, c) = v[c];
      x(i, n + c) = goal[c];
      x(i, 2 * n + c) = diff * diff;
      x(i, 3 * n + c) = diff;
    }
    x(i, 4 * n + explorer_label_slot(g.labels[i])) = 1.0;
  }
  return x;
}

struct Embedding {
  nn::Var x;
  nn::Var y;
};

/// x = h_x(v, v_g, (v-v_g)^2, v-v_g), y = h_y(v_j - v_i, v_j, v_i), then the obstacle attention blocks.
inline Embedding explorer_embed(const ExplorerWeights& w, const Rgg& g, const MessageGraph& mg, const Config& goal,
                                const nn::Matrix& obstacles, bool training) {
  Embedding e;
  e.x = w.h_x(nn::constant(explorer_vertex_inputs(g, goal)), training);
  e.y = w.h_y(nn::constant(detail::edge_inputs(explorer_vertex_rows(g), mg)), training);
  if (w.spec().obstacle_encoding) {
    nn::Var o = nn::constant(obstacles);
    for (const auto& block : w.att_x) e.x = block(e.x, o, training);
    for (const auto& block : w.att_y) e.y = block(e.y, o, training);
  }
  return e;
}

/// Homogeneous core update with g = max, applied `loops` times with shared weights:
///   x_i = max(x_i, max_l f_x(x_j - x_i, x_j, x_i, y_l));  y_l = max(y_l, f_y(x_j - x_i, x_j, x_i))
/// Vertices without neighbors keep their embedding.
inline Embedding explorer_core_update(const ExplorerWeights& w, Embedding e, const MessageGraph& mg, int loops,
                                      bool training) {
  for (int t = 0; t < loops; ++t) {
    nn::Var msg = detail::pairwise_mlp(w.f_x, e.x, &e.y, mg, training);
    nn::Var agg = nn::segment_max(msg, mg.src, mg.num_vertices, -std::numeric_limits<double>::infinity());
    e.x = nn::maximum(e.x, agg);
    e.y = nn::maximum(e.y, detail::pairwise_mlp(w.f_y, e.x, nullptr, mg, training));
  }
  return e;
}

inline constexpr int kExplorerEvalLoops = 10;

/// Edge priorities eta = f_eta(y) for every directed edge row (see MessageGraph), as a column.
inline nn::Var explorer_forward(const ExplorerWeights& w, const Rgg& g, const Environment& env, int loops,
                                bool training) {
  const MessageGraph mg = message_graph(g);
  if (mg.src.empty()) return nn::constant(nn::Matrix(0, 1));
  Embedding e = explorer_embed(w, g, mg, g.vertices[g.goal], obstacle_matrix(env), training);
  e = explorer_core_update(w, std::move(e), mg, loops, training);
  return w.f_eta(e.y, training);
}

/// Priorities indexed by directed edge id (2e: u->v, 2e+1: v->u). Entries for feature-only edges are
/// produced by the network but never consulted by the planner.
struct ExplorerOutput {
  std::vector<double> eta;
};

inline ExplorerOutput priorities(const Rgg& g, const Environment& env, const ExplorerWeights& w) {
  nn::NoGradGuard guard;
  nn::Var eta = explorer_forward(w, g, env, kExplorerEvalLoops, false);
  return ExplorerOutput{eta.value().data};
}

/// Maps a graph to one priority per directed edge.
using PriorityFn = std::function<std::vector<double>(const Rgg&)>;

struct ExploreOptions {
  std::size_t batch_size = 100;
  std::size_t max_samples = 1000;
  std::size_t k0 = 10;
  std::uint64_t seed = 0;
};

struct ExploreResult {
  std::optional<Path> path;
  RunReport report;
  Rgg graph;  // final graph, statuses included
  Tree tree;
  std::vector<Config> free_samples;
  std::vector<Config> collided_samples;
  std::map<std::pair<std::size_t, std::size_t>, EdgeStatus> known;  // every edge status learned during the run
};

namespace detail {

struct FrontierItem {
  double eta;
  std::size_t directed;
  bool operator<(const FrontierItem& o) const {
    // max-heap on eta, lowest directed id first on ties
    return eta < o.eta || (eta == o.eta && directed > o.directed);
  }
};

inline void push_frontier_of(const Rgg& g, const Tree& tree, std::size_t v, const std::vector<double>& eta,
                             std::priority_queue<FrontierItem>& heap) {
  for (std::size_t e : g.incident[v]) {
    const Edge& edge = g.edges[e];
    if (!edge.traversable || edge.status != EdgeStatus::Unknown || tree.contains(edge.other(v))) continue;
    const std::size_t d = Rgg::directed_from(edge, e, v);
    heap.push({eta[d], d});
  }
}

}  // namespace detail

/// Priority-guided tree growth over batch-sampled graphs: check the best frontier edge, grow on success,
/// resample a batch when the frontier is exhausted, fail once the free-sample budget would be exceeded.
inline ExploreResult explore_with(const Problem& problem, const PriorityFn& priority_of, const ExploreOptions& opts) {
  using clock = std::chrono::steady_clock;
  if (opts.batch_size < 1 || opts.max_samples < opts.batch_size) throw InvalidInput("explore needs 1 <= batch_size <= max_samples");
  const auto t0 = clock::now();
  const std::uint64_t checks0 = problem.env.check_count();
  ExploreResult res;
  SampleStream stream(problem.env, problem.seed, opts.seed);
  BatchGraph builder(problem.start, problem.goal, opts.k0);
  res.graph = builder.add_batch(stream.next(opts.batch_size), nullptr);
  res.tree = Tree(res.graph.num_vertices(), res.graph.start);
  bool found = false;
  while (true) {
    std::vector<double> eta = priority_of(res.graph);
    if (eta.size() != res.graph.num_directed()) throw InvalidInput("priority vector size does not match the graph");
    std::priority_queue<detail::FrontierItem> heap;
    for (std::size_t v : res.tree.members()) detail::push_frontier_of(res.graph, res.tree, v, eta, heap);
    while (!heap.empty() && !found) {
      const auto item = heap.top();
      heap.pop();
      Edge& edge = res.graph.edges[undirected_of(item.directed)];
      const std::size_t to = res.graph.target(item.directed);
      if (edge.status != EdgeStatus::Unknown || res.tree.contains(to)) continue;
      const std::size_t from = res.graph.source(item.directed);
      const bool ok = problem.env.segment_free(res.graph.vertices[from], res.graph.vertices[to]);
      edge.status = ok ? EdgeStatus::Free : EdgeStatus::Blocked;
      if (!ok) continue;
      res.tree.add(to, from);
      if (to == res.graph.goal) {
        found = true;
        break;
      }
      detail::push_frontier_of(res.graph, res.tree, to, eta, heap);
    }
    if (found) break;
    if (builder.num_free_samples() + opts.batch_size > opts.max_samples) break;
    res.graph = builder.add_batch(stream.next(opts.batch_size), &res.graph);
    res.tree.resize(res.graph.num_vertices());
  }
  if (found) {
    Path p;
    p.vertices = res.tree.path_to(res.graph.goal);
    for (std::size_t v : p.vertices) p.configs.push_back(res.graph.vertices[v]);
    res.path = std::move(p);
  }
  res.free_samples = builder.free_samples();
  res.collided_samples = builder.collided_samples();
  res.known = builder.known();
  for (const auto& [key, status] : known_statuses(res.graph)) res.known[key] = status;
  res.report.planner = "gnn";
  res.report.seed = opts.seed;
  res.report.success = found;
  res.report.edge_checks = problem.env.check_count() - checks0;
  res.report.path_cost = found ? res.path->cost() : 0.0;
  res.report.samples = builder.num_free_samples();
  res.report.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
  return res;
}

inline PriorityFn network_priorities(const ExplorerWeights& w, const Environment& env) {
  return [&w, &env](const Rgg& g) { return priorities(g, env, w).eta; };
}

inline ExploreResult explore(const Problem& problem, const ExplorerWeights& w, const ExploreOptions& opts) {
  return explore_with(problem, network_priorities(w, problem.env), opts);
}

// ---------------------------------------------------------------------------
// Imitation targets

/// Ground-truth status of every edge by unmetered checks (feature edges are labeled blocked).
inline std::vector<EdgeStatus> ground_truth_statuses(const Rgg& g, const Environment& env) {
  std::vector<EdgeStatus> out(g.edges.size(), EdgeStatus::Blocked);
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const Edge& edge = g.edges[e];
    if (edge.traversable && env.segment_free_unmetered(g.vertices[edge.u], g.vertices[edge.v])) out[e] = EdgeStatus::Free;
  }
  return out;
}

/// First edge of the shortest ground-truth-free path from any tree vertex to the goal, as a directed id
/// leaving the tree, or nothing when the goal is unreachable.
inline std::optional<std::size_t> oracle_first_edge(const Rgg& g, const Tree& tree, const std::vector<EdgeStatus>& truth) {
  auto path = dijkstra_multi(g, tree.members(), g.goal, [&](const Edge& e, std::size_t id) {
    return e.traversable && truth[id] == EdgeStatus::Free && e.status != EdgeStatus::Blocked;
  });
  if (!path || path->vertices.size() < 2) return std::nullopt;
  const std::size_t a = path->vertices[0];
  const std::size_t b = path->vertices[1];
  const auto e = g.find_edge(a, b);
  return Rgg::directed_from(g.edges[*e], *e, a);
}

/// Cross-entropy of softmax(eta) over the frontier against the oracle's first edge.
inline std::optional<nn::SoftmaxTerm> imitation_term(const Rgg& g, const Tree& tree, const std::vector<EdgeStatus>& truth) {
  const auto target = oracle_first_edge(g, tree, truth);
  if (!target) return std::nullopt;
  nn::SoftmaxTerm term;
  term.candidates = frontier(g, tree);
  const auto it = std::find(term.candidates.begin(), term.candidates.end(), *target);
  if (it == term.candidates.end()) return std::nullopt;
  term.target = static_cast<std::size_t>(it - term.candidates.begin());
  return term;
}

/// Explorer loss for one exploration state; nothing when no feasible oracle path exists.
inline std::optional<nn::Var> explorer_loss(const ExplorerWeights& w, const Rgg& g, const Environment& env,
                                            const Tree& tree, const std::vector<EdgeStatus>& truth, int loops,
                                            bool training) {
  auto term = imitation_term(g, tree, truth);
  if (!term) return std::nullopt;
  nn::Var eta = explorer_forward(w, g, env, loops, training);
  return nn::mean_cross_entropy(eta, {*term});
}

struct Rollout {
  std::vector<nn::SoftmaxTerm> terms;
  std::size_t correct = 0;      // steps where argmax eta over the frontier equals the oracle edge
  double chance = 0.0;          // sum of 1/|frontier| over the steps
  bool reached_goal = false;
};

/// Replays greedy exploration under `eta` on ground-truth statuses (no metered checks) and records one
/// imitation term per step. `max_terms` = 0 keeps all steps.
inline Rollout imitation_rollout(Rgg g, const std::vector<double>& eta, const std::vector<EdgeStatus>& truth,
                                 std::size_t max_terms = 0) {
  Rollout r;
  Tree tree(g.num_vertices(), g.start);
  while (true) {
    const auto term = imitation_term(g, tree, truth);
    if (!term) break;
    std::size_t best = 0;
    for (std::size_t i = 1; i < term->candidates.size(); ++i) {
      const double a = eta[term->candidates[i]];
      const double b = eta[term->candidates[best]];
      if (a > b) best = i;
    }
    if (best == term->target) ++r.correct;
    r.chance += 1.0 / static_cast<double>(term->candidates.size());
    r.terms.push_back(*term);
    if (max_terms && r.terms.size() >= max_terms) break;
    const std::size_t d = term->candidates[best];
    const std::size_t e = undirected_of(d);
    g.edges[e].status = truth[e];
    if (truth[e] == EdgeStatus::Free) {
      tree.add(g.target(d), g.source(d));
      if (g.target(d) == g.goal) {
        r.reached_goal = true;
        break;
      }
    }
  }
  return r;
}

}  // namespace gnnmp
