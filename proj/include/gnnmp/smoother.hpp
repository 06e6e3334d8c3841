#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gnnmp/env.hpp"
#include "gnnmp/explorer.hpp"
#include "gnnmp/graph.hpp"
#include "gnnmp/kdtree.hpp"
#include "gnnmp/nn/layers.hpp"
#include "gnnmp/nn/weights_io.hpp"

namespace gnnmp {

struct SmootherSpec {
  std::size_t dim = 2;
  std::size_t hidden = 32;
  std::size_t k0 = 10;
  std::size_t core_updates = 2;  // message-passing rounds inside one dynamic-update loop
};

/// Parameters of the path smoother: embeddings h_x, h_y; core update f_x, f_y; residual f_g; and the
/// per-vertex displacement readout f_u.
class SmootherWeights {
 public:
  explicit SmootherWeights(const SmootherSpec& spec, std::uint64_t seed = 0) : spec_(spec) {
    Rng rng(derive_seed(seed, 0x5E));
    const std::size_t n = spec.dim;
    const std::size_t d = spec.hidden;
    h_x = nn::Mlp::create(store, "smoother/h_x", n + 3, d, d, true, rng);
    h_y = nn::Mlp::create(store, "smoother/h_y", 3 * (n + 3), d, d, true, rng);
    f_x = nn::Mlp::create(store, "smoother/f_x", 4 * d, d, d, false, rng);
    f_y = nn::Mlp::create(store, "smoother/f_y", 3 * d, d, d, false, rng);
    f_g = nn::Mlp::create(store, "smoother/f_g", d, d, d, false, rng);
    f_u = nn::Mlp::create(store, "smoother/f_u", d, d, n, false, rng);
    // An untrained smoother proposes no displacement.
    for (nn::Parameter* p : {f_u.second.weight, f_u.second.bias}) std::fill(p->value.data.begin(), p->value.data.end(), 0.0);
  }

  SmootherWeights(const SmootherWeights& other) : SmootherWeights(other.spec_) { store = other.store; }
  SmootherWeights& operator=(const SmootherWeights& other) {
    if (this != &other) {
      if (spec_.dim != other.spec_.dim || spec_.hidden != other.spec_.hidden)
        throw InvalidInput("smoother spec mismatch on assignment");
      spec_ = other.spec_;
      store = other.store;
    }
    return *this;
  }

  const SmootherSpec& spec() const { return spec_; }

  nn::WeightMeta meta() const {
    return {{"network", "smoother"},
            {"dim", std::to_string(spec_.dim)},
            {"hidden", std::to_string(spec_.hidden)},
            {"k0", std::to_string(spec_.k0)},
            {"core_updates", std::to_string(spec_.core_updates)}};
  }

  void save(const std::string& path) const { nn::write_bytes(path, nn::serialize_weights(store, meta())); }

  static SmootherWeights load(const std::string& path) { return from_bytes(nn::read_bytes(path)); }

  static SmootherWeights from_bytes(const std::vector<std::uint8_t>& bytes) {
    const nn::WeightFile f = nn::parse_weights(bytes);
    auto get = [&](const char* key) {
      auto it = f.meta.find(key);
      if (it == f.meta.end()) throw FormatError(std::string("weight file lacks meta field ") + key);
      return it->second;
    };
    if (get("network") != "smoother") throw FormatError("weight file does not hold a smoother");
    SmootherSpec spec;
    spec.dim = std::stoul(get("dim"));
    spec.hidden = std::stoul(get("hidden"));
    spec.k0 = std::stoul(get("k0"));
    spec.core_updates = std::stoul(get("core_updates"));
    SmootherWeights w(spec);
    nn::apply_weights(f, w.store);
    return w;
  }

  nn::ParameterStore store;
  nn::Mlp h_x;
  nn::Mlp h_y;
  nn::Mlp f_x;
  nn::Mlp f_y;
  nn::Mlp f_g;
  nn::Mlp f_u;

 private:
  SmootherSpec spec_;
};

/// Smoother graph: vertices are the path (rows 0..m-1), then free samples, then collided samples. Edges join
/// consecutive path vertices and each path vertex to its k nearest samples.
struct SmootherGraph {
  nn::Matrix sample_rows;  // (config, one-hot{path, free, collided}) for the samples
  MessageGraph mg;
  std::size_t path_size = 0;
};

inline SmootherGraph smoother_graph(const std::vector<Config>& path, const std::vector<Config>& free,
                                    const std::vector<Config>& collided, std::size_t k0) {
  const std::size_t n = path.front().size();
  const std::size_t m = path.size();
  std::vector<Config> points;
  points.reserve(m + free.size() + collided.size());
  points.insert(points.end(), path.begin(), path.end());
  points.insert(points.end(), free.begin(), free.end());
  points.insert(points.end(), collided.begin(), collided.end());

  SmootherGraph sg;
  sg.path_size = m;
  const std::size_t samples = free.size() + collided.size();
  sg.sample_rows = nn::Matrix(samples, n + 3);
  for (std::size_t j = 0; j < samples; ++j) {
    const Config& q = points[m + j];
    for (std::size_t c = 0; c < n; ++c) sg.sample_rows(j, c) = q[c];
    sg.sample_rows(j, n + (j < free.size() ? 1 : 2)) = 1.0;
  }
  sg.mg.num_vertices = points.size();
  auto link = [&](std::size_t a, std::size_t b) {
    sg.mg.src.push_back(a);
    sg.mg.dst.push_back(b);
    sg.mg.src.push_back(b);
    sg.mg.dst.push_back(a);
  };
  for (std::size_t i = 0; i + 1 < m; ++i) link(i, i + 1);
  if (samples > 0) {
    const std::size_t k = std::min(knn_k(std::max<std::size_t>(free.size(), 2), k0), samples);
    std::vector<std::size_t> candidates(samples);
    for (std::size_t j = 0; j < samples; ++j) candidates[j] = m + j;
    std::vector<std::size_t> queries(m);
    for (std::size_t i = 0; i < m; ++i) queries[i] = i;
    const auto nn_lists = knn_lists(points, candidates, queries, k);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j : nn_lists[i]) link(i, j);
  }
  return sg;
}

inline nn::Matrix path_matrix(const std::vector<Config>& path) {
  const std::size_t n = path.front().size();
  nn::Matrix p(path.size(), n);
  for (std::size_t i = 0; i < path.size(); ++i)
    for (std::size_t c = 0; c < n; ++c) p(i, c) = path[i][c];
  return p;
}

inline std::vector<Config> matrix_path(const nn::Matrix& p) {
  std::vector<Config> out;
  out.reserve(p.rows);
  for (std::size_t i = 0; i < p.rows; ++i) out.emplace_back(std::vector<double>(p.row_ptr(i), p.row_ptr(i) + p.cols));
  return out;
}

/// One dynamic-update loop on path positions `pos` (m x n): embed, residual core updates
///   x_i = x_i + f_g(max_l f_x(x_j - x_i, x_j, x_i, y_l));  y_l = max(y_l, f_y(x_j - x_i, x_j, x_i))
/// then u_i = v_i + f_u(x_i) on the path rows, with the first and last rows pinned to pos.
/// The graph topology is fixed by `sg`; positions stay on the tape so loops chain differentiably.
inline nn::Var smoother_step(const SmootherWeights& w, const SmootherGraph& sg, const nn::Var& pos, bool training) {
  const std::size_t m = sg.path_size;
  const MessageGraph& mg = sg.mg;
  nn::Matrix onehot(m, 3);
  for (std::size_t i = 0; i < m; ++i) onehot(i, 0) = 1.0;
  nn::Var v = nn::concat_rows(nn::concat_cols({pos, nn::constant(std::move(onehot))}), nn::constant(sg.sample_rows));
  nn::Var vi = nn::gather_rows(v, mg.src);
  nn::Var vj = nn::gather_rows(v, mg.dst);
  nn::Var x = w.h_x(v, training);
  nn::Var y = w.h_y(nn::concat_cols({nn::sub(vj, vi), vj, vi}), training);
  std::vector<double> has_neighbor(mg.num_vertices, 0.0);
  for (std::size_t s : mg.src) has_neighbor[s] = 1.0;
  for (std::size_t t = 0; t < w.spec().core_updates; ++t) {
    nn::Var msg = detail::pairwise_mlp(w.f_x, x, &y, mg, training);
    nn::Var agg = nn::segment_max(msg, mg.src, mg.num_vertices, 0.0);
    x = nn::add(x, nn::mask_rows(w.f_g(agg, training), has_neighbor));
    // The last y update would never be read.
    if (t + 1 < w.spec().core_updates) y = nn::maximum(y, detail::pairwise_mlp(w.f_y, x, nullptr, mg, training));
  }
  std::vector<std::size_t> path_rows(m);
  for (std::size_t i = 0; i < m; ++i) path_rows[i] = i;
  std::vector<double> interior(m, 1.0);
  interior.front() = interior.back() = 0.0;
  nn::Var step = nn::mask_rows(w.f_u(nn::gather_rows(x, path_rows), training), std::move(interior));
  return nn::add(pos, step);
}

/// Runs `loops` dynamic updates from `path`: between loops the path vertices move to the proposal and
/// their k-NN neighborhoods are rebuilt. Returns the final proposal.
inline nn::Var smoother_rollout(const std::vector<Config>& path, const std::vector<Config>& free,
                                const std::vector<Config>& collided, const SmootherWeights& w, int loops,
                                bool training) {
  nn::Var pos = nn::constant(path_matrix(path));
  for (int t = 0; t < loops; ++t) {
    const SmootherGraph sg = smoother_graph(matrix_path(pos.value()), free, collided, w.spec().k0);
    pos = smoother_step(w, sg, pos, training);
  }
  return pos;
}

/// Proposed path after `loops` dynamic updates. Endpoints are the start and goal bit for bit.
inline std::vector<Config> smoother_forward(const std::vector<Config>& path, const std::vector<Config>& free,
                                            const std::vector<Config>& collided, const SmootherWeights& w,
                                            int loops = 1) {
  if (path.size() < 2) throw InvalidInput("smoother needs a path with at least two vertices");
  if (path.size() == 2) return path;
  nn::NoGradGuard guard;
  std::vector<Config> out = matrix_path(smoother_rollout(path, free, collided, w, loops, false).value());
  out.front() = path.front();
  out.back() = path.back();
  return out;
}

/// (1/k) sum over interior vertices of ||u_i - w_i||^2 after `loops` dynamic updates. Nothing when the
/// path has no interior vertex.
inline std::optional<nn::Var> smoother_loss(const std::vector<Config>& path, const std::vector<Config>& free,
                                            const std::vector<Config>& collided, const std::vector<Config>& target,
                                            const SmootherWeights& w, int loops, bool training) {
  if (target.size() != path.size()) throw InvalidInput("oracle path length differs from the input path");
  if (path.size() < 3) return std::nullopt;
  if (loops < 1) throw InvalidInput("smoother loss needs at least one loop");
  nn::Var u = smoother_rollout(path, free, collided, w, loops, training);
  std::vector<std::size_t> interior;
  for (std::size_t i = 1; i + 1 < path.size(); ++i) interior.push_back(i);
  return nn::mean_squared_rows(u, path_matrix(target), interior);
}

// ---------------------------------------------------------------------------
// Smoothing with feasibility guards

inline bool path_feasible_unmetered(const std::vector<Config>& path, const Environment& env) {
  for (const auto& q : path)
    if (!env.point_free(q)) return false;
  for (std::size_t i = 1; i < path.size(); ++i)
    if (!env.segment_free_unmetered(path[i - 1], path[i])) return false;
  return true;
}

namespace detail {

inline Config clamp_unit(Config q) {
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = std::clamp(q[i], 0.0, 1.0);
  return q;
}

/// Metered segment checks with a per-run cache, so an identical segment is never checked twice.
class SegmentCache {
 public:
  explicit SegmentCache(const Environment& env) : env_(env) {}
  bool free(const Config& a, const Config& b) {
    auto key = a.coords() < b.coords() ? std::make_pair(a.coords(), b.coords()) : std::make_pair(b.coords(), a.coords());
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    const bool ok = env_.segment_free(a, b);
    cache_.emplace(std::move(key), ok);
    return ok;
  }
  const Environment& env() const { return env_; }

 private:
  const Environment& env_;
  std::map<std::pair<std::vector<double>, std::vector<double>>, bool> cache_;
};

}  // namespace detail

struct SmoothOptions {
  double eps = 0.05;
  double delta = 1e-3;
  int outer_loops = 5;   // L
  int inner_rounds = 20; // K
};

namespace detail {

/// Up to K rounds moving every interior vertex toward its target by at most eps. A move must not lengthen
/// the vertex's two incident segments and needs a free landing point and both segments free. Returns false
/// when a round raised the cost (it is rolled back) so the caller stops.
inline bool steer_toward(std::vector<Config>& current, const std::vector<Config>& target, const SmoothOptions& opts,
                         SegmentCache& checks) {
  for (int k = 0; k < opts.inner_rounds; ++k) {
    const std::vector<Config> before = current;
    double d = 0.0;
    bool moved = false;
    for (std::size_t i = 1; i + 1 < current.size(); ++i) {
      const double gap = distance(current[i], target[i]);
      if (gap > 0.0) {
        const Config next = clamp_unit(gap <= opts.eps ? target[i] : lerp(current[i], target[i], opts.eps / gap));
        const double local = distance(current[i - 1], current[i]) + distance(current[i], current[i + 1]);
        const double moved_local = distance(current[i - 1], next) + distance(next, current[i + 1]);
        if (!(next == current[i]) && moved_local <= local && checks.env().point_free(next) &&
            checks.free(current[i - 1], next) && checks.free(next, current[i + 1])) {
          current[i] = next;
          moved = true;
        }
      }
      d += squared_distance(current[i], target[i]);
    }
    if (path_cost(current) > path_cost(before)) {
      current = before;
      return false;
    }
    if (!moved || d <= opts.delta) break;
  }
  return true;
}

}  // namespace detail

/// Learned smoothing: L calls of a one-loop smoother_forward, each followed by up to K rounds that steer
/// every interior vertex toward its proposal by at most eps. A move is committed only when it does not
/// lengthen its two segments and both are free, and a round that would raise the total cost is rolled back.
inline std::vector<Config> smooth(const std::vector<Config>& path, const std::vector<Config>& free,
                                  const std::vector<Config>& collided, const SmootherWeights& w, const Environment& env,
                                  const SmoothOptions& opts = {}) {
  if (path.size() < 2) throw InvalidInput("smooth needs a path with at least two vertices");
  if (!(opts.eps >= 0.0)) throw InvalidInput("smoothing step must be non-negative");
  if (!path_feasible_unmetered(path, env)) throw ContractViolation("smooth received an infeasible path");
  if (opts.eps == 0.0 || path.size() < 3) return path;
  detail::SegmentCache checks(env);
  std::vector<Config> current = path;
  for (int l = 0; l < opts.outer_loops; ++l) {
    const std::vector<Config> target = smoother_forward(current, free, collided, w, 1);
    if (!detail::steer_toward(current, target, opts, checks)) break;
  }
  return current;
}

// ---------------------------------------------------------------------------
// Oracle smoothers

/// Random perturbation: move one random interior vertex by uniform(-eps, eps) per coordinate; keep it only
/// if the local two-segment cost strictly drops and both segments are free.
inline std::vector<Config> oracle_random(const std::vector<Config>& path, const Environment& env, double eps,
                                         std::size_t iters, Rng& rng) {
  std::vector<Config> out = path;
  if (out.size() < 3) return out;
  for (std::size_t it = 0; it < iters; ++it) {
    const std::size_t i = 1 + rng.below(out.size() - 2);
    Config u = out[i];
    for (std::size_t c = 0; c < u.size(); ++c) u[c] += rng.uniform(-eps, eps);
    u = detail::clamp_unit(std::move(u));
    const double old_cost = distance(out[i - 1], out[i]) + distance(out[i], out[i + 1]);
    const double new_cost = distance(out[i - 1], u) + distance(u, out[i + 1]);
    if (!(new_cost < old_cost) || !env.point_free(u)) continue;
    if (env.segment_free(out[i - 1], u) && env.segment_free(u, out[i + 1])) out[i] = std::move(u);
  }
  return out;
}

/// Re-pads a shortcut path to the input's vertex count. `kept` lists the input indices that survive, in
/// order, including both endpoints. Each dropped vertex moves onto the shortcut segment between its kept
/// neighbors at its arc-length fraction of the original subpath, so index i of the result still
/// corresponds to input vertex i. Shape, cost and feasibility are those of the shortcut path.
inline std::vector<Config> repad_aligned(const std::vector<Config>& path, const std::vector<std::size_t>& kept) {
  std::vector<Config> out = path;
  for (std::size_t c = 0; c + 1 < kept.size(); ++c) {
    const std::size_t a = kept[c], b = kept[c + 1];
    if (b <= a + 1) continue;
    std::vector<double> arc(b - a + 1, 0.0);
    for (std::size_t i = a + 1; i <= b; ++i) arc[i - a] = arc[i - a - 1] + distance(path[i - 1], path[i]);
    for (std::size_t i = a + 1; i < b; ++i) {
      const double t = arc.back() > 0.0 ? arc[i - a] / arc.back() : static_cast<double>(i - a) / static_cast<double>(b - a);
      out[i] = lerp(path[a], path[b], t);
    }
  }
  return out;
}

/// Segment shortcutting. A vertex is critical when the two-hop skip over it is blocked; between consecutive
/// critical vertices the subpath is replaced by the shortest path through a visibility graph over its
/// vertices. The result is re-padded to the input vertex count with aligned indices.
inline std::vector<Config> oracle_segment(const std::vector<Config>& path, const Environment& env) {
  const std::size_t m = path.size();
  if (m < 3) return path;
  std::vector<std::size_t> critical = {0};
  for (std::size_t i = 1; i + 1 < m; ++i)
    if (!env.segment_free(path[i - 1], path[i + 1])) critical.push_back(i);
  critical.push_back(m - 1);

  std::vector<std::size_t> kept = {0};
  for (std::size_t c = 0; c + 1 < critical.size(); ++c) {
    const std::size_t a = critical[c];
    const std::size_t b = critical[c + 1];
    if (b == a + 1) {
      kept.push_back(b);
      continue;
    }
    // Visibility graph over path[a..b]; consecutive pairs are known free from the input path.
    const std::size_t len = b - a + 1;
    Rgg g;
    g.vertices.assign(path.begin() + static_cast<std::ptrdiff_t>(a), path.begin() + static_cast<std::ptrdiff_t>(b) + 1);
    g.labels.assign(len, VertexLabel::Free);
    g.incident.assign(len, {});
    for (std::size_t i = 0; i < len; ++i) {
      for (std::size_t j = i + 1; j < len; ++j) {
        if (j > i + 1 && !env.segment_free(g.vertices[i], g.vertices[j])) continue;
        g.incident[i].push_back(g.edges.size());
        g.incident[j].push_back(g.edges.size());
        g.edges.push_back({i, j, distance(g.vertices[i], g.vertices[j]), EdgeStatus::Free, true});
      }
    }
    const auto best = dijkstra(g, 0, len - 1, [](const Edge&, std::size_t) { return true; });
    for (std::size_t k = 1; k < best->vertices.size(); ++k) kept.push_back(a + best->vertices[k]);
  }
  return repad_aligned(path, kept);
}

/// Alternates random perturbation and segment shortcutting for `rounds` rounds.
inline std::vector<Config> oracle_smooth(const std::vector<Config>& path, const Environment& env, double eps,
                                         std::size_t rounds, Rng& rng, std::size_t iters_per_round = 200) {
  std::vector<Config> out = path;
  for (std::size_t r = 0; r < rounds; ++r) {
    out = oracle_random(out, env, eps, iters_per_round, rng);
    out = oracle_segment(out, env);
  }
  return out;
}

}  // namespace gnnmp
