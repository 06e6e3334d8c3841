#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gnnmp/errors.hpp"
#include "gnnmp/rng.hpp"

namespace gnnmp {

/// A point in the unit-cube configuration space [0,1]^n.
class Config {
 public:
  Config() = default;
  explicit Config(std::size_t dim, double fill = 0.0) : coords_(dim, fill) {}
  explicit Config(std::vector<double> coords) : coords_(std::move(coords)) {}
  Config(std::initializer_list<double> coords) : coords_(coords) {}

  std::size_t size() const { return coords_.size(); }
  double operator[](std::size_t i) const { return coords_[i]; }
  double& operator[](std::size_t i) { return coords_[i]; }
  const std::vector<double>& coords() const { return coords_; }
  auto begin() const { return coords_.begin(); }
  auto end() const { return coords_.end(); }

  bool operator==(const Config&) const = default;

 private:
  std::vector<double> coords_;
};

inline double squared_distance(const Config& a, const Config& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline double distance(const Config& a, const Config& b) { return std::sqrt(squared_distance(a, b)); }

/// a + t (b - a)
inline Config lerp(const Config& a, const Config& b, double t) {
  Config out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + t * (b[i] - a[i]);
  return out;
}

/// Closed axis-aligned box. Its encoded form for attention is (center, 2 * half_extent).
struct BoxObstacle {
  std::vector<double> center;
  std::vector<double> half_extent;

  bool contains(const Config& q) const {
    for (std::size_t i = 0; i < center.size(); ++i) {
      if (std::abs(q[i] - center[i]) > half_extent[i]) return false;
    }
    return true;
  }

  /// True if the closed segment [a, b] touches the closed box (slab test on the parameter interval).
  bool intersects_segment(const Config& a, const Config& b) const {
    double t_lo = 0.0;
    double t_hi = 1.0;
    for (std::size_t i = 0; i < center.size(); ++i) {
      const double lo = center[i] - half_extent[i];
      const double hi = center[i] + half_extent[i];
      const double d = b[i] - a[i];
      if (d == 0.0) {
        if (a[i] < lo || a[i] > hi) return false;
        continue;
      }
      double t0 = (lo - a[i]) / d;
      double t1 = (hi - a[i]) / d;
      if (t0 > t1) std::swap(t0, t1);
      t_lo = std::max(t_lo, t0);
      t_hi = std::min(t_hi, t1);
      if (t_lo > t_hi) return false;
    }
    return true;
  }

  bool operator==(const BoxObstacle&) const = default;
};

/// Box-obstacle world with a metered edge-check ledger. Everything except the counter is immutable.
class Environment {
 public:
  Environment() = default;
  Environment(std::size_t dim, std::vector<BoxObstacle> obstacles) : dim_(dim), obstacles_(std::move(obstacles)) {
    if (dim_ < 2) throw InvalidInput("environment dimension must be at least 2");
    for (const auto& o : obstacles_) {
      if (o.center.size() != dim_ || o.half_extent.size() != dim_)
        throw InvalidInput("obstacle dimension does not match environment");
      for (std::size_t i = 0; i < dim_; ++i) {
        if (!(o.half_extent[i] > 0.0)) throw InvalidInput("obstacle half extent must be positive");
        if (o.center[i] + o.half_extent[i] < 0.0 || o.center[i] - o.half_extent[i] > 1.0)
          throw InvalidInput("obstacle does not intersect the unit cube");
      }
    }
  }
  Environment(const Environment& other)
      : dim_(other.dim_), obstacles_(other.obstacles_), checks_(other.checks_.load()) {}
  Environment& operator=(const Environment& other) {
    dim_ = other.dim_;
    obstacles_ = other.obstacles_;
    checks_.store(other.checks_.load());
    return *this;
  }

  std::size_t dim() const { return dim_; }
  const std::vector<BoxObstacle>& obstacles() const { return obstacles_; }

  /// Point checks are bookkeeping and are not metered.
  bool point_free(const Config& q) const {
    require_dim(q);
    for (const auto& o : obstacles_) {
      if (o.contains(q)) return false;
    }
    return true;
  }

  /// Metered edge check: every call adds exactly one to the ledger.
  bool segment_free(const Config& a, const Config& b) const {
    require_dim(a);
    require_dim(b);
    checks_.fetch_add(1, std::memory_order_relaxed);
    return segment_free_impl(a, b);
  }

  /// Ground-truth query used for labeling and audits; never touches the ledger.
  bool segment_free_unmetered(const Config& a, const Config& b) const {
    require_dim(a);
    require_dim(b);
    return segment_free_impl(a, b);
  }

  std::uint64_t check_count() const { return checks_.load(std::memory_order_relaxed); }

  bool operator==(const Environment& other) const { return dim_ == other.dim_ && obstacles_ == other.obstacles_; }

 private:
  void require_dim(const Config& q) const {
    if (q.size() != dim_) throw InvalidInput("configuration dimension does not match environment");
  }

  bool segment_free_impl(const Config& a, const Config& b) const {
    for (const auto& o : obstacles_) {
      if (o.intersects_segment(a, b)) return false;
    }
    return true;
  }

  std::size_t dim_ = 2;
  std::vector<BoxObstacle> obstacles_;
  mutable std::atomic<std::uint64_t> checks_{0};
};

inline Config random_config(std::size_t dim, Rng& rng) {
  Config q(dim);
  for (std::size_t i = 0; i < dim; ++i) q[i] = rng.uniform();
  return q;
}

/// Rejection sampling, uniform on the unit cube restricted to free space.
inline std::vector<Config> sample_free(const Environment& env, Rng& rng, std::size_t count) {
  std::vector<Config> out;
  out.reserve(count);
  const std::size_t budget = 10000 * count;
  std::size_t attempts = 0;
  while (out.size() < count) {
    if (attempts++ >= budget) throw TooCluttered("free-space rejection sampling exceeded its attempt budget");
    Config q = random_config(env.dim(), rng);
    if (env.point_free(q)) out.push_back(std::move(q));
  }
  return out;
}

/// Mirror of sample_free for C_obs. An obstacle-free environment yields an empty list.
inline std::vector<Config> sample_colliding(const Environment& env, Rng& rng, std::size_t count) {
  std::vector<Config> out;
  if (env.obstacles().empty()) return out;
  out.reserve(count);
  const std::size_t budget = 10000 * count;
  std::size_t attempts = 0;
  while (out.size() < count) {
    if (attempts++ >= budget) throw TooCluttered("obstacle-space rejection sampling exceeded its attempt budget");
    Config q = random_config(env.dim(), rng);
    if (!env.point_free(q)) out.push_back(std::move(q));
  }
  return out;
}

struct Problem {
  Environment env;
  Config start;
  Config goal;
  std::uint64_t seed = 0;
};

enum class ProblemKind { RandomBoxes, UShape };

inline std::string to_string(ProblemKind kind) { return kind == ProblemKind::UShape ? "u_shape" : "random_boxes"; }

inline ProblemKind parse_problem_kind(const std::string& s) {
  if (s == "random_boxes") return ProblemKind::RandomBoxes;
  if (s == "u_shape") return ProblemKind::UShape;
  throw InvalidInput("unknown problem kind: " + s);
}

struct GeneratorOptions {
  double min_half_extent = 0.04;
  double max_half_extent = 0.12;
  /// Minimum start-goal distance for random box worlds.
  double min_start_goal_distance = 0.5;
  int max_retries = 100;
};

/// Grid connectivity test used to certify that a generated problem is solvable. Unmetered.
inline bool grid_feasible(const Environment& env, const Config& start, const Config& goal) {
  const std::size_t n = env.dim();
  std::size_t res = 64;
  if (n == 3) res = 24;
  if (n > 3) res = std::max<std::size_t>(3, static_cast<std::size_t>(std::floor(std::pow(2.0e5, 1.0 / n))));
  std::size_t total = 1;
  for (std::size_t i = 0; i < n; ++i) total *= res;

  auto center = [&](std::size_t cell) {
    Config q(n);
    for (std::size_t i = 0; i < n; ++i) {
      q[i] = (static_cast<double>(cell % res) + 0.5) / static_cast<double>(res);
      cell /= res;
    }
    return q;
  };
  auto cell_of = [&](const Config& q) {
    std::size_t cell = 0;
    std::size_t stride = 1;
    for (std::size_t i = 0; i < n; ++i) {
      auto c = static_cast<std::size_t>(std::clamp(q[i] * static_cast<double>(res), 0.0, static_cast<double>(res - 1)));
      cell += c * stride;
      stride *= res;
    }
    return cell;
  };
  // Neighbors of a cell along each axis.
  auto neighbors = [&](std::size_t cell, auto&& visit) {
    std::size_t stride = 1;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = (cell / stride) % res;
      if (c > 0) visit(cell - stride);
      if (c + 1 < res) visit(cell + stride);
      stride *= res;
    }
  };

  if (env.segment_free_unmetered(start, goal)) return true;

  std::vector<char> free_cell(total, 0);
  for (std::size_t c = 0; c < total; ++c) free_cell[c] = env.point_free(center(c)) ? 1 : 0;

  std::vector<char> seen(total, 0);
  std::queue<std::size_t> frontier;
  auto seed_from = [&](const Config& q, auto&& visit) {
    const std::size_t c0 = cell_of(q);
    auto try_cell = [&](std::size_t c) {
      if (free_cell[c] && env.segment_free_unmetered(q, center(c))) visit(c);
    };
    try_cell(c0);
    neighbors(c0, try_cell);
  };
  seed_from(start, [&](std::size_t c) {
    if (!seen[c]) {
      seen[c] = 1;
      frontier.push(c);
    }
  });
  std::vector<char> goal_cell(total, 0);
  seed_from(goal, [&](std::size_t c) { goal_cell[c] = 1; });

  while (!frontier.empty()) {
    const std::size_t c = frontier.front();
    frontier.pop();
    if (goal_cell[c]) return true;
    const Config qc = center(c);
    neighbors(c, [&](std::size_t d) {
      if (seen[d] || !free_cell[d]) return;
      if (!env.segment_free_unmetered(qc, center(d))) return;
      seen[d] = 1;
      frontier.push(d);
    });
  }
  return false;
}

namespace detail {

inline BoxObstacle make_box(double x0, double x1, double y0, double y1) {
  return BoxObstacle{{0.5 * (x0 + x1), 0.5 * (y0 + y1)}, {0.5 * (x1 - x0), 0.5 * (y1 - y0)}};
}

/// Rotates a canonical (opening-up) layout by quarter turns about the cube center.
inline std::pair<double, double> rotate_quarter(double x, double y, int turns) {
  for (int t = 0; t < turns; ++t) {
    const double nx = 1.0 - y;
    const double ny = x;
    x = nx;
    y = ny;
  }
  return {x, y};
}

inline BoxObstacle rotate_box(const BoxObstacle& b, int turns) {
  auto [cx, cy] = rotate_quarter(b.center[0], b.center[1], turns);
  double hx = b.half_extent[0];
  double hy = b.half_extent[1];
  if (turns % 2 == 1) std::swap(hx, hy);
  return BoxObstacle{{cx, cy}, {hx, hy}};
}

inline bool try_random_boxes(std::size_t dim, std::size_t n_obstacles, const GeneratorOptions& opts, Rng& rng,
                             Problem& out) {
  std::vector<BoxObstacle> boxes;
  for (std::size_t k = 0; k < n_obstacles; ++k) {
    BoxObstacle b;
    for (std::size_t i = 0; i < dim; ++i) {
      b.center.push_back(rng.uniform());
      b.half_extent.push_back(rng.uniform(opts.min_half_extent, opts.max_half_extent));
    }
    boxes.push_back(std::move(b));
  }
  Environment env(dim, std::move(boxes));
  const double min_dist = n_obstacles == 0 ? 0.0 : opts.min_start_goal_distance;
  for (int attempt = 0; attempt < 50; ++attempt) {
    Config s = random_config(dim, rng);
    Config g = random_config(dim, rng);
    if (!env.point_free(s) || !env.point_free(g) || s == g) continue;
    if (distance(s, g) < min_dist) continue;
    if (!grid_feasible(env, s, g)) continue;
    out.env = std::move(env);
    out.start = std::move(s);
    out.goal = std::move(g);
    return true;
  }
  return false;
}

inline bool try_u_shape(Rng& rng, Problem& out) {
  // Canonical U opening toward +y; the bar along the bottom, arms rising on both sides.
  const double cx = rng.uniform(0.4, 0.6);
  const double bottom = rng.uniform(0.3, 0.4);
  const double half_width = rng.uniform(0.15, 0.22);
  const double depth = rng.uniform(0.25, 0.35);
  const double thick = rng.uniform(0.03, 0.05);
  const double x0 = cx - half_width;
  const double x1 = cx + half_width;
  const double top = bottom + depth;
  std::vector<BoxObstacle> boxes = {
      make_box(x0, x1, bottom - thick, bottom),
      make_box(x0, x0 + thick, bottom - thick, top),
      make_box(x1 - thick, x1, bottom - thick, top),
  };
  const double inner = half_width - thick;
  const double sx = cx + rng.uniform(-0.5, 0.5) * inner;
  const double sy = bottom + rng.uniform(0.02, 0.3 * depth);
  const double gx = cx + rng.uniform(-0.6, 0.6) * half_width;
  const double gy = bottom - thick - rng.uniform(0.08, 0.2);
  const int turns = static_cast<int>(rng.below(4));
  for (auto& b : boxes) b = rotate_box(b, turns);
  auto [rsx, rsy] = rotate_quarter(sx, sy, turns);
  auto [rgx, rgy] = rotate_quarter(gx, gy, turns);
  Environment env(2, std::move(boxes));
  Config s{rsx, rsy};
  Config g{rgx, rgy};
  for (double v : {rsx, rsy, rgx, rgy}) {
    if (v <= 0.0 || v >= 1.0) return false;
  }
  if (!env.point_free(s) || !env.point_free(g)) return false;
  if (env.segment_free_unmetered(s, g)) return false;
  if (!grid_feasible(env, s, g)) return false;
  out.env = std::move(env);
  out.start = std::move(s);
  out.goal = std::move(g);
  return true;
}

}  // namespace detail

/// Deterministic problem generator: the same arguments always produce the same problem.
inline Problem generate_problem(std::size_t dim, std::size_t n_obstacles, ProblemKind kind, std::uint64_t seed,
                                const GeneratorOptions& opts = {}) {
  if (dim < 2) throw InvalidInput("dimension must be at least 2");
  if (kind == ProblemKind::UShape && dim != 2) throw InvalidInput("u_shape problems are two-dimensional");
  Rng rng(derive_seed(seed, 0x9E0));
  Problem p;
  p.seed = seed;
  for (int retry = 0; retry < opts.max_retries; ++retry) {
    const bool ok = kind == ProblemKind::UShape ? detail::try_u_shape(rng, p)
                                                : detail::try_random_boxes(dim, n_obstacles, opts, rng, p);
    if (ok) {
      p.seed = seed;
      return p;
    }
  }
  throw GenerationError("could not generate a feasible problem for seed " + std::to_string(seed));
}

// JSON schema: {dim, obstacles:[{center, half_extent}], start, goal, seed}

inline nlohmann::json to_json(const Problem& p) {
  nlohmann::json j;
  j["dim"] = p.env.dim();
  j["obstacles"] = nlohmann::json::array();
  for (const auto& o : p.env.obstacles()) j["obstacles"].push_back({{"center", o.center}, {"half_extent", o.half_extent}});
  j["start"] = p.start.coords();
  j["goal"] = p.goal.coords();
  j["seed"] = p.seed;
  return j;
}

inline Problem problem_from_json(const nlohmann::json& j) {
  try {
    const auto dim = j.at("dim").get<std::size_t>();
    std::vector<BoxObstacle> boxes;
    for (const auto& o : j.at("obstacles")) {
      boxes.push_back(BoxObstacle{o.at("center").get<std::vector<double>>(), o.at("half_extent").get<std::vector<double>>()});
    }
    Problem p;
    p.env = Environment(dim, std::move(boxes));
    p.start = Config(j.at("start").get<std::vector<double>>());
    p.goal = Config(j.at("goal").get<std::vector<double>>());
    p.seed = j.at("seed").get<std::uint64_t>();
    if (p.start.size() != dim || p.goal.size() != dim) throw InvalidInput("start/goal dimension mismatch");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed problem json: ") + e.what());
  }
}

}  // namespace gnnmp
