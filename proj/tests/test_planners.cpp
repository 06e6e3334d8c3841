#include <gtest/gtest.h>

#include "gnnmp/planners.hpp"

using namespace gnnmp;

namespace {

PlannerConfig config(PlannerKind kind, std::uint64_t seed = 0) {
  PlannerConfig c;
  c.kind = kind;
  c.seed = seed;
  return c;
}

void expect_feasible(const PlanResult& r, const Problem& p) {
  ASSERT_TRUE(r.path);
  const auto& q = r.path->configs;
  EXPECT_EQ(q.front(), p.start);
  EXPECT_EQ(q.back(), p.goal);
  for (std::size_t i = 1; i < q.size(); ++i) EXPECT_TRUE(p.env.segment_free_unmetered(q[i - 1], q[i]));
  EXPECT_GE(r.report.path_cost, distance(p.start, p.goal) - 1e-12);
}

Rgg first_graph(const Problem& p, const PlannerConfig& c) {
  SampleStream stream(p.env, p.seed, c.seed);
  BatchGraph bg(p.start, p.goal, c.k0);
  return bg.add_batch(stream.next(c.batch_size), nullptr);
}

}  // namespace

TEST(RrtStar, GoalWithinOneStep) {
  Problem p{Environment(2, {}), Config{0.5, 0.5}, Config{0.53, 0.52}, 1};
  auto c = config(PlannerKind::RrtStar);
  c.max_samples = 200;
  const auto r = rrt_star(p, c);
  expect_feasible(r, p);
  EXPECT_LE(r.path->configs.size(), 3u);
}

TEST(RrtStar, ZeroBudgetFails) {
  Problem p{Environment(2, {}), Config{0.1, 0.1}, Config{0.9, 0.9}, 1};
  auto c = config(PlannerKind::RrtStar);
  c.max_samples = 0;
  const auto r = rrt_star(p, c);
  EXPECT_FALSE(r.path);
  EXPECT_EQ(r.report.edge_checks, 0u);
}

TEST(RrtStar, EmptyEnvNearStraightLine) {
  Problem p{Environment(2, {}), Config{0.2, 0.2}, Config{0.8, 0.7}, 3};
  double total = 0.0;
  for (std::uint64_t s = 0; s < 4; ++s) {
    auto c = config(PlannerKind::RrtStar, s);
    c.max_samples = 3000;
    const auto r = rrt_star(p, c);
    expect_feasible(r, p);
    total += r.report.path_cost / distance(p.start, p.goal);
  }
  EXPECT_LT(total / 4.0, 1.10);
}

TEST(LazySp, AllFreeChecksOneShortestPath) {
  Problem p{Environment(2, {}), Config{0.1, 0.2}, Config{0.85, 0.9}, 5};
  const auto c = config(PlannerKind::LazySp, 2);
  const auto r = lazy_sp(p, c);
  expect_feasible(r, p);
  const Rgg g = first_graph(p, c);
  const auto best = dijkstra(g, 0, 1, optimistic_edge);
  EXPECT_EQ(r.path->vertices, best->vertices);
  EXPECT_EQ(r.report.edge_checks, best->vertices.size() - 1);
}

TEST(LazySp, SingleBlockedEdgeCostsOneExtraCheck) {
  const BoxObstacle corner{{0.95, 0.05}, {0.04, 0.04}};
  Problem base{Environment(2, {corner}), Config{0.1, 0.2}, Config{0.85, 0.9}, 6};
  const auto c = config(PlannerKind::LazySp, 1);
  Rgg g = first_graph(base, c);
  const auto first = dijkstra(g, 0, 1, optimistic_edge);
  ASSERT_GE(first->vertices.size(), 4u);
  const std::size_t j = first->vertices.size() / 2;
  const Config mid = lerp(first->configs[j - 1], first->configs[j], 0.5);
  Problem p{Environment(2, {corner, BoxObstacle{mid.coords(), {1e-4, 1e-4}}}), base.start, base.goal, base.seed};
  ASSERT_EQ(first_graph(p, c).vertices, g.vertices);
  // Fixture oracle: j checks along the first path (the last one fails), then the unknown edges of the
  // replacement path, which must itself be free for the fixture to be valid.
  for (std::size_t i = 1; i < j; ++i) g.edges[*g.find_edge(first->vertices[i - 1], first->vertices[i])].status = EdgeStatus::Free;
  g.edges[*g.find_edge(first->vertices[j - 1], first->vertices[j])].status = EdgeStatus::Blocked;
  const auto second = dijkstra(g, 0, 1, optimistic_edge);
  ASSERT_TRUE(second);
  std::size_t unknown = 0;
  for (std::size_t i = 1; i < second->vertices.size(); ++i) {
    const Edge& e = g.edges[*g.find_edge(second->vertices[i - 1], second->vertices[i])];
    ASSERT_TRUE(p.env.segment_free_unmetered(g.vertices[e.u], g.vertices[e.v]));
    if (e.status == EdgeStatus::Unknown) ++unknown;
  }
  const auto r = lazy_sp(p, c);
  expect_feasible(r, p);
  EXPECT_EQ(r.report.edge_checks, j + unknown);
  EXPECT_EQ(r.path->vertices, second->vertices);
}

TEST(BitLite, EmptyEnvChecksFewEdges) {
  Problem p{Environment(2, {}), Config{0.1, 0.1}, Config{0.9, 0.85}, 7};
  const auto c = config(PlannerKind::BitLite, 3);
  const auto r = bit_lite(p, c);
  expect_feasible(r, p);
  const Rgg g = first_graph(p, c);
  EXPECT_LT(r.report.edge_checks * 5, g.edges.size());
}

TEST(BitLite, ZeroHeuristicMatchesDijkstraOptimum) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Problem p = generate_problem(2, 8, ProblemKind::RandomBoxes, 300 + s);
    auto c = config(PlannerKind::BitLite, s);
    c.heuristic_weight = 0.0;
    c.max_samples = c.batch_size;
    const auto r = bit_lite(p, c);
    const Rgg g = first_graph(p, c);
    const auto truth = ground_truth_statuses(g, p.env);
    const auto best = dijkstra(g, 0, 1, [&](const Edge& e, std::size_t id) { return e.traversable && truth[id] == EdgeStatus::Free; });
    EXPECT_EQ(r.path.has_value(), best.has_value());
    if (best) {
      EXPECT_NEAR(r.report.path_cost, best->cost(), 1e-12);
    }
  }
}

TEST(BitLite, Deterministic) {
  const Problem p = generate_problem(2, 8, ProblemKind::UShape, 11);
  const auto c = config(PlannerKind::BitLite, 4);
  const auto a = bit_lite(p, c);
  const auto b = bit_lite(p, c);
  EXPECT_EQ(a.report.edge_checks, b.report.edge_checks);
  EXPECT_EQ(a.report.path_cost, b.report.path_cost);
  EXPECT_EQ(a.report.samples, b.report.samples);
  EXPECT_EQ(a.report.success, b.report.success);
}

TEST(Planners, LedgerAuditAndFeasibility) {
  ExplorerWeights ew(ExplorerSpec{2, 16, true, 1}, 1);
  SmootherWeights sw(SmootherSpec{2, 16}, 1);
  const PlannerModels models{&ew, &sw};
  for (std::uint64_t s = 0; s < 4; ++s) {
    const Problem p = generate_problem(2, 8, s % 2 ? ProblemKind::UShape : ProblemKind::RandomBoxes, 400 + s);
    for (auto kind : {PlannerKind::RrtStar, PlannerKind::LazySp, PlannerKind::BitLite, PlannerKind::Gnn, PlannerKind::GnnSmooth}) {
      for (auto mode : {SmootherMode::Gnn, SmootherMode::Oracle}) {
        if (kind != PlannerKind::GnnSmooth && mode == SmootherMode::Oracle) continue;
        auto c = config(kind, s);
        c.smoother = mode;
        const auto before = p.env.check_count();
        const auto r = plan(p, c, models);
        EXPECT_EQ(r.report.edge_checks, p.env.check_count() - before) << to_string(kind);
        EXPECT_EQ(r.report.planner, to_string(kind));
        if (r.path) expect_feasible(r, p);
        if (kind == PlannerKind::GnnSmooth) {
          EXPECT_GE(r.report.edge_checks, r.report.explore_checks);
        }
      }
    }
  }
}

TEST(Planners, ExplorePhaseSharedByGnnVariants) {
  ExplorerWeights ew(ExplorerSpec{2, 16, true, 1}, 2);
  SmootherWeights sw(SmootherSpec{2, 16}, 2);
  const Problem p = generate_problem(2, 8, ProblemKind::RandomBoxes, 500);
  const auto a = plan(p, config(PlannerKind::Gnn, 1), {&ew, &sw});
  const auto b = plan(p, config(PlannerKind::GnnSmooth, 1), {&ew, &sw});
  EXPECT_EQ(a.report.edge_checks, b.report.explore_checks);
  EXPECT_LE(b.report.path_cost, a.report.path_cost + 1e-9);
}

TEST(Planners, ConfigValidationAndParsing) {
  const Problem p = generate_problem(2, 4, ProblemKind::RandomBoxes, 1);
  EXPECT_THROW(plan(p, config(PlannerKind::Gnn)), InvalidInput);
  auto c = config(PlannerKind::LazySp);
  c.batch_size = 0;
  EXPECT_THROW(plan(p, c), InvalidInput);
  EXPECT_EQ(parse_planner_kind("bit_lite"), PlannerKind::BitLite);
  EXPECT_EQ(parse_smoother_mode("oracle"), SmootherMode::Oracle);
  EXPECT_THROW(parse_planner_kind("next"), InvalidInput);
}
