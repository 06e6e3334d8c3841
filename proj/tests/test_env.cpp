#include <gtest/gtest.h>

#include <thread>

#include "gnnmp/env.hpp"

using namespace gnnmp;

namespace {

Environment single_box() { return Environment(2, {BoxObstacle{{0.5, 0.5}, {0.1, 0.1}}}); }

// Independent per-axis interval oracle for a point against closed boxes.
bool point_free_oracle(const Environment& env, const Config& q) {
  for (const auto& o : env.obstacles()) {
    bool inside = true;
    for (std::size_t i = 0; i < q.size(); ++i) inside = inside && (q[i] >= o.center[i] - o.half_extent[i] && q[i] <= o.center[i] + o.half_extent[i]);
    if (inside) return false;
  }
  return true;
}

Environment random_env(std::size_t dim, std::size_t boxes, Rng& rng) {
  std::vector<BoxObstacle> obs;
  for (std::size_t k = 0; k < boxes; ++k) {
    BoxObstacle b;
    for (std::size_t i = 0; i < dim; ++i) {
      b.center.push_back(rng.uniform());
      b.half_extent.push_back(rng.uniform(0.02, 0.15));
    }
    obs.push_back(b);
  }
  return Environment(dim, obs);
}

}  // namespace

TEST(PointFree, EmptyEnvironmentIsFree) {
  Environment env(2, {});
  EXPECT_TRUE(env.point_free(Config{0.5, 0.5}));
}

TEST(PointFree, BoxCenterCollides) { EXPECT_FALSE(single_box().point_free(Config{0.5, 0.5})); }

TEST(PointFree, OutsideSlab) {
  const auto env = single_box();
  const Config q{0.75, 0.5};
  EXPECT_EQ(env.point_free(q), point_free_oracle(env, q));
  EXPECT_TRUE(env.point_free(q));
}

TEST(PointFree, BoundaryCountsAsCollision) { EXPECT_FALSE(single_box().point_free(Config{0.6, 0.5})); }

TEST(PointFree, DoesNotMeter) {
  const auto env = single_box();
  env.point_free(Config{0.1, 0.1});
  EXPECT_EQ(env.check_count(), 0u);
}

TEST(PointFree, DimensionMismatchThrows) {
  EXPECT_THROW(single_box().point_free(Config{0.5, 0.5, 0.5}), InvalidInput);
}

TEST(SegmentFree, ThroughCenterBlocked) {
  const auto env = single_box();
  EXPECT_FALSE(env.segment_free(Config{0.0, 0.0}, Config{1.0, 1.0}));
  EXPECT_EQ(env.check_count(), 1u);
}

TEST(SegmentFree, AboveBoxFree) {
  const auto env = single_box();
  EXPECT_TRUE(env.segment_free(Config{0.0, 0.9}, Config{1.0, 0.9}));
}

TEST(SegmentFree, DegenerateSegmentCountsOnce) {
  const auto env = single_box();
  EXPECT_TRUE(env.segment_free(Config{0.2, 0.2}, Config{0.2, 0.2}));
  EXPECT_FALSE(env.segment_free(Config{0.5, 0.5}, Config{0.5, 0.5}));
  EXPECT_EQ(env.check_count(), 2u);
}

TEST(SegmentFree, UnmeteredDoesNotCount) {
  const auto env = single_box();
  env.segment_free_unmetered(Config{0.0, 0.0}, Config{1.0, 1.0});
  EXPECT_EQ(env.check_count(), 0u);
}

TEST(SegmentFree, SymmetricAndAgreesWithDiscretizedOracle) {
  Rng rng(7);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t dim = 2 + static_cast<std::size_t>(trial % 3);
    const auto env = random_env(dim, 6, rng);
    for (int s = 0; s < 25; ++s) {
      const Config a = random_config(dim, rng);
      const Config b = random_config(dim, rng);
      const bool ab = env.segment_free_unmetered(a, b);
      ASSERT_EQ(ab, env.segment_free_unmetered(b, a));
      bool any_hit = false;
      for (int i = 0; i <= 1000; ++i) {
        const Config q = lerp(a, b, i / 1000.0);
        if (!point_free_oracle(env, q)) any_hit = true;
      }
      if (ab) {
        ASSERT_FALSE(any_hit) << "free segment with a colliding interior point";
      }
      if (any_hit) {
        ASSERT_FALSE(ab);
      }
    }
  }
}

TEST(Sampling, ZeroCount) {
  Rng rng(1);
  EXPECT_TRUE(sample_free(single_box(), rng, 0).empty());
  EXPECT_TRUE(sample_colliding(single_box(), rng, 0).empty());
}

TEST(Sampling, EmptyEnvironmentAcceptsEverything) {
  Rng rng(1);
  Environment env(2, {});
  const auto pts = sample_free(env, rng, 5);
  ASSERT_EQ(pts.size(), 5u);
  for (const auto& q : pts)
    for (double c : q) EXPECT_TRUE(c >= 0.0 && c < 1.0);
  EXPECT_TRUE(sample_colliding(env, rng, 5).empty());
}

TEST(Sampling, FreeSamplesPassPointOracle) {
  Rng rng(3);
  const auto env = single_box();  // free volume 0.96
  const auto pts = sample_free(env, rng, 100);
  ASSERT_EQ(pts.size(), 100u);
  for (const auto& q : pts) EXPECT_TRUE(point_free_oracle(env, q));
}

TEST(Sampling, CollidingSamplesInsideBox) {
  Rng rng(3);
  const auto env = single_box();
  const auto pts = sample_colliding(env, rng, 3);
  ASSERT_EQ(pts.size(), 3u);
  for (const auto& q : pts) EXPECT_FALSE(point_free_oracle(env, q));
}

TEST(Sampling, ClutteredEnvironmentThrows) {
  Rng rng(3);
  Environment env(2, {BoxObstacle{{0.5, 0.5}, {0.6, 0.6}}});
  EXPECT_THROW(sample_free(env, rng, 2), TooCluttered);
}

TEST(Sampling, DeterministicForSeed) {
  const auto env = single_box();
  Rng a(42), b(42);
  EXPECT_EQ(sample_free(env, a, 20), sample_free(env, b, 20));
}

TEST(GenerateProblem, UShapeStartInsideConcavity) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Problem p = generate_problem(2, 0, ProblemKind::UShape, seed);
    ASSERT_EQ(p.env.obstacles().size(), 3u);
    EXPECT_TRUE(p.env.point_free(p.start));
    EXPECT_TRUE(p.env.point_free(p.goal));
    EXPECT_FALSE(p.env.segment_free_unmetered(p.start, p.goal));
    EXPECT_TRUE(grid_feasible(p.env, p.start, p.goal));
  }
}

TEST(GenerateProblem, NoObstacles) {
  const Problem p = generate_problem(3, 0, ProblemKind::RandomBoxes, 5);
  EXPECT_TRUE(p.env.obstacles().empty());
  EXPECT_NE(p.start, p.goal);
}

TEST(GenerateProblem, SameSeedIdentical) {
  const Problem a = generate_problem(2, 8, ProblemKind::RandomBoxes, 99);
  const Problem b = generate_problem(2, 8, ProblemKind::RandomBoxes, 99);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
  EXPECT_TRUE(a.env == b.env);
}

TEST(GenerateProblem, UShapeRequiresTwoDimensions) {
  EXPECT_THROW(generate_problem(3, 0, ProblemKind::UShape, 1), InvalidInput);
}

TEST(GenerateProblem, RandomBoxesFeasible) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Problem p = generate_problem(2, 10, ProblemKind::RandomBoxes, seed);
    EXPECT_TRUE(p.env.point_free(p.start));
    EXPECT_TRUE(p.env.point_free(p.goal));
    EXPECT_TRUE(grid_feasible(p.env, p.start, p.goal));
    EXPECT_GE(distance(p.start, p.goal), 0.5);
  }
}

TEST(ProblemJson, RoundTripBitExact) {
  const Problem p = generate_problem(3, 5, ProblemKind::RandomBoxes, 17);
  const Problem q = problem_from_json(nlohmann::json::parse(to_json(p).dump()));
  EXPECT_TRUE(p.env == q.env);
  EXPECT_EQ(p.start, q.start);
  EXPECT_EQ(p.goal, q.goal);
  EXPECT_EQ(p.seed, q.seed);
}

TEST(ProblemJson, MalformedRejected) {
  EXPECT_THROW(problem_from_json(nlohmann::json::parse(R"({"dim":2})")), FormatError);
}

TEST(Ledger, ConcurrentIncrementsAreCounted) {
  const auto env = single_box();
  std::vector<std::thread> workers;
  for (int t = 0; t < 4; ++t)
    workers.emplace_back([&] {
      for (int i = 0; i < 1000; ++i) env.segment_free(Config{0.0, 0.0}, Config{0.1, 0.1});
    });
  for (auto& w : workers) w.join();
  EXPECT_EQ(env.check_count(), 4000u);
}
