#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "gnnmp/nn/layers.hpp"
#include "gnnmp/nn/weights_io.hpp"
#include "gradcheck.hpp"

using namespace gnnmp;
using namespace gnnmp::nn;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Matrix m(r, c);
  for (double& v : m.data) v = rng.uniform(lo, hi);
  return m;
}

Matrix permute_rows(const Matrix& m, const std::vector<std::size_t>& perm) {
  Matrix out(m.rows, m.cols);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) out(r, c) = m(perm[r], c);
  return out;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  EXPECT_TRUE(a.same_shape(b));
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a.data[i] - b.data[i]));
  return d;
}

}  // namespace

TEST(Mlp, IdentityLayerGivesRelu) {
  ParameterStore store;
  Rng rng(1);
  Linear l = Linear::create(store, "l", 3, 3, rng);
  std::fill(l.weight->value.data.begin(), l.weight->value.data.end(), 0.0);
  for (std::size_t i = 0; i < 3; ++i) l.weight->value(i, i) = 1.0;
  std::fill(l.bias->value.data.begin(), l.bias->value.data.end(), 0.0);
  const Var out = relu(l(constant(Matrix(1, 3, {-1.0, 0.5, 2.0}))));
  EXPECT_EQ(out.value(), Matrix(1, 3, {0.0, 0.5, 2.0}));
}

TEST(Mlp, ZeroWeightsBroadcastBias) {
  ParameterStore store;
  Rng rng(2);
  Mlp m = Mlp::create(store, "m", 4, 5, 2, false, rng);
  std::fill(m.second.weight->value.data.begin(), m.second.weight->value.data.end(), 0.0);
  m.second.bias->value = Matrix(1, 2, {0.25, -3.0});
  const Var out = m(constant(random_matrix(6, 4, rng)), false);
  for (std::size_t r = 0; r < 6; ++r) {
    EXPECT_EQ(out.value()(r, 0), 0.25);
    EXPECT_EQ(out.value()(r, 1), -3.0);
  }
}

TEST(Mlp, ShapeMismatchThrows) {
  ParameterStore store;
  Rng rng(3);
  Mlp m = Mlp::create(store, "m", 4, 5, 2, false, rng);
  EXPECT_THROW(m(constant(Matrix(2, 3)), false), InvalidInput);
}

TEST(Mlp, GradientMatchesFiniteDifferences) {
  for (bool bn : {false, true}) {
    ParameterStore store;
    Rng rng(4);
    Mlp m = Mlp::create(store, "m", 5, 7, 3, bn, rng);
    const Matrix x = random_matrix(9, 5, rng);
    const auto r = check::grad_check(store, [&] { return sum_all(m(constant(x), true)); });
    EXPECT_GT(r.checked, 0u);
    EXPECT_LE(r.skipped * 10, r.checked + r.skipped);
    EXPECT_LT(r.max_rel_error, 1e-4) << "batch norm " << bn;
  }
}

TEST(Mlp, BatchNormEvalIsBatchSizeIndependent) {
  ParameterStore store;
  Rng rng(5);
  Mlp m = Mlp::create(store, "m", 4, 6, 2, true, rng);
  for (int i = 0; i < 5; ++i) m(constant(random_matrix(10, 4, rng)), true);
  const Matrix x = random_matrix(7, 4, rng);
  const Matrix batched = m(constant(x), false).value();
  for (std::size_t r = 0; r < x.rows; ++r) {
    Matrix one(1, 4, std::vector<double>(x.row_ptr(r), x.row_ptr(r) + 4));
    const Matrix single = m(constant(one), false).value();
    for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(single(0, c), batched(r, c));
  }
}

TEST(Mlp, Deterministic) {
  auto run = [] {
    ParameterStore store;
    Rng rng(6);
    Mlp m = Mlp::create(store, "m", 3, 4, 2, true, rng);
    const Matrix x = random_matrix(5, 3, rng);
    backward(sum_all(m(constant(x), true)));
    std::vector<double> all;
    for (std::size_t i = 0; i < store.size(); ++i) {
      all.insert(all.end(), store.at(i).value.data.begin(), store.at(i).value.data.end());
      all.insert(all.end(), store.at(i).grad.data.begin(), store.at(i).grad.data.end());
    }
    return all;
  };
  EXPECT_EQ(run(), run());
}

TEST(MaxAggregate, Examples) {
  const Var a = constant(Matrix(2, 2, {1, 5, 3, 2}));
  EXPECT_EQ(segment_max(a, {0, 0}, 1).value(), Matrix(1, 2, {3, 5}));
  const Var b = constant(Matrix(1, 3, {0.5, -2, 7}));
  EXPECT_EQ(segment_max(b, {0}, 1).value(), b.value());
}

TEST(MaxAggregate, PermutationInvariant) {
  Rng rng(7);
  const Matrix m = random_matrix(12, 4, rng);
  std::vector<std::size_t> seg(12);
  for (std::size_t i = 0; i < 12; ++i) seg[i] = i % 3;
  std::vector<std::size_t> perm(12);
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  std::vector<std::size_t> seg_p(12);
  for (std::size_t i = 0; i < 12; ++i) seg_p[i] = seg[perm[i]];
  EXPECT_EQ(segment_max(constant(m), seg, 3).value(), segment_max(constant(permute_rows(m, perm)), seg_p, 3).value());
}

TEST(MaxAggregate, EmptySegment) {
  const Var a = constant(Matrix(1, 2, {1, 2}));
  EXPECT_THROW(segment_max(a, {0}, 2), InvalidInput);
  const Matrix filled = segment_max(a, {0}, 2, 0.0).value();
  EXPECT_EQ(filled, Matrix(2, 2, {1, 2, 0, 0}));
}

TEST(MaxAggregate, TieGradientGoesToLowestRow) {
  Parameter p;
  p.value = Matrix(3, 1, {2, 2, 1});
  p.grad = Matrix(3, 1);
  backward(sum_all(segment_max(leaf(p), {0, 0, 0}, 1)));
  EXPECT_EQ(p.grad, Matrix(3, 1, {1, 0, 0}));
}

TEST(Attention, SingleKeyReturnsValue) {
  Rng rng(8);
  const Matrix v = random_matrix(1, 3, rng);
  const Matrix out = attention(constant(random_matrix(1, 4, rng)), constant(random_matrix(5, 4, rng)), constant(v)).value();
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(out(r, c), v(0, c));
}

TEST(Attention, IdenticalKeysAverageValues) {
  const Matrix k(2, 2, {0.3, -0.7, 0.3, -0.7});
  const Matrix v(2, 2, {1.0, 4.0, 3.0, -2.0});
  const Matrix out = attention(constant(k), constant(Matrix(1, 2, {0.9, 0.1})), constant(v)).value();
  EXPECT_NEAR(out(0, 0), 2.0, 1e-15);
  EXPECT_NEAR(out(0, 1), 1.0, 1e-15);
}

TEST(Attention, JointKeyValuePermutationInvariant) {
  Rng rng(9);
  const Matrix k = random_matrix(6, 4, rng), q = random_matrix(3, 4, rng), v = random_matrix(6, 2, rng);
  const std::vector<std::size_t> perm = {3, 0, 5, 1, 4, 2};
  const Matrix a = attention(constant(k), constant(q), constant(v)).value();
  const Matrix b = attention(constant(permute_rows(k, perm)), constant(q), constant(permute_rows(v, perm))).value();
  EXPECT_LT(max_abs_diff(a, b), 1e-12);
}

TEST(Attention, NoKeysGivesZeros) {
  const Matrix out = attention(constant(Matrix(0, 4)), constant(Matrix(2, 4, 1.0)), constant(Matrix(0, 3))).value();
  EXPECT_EQ(out, Matrix(2, 3));
}

TEST(AttentionBlock, ZeroObstaclesFollowsResidualPath) {
  ParameterStore store;
  Rng rng(10);
  AttentionBlock b = AttentionBlock::create(store, "a", 6, 4, rng);
  const Var x = constant(random_matrix(5, 6, rng));
  const Matrix out = b(x, constant(Matrix(0, 4)), false).value();
  const Var ln = b.norm1(x);
  const Matrix expected = b.norm2(add(ln, b.feed_forward(ln, false))).value();
  EXPECT_EQ(out, expected);
}

TEST(AttentionBlock, GradientMatchesFiniteDifferences) {
  ParameterStore store;
  Rng rng(11);
  AttentionBlock b = AttentionBlock::create(store, "a", 5, 4, rng);
  const Matrix x = random_matrix(4, 5, rng), o = random_matrix(3, 4, rng);
  const Matrix w = random_matrix(4, 5, rng);
  // A random readout so the layer-norm output does not sum to a constant.
  const auto r = check::grad_check(store, [&] {
    return sum_all(matmul(b(constant(x), constant(o), true), constant(w), true));
  });
  EXPECT_GT(r.checked, 0u);
  EXPECT_LE(r.skipped * 10, r.checked + r.skipped);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(AttentionBlock, ObstacleRowPermutationInvariant) {
  ParameterStore store;
  Rng rng(12);
  AttentionBlock b = AttentionBlock::create(store, "a", 5, 4, rng);
  const Matrix x = random_matrix(4, 5, rng), o = random_matrix(5, 4, rng);
  const Matrix a = b(constant(x), constant(o), false).value();
  const Matrix c = b(constant(x), constant(permute_rows(o, {4, 2, 0, 3, 1})), false).value();
  EXPECT_LT(max_abs_diff(a, c), 1e-9);
}

TEST(LayerNorm, GradientMatchesFiniteDifferences) {
  ParameterStore store;
  Rng rng(13);
  Linear l = Linear::create(store, "l", 3, 6, rng);
  LayerNorm ln = LayerNorm::create(store, "ln", 6);
  init_uniform(*ln.gain, 1.0, rng);
  const Matrix x = random_matrix(4, 3, rng), w = random_matrix(4, 6, rng);
  const auto r = check::grad_check(store, [&] { return sum_all(matmul(ln(l(constant(x))), constant(w), true)); });
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(Losses, CrossEntropyAndMseGradients) {
  ParameterStore store;
  Rng rng(14);
  Parameter& p = store.add("logits", 6, 1);
  init_uniform(p, 2.0, rng);
  const std::vector<SoftmaxTerm> terms = {{{0, 2, 4}, 1}, {{1, 3, 5, 0}, 3}};
  auto r = check::grad_check(store, [&] { return mean_cross_entropy(leaf(p), terms); });
  EXPECT_LT(r.max_rel_error, 1e-4);
  const Matrix target = random_matrix(6, 1, rng);
  r = check::grad_check(store, [&] { return mean_squared_rows(leaf(p), target, {0, 3, 4}); });
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  ParameterStore store;
  Parameter& p = store.add("w", 2, 2);
  p.value = Matrix(2, 2, {1, 2, 3, 4});
  Adam opt(1e-3);
  for (int i = 0; i < 10; ++i) opt.step(store);
  EXPECT_EQ(p.value, Matrix(2, 2, {1, 2, 3, 4}));
}

TEST(Adam, ConstantGradientStepApproachesLearningRate) {
  ParameterStore store;
  Parameter& p = store.add("w", 1, 1);
  Adam opt(1e-2);
  double step = 0.0;
  for (int i = 0; i < 2000; ++i) {
    p.grad.data[0] = 0.7;
    const double before = p.value.data[0];
    opt.step(store);
    step = before - p.value.data[0];
  }
  EXPECT_NEAR(step, 1e-2, 1e-6);
}

TEST(Adam, ScalarQuadraticConverges) {
  ParameterStore store;
  Parameter& p = store.add("w", 1, 1);
  Adam opt(0.1);
  for (int i = 0; i < 500; ++i) {
    store.zero_grad();
    const Var d = add_row(leaf(p), constant(Matrix(1, 1, -3.0)));
    backward(sum_all(mean_squared_rows(d, Matrix(1, 1), {0})));
    opt.step(store);
  }
  EXPECT_LT(std::abs(p.value.data[0] - 3.0), 1e-2);
}

TEST(Autograd, NoGradGuardKeepsTapeEmpty) {
  ParameterStore store;
  Rng rng(15);
  Mlp m = Mlp::create(store, "m", 2, 3, 1, true, rng);
  const Matrix before = store.find("m/bn/running_mean")->value;
  NoGradGuard guard;
  const Var out = m(constant(random_matrix(4, 2, rng)), true);
  EXPECT_FALSE(out.requires_grad());
  EXPECT_TRUE(out.node().parents.empty());
  EXPECT_EQ(store.find("m/bn/running_mean")->value, before);
}

TEST(WeightFile, RoundTripIsBitExact) {
  ParameterStore a;
  Rng rng(16);
  Mlp::create(a, "net", 3, 4, 2, true, rng);
  const auto bytes = serialize_weights(a, {{"kind", "test"}, {"dim", "3"}});
  const WeightFile f = parse_weights(bytes);
  EXPECT_EQ(f.meta.at("kind"), "test");
  ParameterStore b;
  Rng other(99);
  Mlp::create(b, "net", 3, 4, 2, true, other);
  apply_weights(f, b);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.at(i).name, b.at(i).name);
    EXPECT_EQ(a.at(i).value, b.at(i).value);
  }
  EXPECT_EQ(serialize_weights(b, {{"kind", "test"}, {"dim", "3"}}), bytes);
}

TEST(WeightFile, CorruptionAndVersionRejected) {
  ParameterStore a;
  Rng rng(17);
  Mlp::create(a, "net", 2, 3, 1, false, rng);
  auto bytes = serialize_weights(a, {});
  auto flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x10;
  EXPECT_THROW(parse_weights(flipped), FormatError);
  auto truncated = bytes;
  truncated.resize(truncated.size() - 3);
  EXPECT_THROW(parse_weights(truncated), FormatError);
  auto future = bytes;
  future[4] = 7;  // version field; checksum now also stale
  EXPECT_THROW(parse_weights(future), FormatError);
  ParameterStore different;
  Mlp::create(different, "net", 2, 4, 1, false, rng);
  EXPECT_THROW(apply_weights(parse_weights(bytes), different), FormatError);
}
