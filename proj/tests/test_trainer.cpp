#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "gnnmp/trainer.hpp"

using namespace gnnmp;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path temp_dir(const std::string& name) {
  const fs::path d = fs::path(::testing::TempDir()) / name;
  fs::remove_all(d);
  return d;
}

}  // namespace

TEST(Corpus, FortyProblemsLoadableAndFeasible) {
  const Corpus c = generate_corpus(2, ProblemKind::RandomBoxes, 40, 5, 3);
  const auto dir = temp_dir("corpus40");
  write_corpus(c, dir.string());
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir / "train")) files += e.path().extension() == ".json";
  EXPECT_EQ(files, 40u);
  const Corpus back = load_corpus(dir.string());
  ASSERT_EQ(back.train.size(), 40u);
  for (std::size_t i = 0; i < 40; ++i) {
    EXPECT_EQ(back.train[i].env, c.train[i].env);
    EXPECT_EQ(back.train[i].start, c.train[i].start);
    EXPECT_EQ(back.train[i].seed, c.train[i].seed);
    EXPECT_TRUE(grid_feasible(back.train[i].env, back.train[i].start, back.train[i].goal));
  }
}

TEST(Corpus, SameSeedByteIdentical) {
  const auto a = temp_dir("corpus_a"), b = temp_dir("corpus_b");
  write_corpus(generate_corpus(2, ProblemKind::UShape, 6, 3, 9), a.string());
  write_corpus(generate_corpus(2, ProblemKind::UShape, 6, 3, 9), b.string());
  EXPECT_EQ(slurp(a / "corpus.json"), slurp(b / "corpus.json"));
  for (std::size_t i = 0; i < 6; ++i)
    EXPECT_EQ(slurp(a / "train" / problem_file_name(i)), slurp(b / "train" / problem_file_name(i)));
  for (std::size_t i = 0; i < 3; ++i)
    EXPECT_EQ(slurp(a / "test" / problem_file_name(i)), slurp(b / "test" / problem_file_name(i)));
}

TEST(Corpus, RejectsEmptySplitsAndSharedSeeds) {
  EXPECT_THROW(generate_corpus(2, ProblemKind::RandomBoxes, 4, 0, 1), InvalidInput);
  EXPECT_THROW(generate_corpus(2, ProblemKind::RandomBoxes, 0, 4, 1), InvalidInput);
  const auto dir = temp_dir("corpus_overlap");
  write_corpus(generate_corpus(2, ProblemKind::RandomBoxes, 2, 1, 4), dir.string());
  fs::copy_file(dir / "train" / problem_file_name(0), dir / "test" / problem_file_name(0), fs::copy_options::overwrite_existing);
  EXPECT_THROW(load_corpus(dir.string()), InvalidInput);
}

TEST(Corpus, GenerationErrorsNameTheProblem) {
  GeneratorOptions impossible;
  impossible.min_start_goal_distance = 2.0;  // farther than the cube diagonal
  impossible.max_retries = 2;
  try {
    generate_corpus(2, ProblemKind::RandomBoxes, 2, 1, 1, 5, impossible);
    FAIL() << "expected a generation error";
  } catch (const GenerationError& e) {
    EXPECT_NE(std::string(e.what()).find("train problem 0"), std::string::npos);
  }
}

TEST(TrainExplorer, LabelingLeavesLedgerUntouched) {
  const Corpus c = generate_corpus(2, ProblemKind::RandomBoxes, 3, 1, 5);
  for (const auto& p : c.train) {
    explorer_instance(p, 100, 10, 1);
    EXPECT_EQ(p.env.check_count(), 0u);
  }
}

TEST(TrainExplorer, SeededRunsRepeatExactly) {
  const Corpus c = generate_corpus(2, ProblemKind::UShape, 4, 1, 6);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 2;
  cfg.seed = 3;
  const ExplorerSpec spec{2, 8, true, 1};
  const auto a = train_explorer(c.train, cfg, spec);
  const auto b = train_explorer(c.train, cfg, spec);
  ASSERT_EQ(a.log.size(), 2u);
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    EXPECT_EQ(a.log[i].loss, b.log[i].loss);
    EXPECT_EQ(a.log[i].val_accuracy, b.log[i].val_accuracy);
  }
}

TEST(TrainExplorer, WritesCsvLogAndRejectsEmptyCorpus) {
  const Corpus c = generate_corpus(2, ProblemKind::RandomBoxes, 2, 1, 7);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.log_path = (fs::path(::testing::TempDir()) / "explorer_log.csv").string();
  train_explorer(c.train, cfg, ExplorerSpec{2, 8, false, 0});
  const std::string text = slurp(cfg.log_path);
  EXPECT_EQ(text.rfind("epoch,loss,accuracy,val_accuracy,val_chance,skipped\n1,", 0), 0u);
  EXPECT_THROW(train_explorer({}, cfg, ExplorerSpec{}), InvalidInput);
}

TEST(TrainExplorer, AllSkippedEpochIsAnError) {
  // Start boxed in: no graph ever contains a path.
  Problem p{Environment(2, {BoxObstacle{{0.2, 0.2}, {0.15, 0.15}}}), Config{0.2, 0.2}, Config{0.9, 0.9}, 1};
  TrainConfig cfg;
  cfg.epochs = 1;
  EXPECT_THROW(train_explorer({p}, cfg, ExplorerSpec{2, 8, true, 1}), TrainingError);
}

TEST(TrainExplorer, OverfitsSingleProblem) {
  const Corpus c = generate_corpus(2, ProblemKind::RandomBoxes, 1, 1, 13);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 1;
  cfg.seed = 4;
  cfg.fixed_graphs = true;
  const auto t = train_explorer(c.train, cfg, ExplorerSpec{});
  double head = 0.0, tail = 0.0;
  for (std::size_t i = 0; i < 10; ++i) {
    head += t.log[i].loss;
    tail += t.log[t.log.size() - 1 - i].loss;
  }
  EXPECT_LT(tail, 0.1 * head);
}

TEST(TrainExplorer, BeatsChanceOnHeldOutStates) {
  const Corpus c = generate_corpus(2, ProblemKind::RandomBoxes, 40, 20, 9);
  TrainConfig cfg;
  cfg.seed = 5;
  const auto t = train_explorer(c.train, cfg, ExplorerSpec{});
  const RolloutScore s = explorer_accuracy(t.weights, c.test, cfg.graph_samples, cfg.k0, 77);
  ASSERT_GT(s.states, 0u);
  EXPECT_GE(s.accuracy(), 3.0 * s.chance_rate()) << "accuracy " << s.accuracy() << " chance " << s.chance_rate();
  // Checkpoint round trip keeps priorities bit-exact.
  const auto file = ::testing::TempDir() + "trained_explorer.gnnw";
  t.weights.save(file);
  const auto inst = explorer_instance(c.test[0], 100, 10, 3);
  ASSERT_TRUE(inst);
  EXPECT_EQ(priorities(inst->graph, c.test[0].env, t.weights).eta,
            priorities(inst->graph, c.test[0].env, ExplorerWeights::load(file)).eta);
}

TEST(TrainSmoother, IdentityTargetsAreAFixedPoint) {
  // The zero-initialised readout proposes no displacement, so identity targets give zero loss and gradient.
  const Corpus c = generate_corpus(2, ProblemKind::RandomBoxes, 6, 1, 10);
  ExplorerWeights ew(ExplorerSpec{2, 16, true, 1}, 1);
  auto pairs = smoother_pairs(c.train, ew, {}, 1);
  ASSERT_FALSE(pairs.empty());
  for (auto& p : pairs) p.target = p.path;
  TrainConfig cfg;
  cfg.epochs = 3;
  const auto t = train_smoother_on(pairs, cfg, SmootherSpec{2, 16});
  for (const auto& e : t.log) EXPECT_EQ(e.mse, 0.0);
  EXPECT_EQ(smoother_eval_mse(pairs, t.weights), 0.0);
}

TEST(TrainSmoother, ShiftedTargetsConverge) {
  const Corpus c = generate_corpus(2, ProblemKind::RandomBoxes, 6, 1, 10);
  ExplorerWeights ew(ExplorerSpec{2, 16, true, 1}, 1);
  auto pairs = smoother_pairs(c.train, ew, {}, 1);
  ASSERT_FALSE(pairs.empty());
  for (auto& p : pairs)
    for (std::size_t i = 1; i + 1 < p.target.size(); ++i) p.target[i] = Config{p.path[i][0] + 0.02, p.path[i][1] - 0.01};
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.batch_size = 1;
  cfg.lr = 3e-3;
  cfg.loops_min = cfg.loops_max = 1;
  const auto t = train_smoother_on(pairs, cfg, SmootherSpec{2, 16});
  const double initial = 0.02 * 0.02 + 0.01 * 0.01;
  EXPECT_NEAR(smoother_eval_mse(pairs, SmootherWeights(SmootherSpec{2, 16}, 5)), initial, 1e-12);
  EXPECT_LT(smoother_eval_mse(pairs, t.weights), 0.01 * initial);
}

TEST(TrainSmoother, KeepsLowestValidationEpoch) {
  const Corpus c = generate_corpus(2, ProblemKind::RandomBoxes, 10, 1, 12);
  ExplorerWeights ew(ExplorerSpec{2, 16, true, 1}, 3);
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.validation_fraction = 0.2;
  const auto t = train_smoother(c.train, ew, cfg, SmootherSpec{2, 8});
  ASSERT_EQ(t.log.size(), 6u);
  ASSERT_GE(t.best_epoch, 1u);
  double lowest = t.log.front().val_mse;
  for (const auto& e : t.log) {
    EXPECT_GT(e.val_mse, 0.0);
    lowest = std::min(lowest, e.val_mse);
  }
  EXPECT_EQ(t.log[t.best_epoch - 1].val_mse, lowest);
  // The kept weights reproduce the logged validation MSE.
  SmootherDataOptions d;
  const std::vector<Problem> held(c.train.end() - 2, c.train.end());
  const auto val = smoother_pairs(held, ew, d, derive_seed(cfg.seed, 0x5EA));
  EXPECT_EQ(smoother_eval_mse(val, t.weights), lowest);
}

TEST(TrainSmoother, SeededAndLedgerClean) {
  const Corpus c = generate_corpus(2, ProblemKind::UShape, 4, 1, 11);
  ExplorerWeights ew(ExplorerSpec{2, 16, true, 1}, 2);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 2;
  const auto a = train_smoother(c.train, ew, cfg, SmootherSpec{2, 8});
  const auto b = train_smoother(c.train, ew, cfg, SmootherSpec{2, 8});
  for (const auto& p : c.train) EXPECT_EQ(p.env.check_count(), 0u);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) EXPECT_EQ(a.log[i].mse, b.log[i].mse);
}
