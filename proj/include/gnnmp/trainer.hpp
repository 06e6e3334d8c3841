#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gnnmp/env.hpp"
#include "gnnmp/explorer.hpp"
#include "gnnmp/smoother.hpp"

namespace gnnmp {

// ---------------------------------------------------------------------------
// Problem corpora

struct Corpus {
  std::size_t dim = 2;
  ProblemKind kind = ProblemKind::RandomBoxes;
  std::size_t n_obstacles = 10;
  std::uint64_t seed = 0;
  std::vector<Problem> train;
  std::vector<Problem> test;
};

/// Train and test problem seeds come from disjoint tag ranges of the corpus seed.
inline std::uint64_t corpus_problem_seed(std::uint64_t seed, bool test, std::size_t index) {
  return derive_seed(seed, (test ? (1ULL << 40) : 0ULL) + index);
}

inline void require_disjoint_seeds(const Corpus& c) {
  std::set<std::uint64_t> train;
  for (const auto& p : c.train) train.insert(p.seed);
  for (const auto& p : c.test)
    if (train.count(p.seed)) throw InvalidInput("train and test problems share seed " + std::to_string(p.seed));
}

inline Corpus generate_corpus(std::size_t dim, ProblemKind kind, std::size_t n_train, std::size_t n_test,
                              std::uint64_t seed, std::size_t n_obstacles = 10, const GeneratorOptions& opts = {}) {
  if (n_train < 1 || n_test < 1) throw InvalidInput("corpus needs at least one train and one test problem");
  Corpus c{dim, kind, n_obstacles, seed, {}, {}};
  auto make = [&](bool test, std::size_t i) {
    try {
      return generate_problem(dim, n_obstacles, kind, corpus_problem_seed(seed, test, i), opts);
    } catch (const GenerationError& e) {
      throw GenerationError(std::string(test ? "test" : "train") + " problem " + std::to_string(i) + ": " + e.what());
    }
  };
  for (std::size_t i = 0; i < n_train; ++i) c.train.push_back(make(false, i));
  for (std::size_t i = 0; i < n_test; ++i) c.test.push_back(make(true, i));
  require_disjoint_seeds(c);
  return c;
}

inline std::string problem_file_name(std::size_t i) {
  std::ostringstream s;
  s << "problem_" << std::setw(4) << std::setfill('0') << i << ".json";
  return s.str();
}

/// Layout: <dir>/corpus.json (manifest), <dir>/train/problem_NNNN.json, <dir>/test/problem_NNNN.json.
inline void write_corpus(const Corpus& c, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "train");
  fs::create_directories(fs::path(dir) / "test");
  nlohmann::json manifest = {{"dim", c.dim},
                             {"kind", to_string(c.kind)},
                             {"n_obstacles", c.n_obstacles},
                             {"seed", c.seed},
                             {"n_train", c.train.size()},
                             {"n_test", c.test.size()}};
  std::ofstream(fs::path(dir) / "corpus.json") << manifest.dump(2) << "\n";
  for (std::size_t i = 0; i < c.train.size(); ++i)
    std::ofstream(fs::path(dir) / "train" / problem_file_name(i)) << to_json(c.train[i]).dump(2) << "\n";
  for (std::size_t i = 0; i < c.test.size(); ++i)
    std::ofstream(fs::path(dir) / "test" / problem_file_name(i)) << to_json(c.test[i]).dump(2) << "\n";
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

inline Corpus load_corpus(const std::string& dir) {
  namespace fs = std::filesystem;
  const auto manifest = read_json_file((fs::path(dir) / "corpus.json").string());
  Corpus c;
  try {
    c.dim = manifest.at("dim").get<std::size_t>();
    c.kind = parse_problem_kind(manifest.at("kind").get<std::string>());
    c.n_obstacles = manifest.at("n_obstacles").get<std::size_t>();
    c.seed = manifest.at("seed").get<std::uint64_t>();
    const auto n_train = manifest.at("n_train").get<std::size_t>();
    const auto n_test = manifest.at("n_test").get<std::size_t>();
    for (std::size_t i = 0; i < n_train; ++i)
      c.train.push_back(problem_from_json(read_json_file((fs::path(dir) / "train" / problem_file_name(i)).string())));
    for (std::size_t i = 0; i < n_test; ++i)
      c.test.push_back(problem_from_json(read_json_file((fs::path(dir) / "test" / problem_file_name(i)).string())));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed corpus manifest: " + std::string(e.what()));
  }
  require_disjoint_seeds(c);
  return c;
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 8;  // problems per Adam step
  double lr = 1e-3;
  std::uint64_t seed = 0;
  int loops_min = 1;
  int loops_max = 10;
  double validation_fraction = 0.1;
  std::size_t val_graphs = 4;  // sampled graphs per validation problem
  std::size_t graph_samples = 100;  // free samples per training graph
  std::size_t k0 = 10;
  bool fixed_graphs = false;  // reuse the first epoch's graph per problem (overfit checks)
  std::string log_path;  // per-epoch CSV when non-empty

  void validate() const {
    if (epochs < 1 || batch_size < 1 || !(lr > 0.0) || loops_min < 1 || loops_max < loops_min || graph_samples < 1 || k0 < 1 ||
        val_graphs < 1)
      throw InvalidInput("training configuration values must be positive");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) throw InvalidInput("validation fraction must lie in [0, 1)");
  }
};

struct ExplorerEpoch {
  std::size_t epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;      // top-1 over training rollout states
  double val_accuracy = 0.0;  // top-1 over validation rollout states
  double val_chance = 0.0;    // mean 1/|frontier| over the same validation states
  std::size_t skipped = 0;    // problems without an oracle path this epoch
};

struct ExplorerTraining {
  ExplorerWeights weights;  // best by validation accuracy
  std::vector<ExplorerEpoch> log;
  std::size_t best_epoch = 0;
};

/// Imitation states for one problem: a sampled graph and its ground-truth edge statuses.
struct ExplorerInstance {
  Rgg graph;
  std::vector<EdgeStatus> truth;
};

inline std::optional<ExplorerInstance> explorer_instance(const Problem& p, std::size_t samples, std::size_t k0,
                                                         std::uint64_t sample_seed) {
  SampleStream stream(p.env, p.seed, sample_seed);
  BatchGraph builder(p.start, p.goal, k0);
  ExplorerInstance inst{builder.add_batch(stream.next(samples), nullptr), {}};
  inst.truth = ground_truth_statuses(inst.graph, p.env);
  if (!oracle_first_edge(inst.graph, Tree(inst.graph.num_vertices(), inst.graph.start), inst.truth)) return std::nullopt;
  return inst;
}

struct RolloutScore {
  std::size_t states = 0;
  std::size_t correct = 0;
  double chance = 0.0;
  double accuracy() const { return states ? static_cast<double>(correct) / static_cast<double>(states) : 0.0; }
  double chance_rate() const { return states ? chance / static_cast<double>(states) : 0.0; }
};

/// Frontier top-1 accuracy of `w` along its own greedy rollouts on the given problems.
inline RolloutScore explorer_accuracy(const ExplorerWeights& w, const std::vector<Problem>& problems, std::size_t samples,
                                      std::size_t k0, std::uint64_t sample_seed) {
  RolloutScore s;
  for (const auto& p : problems) {
    const auto inst = explorer_instance(p, samples, k0, sample_seed);
    if (!inst) continue;
    const Rollout r = imitation_rollout(inst->graph, priorities(inst->graph, p.env, w).eta, inst->truth);
    s.states += r.terms.size();
    s.correct += r.correct;
    s.chance += r.chance;
  }
  return s;
}

namespace detail {

inline std::pair<std::vector<Problem>, std::vector<Problem>> split_validation(const std::vector<Problem>& problems,
                                                                             double fraction) {
  const std::size_t n_val = problems.size() > 1 ? static_cast<std::size_t>(std::floor(fraction * problems.size())) : 0;
  std::vector<Problem> train(problems.begin(), problems.end() - static_cast<std::ptrdiff_t>(n_val));
  std::vector<Problem> val(problems.end() - static_cast<std::ptrdiff_t>(n_val), problems.end());
  // Without a held-out split, selection falls back to the training problems.
  if (val.empty()) val = train;
  return {std::move(train), std::move(val)};
}

inline void shuffle_indices(std::vector<std::size_t>& order, Rng& rng) {
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
}

}  // namespace detail

/// Imitation learning for the explorer. Every epoch each problem gets a fresh graph; the current policy is
/// rolled out greedily on ground truth and the cross-entropy against the oracle's first edge is averaged
/// over every state of the rollout. Adam steps once per batch of problems.
inline ExplorerTraining train_explorer(const std::vector<Problem>& problems, const TrainConfig& cfg,
                                       const ExplorerSpec& spec) {
  cfg.validate();
  if (problems.empty()) throw InvalidInput("training corpus is empty");
  auto [train, val] = detail::split_validation(problems, cfg.validation_fraction);
  ExplorerWeights w(spec, derive_seed(cfg.seed, 0x7E));
  nn::Adam opt(cfg.lr);
  Rng rng(derive_seed(cfg.seed, 0x7F));
  const std::uint64_t val_seed = derive_seed(cfg.seed, 0x7A1);
  ExplorerTraining out{w, {}, 0};
  double best_acc = -1.0;
  std::ofstream log;
  if (!cfg.log_path.empty()) {
    log.open(cfg.log_path);
    log << "epoch,loss,accuracy,val_accuracy,val_chance,skipped\n";
  }
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    detail::shuffle_indices(order, rng);
    const std::uint64_t epoch_seed = derive_seed(cfg.seed, 0x10000 + (cfg.fixed_graphs ? 1 : epoch));
    ExplorerEpoch rec;
    rec.epoch = epoch;
    double loss_sum = 0.0;
    std::size_t used = 0, states = 0, correct = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      struct Item {
        std::size_t problem;
        ExplorerInstance inst;
        Rollout rollout;
      };
      std::vector<Item> items;
      for (std::size_t i = b; i < e; ++i) {
        const Problem& p = train[order[i]];
        auto inst = explorer_instance(p, cfg.graph_samples, cfg.k0, derive_seed(epoch_seed, p.seed));
        if (!inst) {
          ++rec.skipped;
          continue;
        }
        Rollout r = imitation_rollout(inst->graph, priorities(inst->graph, p.env, w).eta, inst->truth);
        if (r.terms.empty()) {
          ++rec.skipped;
          continue;
        }
        items.push_back({order[i], std::move(*inst), std::move(r)});
      }
      if (items.empty()) continue;
      w.store.zero_grad();
      for (const auto& it : items) {
        const int loops = static_cast<int>(rng.between(cfg.loops_min, cfg.loops_max));
        nn::Var eta = explorer_forward(w, it.inst.graph, train[it.problem].env, loops, true);
        nn::Var loss = nn::mean_cross_entropy(eta, it.rollout.terms);
        loss_sum += loss.value().data[0];
        nn::backward(nn::scale(loss, 1.0 / static_cast<double>(items.size())));
        states += it.rollout.terms.size();
        correct += it.rollout.correct;
        ++used;
      }
      opt.step(w.store);
    }
    if (used == 0) throw TrainingError("every training instance was skipped in epoch " + std::to_string(epoch));
    rec.loss = loss_sum / static_cast<double>(used);
    rec.accuracy = states ? static_cast<double>(correct) / static_cast<double>(states) : 0.0;
    RolloutScore vs;
    for (std::size_t r = 0; r < cfg.val_graphs; ++r) {
      const RolloutScore one = explorer_accuracy(w, val, cfg.graph_samples, cfg.k0, derive_seed(val_seed, r));
      vs.states += one.states;
      vs.correct += one.correct;
      vs.chance += one.chance;
    }
    rec.val_accuracy = vs.accuracy();
    rec.val_chance = vs.chance_rate();
    if (rec.val_accuracy > best_acc) {
      best_acc = rec.val_accuracy;
      out.weights = w;
      out.best_epoch = epoch;
    }
    out.log.push_back(rec);
    if (log) log << epoch << ',' << rec.loss << ',' << rec.accuracy << ',' << rec.val_accuracy << ',' << rec.val_chance << ','
                 << rec.skipped << '\n';
  }
  return out;
}

/// One smoother training pair: an explorer path, the samples it was found with, and the oracle target.
struct SmootherPair {
  std::vector<Config> path;
  std::vector<Config> free;
  std::vector<Config> collided;
  std::vector<Config> target;
};

struct SmootherDataOptions {
  ExploreOptions explore;
  double eps = 0.05;
  std::size_t oracle_rounds = 5;
  std::size_t oracle_iters = 200;
  std::size_t pairs_per_problem = 1;  // explorer runs per problem, each on its own sample stream
};

/// Runs the explorer on every problem and smooths its path with the oracle. Problems the explorer fails on,
/// or whose path has no interior vertex, are dropped and counted. Checks run on a copy of each environment so
/// the problem's own ledger is untouched.
inline std::vector<SmootherPair> smoother_pairs(const std::vector<Problem>& problems, const ExplorerWeights& explorer,
                                                const SmootherDataOptions& o, std::uint64_t seed,
                                                std::size_t* dropped = nullptr) {
  std::vector<SmootherPair> out;
  std::size_t lost = 0;
  for (const auto& p : problems) {
    for (std::size_t r = 0; r < std::max<std::size_t>(1, o.pairs_per_problem); ++r) {
      Problem local = p;
      ExploreOptions eo = o.explore;
      eo.seed = derive_seed(seed, p.seed + (r << 32));
      ExploreResult run = explore(local, explorer, eo);
      if (!run.path || run.path->configs.size() < 3) {
        ++lost;
        continue;
      }
      Rng rng(derive_seed(eo.seed, p.seed ^ 0x5A));
      SmootherPair pair{run.path->configs, run.free_samples, run.collided_samples, {}};
      pair.target = oracle_smooth(pair.path, local.env, o.eps, o.oracle_rounds, rng, o.oracle_iters);
      out.push_back(std::move(pair));
    }
  }
  if (dropped) *dropped = lost;
  return out;
}

struct SmootherEpoch {
  std::size_t epoch = 0;
  double mse = 0.0;
  double val_mse = 0.0;  // eval-mode, one loop, over validation pairs (0 without them)
};

struct SmootherTraining {
  SmootherWeights weights;  // best by validation MSE when validation pairs exist, else the last epoch
  std::vector<SmootherEpoch> log;
  std::size_t dropped = 0;
  std::size_t best_epoch = 0;
};

/// Eval-mode MSE with one dynamic-update loop, the setting smooth() proposes with.
inline double smoother_eval_mse(const std::vector<SmootherPair>& pairs, const SmootherWeights& w) {
  nn::NoGradGuard guard;
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& pr : pairs) {
    const auto loss = smoother_loss(pr.path, pr.free, pr.collided, pr.target, w, 1, false);
    if (!loss) continue;
    sum += loss->value().data[0];
    ++n;
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

/// MSE imitation of oracle targets with a random number of dynamic-update loops per forward pass.
/// With validation pairs, the epoch with the lowest validation MSE is kept.
inline SmootherTraining train_smoother_on(const std::vector<SmootherPair>& pairs, const TrainConfig& cfg,
                                          const SmootherSpec& spec, const std::vector<SmootherPair>& val = {}) {
  cfg.validate();
  if (pairs.empty()) throw TrainingError("no smoother training pairs");
  SmootherWeights w(spec, derive_seed(cfg.seed, 0x5E7));
  nn::Adam opt(cfg.lr);
  Rng rng(derive_seed(cfg.seed, 0x5E8));
  SmootherTraining out{w, {}, 0, 0};
  double best = std::numeric_limits<double>::infinity();
  std::ofstream log;
  if (!cfg.log_path.empty()) {
    log.open(cfg.log_path);
    log << "epoch,mse,val_mse\n";
  }
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    detail::shuffle_indices(order, rng);
    double sum = 0.0;
    std::size_t used = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      w.store.zero_grad();
      for (std::size_t i = b; i < e; ++i) {
        const auto& pr = pairs[order[i]];
        const int loops = static_cast<int>(rng.between(cfg.loops_min, cfg.loops_max));
        auto loss = smoother_loss(pr.path, pr.free, pr.collided, pr.target, w, loops, true);
        if (!loss) continue;
        sum += loss->value().data[0];
        ++used;
        nn::backward(nn::scale(*loss, 1.0 / static_cast<double>(e - b)));
      }
      opt.step(w.store);
    }
    if (used == 0) throw TrainingError("every smoother pair was skipped in epoch " + std::to_string(epoch));
    SmootherEpoch rec{epoch, sum / static_cast<double>(used), 0.0};
    if (!val.empty()) {
      rec.val_mse = smoother_eval_mse(val, w);
      if (rec.val_mse < best) {
        best = rec.val_mse;
        out.weights = w;
        out.best_epoch = epoch;
      }
    }
    out.log.push_back(rec);
    if (log) log << epoch << ',' << rec.mse << ',' << rec.val_mse << '\n';
  }
  if (val.empty()) {
    out.weights = w;
    out.best_epoch = cfg.epochs;
  }
  return out;
}

/// Pairs come from the training split; the validation split of the same fraction as explorer training
/// supplies held-out pairs for checkpoint selection.
inline SmootherTraining train_smoother(const std::vector<Problem>& problems, const ExplorerWeights& explorer,
                                       const TrainConfig& cfg, const SmootherSpec& spec,
                                       const SmootherDataOptions& data = {}) {
  cfg.validate();
  if (problems.empty()) throw InvalidInput("training corpus is empty");
  const std::size_t n_val =
      problems.size() > 1 ? static_cast<std::size_t>(std::floor(cfg.validation_fraction * problems.size())) : 0;
  const std::vector<Problem> train(problems.begin(), problems.end() - static_cast<std::ptrdiff_t>(n_val));
  const std::vector<Problem> held(problems.end() - static_cast<std::ptrdiff_t>(n_val), problems.end());
  std::size_t dropped = 0, dropped_val = 0;
  const auto pairs = smoother_pairs(train, explorer, data, derive_seed(cfg.seed, 0x5E9), &dropped);
  const auto val = smoother_pairs(held, explorer, data, derive_seed(cfg.seed, 0x5EA), &dropped_val);
  SmootherTraining out = train_smoother_on(pairs, cfg, spec, val);
  out.dropped = dropped + dropped_val;
  return out;
}

}  // namespace gnnmp
