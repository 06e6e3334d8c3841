#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "gnnmp/bench.hpp"
#include "gnnmp/config.hpp"
#include "gnnmp/trainer.hpp"

using namespace gnnmp;

namespace {

struct Global {
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string config;
  Settings settings;
};

void finalize(Global& g) {
  if (!g.config.empty()) g.settings = load_settings(g.config, g.settings);
  if (g.seed_set) {
    g.settings.seed = g.seed;
    g.settings.planner.seed = g.seed;
    g.settings.train.seed = g.seed;
  }
}

std::vector<Problem> corpus_split(const std::string& dir, const std::string& split) {
  Corpus c = load_corpus(dir);
  if (split == "train") return c.train;
  if (split == "test") return c.test;
  throw InvalidInput("split must be train or test");
}

std::vector<std::string> split_ids(const std::string& split, std::size_t n) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back(split + "/" + problem_file_name(i).substr(0, problem_file_name(i).size() - 5));
  return ids;
}

struct Models {
  std::optional<ExplorerWeights> explorer;
  std::optional<SmootherWeights> smoother;
  PlannerModels view() const { return {explorer ? &*explorer : nullptr, smoother ? &*smoother : nullptr}; }
};

Models load_models(const std::string& explorer, const std::string& smoother) {
  Models m;
  if (!explorer.empty()) m.explorer = ExplorerWeights::load(explorer);
  if (!smoother.empty()) m.smoother = SmootherWeights::load(smoother);
  return m;
}

std::vector<SuiteEntry> parse_planners(const std::vector<std::string>& names, const PlannerConfig& base) {
  std::vector<SuiteEntry> out;
  for (const auto& n : names) {
    SuiteEntry e{n, base};
    // gnn_smooth may carry its smoother: gnn_smooth, gnn_smooth:oracle, gnn_smooth:none.
    const auto colon = n.find(':');
    e.config.kind = parse_planner_kind(n.substr(0, colon));
    if (colon != std::string::npos) e.config.smoother = parse_smoother_mode(n.substr(colon + 1));
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph-neural-network guided batch motion planning"};
  app.require_subcommand(1);
  Global g;
  auto* seed_opt = app.add_option("--seed", g.seed, "Global seed");
  app.add_option("--config", g.config, "Key-value configuration file")->check(CLI::ExistingFile);

  // generate
  auto* gen = app.add_subcommand("generate", "Write a train/test problem corpus");
  std::size_t dim = 2, n_train = 40, n_test = 100, n_obstacles = 10;
  std::string kind = "random_boxes", out_dir;
  gen->add_option("--dim", dim, "Configuration-space dimension")->check(CLI::Range(2, 16));
  gen->add_option("--kind", kind, "random_boxes or u_shape");
  gen->add_option("--train", n_train, "Training problems");
  gen->add_option("--test", n_test, "Test problems");
  gen->add_option("--obstacles", n_obstacles, "Boxes per random problem");
  gen->add_option("--out", out_dir, "Corpus directory")->required();

  // train-explorer
  auto* tex = app.add_subcommand("train-explorer", "Imitation-train the path explorer");
  std::string corpus, weights_out, log_path;
  bool no_obstacle_encoding = false;
  tex->add_option("--corpus", corpus, "Corpus directory")->required();
  tex->add_option("--out", weights_out, "Output weight file")->required();
  tex->add_option("--log", log_path, "Per-epoch CSV log");
  tex->add_flag("--no-obstacle-encoding", no_obstacle_encoding, "Disable the obstacle attention blocks");

  // train-smoother
  auto* tsm = app.add_subcommand("train-smoother", "Train the path smoother on oracle-smoothed explorer paths");
  std::string explorer_path, smoother_path;
  tsm->add_option("--corpus", corpus, "Corpus directory")->required();
  tsm->add_option("--explorer", explorer_path, "Trained explorer weights")->required();
  tsm->add_option("--out", weights_out, "Output weight file")->required();
  tsm->add_option("--log", log_path, "Per-epoch CSV log");

  // plan
  auto* pln = app.add_subcommand("plan", "Solve one problem");
  std::string problem_path, planner = "gnn", smoother_mode, svg_path;
  pln->add_option("--problem", problem_path, "Problem JSON file")->required()->check(CLI::ExistingFile);
  pln->add_option("--planner", planner, "rrt_star, lazy_sp, bit_lite, gnn or gnn_smooth");
  pln->add_option("--explorer", explorer_path, "Explorer weights (gnn planners)");
  pln->add_option("--smoother-weights", smoother_path, "Smoother weights (gnn_smooth with the gnn smoother)");
  pln->add_option("--smoother", smoother_mode, "gnn, oracle or none")->check(CLI::IsMember({"gnn", "oracle", "none"}));
  pln->add_option("--svg", svg_path, "Render the result (2D, gnn planners)");

  // bench
  auto* bch = app.add_subcommand("bench", "Run planners over a corpus split");
  std::string split = "test", csv_path, summary_path;
  std::vector<std::string> planners{"lazy_sp", "gnn"};
  bool no_timing = false;
  bch->add_option("--corpus", corpus, "Corpus directory")->required();
  bch->add_option("--split", split, "train or test");
  bch->add_option("--planners", planners, "Planner list; gnn_smooth:oracle selects the oracle smoother")->delimiter(',');
  bch->add_option("--explorer", explorer_path, "Explorer weights");
  bch->add_option("--smoother-weights", smoother_path, "Smoother weights");
  bch->add_option("--smoother", smoother_mode, "Default smoother for gnn_smooth")
      ->check(CLI::IsMember({"gnn", "oracle", "none"}));
  bch->add_option("--csv", csv_path, "Per-run CSV output");
  bch->add_option("--summary", summary_path, "Summary table output");
  bch->add_flag("--no-timing", no_timing, "Write wall time as 0 for byte-comparable CSVs");

  // ablate
  auto* abl = app.add_subcommand("ablate", "Probing-sample or k0 sweep");
  std::string sweep = "probing";
  abl->add_option("sweep", sweep, "probing or k0")->check(CLI::IsMember({"probing", "k0"}));
  abl->add_option("--corpus", corpus, "Corpus directory")->required();
  abl->add_option("--split", split, "train or test");
  abl->add_option("--planner", planner, "Planner swept");
  abl->add_option("--explorer", explorer_path, "Explorer weights");
  abl->add_option("--smoother-weights", smoother_path, "Smoother weights");
  abl->add_option("--smoother", smoother_mode, "gnn, oracle or none")->check(CLI::IsMember({"gnn", "oracle", "none"}));
  abl->add_option("--csv", csv_path, "Sweep table output");

  // render
  auto* rnd = app.add_subcommand("render", "Explore a 2D problem and write an SVG");
  rnd->add_option("--problem", problem_path, "Problem JSON file")->required()->check(CLI::ExistingFile);
  rnd->add_option("--explorer", explorer_path, "Explorer weights")->required();
  rnd->add_option("--out", svg_path, "SVG file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    g.seed_set = seed_opt->count() > 0;
    finalize(g);
    Settings& s = g.settings;
    if (!smoother_mode.empty()) s.planner.smoother = parse_smoother_mode(smoother_mode);

    if (gen->parsed()) {
      std::filesystem::create_directories(out_dir);
      const Corpus c = generate_corpus(dim, parse_problem_kind(kind), n_train, n_test, s.seed, n_obstacles);
      write_corpus(c, out_dir);
      std::cout << "wrote " << c.train.size() << " train and " << c.test.size() << " test problems to " << out_dir << '\n';
    } else if (tex->parsed()) {
      const Corpus c = load_corpus(corpus);
      ExplorerSpec spec = s.explorer;
      spec.dim = c.dim;
      if (no_obstacle_encoding) spec.obstacle_encoding = false;
      TrainConfig cfg = s.train;
      cfg.log_path = log_path;
      const auto t = train_explorer(c.train, cfg, spec);
      t.weights.save(weights_out);
      const auto& best = t.log[t.best_epoch - 1];
      std::cout << "best epoch " << t.best_epoch << ": validation accuracy " << best.val_accuracy << " (chance "
                << best.val_chance << ")\n";
    } else if (tsm->parsed()) {
      const Corpus c = load_corpus(corpus);
      SmootherSpec spec = s.smoother;
      spec.dim = c.dim;
      TrainConfig cfg = s.train;
      cfg.log_path = log_path;
      const auto t = train_smoother(c.train, ExplorerWeights::load(explorer_path), cfg, spec, s.smoother_data);
      t.weights.save(weights_out);
      const auto& best = t.log[t.best_epoch - 1];
      std::cout << "best epoch " << t.best_epoch << ": training mse " << best.mse << ", validation mse " << best.val_mse
                << "; dropped " << t.dropped << " explorer runs\n";
    } else if (pln->parsed()) {
      const Problem p = problem_from_json(read_json_file(problem_path));
      const Models m = load_models(explorer_path, smoother_path);
      PlannerConfig c = s.planner;
      c.kind = parse_planner_kind(planner);
      const PlanResult r = plan(p, c, m.view());
      std::cout << "success " << r.report.success << " edge_checks " << r.report.edge_checks << " path_cost "
                << r.report.path_cost << " samples " << r.report.samples << " wall_ms " << r.report.wall_ms << '\n';
      if (r.path) {
        for (const auto& q : r.path->configs) {
          for (std::size_t i = 0; i < q.size(); ++i) std::cout << (i ? " " : "") << q[i];
          std::cout << '\n';
        }
      }
      if (!svg_path.empty()) {
        if (!m.explorer) throw InvalidInput("--svg renders explorer runs and needs --explorer");
        write_text(svg_path, render_run_svg(p, explore(p, *m.explorer, {c.batch_size, c.max_samples, c.k0, c.seed})));
      }
      return r.report.success ? 0 : 2;
    } else if (bch->parsed()) {
      const auto problems = corpus_split(corpus, split);
      const Models m = load_models(explorer_path, smoother_path);
      SuiteOptions opts{s.seeds, m.view(), s.workers, split_ids(split, problems.size())};
      const auto res = run_suite(problems, parse_planners(planners, s.planner), opts);
      const std::string table = format_summary(res.summary);
      std::cout << table;
      if (!csv_path.empty()) write_text(csv_path, runs_csv(res.runs, !no_timing));
      if (!summary_path.empty()) write_text(summary_path, table);
      for (const auto& r : res.runs) {
        if (!r.diagnostic.empty()) std::cerr << r.problem_id << ' ' << r.planner << ' ' << r.seed << ": " << r.diagnostic << '\n';
      }
    } else if (abl->parsed()) {
      const auto problems = corpus_split(corpus, split);
      const Models m = load_models(explorer_path, smoother_path);
      SuiteOptions opts{s.seeds, m.view(), s.workers, split_ids(split, problems.size())};
      SuiteEntry base = parse_planners({planner}, s.planner).front();
      std::string table;
      if (sweep == "probing") {
        const auto a = ablation_probing(problems, base, opts);
        table = format_ablation(a.rows, "samples");
        std::cout << table << "success non-decreasing: " << a.success_nondecreasing
                  << "\nchecks increasing: " << a.checks_increasing << "\ncost spread: " << a.cost_spread << '\n';
      } else {
        const auto a = ablation_k0(problems, base, opts);
        table = format_ablation(a.rows, "k0");
        std::cout << table << "k0=1 below k0=10: " << a.low_k_degrades << "\ncost slope per log k0: " << a.cost_slope
                  << '\n';
      }
      if (!csv_path.empty()) write_text(csv_path, table);
    } else if (rnd->parsed()) {
      const Problem p = problem_from_json(read_json_file(problem_path));
      const auto w = ExplorerWeights::load(explorer_path);
      const PlannerConfig& c = s.planner;
      const ExploreResult run = explore(p, w, {c.batch_size, c.max_samples, c.k0, c.seed});
      write_text(svg_path, render_run_svg(p, run));
      std::cout << "success " << run.report.success << " edge_checks " << run.report.edge_checks << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
