#pragma once

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gnnmp/errors.hpp"
#include "gnnmp/explorer.hpp"
#include "gnnmp/planners.hpp"
#include "gnnmp/smoother.hpp"
#include "gnnmp/trainer.hpp"

namespace gnnmp {

/// Everything a run of the tool can be configured with. Defaults follow the hyperparameter table:
/// max samples 1000, k0 10, batch 100, 20 epochs, batch 8, learning rate 1e-3.
struct Settings {
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3};
  std::size_t workers = 1;
  PlannerConfig planner;
  TrainConfig train;
  ExplorerSpec explorer;
  SmootherSpec smoother;
  SmootherDataOptions smoother_data;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  std::istringstream in(v);
  T x{};
  in >> x;
  if (!in || !in.eof()) throw InvalidInput("config key " + key + ": bad value '" + v + "'");
  return x;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw InvalidInput("config key " + key + ": expected true or false, got '" + v + "'");
}

using Setter = std::function<void(Settings&, const std::string&, const std::string&)>;

inline const std::map<std::string, Setter>& setters() {
  using S = Settings;
  using K = const std::string&;
  static const std::map<std::string, Setter> table = {
      {"seed", [](S& s, K k, K v) { s.seed = parse_number<std::uint64_t>(k, v); }},
      {"seeds",
       [](S& s, K k, K v) {
         s.seeds.clear();
         std::stringstream in(v);
         std::string item;
         while (std::getline(in, item, ',')) s.seeds.push_back(parse_number<std::uint64_t>(k, trim(item)));
         if (s.seeds.empty()) throw InvalidInput("config key seeds: empty list");
       }},
      {"workers", [](S& s, K k, K v) { s.workers = parse_number<std::size_t>(k, v); }},
      {"planner", [](S& s, K, K v) { s.planner.kind = parse_planner_kind(v); }},
      {"step", [](S& s, K k, K v) { s.planner.step = parse_number<double>(k, v); }},
      {"batch_size", [](S& s, K k, K v) { s.planner.batch_size = parse_number<std::size_t>(k, v); }},
      {"max_samples", [](S& s, K k, K v) { s.planner.max_samples = parse_number<std::size_t>(k, v); }},
      {"k0",
       [](S& s, K k, K v) {
         s.planner.k0 = s.train.k0 = s.smoother.k0 = s.smoother_data.explore.k0 = parse_number<std::size_t>(k, v);
       }},
      {"goal_bias", [](S& s, K k, K v) { s.planner.goal_bias = parse_number<double>(k, v); }},
      {"heuristic_weight", [](S& s, K k, K v) { s.planner.heuristic_weight = parse_number<double>(k, v); }},
      {"smoother", [](S& s, K, K v) { s.planner.smoother = parse_smoother_mode(v); }},
      {"smooth_eps",
       [](S& s, K k, K v) { s.planner.smooth.eps = s.smoother_data.eps = parse_number<double>(k, v); }},
      {"smooth_delta", [](S& s, K k, K v) { s.planner.smooth.delta = parse_number<double>(k, v); }},
      {"smooth_outer_loops", [](S& s, K k, K v) { s.planner.smooth.outer_loops = parse_number<int>(k, v); }},
      {"smooth_inner_rounds", [](S& s, K k, K v) { s.planner.smooth.inner_rounds = parse_number<int>(k, v); }},
      {"oracle_rounds",
       [](S& s, K k, K v) { s.planner.oracle_rounds = s.smoother_data.oracle_rounds = parse_number<std::size_t>(k, v); }},
      {"oracle_iters",
       [](S& s, K k, K v) { s.planner.oracle_iters = s.smoother_data.oracle_iters = parse_number<std::size_t>(k, v); }},
      {"epochs", [](S& s, K k, K v) { s.train.epochs = parse_number<std::size_t>(k, v); }},
      {"train_batch_size", [](S& s, K k, K v) { s.train.batch_size = parse_number<std::size_t>(k, v); }},
      {"lr", [](S& s, K k, K v) { s.train.lr = parse_number<double>(k, v); }},
      {"loops_min", [](S& s, K k, K v) { s.train.loops_min = parse_number<int>(k, v); }},
      {"loops_max", [](S& s, K k, K v) { s.train.loops_max = parse_number<int>(k, v); }},
      {"validation_fraction", [](S& s, K k, K v) { s.train.validation_fraction = parse_number<double>(k, v); }},
      {"val_graphs", [](S& s, K k, K v) { s.train.val_graphs = parse_number<std::size_t>(k, v); }},
      {"pairs_per_problem",
       [](S& s, K k, K v) { s.smoother_data.pairs_per_problem = parse_number<std::size_t>(k, v); }},
      {"graph_samples", [](S& s, K k, K v) { s.train.graph_samples = parse_number<std::size_t>(k, v); }},
      {"hidden", [](S& s, K k, K v) { s.explorer.hidden = parse_number<std::size_t>(k, v); }},
      {"attention_blocks", [](S& s, K k, K v) { s.explorer.attention_blocks = parse_number<std::size_t>(k, v); }},
      {"obstacle_encoding", [](S& s, K k, K v) { s.explorer.obstacle_encoding = parse_bool(k, v); }},
      {"smoother_hidden", [](S& s, K k, K v) { s.smoother.hidden = parse_number<std::size_t>(k, v); }},
      {"smoother_core_updates", [](S& s, K k, K v) { s.smoother.core_updates = parse_number<std::size_t>(k, v); }},
  };
  return table;
}

}  // namespace detail

inline std::vector<std::string> settings_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : detail::setters()) keys.push_back(k);
  return keys;
}

inline void apply_setting(Settings& s, const std::string& key, const std::string& value) {
  const auto& table = detail::setters();
  const auto it = table.find(key);
  if (it == table.end()) throw InvalidInput("unknown config key '" + key + "'");
  it->second(s, key, value);
}

/// `key = value` lines; `#` starts a comment; unknown keys are errors.
inline void apply_settings_text(Settings& s, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InvalidInput("config line " + std::to_string(n) + ": expected key = value");
    apply_setting(s, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
}

inline Settings load_settings(const std::string& path, Settings base = {}) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open " + path);
  std::stringstream text;
  text << f.rdbuf();
  apply_settings_text(base, text.str());
  return base;
}

}  // namespace gnnmp
