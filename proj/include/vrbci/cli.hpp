#pragma once

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "vrbci/harness.hpp"

namespace vrbci {

namespace detail {

struct CommonFlags {
  std::string config_path;
  std::string preset;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string algo;
  std::string out;
  std::optional<int> episodes;
};

inline void add_common_flags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "key-value config file");
  cmd->add_option("--preset", f.preset, "desk (default) or paper")
      ->check(CLI::IsMember({"desk", "paper"}));
  cmd->add_option("--set", f.sets, "extra key=value overrides")
      ->type_name("KEY=VALUE");
  cmd->add_option("--seed", f.seed, "run seed");
  cmd->add_option("--algo", f.algo, "hybrid, ppo, vpg, or svm")
      ->check(CLI::IsMember({"hybrid", "ppo", "vpg", "svm"}));
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--episodes", f.episodes, "training episode count");
}

// defaults <- preset <- config file <- --set/flags
inline ExperimentConfig config_from_flags(const CommonFlags& f) {
  KeyValueConfig kv;
  for (const auto& [k, v] : preset_values(f.preset)) kv.set(k, v);
  if (!f.config_path.empty()) {
    KeyValueConfig file = KeyValueConfig::from_file(f.config_path);
    for (const auto& [k, v] : file.raw()) kv.set(k, v);
  }
  for (const std::string& s : f.sets) {
    std::size_t eq = s.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("--set expects KEY=VALUE, got '" + s + "'");
    }
    kv.set(s.substr(0, eq), s.substr(eq + 1));
  }
  if (f.seed) kv.set("run.seed", std::to_string(*f.seed));
  if (!f.algo.empty()) kv.set("run.algo", f.algo);
  if (!f.out.empty()) kv.set("run.out", f.out);
  if (f.episodes) kv.set("run.episodes", std::to_string(*f.episodes));
  return resolve_config(kv);
}

struct ManifestEntry {
  std::string name;
  std::string file;
};

inline std::pair<std::string, std::vector<ManifestEntry>> read_manifest(
    const std::string& dir) {
  std::ifstream f(dir + "/manifest.txt");
  if (!f) throw std::runtime_error("eval: cannot open " + dir + "/manifest.txt");
  std::string line;
  std::getline(f, line);
  if (line != "vrbci-manifest 1") {
    throw std::runtime_error("eval: unsupported manifest in " + dir);
  }
  std::string algo;
  std::vector<ManifestEntry> entries;
  while (std::getline(f, line)) {
    std::istringstream is(line);
    std::string kind;
    is >> kind;
    if (kind == "algo") {
      is >> algo;
    } else if (kind == "network") {
      ManifestEntry e;
      is >> e.name >> e.file;
      entries.push_back(e);
    }
  }
  if (algo.empty()) throw std::runtime_error("eval: manifest lacks an algo line");
  return {algo, entries};
}

inline TrainedBundle load_bundle(const ExperimentConfig& cfg,
                                 const std::string& model_dir) {
  auto [algo, entries] = read_manifest(model_dir);
  ExperimentConfig eff = cfg;
  eff.algo = algo;
  TrainedBundle b;
  b.algo = algo;
  LabeledDataset dataset = build_dataset(eff);
  auto split =
      split_dataset(dataset, eff.train_fraction, derive_seed(eff.seed, 0x5B));
  b.train_ds = std::move(split.first);
  b.test_ds = std::move(split.second);
  const int classes = eff.generator.class_count;
  if (algo == "hybrid" || algo == "svm") {
    b.model.emplace(make_hybrid_model(eff.env, eff.generator.channels,
                                      eff.generator.window_length, classes,
                                      eff.learner));
  } else {
    b.model.emplace(make_baseline_model(eff.env, classes, eff.learner));
  }
  for (const ManifestEntry& e : entries) {
    std::string path = model_dir + "/" + e.file;
    if (e.name == "actor") {
      load_network(path, b.model->actor);
    } else if (e.name == "critic") {
      load_network(path, b.model->critic);
    } else if (e.name == "classifier") {
      load_network(path, b.model->classifier);
    } else if (e.name == "svm") {
      b.svm = load_svm(path);
    }
  }
  if (algo == "svm" && !b.svm) {
    throw std::runtime_error("eval: manifest for svm run lacks the svm entry");
  }
  return b;
}

}  // namespace detail

// Exit codes: 0 success, 1 configuration error, 2 runtime failure.
inline int cli_main(int argc, const char* const* argv) {
  CLI::App app{"joint radio/computing allocation and biosignal classification "
               "simulator"};
  app.require_subcommand(1);

  detail::CommonFlags gen_flags, train_flags, eval_flags, sweep_flags;

  CLI::App* gen = app.add_subcommand("gen-data", "write a synthetic dataset CSV");
  std::string gen_out;
  detail::add_common_flags(gen, gen_flags);
  gen->add_option("--data-out", gen_out, "dataset CSV path")->required();

  CLI::App* train_cmd =
      app.add_subcommand("train", "train an algorithm and write metrics");
  detail::add_common_flags(train_cmd, train_flags);

  CLI::App* eval_cmd =
      app.add_subcommand("eval", "evaluate checkpoints from a training run");
  std::string model_dir;
  std::optional<int> eval_eps;
  detail::add_common_flags(eval_cmd, eval_flags);
  eval_cmd->add_option("--model", model_dir, "run directory with manifest.txt")
      ->required();
  eval_cmd->add_option("--eval-episodes", eval_eps, "evaluation episode count");

  CLI::App* sweep_cmd =
      app.add_subcommand("sweep", "parameter sweep (transmit power or CPU)");
  std::string sweep_param;
  std::optional<int> repeats;
  bool eval_only = false;
  detail::add_common_flags(sweep_cmd, sweep_flags);
  sweep_cmd->add_option("--sweep-param", sweep_param, "pmax or cpu")
      ->required()
      ->check(CLI::IsMember({"pmax", "cpu"}));
  sweep_cmd->add_option("--repeats", repeats, "seeds per grid point");
  sweep_cmd->add_flag("--eval-only", eval_only,
                      "evaluate one trained model across the grid");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;  // bad flags are configuration errors
  }

  try {
    if (gen->parsed()) {
      ExperimentConfig cfg = detail::config_from_flags(gen_flags);
      gen_data(cfg, gen_out);
      std::cout << "wrote " << gen_out << "\n";
    } else if (train_cmd->parsed()) {
      ExperimentConfig cfg = detail::config_from_flags(train_flags);
      ExperimentResult r = run_experiment(cfg);
      for (const auto& [k, v] : r.summary) std::cout << k << " = " << v << "\n";
      std::cout << "wrote " << r.run_dir << "\n";
    } else if (eval_cmd->parsed()) {
      ExperimentConfig cfg = detail::config_from_flags(eval_flags);
      TrainedBundle bundle = detail::load_bundle(cfg, model_dir);
      std::uint64_t eval_seed =
          cfg.eval_seed != 0 ? cfg.eval_seed : derive_seed(cfg.seed, 0xE7);
      EvalResult ev =
          evaluate_bundle(bundle, cfg.env, eval_eps.value_or(cfg.eval_episodes),
                          eval_seed, cfg.generator.class_count);
      std::cout << "algo = " << bundle.algo << "\n";
      std::cout << "test_accuracy = " << detail::format_double(ev.accuracy) << "\n";
      std::cout << "eval_mean_qoe = " << detail::format_double(ev.mean_qoe) << "\n";
      std::cout << "eval_mean_delay_s = " << detail::format_double(ev.mean_delay_s)
                << "\n";
      std::cout << "eval_mean_packet_error = "
                << detail::format_double(ev.mean_packet_error) << "\n";
      std::cout << "eval_verdicts = " << ev.verdict_count << "\n";
    } else if (sweep_cmd->parsed()) {
      ExperimentConfig cfg = detail::config_from_flags(sweep_flags);
      SweepSpec spec;
      spec.parameter = sweep_param;
      spec.grid = sweep_param == "pmax" ? cfg.sweep_pmax_grid : cfg.sweep_cpu_grid;
      spec.repeats = repeats.value_or(cfg.sweep_repeats);
      spec.retrain = eval_only ? false : cfg.sweep_retrain;
      SweepResult sr = run_sweep(cfg, spec);
      write_sweep_files(sr, cfg.output_dir);
      for (const SweepPointAggregate& a : sr.aggregates) {
        std::cout << sweep_param << " = " << detail::format_double(a.value)
                  << ": accuracy " << detail::format_double(a.accuracy_mean)
                  << " +- " << detail::format_double(a.accuracy_std) << ", delay "
                  << detail::format_double(a.delay_mean) << " +- "
                  << detail::format_double(a.delay_std) << " (" << a.runs
                  << " runs)\n";
      }
      std::cout << "wrote " << cfg.output_dir << "\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace vrbci
