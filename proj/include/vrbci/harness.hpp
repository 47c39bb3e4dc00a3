#pragma once

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "vrbci/baselines.hpp"
#include "vrbci/checkpoint.hpp"
#include "vrbci/config.hpp"
#include "vrbci/learner.hpp"
#include "vrbci/signal.hpp"
#include "vrbci/wireless.hpp"

namespace vrbci {

namespace detail {

inline std::string format_double(double v) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

}  // namespace detail

// ---- experiment configuration -------------------------------------------

struct SweepSpec {
  std::string parameter;      // "pmax" or "cpu"
  std::vector<double> grid;   // ascending positive values
  int repeats = 3;
  bool retrain = true;        // retrain per grid point vs evaluate one model

  void validate() const {
    if (parameter != "pmax" && parameter != "cpu") {
      throw ConfigError("sweep: parameter must be pmax or cpu");
    }
    if (grid.empty()) throw ConfigError("sweep: empty grid");
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (!(grid[i] > 0.0)) throw ConfigError("sweep: grid values must be positive");
      if (i > 0 && grid[i] <= grid[i - 1]) {
        throw ConfigError("sweep: grid must be strictly ascending");
      }
    }
    if (repeats <= 0) throw ConfigError("sweep: repeats must be positive");
  }
};

struct ExperimentConfig {
  GeneratorConfig generator;
  EnvConfig env;
  LearnerConfig learner;
  SvmConfig svm;
  std::string algo = "hybrid";  // hybrid | ppo | vpg | svm
  int episodes = 500;
  int eval_episodes = 70;
  double train_fraction = 0.8;
  int windows_per_class = 200;
  std::uint64_t seed = 1;
  std::uint64_t eval_seed = 0;  // 0: derived from seed
  std::string output_dir = "out";
  std::string dataset_csv;      // optional CSV ingestion instead of generation
  std::vector<double> sweep_pmax_grid = {1e-4, 1e-3, 1e-2};
  std::vector<double> sweep_cpu_grid = {0.5e9, 1.0e9, 2.3e9};
  int sweep_repeats = 3;
  bool sweep_retrain = true;

  void validate() const {
    generator.validate();
    env.validate();
    learner.validate();
    svm.validate();
    if (algo != "hybrid" && algo != "ppo" && algo != "vpg" && algo != "svm") {
      throw ConfigError("run.algo must be one of hybrid, ppo, vpg, svm");
    }
    if (episodes < 0 || eval_episodes <= 0) {
      throw ConfigError("run: episodes must be >= 0 and eval_episodes > 0");
    }
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
      throw ConfigError("run.train_fraction must be in (0, 1)");
    }
    if (windows_per_class <= 0) {
      throw ConfigError("run.windows_per_class must be positive");
    }
    if (output_dir.empty()) throw ConfigError("run.out must not be empty");
  }
};

inline std::map<std::string, std::string> preset_values(const std::string& name) {
  if (name == "desk" || name.empty()) return {};
  if (name == "paper") {
    return {{"generator.channels", "64"},
            {"generator.window", "160"},
            {"run.episodes", "2000"}};
  }
  throw ConfigError("unknown preset '" + name + "' (expected desk or paper)");
}

// Builds the effective configuration: defaults, then preset, then file, then
// command-line overrides. Unknown keys are an error.
inline ExperimentConfig resolve_config(const KeyValueConfig& kv) {
  ExperimentConfig cfg;
  try {
    cfg.generator.channels = static_cast<int>(kv.get_int("generator.channels", 8));
    cfg.generator.window_length =
        static_cast<int>(kv.get_int("generator.window", 32));
    cfg.generator.class_count =
        static_cast<int>(kv.get_int("generator.classes", 4));
    cfg.generator.class_frequencies_hz =
        kv.get_double_list("generator.class_freqs_hz", {6.0, 10.0, 14.0, 18.0});
    cfg.generator.signal_amplitude = kv.get_double("generator.amplitude", 1.0);
    cfg.generator.noise_std = kv.get_double("generator.noise_std", 0.5);
    cfg.generator.channels_per_class =
        static_cast<int>(kv.get_int("generator.channels_per_class", 3));
    cfg.generator.sample_rate_hz = kv.get_double("generator.sample_rate_hz", 160.0);

    cfg.env.users = static_cast<int>(kv.get_int("env.users", 3));
    cfg.env.blocks = static_cast<int>(kv.get_int("env.blocks", 6));
    cfg.env.cores = static_cast<int>(kv.get_int("env.cores", 8));
    cfg.env.uplink_bandwidth_hz = kv.get_double("env.uplink_bandwidth_hz", 1e6);
    cfg.env.downlink_bandwidth_hz =
        kv.get_double("env.downlink_bandwidth_hz", 2e7);
    cfg.env.noise_psd_w_per_hz =
        kv.get_power_watts("env.noise_psd", dbm_to_watts(-174.0));
    cfg.env.uplink_interference_w =
        kv.get_power_watts("env.uplink_interference", dbm_to_watts(-207.0));
    cfg.env.downlink_interference_w =
        kv.get_power_watts("env.downlink_interference", dbm_to_watts(-207.0));
    cfg.env.bs_power_w = kv.get_power_watts("env.bs_power", 1.0);
    cfg.env.p_max_w = kv.get_power_watts("env.p_max", 0.01);
    cfg.env.cpu_capacity_hz = kv.get_double("env.cpu_capacity_hz", 2.3e9);
    cfg.env.workload_cycles = kv.get_double("env.workload_cycles", 1e7);
    cfg.env.waterfall_z = kv.get_double("env.waterfall_z", 1.0);
    cfg.env.downlink_packet_bits = kv.get_double("env.downlink_packet_bits", 1e6);
    cfg.env.d_max_s = kv.get_double("env.d_max_s", 0.1);
    cfg.env.eta1 = kv.get_double("env.eta1", 1.0);
    cfg.env.eta2 = kv.get_double("env.eta2", 1.0);
    cfg.env.steps_per_episode =
        static_cast<int>(kv.get_int("env.steps_per_episode", 50));
    cfg.env.mean_channel_gain = kv.get_double("env.mean_channel_gain", 1e-10);
    cfg.env.channel_correlation = kv.get_double("env.channel_correlation", 0.0);
    cfg.env.cpu_walk_std = kv.get_double("env.cpu_walk_std", 0.05);
    cfg.env.delay_report_cap_s = kv.get_double("env.delay_report_cap_s", 1.0);
    cfg.env.corruption_segment_cols =
        static_cast<int>(kv.get_int("env.corruption_segment_cols", 8));
    // 16-bit samples of one J x W window unless configured explicitly
    cfg.env.uplink_packet_bits = kv.get_double(
        "env.uplink_packet_bits",
        16.0 * cfg.generator.channels * cfg.generator.window_length);

    cfg.learner.gamma = kv.get_double("learner.gamma", 0.99);
    cfg.learner.lambda = kv.get_double("learner.lambda", 0.95);
    cfg.learner.clip_epsilon = kv.get_double("learner.clip_epsilon", 0.2);
    cfg.learner.alpha_actor = kv.get_double("learner.alpha_actor", 3e-4);
    cfg.learner.alpha_critic = kv.get_double("learner.alpha_critic", 1e-3);
    cfg.learner.alpha_classifier = kv.get_double("learner.alpha_classifier", 1e-3);
    cfg.learner.rollout_length = static_cast<int>(
        kv.get_int("learner.rollout_length", cfg.env.steps_per_episode));
    cfg.learner.update_epochs =
        static_cast<int>(kv.get_int("learner.update_epochs", 4));
    cfg.learner.hidden_width =
        static_cast<int>(kv.get_int("learner.hidden_width", 64));
    cfg.learner.conv_channels =
        static_cast<int>(kv.get_int("learner.conv_channels", 16));
    cfg.learner.normalize_advantages =
        kv.get_bool("learner.normalize_advantages", true);
    cfg.learner.critic_target_raw_reward =
        kv.get_bool("learner.critic_target_raw_reward", false);

    cfg.svm.learning_rate = kv.get_double("svm.lr", 1e-3);
    cfg.svm.regularization = kv.get_double("svm.regularization", 1e-4);
    cfg.svm.epochs_per_fit = static_cast<int>(kv.get_int("svm.epochs_per_fit", 5));
    cfg.svm.refit_interval = static_cast<int>(kv.get_int("svm.refit_interval", 10));

    cfg.algo = kv.get_string("run.algo", "hybrid");
    cfg.episodes = static_cast<int>(kv.get_int("run.episodes", 500));
    cfg.eval_episodes = static_cast<int>(kv.get_int("run.eval_episodes", 70));
    cfg.train_fraction = kv.get_double("run.train_fraction", 0.8);
    cfg.windows_per_class =
        static_cast<int>(kv.get_int("run.windows_per_class", 200));
    cfg.seed = kv.get_u64("run.seed", 1);
    cfg.eval_seed = kv.get_u64("run.eval_seed", 0);
    cfg.output_dir = kv.get_string("run.out", "out");
    cfg.dataset_csv = kv.get_string("run.dataset_csv", "");

    cfg.sweep_pmax_grid =
        kv.get_double_list("sweep.pmax_grid", {1e-4, 1e-3, 1e-2});
    cfg.sweep_cpu_grid =
        kv.get_double_list("sweep.cpu_grid", {0.5e9, 1.0e9, 2.3e9});
    cfg.sweep_repeats = static_cast<int>(kv.get_int("sweep.repeats", 3));
    cfg.sweep_retrain = kv.get_bool("sweep.retrain", true);

    // seeds for the stages; explicit keys win
    cfg.generator.seed = kv.get_u64("generator.seed", derive_seed(cfg.seed, 0xD5));
    cfg.learner.seed = cfg.seed;
    cfg.learner.episodes = cfg.episodes;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  std::vector<std::string> unknown = kv.unknown_keys();
  if (!unknown.empty()) {
    std::string msg = "config: unknown key(s):";
    for (const std::string& k : unknown) msg += " " + k;
    throw ConfigError(msg);
  }
  try {
    cfg.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return cfg;
}

inline std::map<std::string, std::string> serialize_config(
    const ExperimentConfig& c) {
  std::map<std::string, std::string> m;
  auto d = detail::format_double;
  m["generator.channels"] = std::to_string(c.generator.channels);
  m["generator.window"] = std::to_string(c.generator.window_length);
  m["generator.classes"] = std::to_string(c.generator.class_count);
  {
    std::string freqs;
    for (std::size_t i = 0; i < c.generator.class_frequencies_hz.size(); ++i) {
      if (i) freqs += ",";
      freqs += d(c.generator.class_frequencies_hz[i]);
    }
    m["generator.class_freqs_hz"] = freqs;
  }
  m["generator.amplitude"] = d(c.generator.signal_amplitude);
  m["generator.noise_std"] = d(c.generator.noise_std);
  m["generator.channels_per_class"] = std::to_string(c.generator.channels_per_class);
  m["generator.sample_rate_hz"] = d(c.generator.sample_rate_hz);
  m["generator.seed"] = std::to_string(c.generator.seed);
  m["env.users"] = std::to_string(c.env.users);
  m["env.blocks"] = std::to_string(c.env.blocks);
  m["env.cores"] = std::to_string(c.env.cores);
  m["env.uplink_bandwidth_hz"] = d(c.env.uplink_bandwidth_hz);
  m["env.downlink_bandwidth_hz"] = d(c.env.downlink_bandwidth_hz);
  m["env.noise_psd"] = d(c.env.noise_psd_w_per_hz);
  m["env.uplink_interference"] = d(c.env.uplink_interference_w);
  m["env.downlink_interference"] = d(c.env.downlink_interference_w);
  m["env.bs_power"] = d(c.env.bs_power_w);
  m["env.p_max"] = d(c.env.p_max_w);
  m["env.cpu_capacity_hz"] = d(c.env.cpu_capacity_hz);
  m["env.workload_cycles"] = d(c.env.workload_cycles);
  m["env.waterfall_z"] = d(c.env.waterfall_z);
  m["env.uplink_packet_bits"] = d(c.env.uplink_packet_bits);
  m["env.downlink_packet_bits"] = d(c.env.downlink_packet_bits);
  m["env.d_max_s"] = d(c.env.d_max_s);
  m["env.eta1"] = d(c.env.eta1);
  m["env.eta2"] = d(c.env.eta2);
  m["env.steps_per_episode"] = std::to_string(c.env.steps_per_episode);
  m["env.mean_channel_gain"] = d(c.env.mean_channel_gain);
  m["env.channel_correlation"] = d(c.env.channel_correlation);
  m["env.cpu_walk_std"] = d(c.env.cpu_walk_std);
  m["env.delay_report_cap_s"] = d(c.env.delay_report_cap_s);
  m["env.corruption_segment_cols"] = std::to_string(c.env.corruption_segment_cols);
  m["learner.gamma"] = d(c.learner.gamma);
  m["learner.lambda"] = d(c.learner.lambda);
  m["learner.clip_epsilon"] = d(c.learner.clip_epsilon);
  m["learner.alpha_actor"] = d(c.learner.alpha_actor);
  m["learner.alpha_critic"] = d(c.learner.alpha_critic);
  m["learner.alpha_classifier"] = d(c.learner.alpha_classifier);
  m["learner.rollout_length"] = std::to_string(c.learner.rollout_length);
  m["learner.update_epochs"] = std::to_string(c.learner.update_epochs);
  m["learner.hidden_width"] = std::to_string(c.learner.hidden_width);
  m["learner.conv_channels"] = std::to_string(c.learner.conv_channels);
  m["learner.normalize_advantages"] =
      c.learner.normalize_advantages ? "true" : "false";
  m["learner.critic_target_raw_reward"] =
      c.learner.critic_target_raw_reward ? "true" : "false";
  m["svm.lr"] = d(c.svm.learning_rate);
  m["svm.regularization"] = d(c.svm.regularization);
  m["svm.epochs_per_fit"] = std::to_string(c.svm.epochs_per_fit);
  m["svm.refit_interval"] = std::to_string(c.svm.refit_interval);
  m["run.algo"] = c.algo;
  m["run.episodes"] = std::to_string(c.episodes);
  m["run.eval_episodes"] = std::to_string(c.eval_episodes);
  m["run.train_fraction"] = d(c.train_fraction);
  m["run.windows_per_class"] = std::to_string(c.windows_per_class);
  m["run.seed"] = std::to_string(c.seed);
  m["run.eval_seed"] = std::to_string(c.eval_seed);
  m["run.out"] = c.output_dir;
  if (!c.dataset_csv.empty()) m["run.dataset_csv"] = c.dataset_csv;
  return m;
}

// ---- metric persistence --------------------------------------------------

struct MetricRow {
  int episode = 0;  // 1-based
  double mean_qoe = 0.0;
  double accuracy = 0.0;
  double mean_delay_s = 0.0;
  double mean_packet_error = 0.0;
};

inline constexpr const char* kMetricsHeader =
    "episode,mean_qoe,accuracy,mean_delay_s,mean_packet_error";

inline void write_metrics(const std::vector<MetricRow>& rows,
                          const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("metrics: cannot open " + path);
  f << kMetricsHeader << "\n";
  for (const MetricRow& r : rows) {
    f << r.episode << ',' << detail::format_double(r.mean_qoe) << ','
      << detail::format_double(r.accuracy) << ','
      << detail::format_double(r.mean_delay_s) << ','
      << detail::format_double(r.mean_packet_error) << "\n";
  }
  if (!f) throw std::runtime_error("metrics: write failed for " + path);
}

inline std::vector<MetricRow> read_metrics(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("metrics: cannot open " + path);
  std::string line;
  if (!std::getline(f, line) || line != kMetricsHeader) {
    throw std::runtime_error("metrics: bad header in " + path);
  }
  std::vector<MetricRow> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    MetricRow r;
    std::istringstream is(line);
    std::string cell;
    std::getline(is, cell, ',');
    r.episode = std::stoi(cell);
    auto next = [&]() {
      std::getline(is, cell, ',');
      double v = 0.0;
      std::from_chars(cell.data(), cell.data() + cell.size(), v);
      return v;
    };
    r.mean_qoe = next();
    r.accuracy = next();
    r.mean_delay_s = next();
    r.mean_packet_error = next();
    rows.push_back(r);
  }
  return rows;
}

// Per-iteration training diagnostics (the three losses and the mean policy
// ratio), one CSV row per episode.
inline void write_diagnostics(const std::vector<UpdateDiagnostics>& diags,
                              const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("diagnostics: cannot open " + path);
  f << "episode,actor_objective,critic_loss,classifier_loss,mean_ratio\n";
  for (std::size_t i = 0; i < diags.size(); ++i) {
    f << (i + 1) << ',' << detail::format_double(diags[i].actor_objective) << ','
      << detail::format_double(diags[i].critic_loss) << ','
      << detail::format_double(diags[i].classifier_loss) << ','
      << detail::format_double(diags[i].mean_ratio) << "\n";
  }
}

// Min-max normalized QoE over the run; our convention, kept out of the main
// metrics file so its header stays fixed.
inline void write_normalized_qoe(const std::vector<MetricRow>& rows,
                                 const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("metrics: cannot open " + path);
  f << "episode,normalized_qoe\n";
  double lo = 0.0, hi = 0.0;
  if (!rows.empty()) {
    lo = hi = rows[0].mean_qoe;
    for (const MetricRow& r : rows) {
      lo = std::min(lo, r.mean_qoe);
      hi = std::max(hi, r.mean_qoe);
    }
  }
  double span = hi - lo;
  for (const MetricRow& r : rows) {
    double norm = span > 0.0 ? (r.mean_qoe - lo) / span : 0.0;
    f << r.episode << ',' << detail::format_double(norm) << "\n";
  }
}

// ---- experiment runs ------------------------------------------------------

struct ExperimentResult {
  std::vector<MetricRow> rows;
  EvalResult eval;
  std::map<std::string, std::string> summary;
  std::string run_dir;
};

inline void gen_data(const ExperimentConfig& cfg, const std::string& path) {
  LabeledDataset ds = generate_synthetic_dataset(cfg.generator,
                                                 cfg.windows_per_class);
  save_csv_dataset(path, ds);
}

namespace detail {

inline std::vector<MetricRow> to_rows(const TrainResult& tr) {
  std::vector<MetricRow> rows;
  rows.reserve(tr.series.size());
  for (std::size_t i = 0; i < tr.series.size(); ++i) {
    MetricRow r;
    r.episode = static_cast<int>(i) + 1;
    r.mean_qoe = tr.series[i].mean_qoe;
    r.accuracy = tr.series[i].accuracy;
    r.mean_delay_s = tr.series[i].mean_delay_s;
    r.mean_packet_error = tr.series[i].mean_packet_error;
    rows.push_back(r);
  }
  return rows;
}

inline double tail_mean(const std::vector<double>& xs, std::size_t count) {
  if (xs.empty()) return 0.0;
  std::size_t n = std::min(count, xs.size());
  double sum = 0.0;
  for (std::size_t i = xs.size() - n; i < xs.size(); ++i) sum += xs[i];
  return sum / static_cast<double>(n);
}

// Tracks files created by a run so a failure can remove partial outputs.
class OutputTracker {
 public:
  explicit OutputTracker(const std::filesystem::path& dir) : dir_(dir) {
    created_dir_ = !std::filesystem::exists(dir);
    std::filesystem::create_directories(dir);
  }

  std::string file(const std::string& name) {
    std::filesystem::path p = dir_ / name;
    files_.push_back(p);
    return p.string();
  }

  void discard_all() {
    std::error_code ec;
    for (const auto& p : files_) std::filesystem::remove(p, ec);
    if (created_dir_) std::filesystem::remove(dir_, ec);  // only if now empty
  }

 private:
  std::filesystem::path dir_;
  std::vector<std::filesystem::path> files_;
  bool created_dir_ = false;
};

}  // namespace detail

// SVM training episodes: allocation comes from a frozen randomly initialized
// policy, predictions from the SVM over the received windows; every window
// is retained and the SVM refits over the whole buffer at a fixed cadence.
inline TrainResult run_svm_training(SvmTrainer& trainer, HybridModel& alloc_model,
                                    WirelessEnv& env, const ExperimentConfig& cfg,
                                    const LabeledDataset* holdout) {
  TrainResult result;
  Rng rng(derive_seed(cfg.seed, 0xAC7));
  env.reset();
  const EnvConfig& env_cfg = env.config();
  for (int episode = 0; episode < cfg.episodes; ++episode) {
    Trajectory traj;
    traj.steps.reserve(cfg.learner.rollout_length);
    for (int o = 0; o < cfg.learner.rollout_length; ++o) {
      TrajectoryStep step;
      step.observation = make_observation(env.state(), env_cfg);
      PolicyDistribution dist = decode_policy(
          alloc_model.actor.forward(observation_tensor(step.observation)),
          alloc_model.layout);
      SampledAction sampled = sample_action(dist, alloc_model.layout, rng);
      step.labels.resize(env_cfg.users);
      step.verdicts.resize(env_cfg.users);
      sampled.action.predictions.resize(env_cfg.users);
      for (int k = 0; k < env_cfg.users; ++k) {
        const EegWindow& received = env.state().corrupted[k];
        int pred = predict_svm(trainer.model(), received);
        sampled.action.predictions[k] = pred;
        step.labels[k] = env.state().windows[k].label;
        step.verdicts[k] = pred == step.labels[k] ? 1 : 0;
        trainer.add(received, step.labels[k]);
      }
      StepMetrics m = env.step(sampled.action, step.verdicts);
      step.mean_reward = m.mean_qoe;
      step.mean_delay_s = m.mean_delay_s;
      step.mean_packet_error = m.mean_packet_error;
      step.done = m.episode_done;
      traj.steps.push_back(std::move(step));
      if (env.done()) env.reset();
    }
    result.series.push_back(summarize_trajectory(traj));
    bool last = episode + 1 == cfg.episodes;
    if ((episode + 1) % cfg.svm.refit_interval == 0 || last) {
      trainer.fit();
    }
    if (holdout != nullptr) {
      std::size_t correct = 0;
      for (const EegWindow& w : holdout->windows) {
        if (predict_svm(trainer.model(), w) == w.label) ++correct;
      }
      result.holdout_accuracy.push_back(static_cast<double>(correct) /
                                        static_cast<double>(holdout->windows.size()));
    }
  }
  return result;
}

inline EvalResult evaluate_svm(const SvmModel& svm, HybridModel& alloc_model,
                               WirelessEnv& env, int episodes, int classes) {
  EvalResult r;
  r.confusion.assign(classes, std::vector<int>(classes, 0));
  const EnvConfig& cfg = env.config();
  Rng rng(0);
  std::size_t steps = 0;
  for (int ep = 0; ep < episodes; ++ep) {
    env.reset();
    while (!env.done()) {
      Observation obs = make_observation(env.state(), cfg);
      PolicyDistribution dist = decode_policy(
          alloc_model.actor.forward(observation_tensor(obs)), alloc_model.layout);
      SampledAction sampled = sample_action(dist, alloc_model.layout, rng, true);
      sampled.action.predictions.resize(cfg.users);
      std::vector<int> verdicts(cfg.users, 0);
      for (int k = 0; k < cfg.users; ++k) {
        int label = env.state().windows[k].label;
        int pred = predict_svm(svm, env.state().corrupted[k]);
        sampled.action.predictions[k] = pred;
        verdicts[k] = pred == label ? 1 : 0;
        r.confusion[label][pred] += 1;
        r.verdict_count += 1;
        r.accuracy += verdicts[k];
      }
      StepMetrics m = env.step(sampled.action, verdicts);
      r.mean_qoe += m.mean_qoe;
      r.mean_delay_s += m.mean_delay_s;
      r.mean_packet_error += m.mean_packet_error;
      ++steps;
    }
  }
  if (steps > 0) {
    r.mean_qoe /= static_cast<double>(steps);
    r.mean_delay_s /= static_cast<double>(steps);
    r.mean_packet_error /= static_cast<double>(steps);
    r.accuracy /= static_cast<double>(r.verdict_count);
  }
  return r;
}

inline LabeledDataset build_dataset(const ExperimentConfig& cfg) {
  if (!cfg.dataset_csv.empty()) {
    return load_csv_dataset(cfg.dataset_csv, cfg.generator.channels,
                            cfg.generator.window_length,
                            cfg.generator.class_count);
  }
  return generate_synthetic_dataset(cfg.generator, cfg.windows_per_class);
}

// A trained model plus the data splits it was trained against; lets sweeps
// evaluate one model under several environment settings without retraining.
struct TrainedBundle {
  std::string algo;
  std::optional<HybridModel> model;  // learned policy (all algos)
  std::optional<SvmModel> svm;      // classifier for algo == svm
  LabeledDataset train_ds;
  LabeledDataset test_ds;
  TrainResult train_result;
};

inline TrainedBundle train_bundle(const ExperimentConfig& cfg) {
  TrainedBundle b;
  b.algo = cfg.algo;
  LabeledDataset dataset = build_dataset(cfg);
  auto split = split_dataset(dataset, cfg.train_fraction, derive_seed(cfg.seed, 0x5B));
  b.train_ds = std::move(split.first);
  b.test_ds = std::move(split.second);
  std::uint64_t env_seed = derive_seed(cfg.seed, 0x3E);
  WirelessEnv train_env(cfg.env, &b.train_ds, env_seed);
  const int classes = cfg.generator.class_count;
  if (cfg.algo == "hybrid") {
    b.model.emplace(make_hybrid_model(cfg.env, cfg.generator.channels,
                                      cfg.generator.window_length, classes,
                                      cfg.learner));
    b.train_result = train(*b.model, train_env, cfg.learner, &b.test_ds);
  } else if (cfg.algo == "ppo" || cfg.algo == "vpg") {
    RlBaselineConfig bcfg = RlBaselineConfig::make(
        cfg.algo == "ppo" ? RlVariant::PpoMonolithic : RlVariant::Vpg,
        cfg.learner);
    b.model.emplace(make_baseline_model(cfg.env, classes, cfg.learner));
    b.train_result = train_rl_baseline(*b.model, train_env, bcfg);
  } else if (cfg.algo == "svm") {
    b.model.emplace(make_hybrid_model(cfg.env, cfg.generator.channels,
                                      cfg.generator.window_length, classes,
                                      cfg.learner));
    SvmTrainer trainer(classes,
                       2 * static_cast<std::size_t>(cfg.generator.channels) *
                           cfg.generator.window_length,
                       cfg.svm);
    b.train_result = run_svm_training(trainer, *b.model, train_env, cfg, &b.test_ds);
    b.svm = trainer.model();
  } else {
    throw ConfigError("run.algo must be one of hybrid, ppo, vpg, svm");
  }
  return b;
}

// Evaluates the bundle under `env_cfg` (which may differ from the training
// environment in a sweep). The policy's power squash tracks the evaluated
// power ceiling.
inline EvalResult evaluate_bundle(TrainedBundle& b, const EnvConfig& env_cfg,
                                  int eval_episodes, std::uint64_t eval_seed,
                                  int classes) {
  WirelessEnv eval_env(env_cfg, &b.test_ds, eval_seed);
  b.model->layout.p_max = env_cfg.p_max_w;
  if (b.algo == "svm") {
    return evaluate_svm(*b.svm, *b.model, eval_env, eval_episodes, classes);
  }
  return evaluate(*b.model, eval_env, eval_episodes, classes);
}

inline void write_summary(const std::string& path,
                          const std::map<std::string, std::string>& summary) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("summary: cannot open " + path);
  std::time_t now = std::time(nullptr);
  char stamp[64];
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  f << "# generated " << stamp << "\n";
  for (const auto& [k, v] : summary) f << k << " = " << v << "\n";
}

inline void write_config_record(const std::string& path,
                                const ExperimentConfig& cfg) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("config record: cannot open " + path);
  for (const auto& [k, v] : serialize_config(cfg)) f << k << " = " << v << "\n";
}

// Trains the selected algorithm, evaluates on the held-out split, and writes
// metrics, checkpoints, and a key-value summary under cfg.output_dir.
// Partial outputs are removed on failure.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  detail::OutputTracker out(cfg.output_dir);
  try {
    ExperimentResult result;
    result.run_dir = cfg.output_dir;
    const int classes = cfg.generator.class_count;
    std::uint64_t eval_seed =
        cfg.eval_seed != 0 ? cfg.eval_seed : derive_seed(cfg.seed, 0xE7);

    TrainedBundle bundle = train_bundle(cfg);
    result.eval =
        evaluate_bundle(bundle, cfg.env, cfg.eval_episodes, eval_seed, classes);

    std::map<std::string, std::string> manifest;
    if (cfg.algo == "hybrid") {
      save_network(out.file("actor.ckpt"), bundle.model->actor);
      save_network(out.file("critic.ckpt"), bundle.model->critic);
      save_network(out.file("classifier.ckpt"), bundle.model->classifier);
      manifest = {{"actor", "actor.ckpt"},
                  {"critic", "critic.ckpt"},
                  {"classifier", "classifier.ckpt"}};
    } else if (cfg.algo == "ppo" || cfg.algo == "vpg") {
      save_network(out.file("actor.ckpt"), bundle.model->actor);
      save_network(out.file("critic.ckpt"), bundle.model->critic);
      manifest = {{"actor", "actor.ckpt"}, {"critic", "critic.ckpt"}};
    } else {  // svm
      save_svm(out.file("svm.ckpt"), *bundle.svm);
      save_network(out.file("actor.ckpt"), bundle.model->actor);
      manifest = {{"svm", "svm.ckpt"}, {"actor", "actor.ckpt"}};
    }

    const TrainResult& train_result = bundle.train_result;
    result.rows = detail::to_rows(train_result);
    write_metrics(result.rows, out.file("metrics.csv"));
    write_normalized_qoe(result.rows, out.file("metrics_normalized.csv"));
    if (!train_result.diagnostics.empty()) {
      write_diagnostics(train_result.diagnostics, out.file("diagnostics.csv"));
    }
    write_config_record(out.file("config_resolved.txt"), cfg);
    {
      std::ofstream mf(out.file("manifest.txt"), std::ios::binary);
      mf << "vrbci-manifest 1\n";
      mf << "algo " << cfg.algo << "\n";
      for (const auto& [k, v] : manifest) mf << "network " << k << " " << v << "\n";
    }

    auto& s = result.summary;
    s["algo"] = cfg.algo;
    s["seed"] = std::to_string(cfg.seed);
    s["episodes"] = std::to_string(cfg.episodes);
    s["eval_episodes"] = std::to_string(cfg.eval_episodes);
    s["test_accuracy"] = detail::format_double(result.eval.accuracy);
    s["eval_mean_qoe"] = detail::format_double(result.eval.mean_qoe);
    s["eval_mean_delay_s"] = detail::format_double(result.eval.mean_delay_s);
    s["eval_mean_packet_error"] =
        detail::format_double(result.eval.mean_packet_error);
    s["eval_verdicts"] = std::to_string(result.eval.verdict_count);
    if (!train_result.series.empty()) {
      std::vector<double> acc, qoe, delay;
      for (const auto& em : train_result.series) {
        acc.push_back(em.accuracy);
        qoe.push_back(em.mean_qoe);
        delay.push_back(em.mean_delay_s);
      }
      s["final100_train_accuracy"] =
          detail::format_double(detail::tail_mean(acc, 100));
      s["final100_mean_qoe"] = detail::format_double(detail::tail_mean(qoe, 100));
      s["final100_mean_delay_s"] =
          detail::format_double(detail::tail_mean(delay, 100));
    }
    if (!train_result.holdout_accuracy.empty()) {
      s["final100_holdout_accuracy"] = detail::format_double(
          detail::tail_mean(train_result.holdout_accuracy, 100));
    }
    write_summary(out.file("summary.txt"), s);
    return result;
  } catch (...) {
    out.discard_all();
    throw;
  }
}

// ---- sweeps ---------------------------------------------------------------

struct SweepRow {
  std::string parameter;
  double value = 0.0;
  int repeat = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double accuracy = 0.0;
  double mean_delay_s = 0.0;
  double mean_qoe = 0.0;
};

struct SweepPointAggregate {
  double value = 0.0;
  int runs = 0;
  double accuracy_mean = 0.0, accuracy_std = 0.0;
  double delay_mean = 0.0, delay_std = 0.0;
  double qoe_mean = 0.0, qoe_std = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<SweepPointAggregate> aggregates;
};

namespace detail {

inline void mean_std(const std::vector<double>& xs, double& mean, double& std) {
  mean = 0.0;
  std = 0.0;
  if (xs.empty()) return;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  for (double x : xs) std += (x - mean) * (x - mean);
  std = std::sqrt(std / static_cast<double>(xs.size()));
}

}  // namespace detail

// Trains (or reuses) and evaluates at every grid point x repeat. Evaluation
// seeds are shared across grid points (derived from the repeat only) so
// point-to-point differences come from the swept parameter, not from fresh
// channel/CPU draws. Individual failures are recorded and the sweep continues.
inline SweepResult run_sweep(const ExperimentConfig& base, const SweepSpec& sweep) {
  base.validate();
  sweep.validate();
  SweepResult result;
  std::filesystem::create_directories(base.output_dir);
  if (sweep.retrain) {
    for (std::size_t pi = 0; pi < sweep.grid.size(); ++pi) {
      for (int rep = 0; rep < sweep.repeats; ++rep) {
        ExperimentConfig cfg = base;
        if (sweep.parameter == "pmax") {
          cfg.env.p_max_w = sweep.grid[pi];
        } else {
          cfg.env.cpu_capacity_hz = sweep.grid[pi];
        }
        cfg.seed = derive_seed(base.seed, pi + 1, static_cast<std::uint64_t>(rep));
        cfg.eval_seed =
            derive_seed(base.seed, 0xE7A1, static_cast<std::uint64_t>(rep));
        cfg.output_dir = base.output_dir + "/" + sweep.parameter + "_p" +
                         std::to_string(pi) + "_r" + std::to_string(rep);
        SweepRow row;
        row.parameter = sweep.parameter;
        row.value = sweep.grid[pi];
        row.repeat = rep;
        row.seed = cfg.seed;
        try {
          ExperimentResult er = run_experiment(cfg);
          row.ok = true;
          row.accuracy = er.eval.accuracy;
          row.mean_delay_s = er.eval.mean_delay_s;
          row.mean_qoe = er.eval.mean_qoe;
        } catch (const std::exception& e) {
          row.ok = false;
          row.error = e.what();
        }
        result.rows.push_back(std::move(row));
      }
    }
  } else {
    // one trained model per repeat, evaluated across the whole grid
    for (int rep = 0; rep < sweep.repeats; ++rep) {
      ExperimentConfig cfg = base;
      cfg.seed = derive_seed(base.seed, 0xB0, static_cast<std::uint64_t>(rep));
      std::uint64_t eval_seed =
          derive_seed(base.seed, 0xE7A1, static_cast<std::uint64_t>(rep));
      std::optional<TrainedBundle> bundle;
      std::string train_error;
      try {
        bundle.emplace(train_bundle(cfg));
      } catch (const std::exception& e) {
        train_error = e.what();
      }
      for (std::size_t pi = 0; pi < sweep.grid.size(); ++pi) {
        SweepRow row;
        row.parameter = sweep.parameter;
        row.value = sweep.grid[pi];
        row.repeat = rep;
        row.seed = cfg.seed;
        if (!bundle) {
          row.ok = false;
          row.error = train_error;
        } else {
          EnvConfig env_cfg = cfg.env;
          if (sweep.parameter == "pmax") {
            env_cfg.p_max_w = sweep.grid[pi];
          } else {
            env_cfg.cpu_capacity_hz = sweep.grid[pi];
          }
          try {
            EvalResult ev =
                evaluate_bundle(*bundle, env_cfg, cfg.eval_episodes, eval_seed,
                                cfg.generator.class_count);
            row.ok = true;
            row.accuracy = ev.accuracy;
            row.mean_delay_s = ev.mean_delay_s;
            row.mean_qoe = ev.mean_qoe;
          } catch (const std::exception& e) {
            row.ok = false;
            row.error = e.what();
          }
        }
        result.rows.push_back(std::move(row));
      }
    }
  }
  for (std::size_t pi = 0; pi < sweep.grid.size(); ++pi) {
    SweepPointAggregate agg;
    agg.value = sweep.grid[pi];
    std::vector<double> acc, delay, qoe;
    for (const SweepRow& r : result.rows) {
      if (r.value == sweep.grid[pi] && r.ok) {
        acc.push_back(r.accuracy);
        delay.push_back(r.mean_delay_s);
        qoe.push_back(r.mean_qoe);
      }
    }
    agg.runs = static_cast<int>(acc.size());
    detail::mean_std(acc, agg.accuracy_mean, agg.accuracy_std);
    detail::mean_std(delay, agg.delay_mean, agg.delay_std);
    detail::mean_std(qoe, agg.qoe_mean, agg.qoe_std);
    result.aggregates.push_back(agg);
  }
  return result;
}

inline void write_sweep_files(const SweepResult& sr, const std::string& dir) {
  {
    std::ofstream f(dir + "/sweep_rows.csv", std::ios::binary);
    f << "parameter,value,repeat,seed,status,accuracy,mean_delay_s,mean_qoe\n";
    for (const SweepRow& r : sr.rows) {
      f << r.parameter << ',' << detail::format_double(r.value) << ',' << r.repeat
        << ',' << r.seed << ',' << (r.ok ? "ok" : "failed") << ','
        << detail::format_double(r.accuracy) << ','
        << detail::format_double(r.mean_delay_s) << ','
        << detail::format_double(r.mean_qoe) << "\n";
    }
  }
  {
    std::ofstream f(dir + "/sweep_agg.csv", std::ios::binary);
    f << "value,runs,accuracy_mean,accuracy_std,mean_delay_s_mean,"
         "mean_delay_s_std,mean_qoe_mean,mean_qoe_std\n";
    for (const SweepPointAggregate& a : sr.aggregates) {
      f << detail::format_double(a.value) << ',' << a.runs << ','
        << detail::format_double(a.accuracy_mean) << ','
        << detail::format_double(a.accuracy_std) << ','
        << detail::format_double(a.delay_mean) << ','
        << detail::format_double(a.delay_std) << ','
        << detail::format_double(a.qoe_mean) << ','
        << detail::format_double(a.qoe_std) << "\n";
    }
  }
}

}  // namespace vrbci
