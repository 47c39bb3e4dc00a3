// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one PASS/FAIL line per criterion. Exit code is the number of
// failed criteria. Optional argv: criterion numbers to run (default: all).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "vrbci/baselines.hpp"
#include "vrbci/harness.hpp"
#include "vrbci/learner.hpp"
#include "vrbci/nn.hpp"
#include "vrbci/wireless.hpp"

using namespace vrbci;

namespace {

std::filesystem::path work_root() {
  static std::filesystem::path p = [] {
    auto root = std::filesystem::temp_directory_path() / "vrbci_acceptance";
    std::filesystem::remove_all(root);
    std::filesystem::create_directories(root);
    return root;
  }();
  return p;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), {});
}

// the desk-scale configuration every training criterion runs at
ExperimentConfig desk_config(const std::string& out, std::uint64_t seed,
                             int episodes) {
  KeyValueConfig kv;
  kv.set("run.out", out);
  kv.set("run.seed", std::to_string(seed));
  kv.set("run.episodes", std::to_string(episodes));
  return resolve_config(kv);
}

double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(std::abs(want), 1e-300);
}

// ---- criterion 1: gradient fidelity --------------------------------------

bool criterion_gradients(std::string& detail) {
  struct Case {
    std::vector<LayerSpec> specs;
    std::vector<std::size_t> input;
  };
  // three random compositions covering every layer kind
  std::vector<Case> cases = {
      {{LayerSpec::dense(6, 8), LayerSpec::relu(), LayerSpec::dense(8, 5),
        LayerSpec::softmax()},
       {6}},
      {{LayerSpec::conv1d(2, 4, 3), LayerSpec::tanh_(), LayerSpec::maxpool1d(2),
        LayerSpec::flatten(), LayerSpec::dense(12, 4), LayerSpec::softmax()},
       {2, 8}},
      {{LayerSpec::conv1d(3, 2, 2, 2), LayerSpec::relu(), LayerSpec::flatten(),
        LayerSpec::dense(8, 6), LayerSpec::tanh_(), LayerSpec::dense(6, 3)},
       {3, 9}},
  };
  double worst = 0.0;
  for (std::size_t ci = 0; ci < cases.size(); ++ci) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      Rng rng(seed * 977 + ci);
      GradientCheckReport rep =
          gradient_check(cases[ci].specs, cases[ci].input, 1e-4, rng);
      for (const auto& e : rep.entries) worst = std::max(worst, e.max_rel_error);
      if (!rep.pass) {
        detail = "composition " + std::to_string(ci) + " seed " +
                 std::to_string(seed) + " exceeded 1e-4";
        return false;
      }
    }
  }
  std::ostringstream os;
  os << "max relative error " << worst << " over 3 compositions x 20 seeds";
  detail = os.str();
  return true;
}

// ---- criterion 2: oracle equivalence --------------------------------------

bool criterion_oracles(std::string& detail) {
  // GAE backward recursion vs direct double sum, 100 random sequences
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    Rng rng(seed);
    std::size_t n = 5 + rng.uniform_index(60);
    std::vector<double> deltas(n);
    for (double& d : deltas) d = rng.normal();
    double gamma = 0.5 + 0.499 * rng.uniform();
    double lambda = rng.uniform();
    Trajectory t;
    for (std::size_t i = 0; i < n; ++i) {
      TrajectoryStep s;
      s.mean_reward = deltas[i];
      s.value = 0.0;
      s.done = i + 1 == n;
      t.steps.push_back(std::move(s));
    }
    GaeResult g = compute_gae(t, gamma, lambda);
    for (std::size_t o = 0; o < n; ++o) {
      double direct = 0.0, w = 1.0;
      for (std::size_t j = o; j < n; ++j) {
        direct += w * deltas[j];
        w *= gamma * lambda;
      }
      if (std::abs(g.advantages[o] - direct) >= 1e-12) {
        detail = "GAE mismatch at seed " + std::to_string(seed);
        return false;
      }
    }
  }

  // clipped objective truth table
  struct ClipCase {
    double ratio, adv, eps, expected;
  };
  const ClipCase table[16] = {
      {0.5, 2.0, 0.2, 1.0},   {0.8, 2.0, 0.2, 1.6},   {1.0, 2.0, 0.2, 2.0},
      {1.5, 2.0, 0.2, 2.4},   {0.5, -2.0, 0.2, -1.6}, {0.8, -2.0, 0.2, -1.6},
      {1.0, -2.0, 0.2, -2.0}, {1.5, -2.0, 0.2, -3.0}, {0.5, 2.0, 0.5, 1.0},
      {0.8, 2.0, 0.5, 1.6},   {1.0, 2.0, 0.5, 2.0},   {1.5, 2.0, 0.5, 3.0},
      {0.5, -2.0, 0.5, -1.0}, {0.8, -2.0, 0.5, -1.6}, {1.0, -2.0, 0.5, -2.0},
      {1.5, -2.0, 0.5, -3.0},
  };
  for (const ClipCase& c : table) {
    double got = clipped_objective(std::log(c.ratio), 0.0, c.adv, c.eps);
    if (std::abs(got - c.expected) > 1e-12) {
      detail = "clip table mismatch at ratio " + std::to_string(c.ratio);
      return false;
    }
  }

  // link-budget oracles on the published constants, 1e-9 relative
  EnvConfig cfg;
  EnvState st;
  st.h.assign(cfg.users, 1e-10);
  st.u.assign(cfg.cores, 0.6);
  ActionVector a;
  a.rho.assign(cfg.blocks, 1);
  a.rho[0] = 0;
  a.p.assign(cfg.users, 0.01);
  a.tau = {0.25, 0.5, 0.125, 0.125};
  a.predictions.assign(cfg.users, 0);

  const double noise_u = std::pow(10.0, (-207.0 - 30.0) / 10.0) +
                         1e6 * std::pow(10.0, (-174.0 - 30.0) / 10.0);
  const double noise_d = std::pow(10.0, (-207.0 - 30.0) / 10.0) +
                         2e7 * std::pow(10.0, (-174.0 - 30.0) / 10.0);
  double want_up = 1e6 * std::log2(1.0 + 0.01 * 1e-10 / noise_u);
  double got_up = uplink_rate(0, a, st, cfg);
  if (rel_err(got_up, want_up) >= 1e-9) {
    detail = "uplink rate off";
    return false;
  }
  double want_down = 2e7 * std::log2(1.0 + 1.0 * 1e-10 / noise_d);
  double got_down = downlink_rate(0, st, cfg);
  if (rel_err(got_down, want_down) >= 1e-9) {
    detail = "downlink rate off";
    return false;
  }
  double want_eps = 1.0 - std::exp(-1.0 * noise_u / (0.01 * 1e-10));
  double got_eps = packet_error(0, a, st, cfg).clamped;
  if (rel_err(got_eps, want_eps) >= 1e-9) {
    detail = "packet error off";
    return false;
  }
  EnvConfig dcfg = cfg;
  dcfg.uplink_packet_bits = 163840.0;
  double want_d = 1e7 / (0.5 * 0.6 * 2.3e9);  // user 0: tau 0.5, u 0.6
  DelayResult delay = round_trip_delay(0, a, st, dcfg);
  if (rel_err(delay.processing_s, want_d) >= 1e-9) {
    detail = "processing delay off";
    return false;
  }
  double r_u0 = uplink_rate(0, a, st, dcfg);
  double want_rt = want_d + 1e6 / got_down + 163840.0 / r_u0;
  if (rel_err(delay.round_trip_s, want_rt) >= 1e-9) {
    detail = "round-trip delay off";
    return false;
  }
  detail = "GAE (100 sequences), 16-case clip table, link-budget values";
  return true;
}

// ---- criterion 3: constraint satisfaction ---------------------------------

bool criterion_constraints(std::string& detail) {
  GeneratorConfig g;
  g.seed = 5;
  LabeledDataset ds = generate_synthetic_dataset(g, 10);
  EnvConfig env_cfg;
  LearnerConfig lc;
  lc.seed = 7;
  HybridModel model = make_hybrid_model(env_cfg, 8, 32, 4, lc);
  WirelessEnv env(env_cfg, &ds, 11);
  env.reset();
  Rng rng(13);
  for (int i = 0; i < 10000; ++i) {
    Observation obs = make_observation(env.state(), env_cfg);
    PolicyDistribution d =
        decode_policy(model.actor.forward(observation_tensor(obs)), model.layout);
    SampledAction s = sample_action(d, model.layout, rng);
    s.action.predictions.assign(env_cfg.users, 0);
    try {
      validate_action(s.action, env_cfg);
    } catch (const std::exception& e) {
      detail = std::string("sampled action rejected: ") + e.what();
      return false;
    }
    if (i % 50 == 0) {
      if (env.done()) env.reset();
      std::vector<int> verdicts(env_cfg.users, 0);
      env.step(s.action, verdicts);
    }
  }

  // per-step QoE terms take only the four admissible values
  EnvConfig weighted = env_cfg;
  weighted.eta1 = 0.7;
  weighted.eta2 = 0.3;
  WirelessEnv wenv(weighted, &ds, 17);
  wenv.reset();
  Rng vrng(19);
  for (int i = 0; i < 500; ++i) {
    if (wenv.done()) wenv.reset();
    Observation obs = make_observation(wenv.state(), weighted);
    PolicyDistribution d =
        decode_policy(model.actor.forward(observation_tensor(obs)), model.layout);
    SampledAction s = sample_action(d, model.layout, vrng);
    s.action.predictions.assign(weighted.users, 0);
    std::vector<int> verdicts;
    for (int k = 0; k < weighted.users; ++k) {
      verdicts.push_back(static_cast<int>(vrng.uniform_index(2)));
    }
    StepMetrics m = wenv.step(s.action, verdicts);
    for (double q : m.qoe) {
      if (q != 0.0 && q != 0.7 && q != 0.3 && q != 1.0) {
        detail = "QoE term outside the admissible set: " + std::to_string(q);
        return false;
      }
    }
  }
  detail = "10000 sampled actions legal; QoE terms confined to the 4-value set";
  return true;
}

// ---- criteria 4 and 5: desk-scale training and baseline ordering ----------

struct DeskRuns {
  ExperimentResult hybrid;
  double hybrid_final100 = 0.0;
};

const DeskRuns& desk_hybrid_run() {
  static DeskRuns runs = [] {
    DeskRuns r;
    ExperimentConfig cfg = desk_config((work_root() / "hybrid").string(),
                                       /*seed=*/1, /*episodes=*/500);
    r.hybrid = run_experiment(cfg);
    r.hybrid_final100 =
        std::stod(r.hybrid.summary.at("final100_holdout_accuracy"));
    return r;
  }();
  return runs;
}

bool criterion_desk_accuracy(std::string& detail) {
  auto start = std::chrono::steady_clock::now();
  const DeskRuns& runs = desk_hybrid_run();
  double minutes =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count() /
      60.0;
  std::ostringstream os;
  os << "final-100 held-out accuracy " << runs.hybrid_final100
     << " (threshold 0.65), run took " << minutes << " min";
  detail = os.str();
  return runs.hybrid_final100 >= 0.65 && minutes < 30.0;
}

bool criterion_baseline_ordering(std::string& detail) {
  const DeskRuns& runs = desk_hybrid_run();
  double hybrid_acc = runs.hybrid.eval.accuracy;

  ExperimentConfig svm_cfg = desk_config((work_root() / "svm").string(), 1, 500);
  svm_cfg.algo = "svm";
  ExperimentResult svm = run_experiment(svm_cfg);

  ExperimentConfig ppo_cfg = desk_config((work_root() / "ppo").string(), 1, 500);
  ppo_cfg.algo = "ppo";
  ExperimentResult ppo = run_experiment(ppo_cfg);

  ExperimentConfig vpg_cfg = desk_config((work_root() / "vpg").string(), 1, 500);
  vpg_cfg.algo = "vpg";
  ExperimentResult vpg = run_experiment(vpg_cfg);

  std::ostringstream os;
  os << "hybrid " << hybrid_acc << ", svm " << svm.eval.accuracy << ", ppo "
     << ppo.eval.accuracy << ", vpg " << vpg.eval.accuracy;
  detail = os.str();

  bool svm_close = std::abs(svm.eval.accuracy - hybrid_acc) <= 0.10;
  bool ppo_chance = ppo.eval.accuracy >= 0.15 && ppo.eval.accuracy <= 0.40;
  bool vpg_chance = vpg.eval.accuracy >= 0.15 && vpg.eval.accuracy <= 0.40;
  if (!svm_close) detail += " [svm not within 10 points of hybrid]";
  if (!ppo_chance) detail += " [ppo outside chance band]";
  if (!vpg_chance) detail += " [vpg outside chance band]";
  return svm_close && ppo_chance && vpg_chance;
}

// ---- criteria 6 and 7: sweeps ---------------------------------------------

// Sweep runs keep the desk-scale dimensions but transmit the published
// window payload (64 ch x 160 samples x 16 bit = 163840 bits) so transmit
// power governs the round trip the way the power-variation figures show;
// extra evaluation episodes tighten the per-point averages.
ExperimentConfig sweep_config(const std::string& out, std::uint64_t seed,
                              int episodes) {
  ExperimentConfig cfg = desk_config(out, seed, episodes);
  cfg.env.uplink_packet_bits = 163840.0;
  cfg.eval_episodes = 200;
  return cfg;
}

bool criterion_power_sweep(std::string& detail) {
  ExperimentConfig base =
      sweep_config((work_root() / "sweep_pmax").string(), 11, 250);
  SweepSpec spec;
  spec.parameter = "pmax";
  spec.grid = {1e-4, 1e-3, 1e-2};
  spec.repeats = 3;
  SweepResult sr = run_sweep(base, spec);
  write_sweep_files(sr, base.output_dir);
  std::ostringstream os;
  bool delays_decrease = true;
  for (std::size_t i = 0; i < sr.aggregates.size(); ++i) {
    const auto& a = sr.aggregates[i];
    if (a.runs != spec.repeats) {
      detail = "sweep point failed to run";
      return false;
    }
    os << "p=" << a.value << ": acc " << a.accuracy_mean << " delay "
       << a.delay_mean << "; ";
    if (i > 0 && a.delay_mean >= sr.aggregates[i - 1].delay_mean) {
      delays_decrease = false;
    }
  }
  double low_acc = sr.aggregates.front().accuracy_mean;
  double high_acc = sr.aggregates.back().accuracy_mean;
  bool acc_gap = high_acc - low_acc >= 0.05;
  detail = os.str();
  if (!delays_decrease) detail += "[delay not strictly decreasing]";
  if (!acc_gap) detail += "[accuracy gap below 5 points]";
  return delays_decrease && acc_gap;
}

bool criterion_cpu_sweep(std::string& detail) {
  ExperimentConfig base =
      sweep_config((work_root() / "sweep_cpu").string(), 11, 250);
  SweepSpec spec;
  spec.parameter = "cpu";
  spec.grid = {0.5e9, 1.0e9, 2.3e9};
  spec.repeats = 3;
  SweepResult sr = run_sweep(base, spec);
  write_sweep_files(sr, base.output_dir);
  std::ostringstream os;
  bool delays_decrease = true;
  double acc_min = 1.0, acc_max = 0.0;
  for (std::size_t i = 0; i < sr.aggregates.size(); ++i) {
    const auto& a = sr.aggregates[i];
    if (a.runs != spec.repeats) {
      detail = "sweep point failed to run";
      return false;
    }
    os << "ups=" << a.value << ": acc " << a.accuracy_mean << " delay "
       << a.delay_mean << "; ";
    if (i > 0 && a.delay_mean >= sr.aggregates[i - 1].delay_mean) {
      delays_decrease = false;
    }
    acc_min = std::min(acc_min, a.accuracy_mean);
    acc_max = std::max(acc_max, a.accuracy_mean);
  }
  bool acc_flat = acc_max - acc_min < 0.10;
  detail = os.str();
  if (!delays_decrease) detail += "[delay not strictly decreasing in capacity]";
  if (!acc_flat) detail += "[accuracy spread >= 10 points]";
  return delays_decrease && acc_flat;
}

// ---- criterion 8: determinism ---------------------------------------------

bool criterion_determinism(std::string& detail) {
  ExperimentConfig a = desk_config((work_root() / "det_a").string(), 21, 20);
  ExperimentConfig b = desk_config((work_root() / "det_b").string(), 21, 20);
  run_experiment(a);
  run_experiment(b);
  std::string ma = slurp((work_root() / "det_a" / "metrics.csv").string());
  std::string mb = slurp((work_root() / "det_b" / "metrics.csv").string());
  std::string na =
      slurp((work_root() / "det_a" / "metrics_normalized.csv").string());
  std::string nb =
      slurp((work_root() / "det_b" / "metrics_normalized.csv").string());
  if (ma.empty() || ma != mb) {
    detail = "metrics.csv differs between identical runs";
    return false;
  }
  if (na != nb) {
    detail = "metrics_normalized.csv differs between identical runs";
    return false;
  }
  detail = "metric CSVs byte-identical across two identical runs";
  return true;
}

// ---- criterion 9: chance-level control -------------------------------------

bool criterion_chance_level(std::string& detail) {
  GeneratorConfig g;
  g.seed = 31;
  LabeledDataset ds = generate_synthetic_dataset(g, 100);
  EnvConfig env_cfg;
  LearnerConfig lc;
  lc.seed = 33;
  HybridModel model = make_hybrid_model(env_cfg, 8, 32, 4, lc);
  WirelessEnv env(env_cfg, &ds, 37);
  EvalResult r = evaluate(model, env, 70, 4);
  std::ostringstream os;
  os << "untrained accuracy " << r.accuracy << " over " << r.verdict_count
     << " verdicts";
  detail = os.str();
  return r.verdict_count >= 10000 && r.accuracy >= 0.20 && r.accuracy <= 0.30;
}

struct Criterion {
  int id;
  const char* name;
  std::function<bool(std::string&)> fn;
};

}  // namespace

int main(int argc, char** argv) {
  std::vector<Criterion> criteria = {
      {1, "gradient fidelity", criterion_gradients},
      {2, "oracle equivalence", criterion_oracles},
      {3, "constraint satisfaction", criterion_constraints},
      {4, "desk-scale classification", criterion_desk_accuracy},
      {5, "baseline ordering", criterion_baseline_ordering},
      {6, "power sweep trends", criterion_power_sweep},
      {7, "cpu sweep trends", criterion_cpu_sweep},
      {8, "determinism", criterion_determinism},
      {9, "chance-level control", criterion_chance_level},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));

  int failures = 0;
  for (const Criterion& c : criteria) {
    if (!selected.empty() &&
        std::find(selected.begin(), selected.end(), c.id) == selected.end()) {
      continue;
    }
    std::string detail;
    bool ok = false;
    auto start = std::chrono::steady_clock::now();
    try {
      ok = c.fn(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
      ok = false;
    }
    double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    std::printf("%s criterion %d (%s): %s [%.1fs]\n", ok ? "PASS" : "FAIL", c.id,
                c.name, detail.c_str(), secs);
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  return failures;
}
