#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "vrbci/rng.hpp"
#include "vrbci/signal.hpp"

namespace vrbci {

inline double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

// Base-station and link-budget parameters. Power quantities are stored in
// watts; the config file accepts dBm with an explicit suffix.
struct EnvConfig {
  int users = 3;                      // K
  int blocks = 6;                     // M
  int cores = 8;                      // N
  double uplink_bandwidth_hz = 1e6;   // B_U per resource block
  double downlink_bandwidth_hz = 2e7; // B_D
  double noise_psd_w_per_hz = dbm_to_watts(-174.0);       // N0
  double uplink_interference_w = dbm_to_watts(-207.0);    // I_m
  double downlink_interference_w = dbm_to_watts(-207.0);  // I_D
  double bs_power_w = 1.0;            // P_B
  double p_max_w = 0.01;              // headset transmit ceiling
  double cpu_capacity_hz = 2.3e9;     // upsilon
  double workload_cycles = 1e7;       // cycles per VR pre-process job
  double waterfall_z = 1.0;
  double uplink_packet_bits = 4096.0;    // l_U (16-bit samples of a J x W window)
  double downlink_packet_bits = 1e6;     // l_D (one compressed VR frame)
  double d_max_s = 0.1;               // round-trip delay budget
  double eta1 = 1.0;
  double eta2 = 1.0;
  int steps_per_episode = 50;         // T
  double mean_channel_gain = 1e-10;
  double channel_correlation = 0.0;   // in [0, 1)
  double cpu_walk_std = 0.05;
  double delay_report_cap_s = 1.0;    // cap applied when averaging delays
  int corruption_segment_cols = 8;    // sample columns per uplink packet

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0)) {
        throw std::invalid_argument(std::string("env: ") + name +
                                    " must be positive");
      }
    };
    if (users <= 0 || blocks <= 0 || cores <= 0) {
      throw std::invalid_argument("env: users/blocks/cores must be positive");
    }
    positive(uplink_bandwidth_hz, "uplink_bandwidth_hz");
    positive(downlink_bandwidth_hz, "downlink_bandwidth_hz");
    positive(noise_psd_w_per_hz, "noise_psd_w_per_hz");
    positive(uplink_interference_w, "uplink_interference_w");
    positive(downlink_interference_w, "downlink_interference_w");
    positive(bs_power_w, "bs_power_w");
    positive(p_max_w, "p_max_w");
    positive(cpu_capacity_hz, "cpu_capacity_hz");
    positive(workload_cycles, "workload_cycles");
    positive(waterfall_z, "waterfall_z");
    positive(uplink_packet_bits, "uplink_packet_bits");
    positive(downlink_packet_bits, "downlink_packet_bits");
    positive(d_max_s, "d_max_s");
    positive(mean_channel_gain, "mean_channel_gain");
    if (eta1 < 0.0 || eta2 < 0.0) {
      throw std::invalid_argument("env: eta weights must be >= 0");
    }
    if (steps_per_episode <= 0) {
      throw std::invalid_argument("env: steps_per_episode must be positive");
    }
    if (channel_correlation < 0.0 || channel_correlation >= 1.0) {
      throw std::invalid_argument("env: channel_correlation must be in [0, 1)");
    }
    if (cpu_walk_std < 0.0) {
      throw std::invalid_argument("env: cpu_walk_std must be >= 0");
    }
    if (corruption_segment_cols <= 0) {
      throw std::invalid_argument("env: corruption_segment_cols must be positive");
    }
  }

  // user -> hosting CPU core (round-robin)
  int core_of(int user) const { return user % cores; }

  double uplink_noise_power() const {
    return uplink_interference_w + uplink_bandwidth_hz * noise_psd_w_per_hz;
  }
  double downlink_noise_power() const {
    return downlink_interference_w + downlink_bandwidth_hz * noise_psd_w_per_hz;
  }
};

// Observation tuple of the decision loop: channel gains, per-core CPU
// availability, and the windows currently in flight (clean and as received).
struct EnvState {
  std::vector<double> h;              // K channel power gains
  std::vector<double> u;              // N CPU availabilities in (0, 1)
  std::vector<EegWindow> windows;     // clean uplinked windows, with labels
  std::vector<EegWindow> corrupted;   // the same windows as received at the BS
  int step_index = 0;
};

// Block assignment, transmit powers, CPU shares (component 0 = idle), and
// per-user class predictions.
struct ActionVector {
  std::vector<int> rho;           // M entries, block -> user
  std::vector<double> p;          // K transmit powers in (0, p_max]
  std::vector<double> tau;        // K+1 nonnegative shares summing to 1
  std::vector<int> predictions;   // K class indices
};

struct StepMetrics {
  std::vector<double> uplink_rate_bps;
  std::vector<double> downlink_rate_bps;
  std::vector<double> processing_delay_s;
  std::vector<double> round_trip_delay_s;   // +inf sentinel when starved
  std::vector<double> packet_error;         // clamped to [0, 1]
  std::vector<double> packet_error_raw;     // unclamped per-block sum
  std::vector<int> delay_ok;
  std::vector<int> prediction_ok;
  std::vector<double> qoe;
  double mean_qoe = 0.0;
  double mean_delay_s = 0.0;                // capped average
  double mean_packet_error = 0.0;
  bool episode_done = false;
};

// ---- link budget / delay / error math ----

inline double uplink_rate(int user, const ActionVector& action,
                          const EnvState& state, const EnvConfig& cfg) {
  int assigned = 0;
  for (int m = 0; m < cfg.blocks; ++m) {
    if (action.rho[m] == user) ++assigned;
  }
  if (assigned == 0) return 0.0;
  double sinr = action.p[user] * state.h[user] / cfg.uplink_noise_power();
  return assigned * cfg.uplink_bandwidth_hz * std::log2(1.0 + sinr);
}

inline double downlink_rate(int user, const EnvState& state,
                            const EnvConfig& cfg) {
  double sinr = cfg.bs_power_w * state.h[user] / cfg.downlink_noise_power();
  return cfg.downlink_bandwidth_hz * std::log2(1.0 + sinr);
}

struct DelayResult {
  double processing_s = 0.0;
  double round_trip_s = 0.0;
};

// Processing delay workload/(tau*u*upsilon) plus both transmission legs.
// A user with no CPU share or no resource blocks gets an infinite round
// trip (the delay indicator is then 0); this is a sentinel, not an error.
inline DelayResult round_trip_delay(int user, const ActionVector& action,
                                    const EnvState& state, const EnvConfig& cfg) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  double tau_user = action.tau[user + 1];  // component 0 is the idle share
  double u_core = state.u[cfg.core_of(user)];
  DelayResult r;
  if (tau_user <= 0.0) {
    r.processing_s = inf;
    r.round_trip_s = inf;
    return r;
  }
  r.processing_s = cfg.workload_cycles / (tau_user * u_core * cfg.cpu_capacity_hz);
  double r_u = uplink_rate(user, action, state, cfg);
  if (r_u <= 0.0) {
    r.round_trip_s = inf;
    return r;
  }
  double r_d = downlink_rate(user, state, cfg);
  r.round_trip_s = r.processing_s + cfg.downlink_packet_bits / r_d +
                   cfg.uplink_packet_bits / r_u;
  return r;
}

struct PacketErrorResult {
  double clamped = 0.0;  // usable as a probability
  double raw = 0.0;      // per-block sum, can exceed 1 for multi-block users
};

inline PacketErrorResult packet_error(int user, const ActionVector& action,
                                      const EnvState& state, const EnvConfig& cfg) {
  double per_block =
      1.0 - std::exp(-cfg.waterfall_z * cfg.uplink_noise_power() /
                     (action.p[user] * state.h[user]));
  int assigned = 0;
  for (int m = 0; m < cfg.blocks; ++m) {
    if (action.rho[m] == user) ++assigned;
  }
  PacketErrorResult r;
  r.raw = assigned * per_block;
  r.clamped = std::min(r.raw, 1.0);
  return r;
}

// Splits the window's sample columns into contiguous segments ("packets")
// and independently replaces each with probability epsilon by Gaussian noise
// at the window's own pooled empirical standard deviation. The noise scale
// is shared across channels: per-channel scales would reproduce the class's
// energy topography inside the corrupted stretch, leaving lost packets
// classifiable. Label is untouched.
inline EegWindow corrupt_window(const EegWindow& window, double epsilon,
                                Rng& rng, int segment_cols = 8) {
  if (epsilon < 0.0 || epsilon > 1.0) {
    throw std::invalid_argument("corrupt_window: epsilon outside [0, 1]");
  }
  EegWindow out = window;
  std::size_t ch = window.channels();
  std::size_t width = window.width();
  double mean = 0.0;
  for (double v : window.samples.values) mean += v;
  mean /= static_cast<double>(window.samples.size());
  double var = 0.0;
  for (double v : window.samples.values) var += (v - mean) * (v - mean);
  double noise_std = std::sqrt(var / static_cast<double>(window.samples.size()));
  for (std::size_t start = 0; start < width;
       start += static_cast<std::size_t>(segment_cols)) {
    bool errored = rng.uniform() < epsilon;
    if (!errored) continue;
    std::size_t end = std::min(width, start + static_cast<std::size_t>(segment_cols));
    for (std::size_t c = 0; c < ch; ++c) {
      for (std::size_t t = start; t < end; ++t) {
        out.at(c, t) = noise_std * rng.normal();
      }
    }
  }
  return out;
}

// Rejects actions that violate the block-assignment, power-bound, or
// cpu-share constraints; the message names the violated constraint.
inline void validate_action(const ActionVector& action, const EnvConfig& cfg) {
  if (static_cast<int>(action.rho.size()) != cfg.blocks) {
    throw std::invalid_argument(
        "action violates block-assignment constraint: expected " +
        std::to_string(cfg.blocks) + " block entries");
  }
  for (int m = 0; m < cfg.blocks; ++m) {
    if (action.rho[m] < 0 || action.rho[m] >= cfg.users) {
      throw std::invalid_argument(
          "action violates block-assignment constraint: block " +
          std::to_string(m) + " assigned to user " + std::to_string(action.rho[m]));
    }
  }
  if (static_cast<int>(action.p.size()) != cfg.users) {
    throw std::invalid_argument("action violates power-bound constraint: need " +
                                std::to_string(cfg.users) + " powers");
  }
  for (int k = 0; k < cfg.users; ++k) {
    if (!(action.p[k] > 0.0) || action.p[k] > cfg.p_max_w ||
        !std::isfinite(action.p[k])) {
      throw std::invalid_argument(
          "action violates power-bound constraint: p[" + std::to_string(k) +
          "] = " + std::to_string(action.p[k]) + " outside (0, " +
          std::to_string(cfg.p_max_w) + "]");
    }
  }
  if (static_cast<int>(action.tau.size()) != cfg.users + 1) {
    throw std::invalid_argument("action violates cpu-share constraint: need " +
                                std::to_string(cfg.users + 1) + " shares");
  }
  double sum = 0.0;
  for (double t : action.tau) {
    if (t < 0.0) {
      throw std::invalid_argument(
          "action violates cpu-share constraint: negative share");
    }
    sum += t;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument(
        "action violates cpu-share constraint: shares sum to " +
        std::to_string(sum));
  }
  if (static_cast<int>(action.predictions.size()) != cfg.users) {
    throw std::invalid_argument("action violates prediction constraint: need " +
                                std::to_string(cfg.users) + " predictions");
  }
}

// The simulated base station. One instance is single-threaded; run several
// with independent seeds for parallel rollouts.
class WirelessEnv {
 public:
  WirelessEnv(EnvConfig cfg, const LabeledDataset* dataset, std::uint64_t seed)
      : cfg_(std::move(cfg)), dataset_(dataset), rng_(seed) {
    cfg_.validate();
    if (dataset_ == nullptr || dataset_->windows.empty()) {
      throw std::invalid_argument("env: a dataset must be attached");
    }
  }

  const EnvConfig& config() const { return cfg_; }
  const EnvState& state() const { return state_; }
  bool done() const { return state_.step_index >= cfg_.steps_per_episode; }

  void attach_dataset(const LabeledDataset* dataset) {
    if (dataset == nullptr || dataset->windows.empty()) {
      throw std::invalid_argument("env: a dataset must be attached");
    }
    dataset_ = dataset;
  }

  const EnvState& reset() {
    state_.h.assign(cfg_.users, 0.0);
    for (double& h : state_.h) h = cfg_.mean_channel_gain * rng_.exponential();
    state_.u.assign(cfg_.cores, 0.0);
    for (double& u : state_.u) u = rng_.uniform(0.1, 0.9);
    draw_windows(/*epsilon=*/std::vector<double>(cfg_.users, 0.0));
    state_.step_index = 0;
    return state_;
  }

  // Applies the allocation, scores QoE from the delay indicator and the
  // caller-supplied classification verdicts, then advances the dynamics.
  // The packet error produced by this action corrupts the windows observed
  // at the next step: the BS allocates for the upcoming transmission.
  StepMetrics step(const ActionVector& action, const std::vector<int>& verdicts) {
    if (done()) {
      throw std::logic_error("env: step called on finished episode; call reset");
    }
    validate_action(action, cfg_);
    if (static_cast<int>(verdicts.size()) != cfg_.users) {
      throw std::invalid_argument("env: need one verdict per user");
    }
    StepMetrics m;
    m.uplink_rate_bps.resize(cfg_.users);
    m.downlink_rate_bps.resize(cfg_.users);
    m.processing_delay_s.resize(cfg_.users);
    m.round_trip_delay_s.resize(cfg_.users);
    m.packet_error.resize(cfg_.users);
    m.packet_error_raw.resize(cfg_.users);
    m.delay_ok.resize(cfg_.users);
    m.prediction_ok.resize(cfg_.users);
    m.qoe.resize(cfg_.users);
    std::vector<double> eps(cfg_.users, 0.0);
    for (int k = 0; k < cfg_.users; ++k) {
      m.uplink_rate_bps[k] = uplink_rate(k, action, state_, cfg_);
      m.downlink_rate_bps[k] = downlink_rate(k, state_, cfg_);
      DelayResult d = round_trip_delay(k, action, state_, cfg_);
      m.processing_delay_s[k] = d.processing_s;
      m.round_trip_delay_s[k] = d.round_trip_s;
      PacketErrorResult pe = packet_error(k, action, state_, cfg_);
      m.packet_error[k] = pe.clamped;
      m.packet_error_raw[k] = pe.raw;
      eps[k] = pe.clamped;
      m.delay_ok[k] = d.round_trip_s <= cfg_.d_max_s ? 1 : 0;
      m.prediction_ok[k] = verdicts[k] ? 1 : 0;
      m.qoe[k] = cfg_.eta1 * m.delay_ok[k] + cfg_.eta2 * m.prediction_ok[k];
      m.mean_qoe += m.qoe[k];
      m.mean_delay_s += std::min(d.round_trip_s, cfg_.delay_report_cap_s);
      m.mean_packet_error += m.packet_error[k];
    }
    m.mean_qoe /= cfg_.users;
    m.mean_delay_s /= cfg_.users;
    m.mean_packet_error /= cfg_.users;

    advance_channel_and_cpu();
    draw_windows(eps);
    state_.step_index += 1;
    m.episode_done = done();
    return m;
  }

  // Block fading: h = gain * E with E mixing the previous normalized gain
  // and a fresh Exp(1) draw; CPU availability follows a clamped random walk.
  void advance_channel_and_cpu() {
    double c = cfg_.channel_correlation;
    for (double& h : state_.h) {
      double prev_norm = h / cfg_.mean_channel_gain;
      double fresh = rng_.exponential();
      h = cfg_.mean_channel_gain * (c * prev_norm + (1.0 - c) * fresh);
    }
    for (double& u : state_.u) {
      u = std::clamp(u + rng_.normal(0.0, cfg_.cpu_walk_std), 0.1, 0.9);
    }
  }

  Rng& rng() { return rng_; }

 private:
  void draw_windows(const std::vector<double>& epsilon) {
    state_.windows.clear();
    state_.corrupted.clear();
    state_.windows.reserve(cfg_.users);
    state_.corrupted.reserve(cfg_.users);
    for (int k = 0; k < cfg_.users; ++k) {
      EegWindow w = dataset_->windows[rng_.uniform_index(dataset_->windows.size())];
      w.user_id = k;
      state_.corrupted.push_back(
          corrupt_window(w, epsilon[k], rng_, cfg_.corruption_segment_cols));
      state_.windows.push_back(std::move(w));
    }
  }

  EnvConfig cfg_;
  const LabeledDataset* dataset_;
  Rng rng_;
  EnvState state_;
};

}  // namespace vrbci
