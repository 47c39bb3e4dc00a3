#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "vrbci/nn.hpp"
#include "vrbci/rng.hpp"
#include "vrbci/signal.hpp"
#include "vrbci/wireless.hpp"

namespace vrbci {

struct LearnerConfig {
  double gamma = 0.99;
  double lambda = 0.95;           // advantage tradeoff
  double clip_epsilon = 0.2;
  double alpha_actor = 3e-4;
  double alpha_critic = 1e-3;
  double alpha_classifier = 1e-3;
  int rollout_length = 50;        // O
  int episodes = 500;
  int update_epochs = 4;
  int hidden_width = 64;
  int conv_channels = 16;
  bool normalize_advantages = true;
  bool critic_target_raw_reward = false;  // regress V on raw mean QoE instead
                                          // of the advantage-based return
  std::uint64_t seed = 1;

  void validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) {
      throw std::invalid_argument("learner: gamma must be in (0, 1)");
    }
    if (lambda < 0.0 || lambda > 1.0) {
      throw std::invalid_argument("learner: lambda must be in [0, 1]");
    }
    if (!(clip_epsilon > 0.0)) {
      throw std::invalid_argument("learner: clip_epsilon must be > 0");
    }
    if (!(alpha_actor > 0.0 && alpha_critic > 0.0 && alpha_classifier > 0.0)) {
      throw std::invalid_argument("learner: learning rates must be > 0");
    }
    if (rollout_length <= 0 || episodes < 0 || update_epochs <= 0) {
      throw std::invalid_argument("learner: bad rollout/episode/epoch counts");
    }
    if (hidden_width <= 0 || conv_channels <= 0) {
      throw std::invalid_argument("learner: bad network widths");
    }
  }
};

// Observation features: normalized channel gains (K), CPU availability (N),
// mean absolute amplitude of each user's received window (K).
struct Observation {
  std::vector<double> features;
};

inline Observation make_observation(const EnvState& state, const EnvConfig& cfg) {
  Observation obs;
  obs.features.reserve(cfg.users + cfg.cores + cfg.users);
  for (double h : state.h) obs.features.push_back(h / cfg.mean_channel_gain);
  for (double u : state.u) obs.features.push_back(u);
  for (const EegWindow& w : state.corrupted) {
    double sum = 0.0;
    for (double v : w.samples.values) sum += std::abs(v);
    obs.features.push_back(sum / static_cast<double>(w.samples.size()));
  }
  return obs;
}

inline Tensor observation_tensor(const Observation& obs) {
  return Tensor::vector1d(obs.features);
}

// Slicing of the actor output vector into policy heads. The prediction head
// (one categorical per user) exists only for the monolithic baselines.
struct PolicyLayout {
  int blocks = 0;        // M
  int users = 0;         // K
  int pred_classes = 0;  // C for baselines, 0 for the hybrid learner
  double p_max = 0.01;

  std::size_t block_offset() const { return 0; }
  std::size_t power_mean_offset() const {
    return static_cast<std::size_t>(blocks) * users;
  }
  std::size_t power_log_std_offset() const { return power_mean_offset() + users; }
  std::size_t tau_offset() const { return power_log_std_offset() + users; }
  std::size_t pred_offset() const { return tau_offset() + users + 1; }
  std::size_t size() const {
    return pred_offset() + static_cast<std::size_t>(users) * pred_classes;
  }
};

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

// Decoded actor output. power_log_std is clamped to [-5, 2]; the raw values
// are kept so gradients can be gated at the clamp.
struct PolicyDistribution {
  std::vector<double> block_logits;        // M x K row-major
  std::vector<double> power_mean;          // K
  std::vector<double> power_log_std;       // K, clamped
  std::vector<double> power_log_std_raw;   // K
  std::vector<double> tau_logits;          // K + 1
  std::vector<double> prediction_logits;   // K x pred_classes
};

inline PolicyDistribution decode_policy(const Tensor& actor_out,
                                        const PolicyLayout& layout) {
  if (actor_out.size() != layout.size()) {
    throw std::invalid_argument("policy: actor output has " +
                                std::to_string(actor_out.size()) +
                                " entries, layout expects " +
                                std::to_string(layout.size()));
  }
  for (double v : actor_out.values) {
    if (!std::isfinite(v)) {
      throw std::runtime_error("policy: non-finite actor output");
    }
  }
  PolicyDistribution d;
  const double* v = actor_out.values.data();
  d.block_logits.assign(v, v + layout.power_mean_offset());
  d.power_mean.assign(v + layout.power_mean_offset(),
                      v + layout.power_log_std_offset());
  d.power_log_std_raw.assign(v + layout.power_log_std_offset(),
                             v + layout.tau_offset());
  d.power_log_std = d.power_log_std_raw;
  for (double& s : d.power_log_std) s = std::clamp(s, kLogStdMin, kLogStdMax);
  d.tau_logits.assign(v + layout.tau_offset(), v + layout.pred_offset());
  d.prediction_logits.assign(v + layout.pred_offset(), v + actor_out.size());
  return d;
}

namespace detail {

inline std::vector<double> softmax_vec(const double* logits, std::size_t n) {
  double mx = logits[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
  std::vector<double> p(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

inline std::size_t sample_categorical(const std::vector<double>& probs, Rng& rng) {
  double r = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (r < acc) return i;
  }
  return probs.size() - 1;
}

inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

inline double log_normal_density(double x, double mean, double log_std) {
  double sigma = std::exp(log_std);
  double z = (x - mean) / sigma;
  return -0.5 * z * z - log_std - 0.9189385332046727;  // - log(sqrt(2 pi))
}

}  // namespace detail

// Deterministic CPU shares: softmax over the tau head (component 0 = idle).
// Excluded from the action log-density.
inline std::vector<double> tau_from_distribution(const PolicyDistribution& d) {
  return detail::softmax_vec(d.tau_logits.data(), d.tau_logits.size());
}

struct SampledAction {
  ActionVector action;
  std::vector<double> power_presquash;  // pre-sigmoid draws, one per user
  double log_density = 0.0;
};

// Log-density of (block choices, pre-squash power draws[, predictions]) under
// the distribution. The sigmoid change-of-variables term is included so the
// density is over the actual transmit powers; it does not depend on the
// parameters, so it cancels inside probability ratios.
inline double action_log_density(const PolicyDistribution& d,
                                 const PolicyLayout& layout,
                                 const std::vector<int>& rho,
                                 const std::vector<double>& presquash,
                                 const std::vector<int>& predictions) {
  double ld = 0.0;
  for (int m = 0; m < layout.blocks; ++m) {
    std::vector<double> probs = detail::softmax_vec(
        d.block_logits.data() + static_cast<std::size_t>(m) * layout.users,
        layout.users);
    ld += std::log(std::max(probs[rho[m]], kLogClamp));
  }
  for (int k = 0; k < layout.users; ++k) {
    double x = presquash[k];
    ld += detail::log_normal_density(x, d.power_mean[k], d.power_log_std[k]);
    double s = detail::sigmoid(x);
    ld -= std::log(layout.p_max) + std::log(std::max(s, kLogClamp)) +
          std::log(std::max(1.0 - s, kLogClamp));
  }
  if (layout.pred_classes > 0) {
    for (int k = 0; k < layout.users; ++k) {
      std::vector<double> probs = detail::softmax_vec(
          d.prediction_logits.data() +
              static_cast<std::size_t>(k) * layout.pred_classes,
          layout.pred_classes);
      ld += std::log(std::max(probs[predictions[k]], kLogClamp));
    }
  }
  return ld;
}

inline SampledAction sample_action(const PolicyDistribution& d,
                                   const PolicyLayout& layout, Rng& rng,
                                   bool greedy = false) {
  SampledAction s;
  s.action.rho.resize(layout.blocks);
  for (int m = 0; m < layout.blocks; ++m) {
    std::vector<double> probs = detail::softmax_vec(
        d.block_logits.data() + static_cast<std::size_t>(m) * layout.users,
        layout.users);
    if (greedy) {
      s.action.rho[m] = static_cast<int>(
          std::max_element(probs.begin(), probs.end()) - probs.begin());
    } else {
      s.action.rho[m] = static_cast<int>(detail::sample_categorical(probs, rng));
    }
  }
  s.power_presquash.resize(layout.users);
  s.action.p.resize(layout.users);
  for (int k = 0; k < layout.users; ++k) {
    double sigma = std::exp(d.power_log_std[k]);
    double x = greedy ? d.power_mean[k] : d.power_mean[k] + sigma * rng.normal();
    s.power_presquash[k] = x;
    double p = layout.p_max * detail::sigmoid(x);
    s.action.p[k] = std::clamp(p, std::numeric_limits<double>::min(), layout.p_max);
  }
  s.action.tau = tau_from_distribution(d);
  if (layout.pred_classes > 0) {
    s.action.predictions.resize(layout.users);
    for (int k = 0; k < layout.users; ++k) {
      std::vector<double> probs = detail::softmax_vec(
          d.prediction_logits.data() +
              static_cast<std::size_t>(k) * layout.pred_classes,
          layout.pred_classes);
      if (greedy) {
        s.action.predictions[k] = static_cast<int>(
            std::max_element(probs.begin(), probs.end()) - probs.begin());
      } else {
        s.action.predictions[k] =
            static_cast<int>(detail::sample_categorical(probs, rng));
      }
    }
  }
  s.log_density = action_log_density(d, layout, s.action.rho, s.power_presquash,
                                     s.action.predictions);
  if (!std::isfinite(s.log_density)) {
    throw std::runtime_error("policy: non-finite action log-density");
  }
  return s;
}

// Adds coeff * d(log-density)/d(actor output) into out_grad. The tau head is
// deterministic and contributes nothing; the change-of-variables term does
// not depend on the outputs either.
inline void add_log_density_gradient(const PolicyDistribution& d,
                                     const PolicyLayout& layout,
                                     const std::vector<int>& rho,
                                     const std::vector<double>& presquash,
                                     const std::vector<int>& predictions,
                                     double coeff, Tensor& out_grad) {
  for (int m = 0; m < layout.blocks; ++m) {
    std::size_t base = layout.block_offset() +
                       static_cast<std::size_t>(m) * layout.users;
    std::vector<double> probs =
        detail::softmax_vec(d.block_logits.data() +
                                static_cast<std::size_t>(m) * layout.users,
                            layout.users);
    for (int j = 0; j < layout.users; ++j) {
      double ind = j == rho[m] ? 1.0 : 0.0;
      out_grad.values[base + j] += coeff * (ind - probs[j]);
    }
  }
  for (int k = 0; k < layout.users; ++k) {
    double sigma = std::exp(d.power_log_std[k]);
    double z = (presquash[k] - d.power_mean[k]) / sigma;
    out_grad.values[layout.power_mean_offset() + k] += coeff * z / sigma;
    double raw = d.power_log_std_raw[k];
    if (raw > kLogStdMin && raw < kLogStdMax) {
      out_grad.values[layout.power_log_std_offset() + k] +=
          coeff * (z * z - 1.0);
    }
  }
  if (layout.pred_classes > 0) {
    for (int k = 0; k < layout.users; ++k) {
      std::size_t base = layout.pred_offset() +
                         static_cast<std::size_t>(k) * layout.pred_classes;
      std::vector<double> probs = detail::softmax_vec(
          d.prediction_logits.data() +
              static_cast<std::size_t>(k) * layout.pred_classes,
          layout.pred_classes);
      for (int c = 0; c < layout.pred_classes; ++c) {
        double ind = c == predictions[k] ? 1.0 : 0.0;
        out_grad.values[base + c] += coeff * (ind - probs[c]);
      }
    }
  }
}

// The three cooperating networks plus the previous-iteration actor snapshot
// that anchors the probability ratio.
struct HybridModel {
  Network actor;
  Network critic;
  Network classifier;
  std::vector<Tensor> old_actor;
  PolicyLayout layout;

  HybridModel(Network a, Network c, Network cl, PolicyLayout l)
      : actor(std::move(a)),
        critic(std::move(c)),
        classifier(std::move(cl)),
        layout(l) {
    old_actor = actor.params().tensors;
  }
};

inline std::vector<LayerSpec> default_mlp_specs(std::size_t in, std::size_t out,
                                                int hidden) {
  return {LayerSpec::dense(in, hidden), LayerSpec::tanh_(),
          LayerSpec::dense(hidden, hidden), LayerSpec::tanh_(),
          LayerSpec::dense(hidden, out)};
}

inline std::vector<LayerSpec> default_classifier_specs(int channels, int width,
                                                       int classes,
                                                       int conv_channels) {
  std::size_t w1 = static_cast<std::size_t>(width) - 5 + 1;
  if (width < 8 || w1 % 2 != 0) {
    throw std::invalid_argument(
        "classifier: window length must be >= 8 with (W - 4) even");
  }
  std::size_t w2 = w1 / 2;
  std::size_t w3 = w2 - 3 + 1;
  return {LayerSpec::conv1d(channels, conv_channels, 5),
          LayerSpec::relu(),
          LayerSpec::maxpool1d(2),
          LayerSpec::conv1d(conv_channels, conv_channels, 3),
          LayerSpec::relu(),
          LayerSpec::flatten(),
          LayerSpec::dense(static_cast<std::size_t>(conv_channels) * w3,
                           static_cast<std::size_t>(classes)),
          LayerSpec::softmax()};
}

inline HybridModel make_hybrid_model(const EnvConfig& env_cfg, int channels,
                                     int width, int classes,
                                     const LearnerConfig& cfg) {
  PolicyLayout layout;
  layout.blocks = env_cfg.blocks;
  layout.users = env_cfg.users;
  layout.pred_classes = 0;
  layout.p_max = env_cfg.p_max_w;
  std::size_t obs_dim =
      static_cast<std::size_t>(env_cfg.users) + env_cfg.cores + env_cfg.users;
  Network actor(default_mlp_specs(obs_dim, layout.size(), cfg.hidden_width),
                {obs_dim});
  Network critic(default_mlp_specs(obs_dim, 1, cfg.hidden_width), {obs_dim});
  Network classifier(
      default_classifier_specs(channels, width, classes, cfg.conv_channels),
      {static_cast<std::size_t>(channels), static_cast<std::size_t>(width)});
  Rng rng(derive_seed(cfg.seed, 0x1117));
  actor.init_params(rng);
  critic.init_params(rng);
  classifier.init_params(rng);
  return HybridModel(std::move(actor), std::move(critic), std::move(classifier),
                     layout);
}

struct Classification {
  int predicted = 0;
  Tensor probabilities;
};

// Softmax-head classification; ties break to the lowest index.
inline Classification classify(const Network& classifier, const EegWindow& window) {
  Classification c;
  c.probabilities = classifier.forward(window.samples);
  c.predicted = 0;
  for (std::size_t i = 1; i < c.probabilities.size(); ++i) {
    if (c.probabilities.values[i] > c.probabilities.values[c.predicted]) {
      c.predicted = static_cast<int>(i);
    }
  }
  return c;
}

struct TrajectoryStep {
  Observation observation;
  std::vector<int> rho;
  std::vector<double> power_presquash;
  std::vector<int> predictions;
  double log_density = 0.0;
  std::vector<double> qoe_terms;
  std::vector<int> labels;
  std::vector<EegWindow> corrupted;
  double value = 0.0;
  std::vector<int> verdicts;
  bool done = false;
  double mean_reward = 0.0;
  double mean_delay_s = 0.0;
  double mean_packet_error = 0.0;
};

struct Trajectory {
  std::vector<TrajectoryStep> steps;
  double bootstrap_value = 0.0;  // critic value past the last step; 0 at terminal
};

// Runs the current policy for `length` steps: observe, classify each user's
// received window, sample the allocation, step the environment. Episode
// boundaries inside the rollout reset the environment (value bootstraps 0).
inline Trajectory collect_trajectories(HybridModel& model, WirelessEnv& env,
                                       int length, Rng& rng) {
  Trajectory traj;
  traj.steps.reserve(length);
  const EnvConfig& cfg = env.config();
  for (int o = 0; o < length; ++o) {
    TrajectoryStep step;
    step.observation = make_observation(env.state(), cfg);
    Tensor obs_t = observation_tensor(step.observation);
    step.value = model.critic.forward(obs_t).values[0];

    step.labels.resize(cfg.users);
    step.verdicts.resize(cfg.users);
    step.corrupted = env.state().corrupted;
    PolicyDistribution dist =
        decode_policy(model.actor.forward(obs_t), model.layout);
    SampledAction sampled = sample_action(dist, model.layout, rng);
    if (model.layout.pred_classes > 0) {
      step.predictions = sampled.action.predictions;
    } else {
      step.predictions.resize(cfg.users);
      for (int k = 0; k < cfg.users; ++k) {
        step.predictions[k] = classify(model.classifier, step.corrupted[k]).predicted;
      }
      sampled.action.predictions = step.predictions;
    }
    for (int k = 0; k < cfg.users; ++k) {
      step.labels[k] = env.state().windows[k].label;
      step.verdicts[k] = step.predictions[k] == step.labels[k] ? 1 : 0;
    }
    StepMetrics metrics = env.step(sampled.action, step.verdicts);
    step.rho = sampled.action.rho;
    step.power_presquash = sampled.power_presquash;
    step.log_density = sampled.log_density;
    step.qoe_terms = metrics.qoe;
    step.mean_reward = metrics.mean_qoe;
    step.mean_delay_s = metrics.mean_delay_s;
    step.mean_packet_error = metrics.mean_packet_error;
    step.done = metrics.episode_done;
    traj.steps.push_back(std::move(step));
    if (env.done()) env.reset();
  }
  if (traj.steps.empty() || traj.steps.back().done) {
    traj.bootstrap_value = 0.0;
  } else {
    Observation next = make_observation(env.state(), cfg);
    traj.bootstrap_value = model.critic.forward(observation_tensor(next)).values[0];
  }
  return traj;
}

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// Per-step advantage: A_o = sum_{o' >= o} (gamma*lambda)^(o'-o) delta_{o'},
// with delta_o = r_o + gamma * V_{o+1} - V_o and V past a terminal step = 0.
// Computed by the backward recursion; returns are A + V.
inline GaeResult compute_gae(const Trajectory& traj, double gamma, double lambda) {
  const std::size_t n = traj.steps.size();
  GaeResult r;
  r.advantages.assign(n, 0.0);
  r.returns.assign(n, 0.0);
  double next_adv = 0.0;
  double next_value = traj.bootstrap_value;
  for (std::size_t o = n; o-- > 0;) {
    const TrajectoryStep& s = traj.steps[o];
    double carry = s.done ? 0.0 : 1.0;
    double delta = s.mean_reward + gamma * carry * next_value - s.value;
    double adv = delta + gamma * lambda * carry * next_adv;
    r.advantages[o] = adv;
    r.returns[o] = adv + s.value;
    next_adv = adv;
    next_value = s.value;
  }
  return r;
}

// min(ratio * A, g(eps, A)) with g = (1 + eps) A for A >= 0 else (1 - eps) A.
inline double clipped_objective(double log_density_new, double log_density_old,
                                double advantage, double clip_epsilon) {
  double ratio = std::exp(log_density_new - log_density_old);
  double g = advantage >= 0.0 ? (1.0 + clip_epsilon) * advantage
                              : (1.0 - clip_epsilon) * advantage;
  return std::min(ratio * advantage, g);
}

struct UpdateDiagnostics {
  double actor_objective = 0.0;
  double critic_loss = 0.0;
  double classifier_loss = 0.0;
  double mean_ratio = 0.0;
};

// One training iteration over a collected rollout: ascend the clipped
// decision objective (actor), descend the value regression loss (critic),
// descend the supervised cross-entropy (classifier). The classifier path
// never sees advantages and the actor path never sees labels.
inline UpdateDiagnostics update_with_advantages(HybridModel& model,
                                                const Trajectory& traj,
                                                const std::vector<double>& advantages,
                                                const std::vector<double>& returns,
                                                const LearnerConfig& cfg) {
  const std::size_t n = traj.steps.size();
  if (n == 0) return {};
  model.old_actor = model.actor.params().tensors;

  std::vector<double> adv = advantages;
  if (cfg.normalize_advantages) {
    double mean = 0.0;
    for (double a : adv) mean += a;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double a : adv) var += (a - mean) * (a - mean);
    double std = std::sqrt(var / static_cast<double>(n));
    for (double& a : adv) a = (a - mean) / (std + 1e-8);
  }

  OptimizerConfig actor_opt{cfg.alpha_actor};
  OptimizerConfig critic_opt{cfg.alpha_critic};
  OptimizerConfig classifier_opt{cfg.alpha_classifier};
  UpdateDiagnostics diag;

  for (int epoch = 0; epoch < cfg.update_epochs; ++epoch) {
    // actor
    std::vector<Tensor> actor_grads = model.actor.zero_like_params();
    double objective = 0.0;
    double ratio_sum = 0.0;
    for (std::size_t o = 0; o < n; ++o) {
      const TrajectoryStep& s = traj.steps[o];
      Network::Cache cache;
      Tensor out = model.actor.forward(observation_tensor(s.observation), cache);
      PolicyDistribution dist = decode_policy(out, model.layout);
      double new_ld = action_log_density(dist, model.layout, s.rho,
                                         s.power_presquash, s.predictions);
      double ratio = std::exp(new_ld - s.log_density);
      ratio_sum += ratio;
      double unclipped = ratio * adv[o];
      double g = adv[o] >= 0.0 ? (1.0 + cfg.clip_epsilon) * adv[o]
                               : (1.0 - cfg.clip_epsilon) * adv[o];
      objective += std::min(unclipped, g);
      // d min(ratio*A, g)/d new_ld = ratio*A on the unclipped branch, else 0
      double coeff = unclipped <= g ? unclipped : 0.0;
      if (coeff != 0.0) {
        Tensor out_grad(out.shape);
        add_log_density_gradient(dist, model.layout, s.rho, s.power_presquash,
                                 s.predictions, coeff / static_cast<double>(n),
                                 out_grad);
        model.actor.backward_accumulate(cache, out_grad, actor_grads);
      }
    }
    objective /= static_cast<double>(n);
    if (!std::isfinite(objective)) {
      throw std::runtime_error("update: non-finite actor objective");
    }
    model.actor.adam_step(actor_grads, actor_opt, GradientDirection::Ascend);
    diag.actor_objective = objective;
    diag.mean_ratio = ratio_sum / static_cast<double>(n);

    // critic
    std::vector<Tensor> critic_grads = model.critic.zero_like_params();
    double critic_loss = 0.0;
    for (std::size_t o = 0; o < n; ++o) {
      const TrajectoryStep& s = traj.steps[o];
      double target = cfg.critic_target_raw_reward ? s.mean_reward : returns[o];
      Network::Cache cache;
      Tensor v = model.critic.forward(observation_tensor(s.observation), cache);
      double err = v.values[0] - target;
      critic_loss += err * err;
      Tensor out_grad({1});
      out_grad.values[0] = 2.0 * err / static_cast<double>(n);
      model.critic.backward_accumulate(cache, out_grad, critic_grads);
    }
    critic_loss /= static_cast<double>(n);
    if (!std::isfinite(critic_loss)) {
      throw std::runtime_error("update: non-finite critic loss");
    }
    model.critic.adam_step(critic_grads, critic_opt, GradientDirection::Descend);
    diag.critic_loss = critic_loss;

    // classifier (hybrid only)
    if (model.layout.pred_classes == 0) {
      std::vector<Tensor> cls_grads = model.classifier.zero_like_params();
      double cls_loss = 0.0;
      std::size_t count = 0;
      for (const TrajectoryStep& s : traj.steps) {
        for (std::size_t k = 0; k < s.corrupted.size(); ++k) {
          Network::Cache cache;
          Tensor probs = model.classifier.forward(s.corrupted[k].samples, cache);
          cls_loss += cross_entropy(probs, s.labels[k]);
          ++count;
          Tensor g = cross_entropy_gradient(probs, s.labels[k]);
          for (double& v : g.values) {
            v /= static_cast<double>(traj.steps.size() * s.corrupted.size());
          }
          model.classifier.backward_accumulate(cache, g, cls_grads);
        }
      }
      cls_loss /= static_cast<double>(count);
      if (!std::isfinite(cls_loss)) {
        throw std::runtime_error("update: non-finite classifier loss");
      }
      model.classifier.adam_step(cls_grads, classifier_opt,
                                 GradientDirection::Descend);
      diag.classifier_loss = cls_loss;
    }
  }
  return diag;
}

inline UpdateDiagnostics update_iteration(HybridModel& model, const Trajectory& traj,
                                          const LearnerConfig& cfg) {
  GaeResult gae = compute_gae(traj, cfg.gamma, cfg.lambda);
  return update_with_advantages(model, traj, gae.advantages, gae.returns, cfg);
}

struct EpisodeMetrics {
  double mean_qoe = 0.0;
  double accuracy = 0.0;
  double mean_delay_s = 0.0;
  double mean_packet_error = 0.0;
};

struct TrainResult {
  std::vector<EpisodeMetrics> series;
  std::vector<double> holdout_accuracy;  // per-episode, when a holdout is given
  std::vector<UpdateDiagnostics> diagnostics;
};

inline EpisodeMetrics summarize_trajectory(const Trajectory& traj) {
  EpisodeMetrics m;
  if (traj.steps.empty()) return m;
  std::size_t verdicts = 0, correct = 0;
  for (const TrajectoryStep& s : traj.steps) {
    m.mean_qoe += s.mean_reward;
    m.mean_delay_s += s.mean_delay_s;
    m.mean_packet_error += s.mean_packet_error;
    for (int v : s.verdicts) {
      ++verdicts;
      correct += v;
    }
  }
  auto n = static_cast<double>(traj.steps.size());
  m.mean_qoe /= n;
  m.mean_delay_s /= n;
  m.mean_packet_error /= n;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(verdicts);
  return m;
}

inline double holdout_classifier_accuracy(const HybridModel& model,
                                          const LabeledDataset& holdout) {
  std::size_t correct = 0;
  for (const EegWindow& w : holdout.windows) {
    if (classify(model.classifier, w).predicted == w.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(holdout.windows.size());
}

// Algorithm loop: alternate rollout collection and the three-network update
// for a fixed episode count. `holdout`, when given, is scored by the
// classifier after every episode (clean windows).
inline TrainResult train(HybridModel& model, WirelessEnv& env,
                         const LearnerConfig& cfg,
                         const LabeledDataset* holdout = nullptr) {
  cfg.validate();
  TrainResult result;
  result.series.reserve(cfg.episodes);
  Rng rng(derive_seed(cfg.seed, 0xAC7));
  env.reset();
  for (int episode = 0; episode < cfg.episodes; ++episode) {
    Trajectory traj = collect_trajectories(model, env, cfg.rollout_length, rng);
    result.series.push_back(summarize_trajectory(traj));
    result.diagnostics.push_back(update_iteration(model, traj, cfg));
    if (holdout != nullptr && model.layout.pred_classes == 0) {
      result.holdout_accuracy.push_back(
          holdout_classifier_accuracy(model, *holdout));
    }
  }
  return result;
}

struct EvalResult {
  double accuracy = 0.0;
  double mean_qoe = 0.0;
  double mean_delay_s = 0.0;
  double mean_packet_error = 0.0;
  std::vector<std::vector<int>> confusion;  // [true][predicted]
  std::size_t verdict_count = 0;
};

// Greedy-policy evaluation: argmax block choices, mean powers, deterministic
// CPU shares, classifier argmax verdicts. No parameter updates.
inline EvalResult evaluate(HybridModel& model, WirelessEnv& env, int episodes,
                           int classes) {
  EvalResult r;
  r.confusion.assign(classes, std::vector<int>(classes, 0));
  const EnvConfig& cfg = env.config();
  Rng rng(0);  // greedy sampling consumes no draws; kept for the interface
  std::size_t steps = 0;
  for (int ep = 0; ep < episodes; ++ep) {
    env.reset();
    while (!env.done()) {
      Observation obs = make_observation(env.state(), cfg);
      Tensor obs_t = observation_tensor(obs);
      PolicyDistribution dist =
          decode_policy(model.actor.forward(obs_t), model.layout);
      SampledAction sampled = sample_action(dist, model.layout, rng, /*greedy=*/true);
      std::vector<int> verdicts(cfg.users, 0);
      if (model.layout.pred_classes == 0) {
        sampled.action.predictions.resize(cfg.users);
        for (int k = 0; k < cfg.users; ++k) {
          sampled.action.predictions[k] =
              classify(model.classifier, env.state().corrupted[k]).predicted;
        }
      }
      for (int k = 0; k < cfg.users; ++k) {
        int label = env.state().windows[k].label;
        int pred = sampled.action.predictions[k];
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

}  // namespace vrbci
