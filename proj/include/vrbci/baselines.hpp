#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "vrbci/checkpoint.hpp"
#include "vrbci/learner.hpp"
#include "vrbci/signal.hpp"
#include "vrbci/wireless.hpp"

namespace vrbci {

// ---- stored-data linear SVM --------------------------------------------

struct SvmConfig {
  double learning_rate = 1e-3;
  double regularization = 1e-4;
  int epochs_per_fit = 5;
  int refit_interval = 10;  // episodes between full-buffer refits
  std::uint64_t seed = 1;

  void validate() const {
    if (!(learning_rate > 0.0) || regularization < 0.0 || epochs_per_fit <= 0 ||
        refit_interval <= 0) {
      throw std::invalid_argument("svm: bad training parameters");
    }
  }
};

// One-vs-rest linear scores over standardized window features. Features are
// the flattened samples concatenated with their elementwise squares: the
// squares carry per-channel energy, which survives the random phase of
// oscillatory signals where the raw means cancel.
struct SvmModel {
  std::size_t classes = 0;
  std::size_t feature_dim = 0;
  std::vector<double> weights;        // classes x feature_dim
  std::vector<double> biases;         // classes
  std::vector<double> feature_means;  // feature_dim
  std::vector<double> feature_stds;   // feature_dim, floored at 1e-8
  bool trained = false;
};

inline std::vector<double> svm_features(const EegWindow& window) {
  std::vector<double> f;
  f.reserve(window.samples.size() * 2);
  for (double v : window.samples.values) f.push_back(v);
  for (double v : window.samples.values) f.push_back(v * v);
  return f;
}

inline std::vector<double> svm_scores(const SvmModel& model,
                                      const std::vector<double>& raw_features) {
  std::vector<double> scores(model.classes, 0.0);
  for (std::size_t c = 0; c < model.classes; ++c) {
    double s = model.biases[c];
    const double* w = &model.weights[c * model.feature_dim];
    for (std::size_t i = 0; i < model.feature_dim; ++i) {
      double z = (raw_features[i] - model.feature_means[i]) / model.feature_stds[i];
      s += w[i] * z;
    }
    scores[c] = s;
  }
  return scores;
}

// Argmax over class scores; ties break to the lowest index.
inline int predict_svm(const SvmModel& model, const EegWindow& window) {
  std::vector<double> scores = svm_scores(model, svm_features(window));
  int best = 0;
  for (std::size_t c = 1; c < scores.size(); ++c) {
    if (scores[c] > scores[best]) best = static_cast<int>(c);
  }
  return best;
}

// Growing buffer of received windows; every fit re-runs stochastic
// subgradient descent over the entire accumulated buffer (the deliberate
// data-retention advantage this baseline gets).
class SvmTrainer {
 public:
  SvmTrainer(std::size_t classes, std::size_t feature_dim, SvmConfig cfg)
      : cfg_(cfg), rng_(cfg.seed) {
    cfg_.validate();
    model_.classes = classes;
    model_.feature_dim = feature_dim;
    model_.weights.assign(classes * feature_dim, 0.0);
    model_.biases.assign(classes, 0.0);
    model_.feature_means.assign(feature_dim, 0.0);
    model_.feature_stds.assign(feature_dim, 1.0);
  }

  void add(const EegWindow& window, int label) {
    features_.push_back(svm_features(window));
    labels_.push_back(label);
  }

  std::size_t buffer_size() const { return labels_.size(); }
  const SvmModel& model() const { return model_; }

  // Regularized multiclass hinge objective over the buffer (for monitoring
  // and the non-increase property).
  double objective() const {
    double loss = 0.0;
    for (std::size_t i = 0; i < features_.size(); ++i) {
      std::vector<double> scores = svm_scores(model_, features_[i]);
      for (std::size_t c = 0; c < model_.classes; ++c) {
        double y = static_cast<int>(c) == labels_[i] ? 1.0 : -1.0;
        loss += std::max(0.0, 1.0 - y * scores[c]);
      }
    }
    loss /= std::max<std::size_t>(1, features_.size());
    double reg = 0.0;
    for (double w : model_.weights) reg += w * w;
    return loss + 0.5 * cfg_.regularization * reg;
  }

  void fit() {
    if (features_.empty()) {
      throw std::invalid_argument("svm: cannot fit an empty buffer");
    }
    bool multi_class = false;
    for (int l : labels_) {
      if (l != labels_[0]) multi_class = true;
    }
    if (!multi_class) {
      throw std::invalid_argument("svm: buffer contains a single class");
    }
    refresh_statistics();
    const std::size_t n = features_.size();
    const std::size_t dim = model_.feature_dim;
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::vector<double> z(dim);
    for (int epoch = 0; epoch < cfg_.epochs_per_fit; ++epoch) {
      for (std::size_t i = n; i-- > 1;) {
        std::size_t j = rng_.uniform_index(i + 1);
        std::swap(order[i], order[j]);
      }
      for (std::size_t idx : order) {
        const std::vector<double>& raw = features_[idx];
        for (std::size_t i = 0; i < dim; ++i) {
          z[i] = (raw[i] - model_.feature_means[i]) / model_.feature_stds[i];
        }
        for (std::size_t c = 0; c < model_.classes; ++c) {
          double y = static_cast<int>(c) == labels_[idx] ? 1.0 : -1.0;
          double* w = &model_.weights[c * dim];
          double score = model_.biases[c];
          for (std::size_t i = 0; i < dim; ++i) score += w[i] * z[i];
          bool violated = y * score < 1.0;
          for (std::size_t i = 0; i < dim; ++i) {
            double g = cfg_.regularization * w[i];
            if (violated) g -= y * z[i];
            w[i] -= cfg_.learning_rate * g;
          }
          if (violated) model_.biases[c] += cfg_.learning_rate * y;
        }
      }
    }
    model_.trained = true;
  }

 private:
  void refresh_statistics() {
    const std::size_t n = features_.size();
    const std::size_t dim = model_.feature_dim;
    std::vector<double> mean(dim, 0.0), var(dim, 0.0);
    for (const auto& f : features_) {
      for (std::size_t i = 0; i < dim; ++i) mean[i] += f[i];
    }
    for (double& m : mean) m /= static_cast<double>(n);
    for (const auto& f : features_) {
      for (std::size_t i = 0; i < dim; ++i) {
        double d = f[i] - mean[i];
        var[i] += d * d;
      }
    }
    for (std::size_t i = 0; i < dim; ++i) {
      model_.feature_means[i] = mean[i];
      model_.feature_stds[i] =
          std::max(1e-8, std::sqrt(var[i] / static_cast<double>(n)));
    }
  }

  SvmConfig cfg_;
  Rng rng_;
  SvmModel model_;
  std::vector<std::vector<double>> features_;
  std::vector<int> labels_;
};

inline void save_svm(const std::string& path, const SvmModel& m) {
  save_named_tensors(
      path, {{"W", Tensor({m.classes, m.feature_dim}, m.weights)},
             {"b", Tensor({m.classes}, m.biases)},
             {"mu", Tensor({m.feature_dim}, m.feature_means)},
             {"sigma", Tensor({m.feature_dim}, m.feature_stds)}});
}

inline SvmModel load_svm(const std::string& path) {
  NamedTensors ts = load_named_tensors(path);
  SvmModel m;
  for (const auto& [name, t] : ts) {
    if (name == "W") {
      m.classes = t.shape[0];
      m.feature_dim = t.shape[1];
      m.weights = t.values;
    } else if (name == "b") {
      m.biases = t.values;
    } else if (name == "mu") {
      m.feature_means = t.values;
    } else if (name == "sigma") {
      m.feature_stds = t.values;
    }
  }
  if (m.weights.empty() || m.biases.size() != m.classes ||
      m.feature_means.size() != m.feature_dim ||
      m.feature_stds.size() != m.feature_dim) {
    throw std::runtime_error("svm checkpoint: incomplete model in " + path);
  }
  m.trained = true;
  return m;
}

// ---- monolithic RL baselines -------------------------------------------

enum class RlVariant { PpoMonolithic, Vpg };

inline const char* rl_variant_name(RlVariant v) {
  return v == RlVariant::PpoMonolithic ? "ppo" : "vpg";
}

// The prediction lives inside the policy: one categorical per user appended
// to the allocation heads. Labels reach these learners only through the
// scalar QoE reward; there is no classifier network and no supervised loss.
struct RlBaselineConfig {
  RlVariant variant = RlVariant::PpoMonolithic;
  LearnerConfig learner;
  bool use_clip = true;
  bool use_gae = true;

  static RlBaselineConfig make(RlVariant variant, LearnerConfig learner) {
    RlBaselineConfig c;
    c.variant = variant;
    c.learner = std::move(learner);
    c.use_clip = variant == RlVariant::PpoMonolithic;
    c.use_gae = variant == RlVariant::PpoMonolithic;
    return c;
  }

  void validate() const {
    learner.validate();
    if (variant == RlVariant::Vpg && (use_clip || use_gae)) {
      throw std::invalid_argument(
          "vpg baseline cannot enable clipping or the lambda advantage estimator");
    }
  }
};

inline HybridModel make_baseline_model(const EnvConfig& env_cfg, int classes,
                                       const LearnerConfig& cfg) {
  PolicyLayout layout;
  layout.blocks = env_cfg.blocks;
  layout.users = env_cfg.users;
  layout.pred_classes = classes;
  layout.p_max = env_cfg.p_max_w;
  std::size_t obs_dim =
      static_cast<std::size_t>(env_cfg.users) + env_cfg.cores + env_cfg.users;
  Network actor(default_mlp_specs(obs_dim, layout.size(), cfg.hidden_width),
                {obs_dim});
  Network critic(default_mlp_specs(obs_dim, 1, cfg.hidden_width), {obs_dim});
  // placeholder with no parameters; the prediction head replaces it
  Network stub({LayerSpec::softmax()}, {static_cast<std::size_t>(classes)});
  Rng rng(derive_seed(cfg.seed, 0x2229));
  actor.init_params(rng);
  critic.init_params(rng);
  return HybridModel(std::move(actor), std::move(critic), std::move(stub), layout);
}

// Plain policy gradient: discounted return-to-go, learned value baseline,
// no clipping, no lambda weighting, a single pass per rollout.
inline UpdateDiagnostics update_vpg(HybridModel& model, const Trajectory& traj,
                                    const LearnerConfig& cfg) {
  const std::size_t n = traj.steps.size();
  if (n == 0) return {};
  model.old_actor = model.actor.params().tensors;

  std::vector<double> returns(n, 0.0);
  double next_return = traj.bootstrap_value;
  for (std::size_t o = n; o-- > 0;) {
    const TrajectoryStep& s = traj.steps[o];
    double carry = s.done ? 0.0 : 1.0;
    returns[o] = s.mean_reward + cfg.gamma * carry * next_return;
    next_return = returns[o];
  }
  std::vector<double> adv(n, 0.0);
  for (std::size_t o = 0; o < n; ++o) adv[o] = returns[o] - traj.steps[o].value;
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
  UpdateDiagnostics diag;

  std::vector<Tensor> actor_grads = model.actor.zero_like_params();
  double objective = 0.0;
  for (std::size_t o = 0; o < n; ++o) {
    const TrajectoryStep& s = traj.steps[o];
    Network::Cache cache;
    Tensor out = model.actor.forward(observation_tensor(s.observation), cache);
    PolicyDistribution dist = decode_policy(out, model.layout);
    double ld = action_log_density(dist, model.layout, s.rho, s.power_presquash,
                                   s.predictions);
    objective += adv[o] * ld;
    Tensor out_grad(out.shape);
    add_log_density_gradient(dist, model.layout, s.rho, s.power_presquash,
                             s.predictions, adv[o] / static_cast<double>(n),
                             out_grad);
    model.actor.backward_accumulate(cache, out_grad, actor_grads);
  }
  objective /= static_cast<double>(n);
  if (!std::isfinite(objective)) {
    throw std::runtime_error("vpg: non-finite actor objective");
  }
  model.actor.adam_step(actor_grads, actor_opt, GradientDirection::Ascend);
  diag.actor_objective = objective;
  diag.mean_ratio = 1.0;

  std::vector<Tensor> critic_grads = model.critic.zero_like_params();
  double critic_loss = 0.0;
  for (std::size_t o = 0; o < n; ++o) {
    const TrajectoryStep& s = traj.steps[o];
    Network::Cache cache;
    Tensor v = model.critic.forward(observation_tensor(s.observation), cache);
    double err = v.values[0] - returns[o];
    critic_loss += err * err;
    Tensor out_grad({1});
    out_grad.values[0] = 2.0 * err / static_cast<double>(n);
    model.critic.backward_accumulate(cache, out_grad, critic_grads);
  }
  critic_loss /= static_cast<double>(n);
  if (!std::isfinite(critic_loss)) {
    throw std::runtime_error("vpg: non-finite critic loss");
  }
  model.critic.adam_step(critic_grads, critic_opt, GradientDirection::Descend);
  diag.critic_loss = critic_loss;
  return diag;
}

inline TrainResult train_rl_baseline(HybridModel& model, WirelessEnv& env,
                                     const RlBaselineConfig& bcfg) {
  bcfg.validate();
  TrainResult result;
  const LearnerConfig& cfg = bcfg.learner;
  result.series.reserve(cfg.episodes);
  Rng rng(derive_seed(cfg.seed, 0xAC7));
  env.reset();
  for (int episode = 0; episode < cfg.episodes; ++episode) {
    Trajectory traj = collect_trajectories(model, env, cfg.rollout_length, rng);
    result.series.push_back(summarize_trajectory(traj));
    if (bcfg.variant == RlVariant::PpoMonolithic) {
      result.diagnostics.push_back(update_iteration(model, traj, cfg));
    } else {
      result.diagnostics.push_back(update_vpg(model, traj, cfg));
    }
  }
  return result;
}

}  // namespace vrbci
