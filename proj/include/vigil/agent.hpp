#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "vigil/env.hpp"
#include "vigil/error.hpp"
#include "vigil/io.hpp"
#include "vigil/nn.hpp"
#include "vigil/rng.hpp"

namespace vigil {

struct Transition {
  std::array<double, 5> state{};
  int action = 0;
  double reward = 0.0;
  std::array<double, 5> next_state{};
  bool done = false;
};

// FIFO experience store with uniform sampling.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity, std::size_t warmup_threshold)
      : capacity_(capacity), warmup_(warmup_threshold) {
    if (capacity_ == 0) throw ConfigError("replay buffer capacity must be positive");
  }

  void push(const Transition& t) {
    if (buf_.size() < capacity_) {
      buf_.push_back(t);
    } else {
      buf_[head_] = t;
      head_ = (head_ + 1) % capacity_;
    }
  }

  std::size_t size() const { return buf_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t warmup_threshold() const { return warmup_; }
  bool warmed_up() const { return buf_.size() >= warmup_; }

  // insertion order: oldest first
  const Transition& at_age(std::size_t i) const {
    return buf_[(head_ + i) % buf_.size()];
  }

  std::vector<Transition> sample(std::size_t n, Rng& rng) const {
    std::vector<Transition> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      out.push_back(buf_[rng.uniform_int(static_cast<int>(buf_.size()))]);
    }
    return out;
  }

 private:
  std::size_t capacity_;
  std::size_t warmup_;
  std::vector<Transition> buf_;
  std::size_t head_ = 0;  // oldest element once full
};

// ---------------------------------------------------------------------------
// Q-network variants

enum class Variant { dqn, double_dqn, dueling_dqn, double_dueling_dqn };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::dqn: return "dqn";
    case Variant::double_dqn: return "double";
    case Variant::dueling_dqn: return "dueling";
    case Variant::double_dueling_dqn: return "dddqn";
  }
  return "dqn";
}

inline Variant parse_variant(const std::string& name) {
  if (name == "dqn") return Variant::dqn;
  if (name == "double" || name == "ddqn") return Variant::double_dqn;
  if (name == "dueling" || name == "dudqn") return Variant::dueling_dqn;
  if (name == "dddqn" || name == "double-dueling") return Variant::double_dueling_dqn;
  throw ConfigError("unknown agent variant '" + name + "'");
}

inline bool uses_double_target(Variant v) {
  return v == Variant::double_dqn || v == Variant::double_dueling_dqn;
}

inline bool uses_dueling_head(Variant v) {
  return v == Variant::dueling_dqn || v == Variant::double_dueling_dqn;
}

struct QNetworkShape {
  std::vector<int> trunk{128, 256, 128};
  std::vector<int> stream{128, 64};  // per dueling stream
};

// Shared fully connected trunk with either a plain linear head or parallel
// value/advantage streams combined with mean-centred advantages.
class QNetwork {
 public:
  QNetwork(Variant variant, int obs_dim, int n_actions, const QNetworkShape& shape, Rng& rng)
      : variant_(variant), obs_dim_(obs_dim), n_actions_(n_actions), shape_(shape) {
    int in = obs_dim;
    for (int width : shape.trunk) {
      trunk_.layers.push_back(make_dense(in, width, Activation::relu, rng));
      in = width;
    }
    if (dueling()) {
      int v_in = in;
      for (int width : shape.stream) {
        value_.layers.push_back(make_dense(v_in, width, Activation::relu, rng));
        v_in = width;
      }
      value_.layers.push_back(make_dense(v_in, 1, Activation::identity, rng));
      int a_in = in;
      for (int width : shape.stream) {
        advantage_.layers.push_back(make_dense(a_in, width, Activation::relu, rng));
        a_in = width;
      }
      advantage_.layers.push_back(make_dense(a_in, n_actions, Activation::identity, rng));
    } else {
      head_.layers.push_back(make_dense(in, n_actions, Activation::identity, rng));
    }
  }

  Variant variant() const { return variant_; }
  bool dueling() const { return uses_dueling_head(variant_); }
  int n_actions() const { return n_actions_; }
  int obs_dim() const { return obs_dim_; }

  Matrix q_values(const Matrix& obs) const {
    Matrix h = trunk_.forward(obs);
    Matrix q;
    if (dueling()) {
      Matrix v = value_.forward(h);
      Matrix a = advantage_.forward(h);
      q = combine_dueling(v, a);
    } else {
      q = head_.forward(h);
    }
    if (!q.all_finite()) throw DivergenceError("q_values: non-finite network output");
    return q;
  }

  std::vector<double> q_values(std::span<const double> obs) const {
    Matrix m(1, obs_dim_);
    std::copy(obs.begin(), obs.end(), m.data.begin());
    Matrix q = q_values(m);
    return q.data;
  }

  // MSE on the Q-values of the taken actions against the given targets; one
  // Adam step on this network only. Returns the pre-update loss.
  double train_on(const Matrix& obs, const std::vector<int>& actions,
                  const std::vector<double>& targets, Adam& adam) {
    const int batch = obs.rows;
    MlpCache trunk_cache, head_cache, value_cache, adv_cache;
    Matrix h = mlp_forward_cached(trunk_, obs, trunk_cache);
    Matrix q;
    Matrix v, a;
    if (dueling()) {
      v = mlp_forward_cached(value_, h, value_cache);
      a = mlp_forward_cached(advantage_, h, adv_cache);
      q = combine_dueling(v, a);
    } else {
      q = mlp_forward_cached(head_, h, head_cache);
    }

    double loss = 0.0;
    Matrix d_q(batch, n_actions_);
    for (int r = 0; r < batch; ++r) {
      double err = q(r, actions[r]) - targets[r];
      loss += err * err;
      d_q(r, actions[r]) = 2.0 * err / batch;
    }
    loss /= batch;
    if (!std::isfinite(loss)) throw DivergenceError("train_on: non-finite loss");

    MlpGrads trunk_grads, head_grads, value_grads, adv_grads;
    Matrix d_h;
    if (dueling()) {
      // Q = V + A - mean(A):  dV = sum_a dQ;  dA = dQ - mean_a(dQ)
      Matrix d_v(batch, 1);
      Matrix d_a(batch, n_actions_);
      for (int r = 0; r < batch; ++r) {
        double sum = 0.0;
        for (int c = 0; c < n_actions_; ++c) sum += d_q(r, c);
        d_v(r, 0) = sum;
        for (int c = 0; c < n_actions_; ++c) d_a(r, c) = d_q(r, c) - sum / n_actions_;
      }
      Matrix d_h_v = mlp_backward(value_, h, value_cache, d_v, value_grads);
      Matrix d_h_a = mlp_backward(advantage_, h, adv_cache, d_a, adv_grads);
      d_h = d_h_v;
      for (std::size_t i = 0; i < d_h.data.size(); ++i) d_h.data[i] += d_h_a.data[i];
    } else {
      d_h = mlp_backward(head_, h, head_cache, d_q, head_grads);
    }
    mlp_backward(trunk_, obs, trunk_cache, d_h, trunk_grads);

    adam.begin_step();
    std::size_t slot = 0;
    auto update_mlp = [&](Mlp& mlp, MlpGrads& grads) {
      for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
        adam_update_dense(adam, slot, mlp.layers[l], grads.layers[l]);
      }
    };
    update_mlp(trunk_, trunk_grads);
    if (dueling()) {
      update_mlp(value_, value_grads);
      update_mlp(advantage_, adv_grads);
    } else {
      update_mlp(head_, head_grads);
    }
    return loss;
  }

  void copy_weights_from(const QNetwork& other) {
    trunk_ = other.trunk_;
    head_ = other.head_;
    value_ = other.value_;
    advantage_ = other.advantage_;
  }

  std::vector<TensorRef> tensors() {
    std::vector<TensorRef> refs = tensor_refs(trunk_, "trunk");
    if (dueling()) {
      auto v = tensor_refs(value_, "value");
      auto a = tensor_refs(advantage_, "advantage");
      refs.insert(refs.end(), v.begin(), v.end());
      refs.insert(refs.end(), a.begin(), a.end());
    } else {
      auto h = tensor_refs(head_, "head");
      refs.insert(refs.end(), h.begin(), h.end());
    }
    return refs;
  }

  void save(const std::filesystem::path& path) { save_tensors(path, tensors()); }
  void load(const std::filesystem::path& path) { load_tensors(path, tensors()); }

 private:
  static Matrix combine_dueling(const Matrix& v, const Matrix& a) {
    Matrix q(a.rows, a.cols);
    for (int r = 0; r < a.rows; ++r) {
      double mean = 0.0;
      for (int c = 0; c < a.cols; ++c) mean += a(r, c);
      mean /= a.cols;
      for (int c = 0; c < a.cols; ++c) q(r, c) = v(r, 0) + a(r, c) - mean;
    }
    return q;
  }

  Variant variant_;
  int obs_dim_;
  int n_actions_;
  QNetworkShape shape_;
  Mlp trunk_;
  Mlp head_;       // plain variants
  Mlp value_;      // dueling variants
  Mlp advantage_;  // dueling variants
};

// ---------------------------------------------------------------------------
// Agent configuration and policies

struct AgentConfig {
  double gamma = 0.9;
  double eps_start = 1.0;
  double eps_end = 0.05;
  double eps_decay_rate = std::log(10.0) / 300.0;  // eps(300) = 0.1
  int guided_episodes = 50;
  double guided_accel_prob = 0.8;
  int batch_size = 64;
  int target_sync_period = 1000;
  double learning_rate = 5e-4;
  std::size_t replay_capacity = 50000;
  std::size_t warmup_threshold = 5000;

  double epsilon(int episode) const {
    return std::max(eps_end, eps_start * std::exp(-eps_decay_rate * episode));
  }

  void validate() const {
    if (gamma < 0.0 || gamma > 1.0) throw ConfigError("agent: gamma must be in [0,1]");
    if (guided_accel_prob < 0.0 || guided_accel_prob > 1.0 || eps_start < 0.0 ||
        eps_start > 1.0 || eps_end < 0.0 || eps_end > 1.0) {
      throw ConfigError("agent: probabilities must be in [0,1]");
    }
    if (batch_size <= 0 || target_sync_period <= 0) {
      throw ConfigError("agent: counts must be positive");
    }
    if (warmup_threshold > replay_capacity) {
      throw ConfigError("agent: warmup threshold exceeds replay capacity");
    }
  }
};

inline int argmax_lowest_index(std::span<const double> values) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(values.size()); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

// Guided exploration for the first guided_episodes (accelerate with the given
// probability, remaining mass uniform over the other actions), then
// epsilon-greedy with the decayed schedule.
inline int select_action(const QNetwork& net, std::span<const double> obs, int episode_index,
                         const AgentConfig& cfg, Rng& rng) {
  if (episode_index < cfg.guided_episodes) {
    if (rng.uniform() < cfg.guided_accel_prob) return 5;
    return rng.uniform_int(Action::kCount - 1);  // uniform over a0..a4
  }
  double eps = cfg.epsilon(episode_index);
  if (rng.uniform() < eps) return rng.uniform_int(Action::kCount);
  return argmax_lowest_index(net.q_values(obs));
}

// Bellman targets for a batch. Terminal transitions use the bare reward;
// double variants select the next action with the policy network and evaluate
// it with the target network.
inline std::vector<double> bellman_target(std::span<const Transition> batch, Variant variant,
                                          const QNetwork& policy_net, const QNetwork& target_net,
                                          double gamma) {
  std::vector<double> targets;
  targets.reserve(batch.size());
  if (batch.empty()) return targets;

  Matrix next(static_cast<int>(batch.size()), 5);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (int c = 0; c < 5; ++c) next(static_cast<int>(i), c) = batch[i].next_state[c];
  }
  Matrix q_target = target_net.q_values(next);
  std::optional<Matrix> q_policy;
  if (uses_double_target(variant)) q_policy = policy_net.q_values(next);

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& t = batch[i];
    if (t.done) {
      targets.push_back(t.reward);
      continue;
    }
    int r = static_cast<int>(i);
    double future;
    if (uses_double_target(variant)) {
      int best = argmax_lowest_index(q_policy->row(r));
      future = q_target(r, best);
    } else {
      future = q_target(r, argmax_lowest_index(q_target.row(r)));
    }
    targets.push_back(t.reward + gamma * future);
  }
  return targets;
}

// One minibatch update of the policy network.
inline double train_step(const ReplayBuffer& buffer, QNetwork& policy_net,
                         const QNetwork& target_net, Adam& adam, const AgentConfig& cfg,
                         Rng& rng) {
  if (!buffer.warmed_up()) throw Error("train_step: buffer warming up");
  std::vector<Transition> batch = buffer.sample(cfg.batch_size, rng);
  std::vector<double> targets =
      bellman_target(batch, policy_net.variant(), policy_net, target_net, cfg.gamma);
  Matrix obs(static_cast<int>(batch.size()), 5);
  std::vector<int> actions(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (int c = 0; c < 5; ++c) obs(static_cast<int>(i), c) = batch[i].state[c];
    actions[i] = batch[i].action;
  }
  return policy_net.train_on(obs, actions, targets, adam);
}

// ---------------------------------------------------------------------------
// Training loop

struct EpisodeRow {
  int episode = 0;
  double cumulative_reward = 0.0;
  double moving_avg_10 = 0.0;
  double min_reward_to_date = 0.0;
  double epsilon = 0.0;
};

struct TrainingReport {
  std::vector<EpisodeRow> rows;

  std::string to_csv() const {
    std::string out = "episode,cumulative_reward,moving_avg_10,min_reward_to_date,epsilon\n";
    for (const auto& r : rows) {
      out += std::to_string(r.episode) + ',' + format_double(r.cumulative_reward, 12) + ',' +
             format_double(r.moving_avg_10, 12) + ',' + format_double(r.min_reward_to_date, 12) +
             ',' + format_double(r.epsilon, 12) + '\n';
    }
    return out;
  }
};

// Moving average with window 10: mean of the current and up to nine preceding
// values.
inline double moving_average_10(std::span<const double> values, std::size_t index) {
  std::size_t lo = index >= 9 ? index - 9 : 0;
  double acc = 0.0;
  for (std::size_t i = lo; i <= index; ++i) acc += values[i];
  return acc / double(index - lo + 1);
}

struct TrainOptions {
  Variant variant = Variant::double_dueling_dqn;
  int episodes = 500;
  std::uint64_t seed = 1;
  AgentConfig agent;
  EnvConfig env;
  QNetworkShape shape;
  DrowsyMode drowsy_mode = DrowsyMode::scheduled;
  const ThetaBox* live_theta = nullptr;
};

struct TrainingResult {
  TrainingReport report;
  QNetwork policy;
  QNetwork target;
  long train_steps = 0;
};

inline TrainingResult train_agent(const TrainOptions& opt) {
  opt.agent.validate();
  opt.env.validate();
  Rng init_rng(derive_seed(opt.seed, "net-init"));
  QNetwork policy(opt.variant, 5, Action::kCount, opt.shape, init_rng);
  QNetwork target = policy;
  ReplayBuffer buffer(opt.agent.replay_capacity, opt.agent.warmup_threshold);
  Adam adam(opt.agent.learning_rate);
  Rng action_rng(derive_seed(opt.seed, "actions"));
  Rng sample_rng(derive_seed(opt.seed, "replay"));
  LongitudinalEnv env(opt.env, opt.live_theta);

  TrainingResult result{TrainingReport{}, policy, target, 0};
  std::vector<double> rewards;
  double min_to_date = std::numeric_limits<double>::infinity();
  long train_steps = 0;

  for (int episode = 0; episode < opt.episodes; ++episode) {
    Observation obs = env.reset(derive_seed(opt.seed, "episode", episode), opt.drowsy_mode);
    double cumulative = 0.0;
    while (!env.done()) {
      auto state = obs.normalized();
      int a = select_action(result.policy, state, episode, opt.agent, action_rng);
      StepResult sr = env.step(Action{a});
      cumulative += sr.reward;
      Transition tr;
      tr.state = state;
      tr.action = a;
      tr.reward = sr.reward;
      tr.next_state = sr.observation.normalized();
      tr.done = sr.done;
      buffer.push(tr);
      obs = sr.observation;
      if (buffer.warmed_up()) {
        train_step(buffer, result.policy, result.target, adam, opt.agent, sample_rng);
        ++train_steps;
        if (train_steps % opt.agent.target_sync_period == 0) {
          result.target.copy_weights_from(result.policy);
        }
      }
    }
    rewards.push_back(cumulative);
    min_to_date = std::min(min_to_date, cumulative);
    EpisodeRow row;
    row.episode = episode;
    row.cumulative_reward = cumulative;
    row.moving_avg_10 = moving_average_10(rewards, rewards.size() - 1);
    row.min_reward_to_date = min_to_date;
    row.epsilon = episode < opt.agent.guided_episodes ? 1.0 : opt.agent.epsilon(episode);
    result.report.rows.push_back(row);
  }
  result.train_steps = train_steps;
  return result;
}

// ---------------------------------------------------------------------------
// Paired evaluation: each scenario is executed twice, once with the drowsiness
// schedule active and once fully alert, under the greedy policy.

struct ArmResult {
  bool drowsy_arm = false;
  bool collided = false;
  bool success = false;  // horizon reached without collision
  double cumulative_reward = 0.0;
  double mean_distance = 0.0;
  double mean_brake = 0.0;
  double unsafe_seconds = 0.0;
  std::array<double, 4> phase_seconds{};  // acceleration, braking, following, transition
  std::vector<std::string> step_log;      // optional
};

struct EvalReport {
  int n_scenarios = 0;
  double success_rate = 0.0;
  double collision_rate = 0.0;
  double mean_reward = 0.0;
  double median_reward = 0.0;
  double mean_distance_m = 0.0;
  double mean_brake_pressure = 0.0;
  double unsafe_time_alert_s = 0.0;
  double unsafe_time_drowsy_s = 0.0;
  std::array<double, 4> phase_seconds_alert{};
  std::array<double, 4> phase_seconds_drowsy{};
  double mean_distance_alert = 0.0;
  double mean_distance_drowsy = 0.0;
  double mean_brake_alert = 0.0;
  double mean_brake_drowsy = 0.0;
};

struct EvalOptions {
  int n_scenarios = 200;
  std::uint64_t seed = 1;
  EnvConfig env;
  bool keep_step_logs = false;
};

inline ArmResult run_greedy_episode(const QNetwork& net, LongitudinalEnv& env,
                                    const Scenario& scenario, DrowsyMode mode,
                                    bool keep_step_log) {
  ArmResult arm;
  arm.drowsy_arm = mode != DrowsyMode::off;
  Observation obs = env.reset(scenario, mode);
  if (keep_step_log) arm.step_log.push_back(step_log_header());
  double distance_acc = 0.0, brake_acc = 0.0;
  int steps = 0;
  while (!env.done()) {
    int a = argmax_lowest_index(net.q_values(obs.normalized()));
    StepResult sr = env.step(Action{a});
    ++steps;
    arm.cumulative_reward += sr.reward;
    distance_acc += sr.true_gap;
    brake_acc += sr.effective_brake;
    if (sr.unsafe_this_step) arm.unsafe_seconds += env.config().dt;
    arm.phase_seconds[static_cast<int>(sr.phase)] += env.config().dt;
    if (sr.collided) arm.collided = true;
    if (keep_step_log) {
      arm.step_log.push_back(step_log_row(steps * env.config().dt, sr, a));
    }
    obs = sr.observation;
  }
  arm.success = !arm.collided;
  arm.mean_distance = steps > 0 ? distance_acc / steps : 0.0;
  arm.mean_brake = steps > 0 ? brake_acc / steps : 0.0;
  return arm;
}

struct PairedEpisodes {
  Scenario scenario;
  ArmResult alert;
  ArmResult drowsy;
};

inline EvalReport summarize_eval(const std::vector<PairedEpisodes>& pairs) {
  EvalReport rep;
  rep.n_scenarios = static_cast<int>(pairs.size());
  std::vector<double> rewards;
  int successes = 0, collisions = 0, arms = 0;
  for (const auto& p : pairs) {
    for (const ArmResult* arm : {&p.alert, &p.drowsy}) {
      ++arms;
      successes += arm->success ? 1 : 0;
      collisions += arm->collided ? 1 : 0;
      rewards.push_back(arm->cumulative_reward);
      rep.mean_reward += arm->cumulative_reward;
      rep.mean_distance_m += arm->mean_distance;
      rep.mean_brake_pressure += arm->mean_brake;
    }
    rep.unsafe_time_alert_s += p.alert.unsafe_seconds;
    rep.unsafe_time_drowsy_s += p.drowsy.unsafe_seconds;
    for (int i = 0; i < 4; ++i) {
      rep.phase_seconds_alert[i] += p.alert.phase_seconds[i];
      rep.phase_seconds_drowsy[i] += p.drowsy.phase_seconds[i];
    }
    rep.mean_distance_alert += p.alert.mean_distance;
    rep.mean_distance_drowsy += p.drowsy.mean_distance;
    rep.mean_brake_alert += p.alert.mean_brake;
    rep.mean_brake_drowsy += p.drowsy.mean_brake;
  }
  if (arms > 0) {
    rep.success_rate = double(successes) / arms;
    rep.collision_rate = double(collisions) / arms;
    rep.mean_reward /= arms;
    rep.mean_distance_m /= arms;
    rep.mean_brake_pressure /= arms;
  }
  if (!pairs.empty()) {
    rep.mean_distance_alert /= pairs.size();
    rep.mean_distance_drowsy /= pairs.size();
    rep.mean_brake_alert /= pairs.size();
    rep.mean_brake_drowsy /= pairs.size();
  }
  std::sort(rewards.begin(), rewards.end());
  if (!rewards.empty()) {
    std::size_t n = rewards.size();
    rep.median_reward = n % 2 == 1 ? rewards[n / 2] : 0.5 * (rewards[n / 2 - 1] + rewards[n / 2]);
  }
  return rep;
}

inline std::vector<PairedEpisodes> evaluate_paired(const QNetwork& net, const EvalOptions& opt) {
  opt.env.validate();
  LongitudinalEnv env(opt.env);
  std::vector<PairedEpisodes> pairs;
  pairs.reserve(opt.n_scenarios);
  for (int i = 0; i < opt.n_scenarios; ++i) {
    PairedEpisodes pair;
    pair.scenario = sample_scenario(opt.env, derive_seed(opt.seed, "eval-scenario", i));
    pair.alert = run_greedy_episode(net, env, pair.scenario, DrowsyMode::off, opt.keep_step_logs);
    pair.drowsy =
        run_greedy_episode(net, env, pair.scenario, DrowsyMode::scheduled, opt.keep_step_logs);
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

inline std::string eval_summary_csv(const EvalReport& r) {
  std::string out = "metric,value\n";
  auto add = [&](const std::string& k, double v) {
    out += k + ',' + format_double(v, 12) + '\n';
  };
  add("n_scenarios", r.n_scenarios);
  add("success_rate", r.success_rate);
  add("collision_rate", r.collision_rate);
  add("mean_reward", r.mean_reward);
  add("median_reward", r.median_reward);
  add("mean_distance_m", r.mean_distance_m);
  add("mean_brake_pressure", r.mean_brake_pressure);
  add("unsafe_time_alert_s", r.unsafe_time_alert_s);
  add("unsafe_time_drowsy_s", r.unsafe_time_drowsy_s);
  add("mean_distance_alert_m", r.mean_distance_alert);
  add("mean_distance_drowsy_m", r.mean_distance_drowsy);
  add("mean_brake_alert", r.mean_brake_alert);
  add("mean_brake_drowsy", r.mean_brake_drowsy);
  const char* names[4] = {"acceleration", "braking", "following", "transition"};
  for (int i = 0; i < 4; ++i) {
    add(std::string("phase_") + names[i] + "_alert_s", r.phase_seconds_alert[i]);
    add(std::string("phase_") + names[i] + "_drowsy_s", r.phase_seconds_drowsy[i]);
  }
  return out;
}

}  // namespace vigil
