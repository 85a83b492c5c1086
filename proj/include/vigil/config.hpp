#pragma once

#include <map>
#include <string>
#include <vector>

#include "vigil/agent.hpp"
#include "vigil/detector.hpp"
#include "vigil/env.hpp"
#include "vigil/error.hpp"
#include "vigil/io.hpp"

namespace vigil {

struct ConfigKey {
  const char* key;
  const char* default_value;
  const char* help;
};

// Every tunable in the pipeline, with its documented default. Unknown keys
// are rejected on load.
inline const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema = {
      {"ecg.low_hz", "0.5", "band-pass lower cutoff (Hz)"},
      {"ecg.high_hz", "40", "band-pass upper cutoff (Hz)"},
      {"capsule.window_samples", "15360", "DEW/NSRW length L in samples"},
      {"capsule.min_gap_s", "120", "minimum spacing between usable events (s)"},
      {"capsule.anchor", "end", "DEW anchoring: end | centered"},
      {"capsule.n_min", "2", "capsule count search lower bound"},
      {"capsule.n_max", "200", "capsule count search upper bound"},
      {"capsule.c_min_s", "40", "capsule size search lower bound (s)"},
      {"capsule.c_max_s", "120", "capsule size search upper bound (s)"},
      {"capsule.config", "C6400_N6_M72", "deployed capsule configuration label"},
      {"capsule.inference_overlap", "0.75", "window overlap M' used by sliding prediction"},
      {"detector.units", "40", "recurrent units per layer"},
      {"detector.layers", "3", "recurrent layers"},
      {"detector.dropout", "0.25", "dropout on recurrent layer outputs"},
      {"detector.l2", "0.28", "L2 penalty on the dense head"},
      {"detector.learning_rate", "0.002", "Adam learning rate"},
      {"detector.batch_size", "48", "sequences per minibatch"},
      {"detector.max_epochs", "100", "training epoch cap"},
      {"detector.patience", "10", "early-stop patience (epochs without F1 gain)"},
      {"detector.threshold", "0.5", "decision threshold on the drowsiness probability"},
      {"detector.holdout_fraction", "0.2", "stratified hold-out before cross-validation"},
      {"detector.folds", "5", "cross-validation folds"},
      {"env.dt", "0.05", "simulation step (s)"},
      {"env.max_accel", "3", "acceleration at full throttle (m/s^2)"},
      {"env.max_decel", "8", "deceleration at full brake (m/s^2)"},
      {"env.collision_distance", "0.5", "gap at or below which a collision is declared (m)"},
      {"env.delay_s", "0.5", "drowsy actuation delay (s)"},
      {"env.horizon_s", "30", "episode duration (s)"},
      {"env.radar_rate_hz", "1000", "radar detection points per second"},
      {"env.radar_sigma_depth", "0.3", "radar depth noise (m)"},
      {"env.radar_sigma_vel", "0.2", "radar velocity noise (m/s)"},
      {"env.radar_clutter_frac", "0.05", "fraction of clutter points"},
      {"env.radar_max_range", "150", "radar range; also the no-detection sentinel (m)"},
      {"env.spacing_min", "20", "initial gap lower bound (m)"},
      {"env.spacing_max", "60", "initial gap upper bound (m)"},
      {"env.lead_segments_min", "2", "lead speed profile: minimum segments"},
      {"env.lead_segments_max", "4", "lead speed profile: maximum segments"},
      {"env.lead_speed_min", "0", "lead speed lower bound (m/s)"},
      {"env.lead_speed_max", "20", "lead speed upper bound (m/s)"},
      {"env.smooth_brake_threshold", "0.3", "|dp| limit that still counts as smooth braking"},
      {"env.follow_eps_v", "0.5", "|v_rel| tolerance for the following phase (m/s)"},
      {"env.drowsy_mean_alert_s", "8", "mean alert interval in the drowsiness schedule (s)"},
      {"env.drowsy_mean_drowsy_s", "4", "mean drowsy interval in the drowsiness schedule (s)"},
      {"env.dbscan_eps", "1", "DBSCAN radius over (depth, velocity)"},
      {"env.dbscan_min_pts", "3", "DBSCAN core point threshold"},
      {"env.drowsy_mode", "scheduled", "drowsiness source: off | scheduled | live"},
      {"reward.alpha", "200", "collision penalty"},
      {"reward.beta", "1", "abrupt pressure change penalty"},
      {"reward.kappa", "2", "unsafe distance penalty (per second)"},
      {"reward.delta", "1", "safe distance reward (per second)"},
      {"reward.epsilon", "0.5", "smooth braking reward (per second)"},
      {"agent.variant", "dddqn", "dqn | double | dueling | dddqn"},
      {"agent.gamma", "0.9", "discount factor"},
      {"agent.eps_start", "1", "epsilon-greedy start"},
      {"agent.eps_end", "0.05", "epsilon-greedy floor"},
      {"agent.eps_decay_rate", "0.0076752836433134865",
       "exponential decay rate (reaches 0.1 by episode 300)"},
      {"agent.guided_episodes", "50", "guided exploration episodes"},
      {"agent.guided_accel_prob", "0.8", "accelerate probability during guided exploration"},
      {"agent.batch_size", "64", "transitions per minibatch"},
      {"agent.target_sync_period", "1000", "train steps between target syncs"},
      {"agent.learning_rate", "0.0005", "Adam learning rate"},
      {"agent.replay_capacity", "50000", "replay buffer capacity"},
      {"agent.warmup_threshold", "5000", "transitions before training starts"},
      {"agent.episodes", "500", "training episodes"},
      {"eval.scenarios", "200", "paired evaluation scenarios"},
      {"benchmark.folds", "5", "cross-validation folds per configuration"},
      {"benchmark.configs_limit", "0", "evaluate only the first N configurations (0 = all)"},
      {"benchmark.workers", "0", "parallel workers (0 = hardware threads)"},
      {"live.detector_bundle", "", "detector bundle directory for live drowsiness"},
      {"live.ecg", "", "ECG signal file streamed by the live detector"},
      {"live.events", "", "events file for the live detector recording"},
      {"live.meta", "", "metadata file for the live detector recording"},
  };
  return schema;
}

class RunConfig {
 public:
  static RunConfig defaults() {
    RunConfig cfg;
    for (const auto& k : config_schema()) cfg.values_[k.key] = k.default_value;
    return cfg;
  }

  void set(const std::string& key, const std::string& value) {
    if (!values_.count(key)) throw ConfigError("unknown config key '" + key + "'");
    values_[key] = value;
  }

  void load_file(const std::filesystem::path& path) {
    for (const auto& [k, v] : read_kv_pairs(path)) set(k, v);
  }

  const std::string& get_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
  }

  double get_double(const std::string& key) const {
    try {
      return parse_double(get_string(key), key);
    } catch (const IoError& e) {
      throw ConfigError(e.what());
    }
  }

  long long get_long(const std::string& key) const {
    try {
      return parse_long(get_string(key), key);
    } catch (const IoError& e) {
      throw ConfigError(e.what());
    }
  }

  int get_int(const std::string& key) const { return static_cast<int>(get_long(key)); }

  // Deterministic key=value dump (map iteration is ordered).
  std::string snapshot() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
  }

  const std::map<std::string, std::string>& values() const { return values_; }

  EnvConfig env_config() const {
    EnvConfig e;
    e.dt = get_double("env.dt");
    e.max_accel = get_double("env.max_accel");
    e.max_decel = get_double("env.max_decel");
    e.collision_distance = get_double("env.collision_distance");
    e.delay_s = get_double("env.delay_s");
    e.horizon_s = get_double("env.horizon_s");
    e.radar_rate_hz = get_double("env.radar_rate_hz");
    e.radar_sigma_depth = get_double("env.radar_sigma_depth");
    e.radar_sigma_vel = get_double("env.radar_sigma_vel");
    e.radar_clutter_frac = get_double("env.radar_clutter_frac");
    e.radar_max_range = get_double("env.radar_max_range");
    e.spacing_min = get_double("env.spacing_min");
    e.spacing_max = get_double("env.spacing_max");
    e.lead_segments_min = get_int("env.lead_segments_min");
    e.lead_segments_max = get_int("env.lead_segments_max");
    e.lead_speed_min = get_double("env.lead_speed_min");
    e.lead_speed_max = get_double("env.lead_speed_max");
    e.smooth_brake_threshold = get_double("env.smooth_brake_threshold");
    e.follow_eps_v = get_double("env.follow_eps_v");
    e.drowsy_mean_alert_s = get_double("env.drowsy_mean_alert_s");
    e.drowsy_mean_drowsy_s = get_double("env.drowsy_mean_drowsy_s");
    e.dbscan.eps = get_double("env.dbscan_eps");
    e.dbscan.min_pts = get_int("env.dbscan_min_pts");
    e.rewards.alpha = get_double("reward.alpha");
    e.rewards.beta = get_double("reward.beta");
    e.rewards.kappa = get_double("reward.kappa");
    e.rewards.delta = get_double("reward.delta");
    e.rewards.epsilon_r = get_double("reward.epsilon");
    e.validate();
    return e;
  }

  AgentConfig agent_config() const {
    AgentConfig a;
    a.gamma = get_double("agent.gamma");
    a.eps_start = get_double("agent.eps_start");
    a.eps_end = get_double("agent.eps_end");
    a.eps_decay_rate = get_double("agent.eps_decay_rate");
    a.guided_episodes = get_int("agent.guided_episodes");
    a.guided_accel_prob = get_double("agent.guided_accel_prob");
    a.batch_size = get_int("agent.batch_size");
    a.target_sync_period = get_int("agent.target_sync_period");
    a.learning_rate = get_double("agent.learning_rate");
    a.replay_capacity = static_cast<std::size_t>(get_long("agent.replay_capacity"));
    a.warmup_threshold = static_cast<std::size_t>(get_long("agent.warmup_threshold"));
    a.validate();
    return a;
  }

  DetectorConfig detector_config() const {
    DetectorConfig d;
    d.units = get_int("detector.units");
    d.recurrent_layers = get_int("detector.layers");
    d.dropout = get_double("detector.dropout");
    d.l2 = get_double("detector.l2");
    d.learning_rate = get_double("detector.learning_rate");
    d.batch_size = get_int("detector.batch_size");
    d.max_epochs = get_int("detector.max_epochs");
    d.early_stop_patience = get_int("detector.patience");
    d.decision_threshold = get_double("detector.threshold");
    d.holdout_fraction = get_double("detector.holdout_fraction");
    d.validate();
    return d;
  }

  DrowsyMode drowsy_mode() const {
    const std::string& mode = get_string("env.drowsy_mode");
    if (mode == "off") return DrowsyMode::off;
    if (mode == "scheduled") return DrowsyMode::scheduled;
    if (mode == "live") return DrowsyMode::live;
    throw ConfigError("env.drowsy_mode must be off | scheduled | live");
  }

  DewAnchor dew_anchor() const {
    const std::string& a = get_string("capsule.anchor");
    if (a == "end") return DewAnchor::window_end;
    if (a == "centered") return DewAnchor::centered;
    throw ConfigError("capsule.anchor must be end | centered");
  }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace vigil
