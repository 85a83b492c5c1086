#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vigil/dbscan.hpp"
#include "vigil/detector.hpp"
#include "vigil/error.hpp"
#include "vigil/io.hpp"
#include "vigil/rng.hpp"

namespace vigil {

// ---------------------------------------------------------------------------
// Discrete control space: four braking levels, coasting, full throttle.

struct Action {
  int index = 4;

  static constexpr int kCount = 6;

  double throttle() const { return index == 5 ? 1.0 : 0.0; }

  double brake() const {
    switch (index) {
      case 0: return 1.0;
      case 1: return 0.7;
      case 2: return 0.4;
      case 3: return 0.2;
      default: return 0.0;  // coast / throttle
    }
  }
};

struct VehicleState {
  double position = 0.0;  // m
  double speed = 0.0;     // m/s, never negative
  double commanded_accel = 0.0;
};

struct RadarPoint {
  double depth = 0.0;              // m
  double relative_velocity = 0.0;  // m/s, positive = closing
  double azimuth = 0.0;            // rad, metadata only in this 1-D model
};

struct RadarFrame {
  std::vector<RadarPoint> points;
};

struct ClusterSummary {
  double d_rel = 0.0;
  double v_rel = 0.0;
  int cluster_count = 0;
  bool detected = false;
};

// The 5-tuple observation: ego speed, previous action index, clustered radar
// depth and closing speed, and the binary drowsiness state.
struct Observation {
  double speed = 0.0;
  int prev_action = 4;
  double d_rel = 0.0;
  double v_rel = 0.0;
  int theta = 0;

  // Fixed affine scaling so network inputs are O(1).
  std::array<double, 5> normalized() const {
    return {speed / 30.0, double(prev_action) / 5.0, d_rel / 100.0, v_rel / 20.0, double(theta)};
  }
};

struct RewardWeights {
  double alpha = 200.0;    // collision
  double beta = 1.0;       // abrupt pressure change
  double kappa = 2.0;      // unsafe distance
  double delta = 1.0;      // safe distance
  double epsilon_r = 0.5;  // smooth braking

  void validate(double horizon_s) const {
    if (alpha <= 0 || beta <= 0 || kappa <= 0 || delta <= 0 || epsilon_r <= 0) {
      throw ConfigError("reward weights must be positive");
    }
    if (alpha <= horizon_s * delta) {
      throw ConfigError("reward: alpha must exceed horizon * delta");
    }
  }
};

struct EnvConfig {
  double dt = 0.05;                 // s
  double max_accel = 3.0;           // m/s^2 at full throttle
  double max_decel = 8.0;           // m/s^2 at full brake, scaled linearly
  double collision_distance = 0.5;  // m
  double delay_s = 0.5;             // drowsy actuation delay
  double horizon_s = 30.0;
  double radar_rate_hz = 1000.0;
  double radar_sigma_depth = 0.3;
  double radar_sigma_vel = 0.2;
  double radar_clutter_frac = 0.05;
  double radar_max_range = 150.0;
  double radar_pitch_deg = 2.0;  // metadata only
  double spacing_min = 20.0;
  double spacing_max = 60.0;
  int lead_segments_min = 2;
  int lead_segments_max = 4;
  double lead_speed_min = 0.0;
  double lead_speed_max = 20.0;
  double smooth_brake_threshold = 0.3;
  double follow_eps_v = 0.5;
  double drowsy_mean_alert_s = 8.0;
  double drowsy_mean_drowsy_s = 4.0;
  DbscanParams dbscan;
  RewardWeights rewards;

  int delay_steps() const { return static_cast<int>(std::llround(delay_s / dt)); }
  int horizon_steps() const { return static_cast<int>(std::llround(horizon_s / dt)); }

  void validate() const {
    if (dt <= 0) throw ConfigError("env: dt must be positive");
    if (std::abs(delay_s / dt - delay_steps()) > 1e-9) {
      throw ConfigError("env: dt must divide the drowsy delay exactly");
    }
    if (std::abs(horizon_s / dt - horizon_steps()) > 1e-9) {
      throw ConfigError("env: horizon must be an integral number of steps");
    }
    if (spacing_min < collision_distance) {
      throw ConfigError("env: initial spacing below collision distance");
    }
    if (spacing_max < spacing_min) throw ConfigError("env: bad spacing range");
    if (lead_segments_min < 1 || lead_segments_max < lead_segments_min) {
      throw ConfigError("env: bad lead segment range");
    }
    rewards.validate(horizon_s);
  }
};

enum class Phase { acceleration, braking, following, transition };

inline const char* phase_name(Phase p) {
  switch (p) {
    case Phase::acceleration: return "acceleration";
    case Phase::braking: return "braking";
    case Phase::following: return "following";
    case Phase::transition: return "transition";
  }
  return "transition";
}

// Two-second rule with a 5 m floor.
inline double safe_distance_min(double speed) { return std::max(5.0, 2.0 * speed); }
inline double safe_distance_max(double speed) { return safe_distance_min(speed) + 10.0; }

struct RewardTerms {
  double collision = 0.0;
  double abrupt = 0.0;
  double unsafe = 0.0;
  double safe = 0.0;
  double smooth = 0.0;

  double total() const { return collision + abrupt + unsafe + safe + smooth; }
};

// Reward structure: an event penalty for collisions, a penalty proportional to
// the braking-pressure change, and time-occupancy terms (scaled by dt so that
// a full episode in the safe band accumulates horizon_s * delta).
inline RewardTerms reward_terms(const RewardWeights& w, bool collided, double delta_pressure,
                                bool braking, double distance, double d_min, double d_max,
                                double dt, double smooth_threshold = 0.3) {
  RewardTerms t;
  if (collided) t.collision = -w.alpha;
  t.abrupt = -w.beta * std::abs(delta_pressure);
  if (distance < d_min) t.unsafe = -w.kappa * dt;
  if (distance >= d_min && distance <= d_max) t.safe = w.delta * dt;
  if (braking && std::abs(delta_pressure) <= smooth_threshold) t.smooth = w.epsilon_r * dt;
  return t;
}

// Eq. 6-7 style summary: per-cluster means, then the average of cluster means.
inline ClusterSummary summarize_clusters(
    const std::vector<std::vector<std::array<double, 2>>>& clusters) {
  ClusterSummary s;
  if (clusters.empty()) return s;
  double d = 0.0, v = 0.0;
  for (const auto& cluster : clusters) {
    double cd = 0.0, cv = 0.0;
    for (const auto& p : cluster) {
      cd += p[0];
      cv += p[1];
    }
    d += cd / double(cluster.size());
    v += cv / double(cluster.size());
  }
  s.d_rel = d / double(clusters.size());
  s.v_rel = v / double(clusters.size());
  s.cluster_count = static_cast<int>(clusters.size());
  s.detected = true;
  return s;
}

// Density clustering over (depth, velocity); noise points are discarded. A
// single detection point is used directly without clustering. An empty or
// all-noise frame yields a "no detection" summary with the max-range sentinel.
inline ClusterSummary cluster_radar(const RadarFrame& frame, const DbscanParams& params,
                                    double max_range_sentinel) {
  ClusterSummary none;
  none.d_rel = max_range_sentinel;
  none.v_rel = 0.0;
  none.detected = false;
  if (frame.points.empty()) return none;
  if (frame.points.size() == 1) {
    return {frame.points[0].depth, frame.points[0].relative_velocity, 1, true};
  }
  std::vector<std::array<double, 2>> pts;
  pts.reserve(frame.points.size());
  for (const auto& p : frame.points) pts.push_back({p.depth, p.relative_velocity});
  std::vector<int> label = dbscan(pts, params);
  int k = 0;
  for (int l : label) k = std::max(k, l + 1);
  if (k == 0) return none;
  std::vector<std::vector<std::array<double, 2>>> clusters(k);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (label[i] >= 0) clusters[label[i]].push_back(pts[i]);
  }
  return summarize_clusters(clusters);
}

// Phase labels, in the order the definitions are given: opening gap counts as
// acceleration; closing below the safe minimum as braking; near-zero relative
// speed inside the band as following; anything else as a transition.
inline Phase label_phase(const Observation& obs, double max_range_sentinel,
                         double follow_eps_v = 0.5) {
  if (obs.d_rel >= max_range_sentinel) return Phase::transition;  // no detection
  double d_min = safe_distance_min(obs.speed);
  double d_max = safe_distance_max(obs.speed);
  if (obs.v_rel < 0.0) return Phase::acceleration;
  if (obs.d_rel < d_min && obs.v_rel > 0.0) return Phase::braking;
  if (std::abs(obs.v_rel) <= follow_eps_v && obs.d_rel >= d_min && obs.d_rel <= d_max) {
    return Phase::following;
  }
  return Phase::transition;
}

// ---------------------------------------------------------------------------
// Scenario: everything needed to replay an episode, independent of the RNG.

struct LeadSegment {
  double duration_s = 0.0;
  double speed = 0.0;
};

struct ThetaInterval {
  bool drowsy = false;
  double duration_s = 0.0;
};

struct Scenario {
  std::uint64_t seed = 0;  // drives the radar noise stream
  double init_spacing = 30.0;
  std::vector<LeadSegment> lead_profile;
  std::vector<ThetaInterval> theta_schedule;

  void save(const std::filesystem::path& path) const {
    std::string out;
    out += "seed=" + std::to_string(seed) + "\n";
    out += "init_spacing=" + format_double(init_spacing, 17) + "\n";
    std::string profile;
    for (const auto& seg : lead_profile) {
      if (!profile.empty()) profile += ',';
      profile += format_double(seg.duration_s, 17) + ":" + format_double(seg.speed, 17);
    }
    out += "lead_profile=" + profile + "\n";
    std::string schedule;
    for (const auto& iv : theta_schedule) {
      if (!schedule.empty()) schedule += ',';
      schedule += std::string(iv.drowsy ? "d" : "a") + ":" + format_double(iv.duration_s, 17);
    }
    out += "theta_schedule=" + schedule + "\n";
    write_file_atomic(path, out);
  }

  static Scenario load(const std::filesystem::path& path) {
    auto kv = read_kv(path);
    Scenario s;
    s.seed = static_cast<std::uint64_t>(parse_long(kv.at("seed"), path.string()));
    s.init_spacing = parse_double(kv.at("init_spacing"), path.string());
    auto split = [](const std::string& text) {
      std::vector<std::string> parts;
      std::string cur;
      for (char c : text) {
        if (c == ',') {
          parts.push_back(cur);
          cur.clear();
        } else {
          cur += c;
        }
      }
      if (!cur.empty()) parts.push_back(cur);
      return parts;
    };
    for (const auto& part : split(kv.at("lead_profile"))) {
      auto colon = part.find(':');
      if (colon == std::string::npos) throw IoError(path.string() + ": bad lead_profile");
      s.lead_profile.push_back({parse_double(part.substr(0, colon), path.string()),
                                parse_double(part.substr(colon + 1), path.string())});
    }
    for (const auto& part : split(kv.at("theta_schedule"))) {
      auto colon = part.find(':');
      if (colon == std::string::npos) throw IoError(path.string() + ": bad theta_schedule");
      s.theta_schedule.push_back(
          {part.substr(0, colon) == "d", parse_double(part.substr(colon + 1), path.string())});
    }
    return s;
  }
};

enum class DrowsyMode { off, scheduled, live };

inline Scenario sample_scenario(const EnvConfig& cfg, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "scenario"));
  Scenario s;
  s.seed = seed;
  s.init_spacing = rng.uniform(cfg.spacing_min, cfg.spacing_max);
  int n_seg = cfg.lead_segments_min +
              rng.uniform_int(cfg.lead_segments_max - cfg.lead_segments_min + 1);
  std::vector<double> cuts{0.0, cfg.horizon_s};
  for (int i = 0; i < n_seg - 1; ++i) cuts.push_back(rng.uniform(0.0, cfg.horizon_s));
  std::sort(cuts.begin(), cuts.end());
  for (int i = 0; i < n_seg; ++i) {
    s.lead_profile.push_back(
        {cuts[i + 1] - cuts[i], rng.uniform(cfg.lead_speed_min, cfg.lead_speed_max)});
  }
  // alternating alert/drowsy intervals covering the horizon, starting alert
  double t = 0.0;
  bool drowsy = false;
  while (t < cfg.horizon_s) {
    double mean = drowsy ? cfg.drowsy_mean_drowsy_s : cfg.drowsy_mean_alert_s;
    double dur = std::max(cfg.dt, rng.exponential(mean));
    s.theta_schedule.push_back({drowsy, dur});
    t += dur;
    drowsy = !drowsy;
  }
  return s;
}

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  bool collided = false;
  bool unsafe_this_step = false;
  Phase phase = Phase::transition;
  RewardTerms terms;
  double effective_throttle = 0.0;
  double effective_brake = 0.0;
  double true_gap = 0.0;
};

// Deterministic longitudinal car-following environment. One lead vehicle on a
// straight road, noisy radar clustered with DBSCAN, and a drowsiness-delayed
// actuation queue: while theta = 1 a newly selected action takes effect
// delay_s later, the previously effective action persisting in between.
class LongitudinalEnv {
 public:
  explicit LongitudinalEnv(const EnvConfig& cfg, const ThetaBox* live_theta = nullptr)
      : cfg_(cfg), live_theta_(live_theta), radar_rng_(0) {
    cfg_.validate();
    if (cfg_.radar_rate_hz * cfg_.dt < 1.0) throw ConfigError("env: radar rate too low");
  }

  const EnvConfig& config() const { return cfg_; }

  Observation reset(std::uint64_t seed, DrowsyMode mode) {
    return reset(sample_scenario(cfg_, seed), mode);
  }

  Observation reset(const Scenario& scenario, DrowsyMode mode) {
    if (scenario.init_spacing < cfg_.collision_distance) {
      throw Error("env: initial spacing below collision distance");
    }
    scenario_ = scenario;
    mode_ = mode;
    radar_rng_ = Rng(derive_seed(scenario.seed, "radar"));
    step_index_ = 0;
    done_ = false;
    collided_ = false;
    ego_ = {0.0, 0.0, 0.0};
    lead_position_ = scenario.init_spacing;
    pending_.clear();
    effective_action_ = Action{4};
    prev_effective_brake_ = 0.0;
    prev_action_index_ = 4;

    int theta = theta_at(0.0);
    ClusterSummary summary = sense();
    last_obs_ = {ego_.speed, prev_action_index_, summary.d_rel, summary.v_rel, theta};
    return last_obs_;
  }

  StepResult step(const Action& action) {
    if (done_) throw Error("env: step() called after episode end");
    const double t = step_index_ * cfg_.dt;
    const int theta_now = last_obs_.theta;

    // actuation event queue: drowsiness defers the newly selected action
    int effect_step = step_index_ + (theta_now == 1 ? cfg_.delay_steps() : 0);
    pending_.push_back({effect_step, step_index_, action});
    std::stable_sort(pending_.begin(), pending_.end(), [](const Pending& a, const Pending& b) {
      return a.effect_step != b.effect_step ? a.effect_step < b.effect_step
                                            : a.command_step < b.command_step;
    });
    while (!pending_.empty() && pending_.front().effect_step <= step_index_) {
      effective_action_ = pending_.front().action;
      pending_.pop_front();
    }

    const double throttle = effective_action_.throttle();
    const double brake = effective_action_.brake();
    double accel = throttle * cfg_.max_accel - brake * cfg_.max_decel;

    // trapezoidal position update; exact for constant acceleration
    double v_old = ego_.speed;
    double v_new = std::max(0.0, v_old + accel * cfg_.dt);
    ego_.position += 0.5 * (v_old + v_new) * cfg_.dt;
    ego_.speed = v_new;
    ego_.commanded_accel = accel;

    double lead_speed = lead_speed_at(t + cfg_.dt);
    lead_position_ += lead_speed * cfg_.dt;

    ++step_index_;
    double gap = lead_position_ - ego_.position;
    bool collided_now = gap <= cfg_.collision_distance;
    collided_ = collided_ || collided_now;

    ClusterSummary summary = sense();
    double new_theta = theta_at(step_index_ * cfg_.dt);

    double d_min = safe_distance_min(ego_.speed);
    double d_max = safe_distance_max(ego_.speed);
    double delta_pressure = brake - prev_effective_brake_;
    RewardTerms terms = reward_terms(cfg_.rewards, collided_now, delta_pressure, brake > 0.0, gap,
                                     d_min, d_max, cfg_.dt, cfg_.smooth_brake_threshold);
    prev_effective_brake_ = brake;
    prev_action_index_ = action.index;

    done_ = collided_ || step_index_ >= cfg_.horizon_steps();

    StepResult result;
    result.observation = {ego_.speed, prev_action_index_, summary.d_rel, summary.v_rel,
                          static_cast<int>(new_theta)};
    result.reward = terms.total();
    result.done = done_;
    result.collided = collided_now;
    result.unsafe_this_step = gap < d_min;
    result.phase = label_phase(result.observation, cfg_.radar_max_range, cfg_.follow_eps_v);
    result.terms = terms;
    result.effective_throttle = throttle;
    result.effective_brake = brake;
    result.true_gap = gap;
    last_obs_ = result.observation;
    return result;
  }

  bool done() const { return done_; }
  int step_index() const { return step_index_; }
  const Scenario& scenario() const { return scenario_; }
  double true_gap() const { return lead_position_ - ego_.position; }
  double ego_speed() const { return ego_.speed; }
  double ego_position() const { return ego_.position; }

  // exposed for tests
  RadarFrame synthesize_radar(double gap, double closing_speed) {
    RadarFrame frame;
    const int cap = static_cast<int>(cfg_.radar_rate_hz * cfg_.dt);
    int n = std::min(radar_rng_.poisson(cfg_.radar_rate_hz * cfg_.dt), cap);
    bool in_range = gap > 0.0 && gap <= cfg_.radar_max_range;
    for (int i = 0; i < n; ++i) {
      bool clutter = radar_rng_.uniform() < cfg_.radar_clutter_frac;
      RadarPoint p;
      if (clutter || !in_range) {
        p.depth = radar_rng_.uniform(1.0, cfg_.radar_max_range);
        p.relative_velocity = radar_rng_.uniform(-cfg_.lead_speed_max, cfg_.lead_speed_max);
      } else {
        p.depth = gap + radar_rng_.normal(0.0, cfg_.radar_sigma_depth);
        p.relative_velocity = closing_speed + radar_rng_.normal(0.0, cfg_.radar_sigma_vel);
      }
      p.azimuth = radar_rng_.normal(0.0, 0.01);
      if (p.depth > 0.0) frame.points.push_back(p);
    }
    return frame;
  }

 private:
  struct Pending {
    int effect_step = 0;
    int command_step = 0;
    Action action;
  };

  double lead_speed_at(double t) const {
    double acc = 0.0;
    for (const auto& seg : scenario_.lead_profile) {
      acc += seg.duration_s;
      if (t < acc) return seg.speed;
    }
    return scenario_.lead_profile.empty() ? 0.0 : scenario_.lead_profile.back().speed;
  }

  int theta_at(double t) const {
    switch (mode_) {
      case DrowsyMode::off: return 0;
      case DrowsyMode::live: return live_theta_ ? live_theta_->read().theta : 0;
      case DrowsyMode::scheduled: {
        double acc = 0.0;
        for (const auto& iv : scenario_.theta_schedule) {
          acc += iv.duration_s;
          if (t < acc) return iv.drowsy ? 1 : 0;
        }
        return 0;
      }
    }
    return 0;
  }

  ClusterSummary sense() {
    double gap = lead_position_ - ego_.position;
    double closing = ego_.speed - lead_speed_at(step_index_ * cfg_.dt);
    RadarFrame frame = synthesize_radar(gap, closing);
    return cluster_radar(frame, cfg_.dbscan, cfg_.radar_max_range);
  }

  EnvConfig cfg_;
  const ThetaBox* live_theta_ = nullptr;
  Scenario scenario_;
  DrowsyMode mode_ = DrowsyMode::off;
  Rng radar_rng_;
  int step_index_ = 0;
  bool done_ = false;
  bool collided_ = false;
  VehicleState ego_;
  double lead_position_ = 0.0;
  std::deque<Pending> pending_;
  Action effective_action_{4};
  double prev_effective_brake_ = 0.0;
  int prev_action_index_ = 4;
  Observation last_obs_;
};

// Step log CSV, one row per step, fixed column order.
inline std::string step_log_header() {
  return "t,v,d_rel,v_rel,theta,action,throttle,brake,reward,phase,collided";
}

inline std::string step_log_row(double t, const StepResult& r, int action_index) {
  std::string row = format_double(t, 12);
  row += ',' + format_double(r.observation.speed, 12);
  row += ',' + format_double(r.observation.d_rel, 12);
  row += ',' + format_double(r.observation.v_rel, 12);
  row += ',' + std::to_string(r.observation.theta);
  row += ',' + std::to_string(action_index);
  row += ',' + format_double(r.effective_throttle, 12);
  row += ',' + format_double(r.effective_brake, 12);
  row += ',' + format_double(r.reward, 12);
  row += ',';
  row += phase_name(r.phase);
  row += ',' + std::to_string(r.collided ? 1 : 0);
  return row;
}

}  // namespace vigil
