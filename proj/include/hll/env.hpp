#pragma once

// Episodic environment: observation assembly, action mapping, seven-term
// energy-aware reward, termination, domain randomization and the lockstep
// vectorized wrapper.

#include <hll/sim.hpp>

#include <array>
#include <cstdio>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace hll {

enum class Mode { kHybrid, kWheelsOnly, kPropsOnly };

inline const char* to_string(Mode m) {
  switch (m) {
    case Mode::kHybrid: return "hybrid";
    case Mode::kWheelsOnly: return "wheels_only";
    case Mode::kPropsOnly: return "props_only";
  }
  return "?";
}

inline Mode mode_from_string(const std::string& s) {
  if (s == "hybrid") return Mode::kHybrid;
  if (s == "wheels_only" || s == "wheels-only") return Mode::kWheelsOnly;
  if (s == "props_only" || s == "props-only" || s == "propellers_only") return Mode::kPropsOnly;
  throw ConfigError("unknown mode '" + s + "'");
}

enum class Outcome { kRunning, kGoal, kPropCollision, kOutOfBounds, kTimeout, kSimFault };

inline const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::kRunning: return "running";
    case Outcome::kGoal: return "goal";
    case Outcome::kPropCollision: return "prop_collision";
    case Outcome::kOutOfBounds: return "out_of_bounds";
    case Outcome::kTimeout: return "timeout";
    case Outcome::kSimFault: return "sim_fault";
  }
  return "?";
}

inline constexpr int kActionDim = 6;
using Action = std::array<double, kActionDim>;

// ---------------------------------------------------------------------------
// Goal command

struct GoalCommand {
  double dx = 1.0;  ///< body-frame unit direction to goal
  double dy = 0.0;
  double yaw_rate = 0.0;  ///< sin(alpha)
  double heading_error = 0.0;  ///< alpha, positive when the goal is to the left
};

inline GoalCommand goal_command(const Vec2& robot, const Vec2& goal, double yaw, double eps = 1e-6) {
  const Vec2 d = goal - robot;
  const Vec2 dw = d / (d.norm() + eps);
  const double c = std::cos(yaw), s = std::sin(yaw);
  GoalCommand g;
  g.dx = c * dw.x() + s * dw.y();
  g.dy = -s * dw.x() + c * dw.y();
  g.heading_error = std::atan2(g.dy, g.dx);
  g.yaw_rate = std::sin(g.heading_error);
  return g;
}

// ---------------------------------------------------------------------------
// Action mapping

inline constexpr double kWheelActionScale = 500.0;  ///< rad/s per unit action
inline constexpr double kPropActionScale = 500.0;   ///< rad/s per unit action

inline Action clamp_action(const Action& a) {
  Action out;
  for (int i = 0; i < kActionDim; ++i) {
    const double v = std::isfinite(a[i]) ? a[i] : 0.0;
    out[i] = clamp(v, -1.0, 1.0);
  }
  return out;
}

inline Action apply_mode_mask(Action a, Mode mode) {
  if (mode == Mode::kWheelsOnly) a[4] = a[5] = 0.0;
  if (mode == Mode::kPropsOnly) a[0] = a[1] = 0.0;
  return a;
}

/// a = (wheel L, wheel R, servo L, servo R, prop L, prop R) in [-1, 1].
inline ActuatorCommand map_action(const Action& a) {
  ActuatorCommand c;
  c.wheel_rate_ref = Vec2(kWheelActionScale * a[0], kWheelActionScale * a[1]);
  c.servo_angle_ref = Vec2(0.5 * kPi * a[2], 0.5 * kPi * a[3]);
  const double w1 = kPropActionScale * a[4];
  const double w2 = -kPropActionScale * a[5];
  c.pwm_prop = Vec2(omega_to_pwm(w1), omega_to_pwm(w2));
  return c;
}

/// Action that maps onto a command, used to report commands from
/// non-policy controllers in the observation.
inline Action command_to_action(const ActuatorCommand& c) {
  return {c.wheel_rate_ref[0] / kWheelActionScale,
          c.wheel_rate_ref[1] / kWheelActionScale,
          c.servo_angle_ref[0] / (0.5 * kPi),
          c.servo_angle_ref[1] / (0.5 * kPi),
          (c.pwm_prop[0] - kPwmMin) / (kPwmMax - kPwmMin),
          (c.pwm_prop[1] - kPwmMin) / (kPwmMax - kPwmMin)};
}

// ---------------------------------------------------------------------------
// Reward

struct RewardParams {
  double w_align = 0.2;
  double w_target = 1.0;
  double w_energy = 0.05;
  double w_heading = 0.3;
  double w_tilt = 0.3;
  double w_speed = 0.1;
  double w_term = 1.0;
  double v_ref = 2.0;      ///< m/s
  double e_ref = 20.0;     ///< J
  double v_max = 3.0;      ///< m/s
  double k_pitch = 3.0;
  double k_roll = 7.0;
  double goal_reward = 10.0;
  double failure_penalty = 10.0;
};

struct RewardBreakdown {
  double r_align = 0.0;
  double r_target = 0.0;
  double r_energy = 0.0;
  double r_heading = 0.0;
  double r_tilt = 0.0;
  double r_speed = 0.0;
  double r_term = 0.0;
  double energy_step = 0.0;  ///< J
  double p_prop = 0.0;       ///< W
  double p_wheel = 0.0;      ///< W
  double weighted_total = 0.0;
};

struct RewardInputs {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Vec3 gravity_body = Vec3(0.0, 0.0, -1.0);
  Vec2 goal = Vec2::Zero();
  double heading_error = 0.0;
  double sigma_goal = 1.0;
  double energy = 0.0;  ///< J this control step
};

inline double weighted_total(const RewardBreakdown& r, const RewardParams& p) {
  return p.w_align * r.r_align + p.w_target * r.r_target + p.w_energy * r.r_energy + p.w_heading * r.r_heading +
         p.w_tilt * r.r_tilt + p.w_speed * r.r_speed + p.w_term * r.r_term;
}

inline RewardBreakdown compute_reward(const RewardInputs& in, const RewardParams& p, double r_term = 0.0) {
  RewardBreakdown r;
  const Vec2 to_goal = in.goal - in.position.head<2>();
  const double dist = to_goal.norm();
  const Vec2 vxy = in.velocity.head<2>();
  const double speed_xy = vxy.norm();
  if (speed_xy > 1e-12 && dist > 1e-12) {
    const double cosang = clamp(vxy.dot(to_goal) / (speed_xy * dist), -1.0, 1.0);
    r.r_align = cosang * clamp(speed_xy / p.v_ref, 0.0, 1.0);
  }
  r.r_target = std::exp(-(dist * dist) / (in.sigma_goal * in.sigma_goal));
  r.r_energy = std::exp(-in.energy / p.e_ref) - 1.0;
  r.r_heading = -std::abs(std::sin(in.heading_error));
  r.r_tilt = std::exp(-p.k_pitch * std::sqrt(std::abs(in.gravity_body.x())) -
                      p.k_roll * std::sqrt(std::abs(in.gravity_body.y()))) - 1.0;
  const double over = std::max(0.0, in.velocity.norm() - p.v_max);
  r.r_speed = std::exp(-over * over) - 1.0;
  r.r_term = r_term;
  r.energy_step = in.energy;
  r.weighted_total = weighted_total(r, p);
  return r;
}

// ---------------------------------------------------------------------------
// Termination

struct TerminationParams {
  double goal_tolerance = 0.2;  ///< m
  double z_limit = 3.0;         ///< m
  double xy_limit = 10.0;       ///< m from tile centre
};

struct TerminationInput {
  Vec3 position = Vec3::Zero();
  Vec2 goal = Vec2::Zero();
  bool prop_collision = false;
  bool sim_fault = false;
  int step_count = 0;
  int timeout_steps = 750;
};

/// Failure events take precedence over goal, goal over timeout.
inline std::pair<Outcome, double> check_termination(const TerminationInput& in, const TerminationParams& p,
                                                    double goal_reward = 10.0, double failure_penalty = 10.0) {
  if (in.sim_fault || !in.position.allFinite()) return {Outcome::kSimFault, -failure_penalty};
  if (in.prop_collision) return {Outcome::kPropCollision, -failure_penalty};
  if (std::abs(in.position.z()) > p.z_limit || std::abs(in.position.x()) > p.xy_limit ||
      std::abs(in.position.y()) > p.xy_limit)
    return {Outcome::kOutOfBounds, -failure_penalty};
  if ((in.position.head<2>() - in.goal).norm() < p.goal_tolerance) return {Outcome::kGoal, goal_reward};
  if (in.step_count >= in.timeout_steps) return {Outcome::kTimeout, 0.0};
  return {Outcome::kRunning, 0.0};
}

// ---------------------------------------------------------------------------
// Configuration

struct RandomizationSpec {
  double mass = 0.2;
  double inertia = 0.2;
  double friction = 0.2;
  double thrust = 0.2;
  double servo_rate = 0.2;
  double roughness = 0.005;  ///< m, amplitude drawn from [0, value] per reset

  void validate() const {
    for (double r : {mass, inertia, friction, thrust, servo_rate})
      if (!(r >= 0.0 && r < 1.0)) throw ConfigError("randomization ranges must lie in [0, 1)");
    if (roughness < 0.0) throw ConfigError("roughness amplitude must be nonnegative");
  }
};

struct ObservationScales {
  double wheel_rate = 500.0;  ///< rad/s
  double lin_vel = 5.0;       ///< m/s
  double ang_vel = 10.0;      ///< rad/s
};

struct EnvConfig {
  RobotModel robot;
  TerrainSpec terrain;
  bool random_difficulty = false;
  SpawnOptions spawn;
  double curriculum_min_dist = 0.5;
  double curriculum_max_cap = 10.0;
  RewardParams reward;
  TerminationParams termination;
  RandomizationSpec randomization;
  ObservationScales scales;
  Mode mode = Mode::kHybrid;
  double dt = 0.005;  ///< s, physics step
  int decimation = 4;
  int history = 3;
  int timeout_steps = 750;
  double scan_spacing = 0.15;  ///< m
  double scan_range = 1.0;     ///< m
  double sigma_goal_floor = 0.5;  ///< m
  bool realized_wheel_power = false;
  std::string terrain_file;  ///< grid file used instead of the generator when set

  double control_dt() const { return dt * decimation; }

  void validate() const {
    robot.validate();
    terrain.validate();
    randomization.validate();
    if (!(dt > 0.0) || decimation < 1) throw ConfigError("dt and decimation must be positive");
    if (history < 1) throw ConfigError("contact history must be at least 1");
    if (timeout_steps < 1) throw ConfigError("timeout must be at least one step");
    if (!(scan_spacing > 0.0) || !(scan_range > 0.0)) throw ConfigError("scan geometry must be positive");
    if (!(sigma_goal_floor > 0.0)) throw ConfigError("goal kernel floor must be positive");
  }
};

inline constexpr int kScanSide = 6;

/// Observation layout: named slices of the flat vector.
struct ObservationLayout {
  int history = 3;
  int wheel_rates() const { return 0; }
  int lin_vel() const { return 2; }
  int ang_vel() const { return 5; }
  int gravity() const { return 8; }
  int contacts() const { return 11; }
  int goal() const { return 11 + 2 * history; }
  int scan() const { return goal() + 3; }
  int prev_action() const { return scan() + kScanSide * kScanSide; }
  int size() const { return prev_action() + kActionDim; }
};

inline int observation_dim(int history) { return ObservationLayout{history}.size(); }

// ---------------------------------------------------------------------------
// Single environment

struct EpisodeState {
  Vec2 goal = Vec2::Zero();
  double sigma_goal = 1.0;
  int step_count = 0;
  int timeout_steps = 750;
  std::uint64_t curriculum_k = 0;
  double energy = 0.0;        ///< J accumulated
  double total_reward = 0.0;
  double peak_abs_pitch = 0.0;  ///< rad
  double difficulty = 0.0;
  double roughness = 0.0;
  RobotModel params;  ///< randomized snapshot
};

struct StepResult {
  RewardBreakdown reward;
  Outcome outcome = Outcome::kRunning;
  bool done() const { return outcome != Outcome::kRunning; }
};

/// One row of the per-step episode record (control rate).
struct StepRecord {
  double t = 0.0;
  Vec3 position = Vec3::Zero();
  EulerZYX attitude;
  Vec3 velocity = Vec3::Zero();
  ActuatorCommand command;
  double p_prop = 0.0;
  double p_wheel = 0.0;
  double energy_cum = 0.0;
  double reward = 0.0;
  Outcome outcome = Outcome::kRunning;
};

inline const char* kEpisodeCsvHeader =
    "t,x,y,z,pitch,roll,yaw,vx,vy,vz,pwm1,pwm2,w1_ref,w2_ref,s1,s2,P_prop,P_wheel,E_cum,r_total,outcome";

inline void write_step_record(std::ostream& os, const StepRecord& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "%.6f,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%s\n",
                r.t, r.position.x(), r.position.y(), r.position.z(), r.attitude.pitch, r.attitude.roll,
                r.attitude.yaw, r.velocity.x(), r.velocity.y(), r.velocity.z(), r.command.pwm_prop[0],
                r.command.pwm_prop[1], r.command.wheel_rate_ref[0], r.command.wheel_rate_ref[1],
                r.command.servo_angle_ref[0], r.command.servo_angle_ref[1], r.p_prop, r.p_wheel, r.energy_cum,
                r.reward, to_string(r.outcome));
  os << buf;
}

class Env {
 public:
  Env(EnvConfig cfg, std::uint64_t seed, std::shared_ptr<const HeightField> shared_field = nullptr)
      : cfg_(std::move(cfg)), rng_(seed), history_(cfg_.history), shared_field_(std::move(shared_field)) {
    cfg_.validate();
    if (!shared_field_ && !cfg_.terrain_file.empty())
      shared_field_ = std::make_shared<const HeightField>(load_height_field(cfg_.terrain_file));
    obs_.assign(static_cast<std::size_t>(observation_dim(cfg_.history)), 0.0f);
  }

  const EnvConfig& config() const { return cfg_; }
  int obs_dim() const { return static_cast<int>(obs_.size()); }
  const std::vector<float>& observation() const { return obs_; }
  const SimState& sim() const { return sim_; }
  const EpisodeState& episode() const { return ep_; }
  const HeightField& field() const { return *field_; }
  const StepRecord& last_record() const { return record_; }
  bool needs_reset() const { return needs_reset_; }
  std::uint64_t episodes_started() const { return curriculum_k_; }

  /// Starts a new episode and returns its first observation.
  const std::vector<float>& reset() {
    const RandomizationSpec& rz = cfg_.randomization;
    RobotModel m = cfg_.robot;
    auto factor = [&](double range) { return 1.0 + range * (2.0 * rng_.uniform() - 1.0); };
    m.inertial.mass *= factor(rz.mass);
    m.inertial.inertia *= factor(rz.inertia);
    const double friction_factor = factor(rz.friction);
    m.thrust_scale *= factor(rz.thrust);
    m.servo.rate_limit *= factor(rz.servo_rate);

    TerrainSpec ts = cfg_.terrain;
    if (cfg_.random_difficulty) ts.difficulty = rng_.uniform(ts.difficulty_min, ts.difficulty_max);
    ts.roughness = rz.roughness > 0.0 ? rng_.uniform(0.0, rz.roughness) : cfg_.terrain.roughness;
    ts.seed = rng_.next_u64();
    const bool shared =
        shared_field_ && (!cfg_.terrain_file.empty() || (!cfg_.random_difficulty && rz.roughness == 0.0));
    if (shared) {
      field_ = shared_field_;
      ts.roughness = cfg_.terrain.roughness;
    } else {
      field_ = std::make_shared<const HeightField>(generate_terrain(ts));
    }
    m.friction = ts.friction * friction_factor;

    CurriculumState cur{curriculum_k_, cfg_.curriculum_min_dist, cfg_.curriculum_max_cap};
    const SpawnTarget st = sample_spawn_and_target(ts, cur, rng_, cfg_.spawn);
    ++curriculum_k_;

    ep_ = EpisodeState{};
    ep_.goal = st.target_xy;
    ep_.sigma_goal = std::max(st.distance, cfg_.sigma_goal_floor);
    ep_.timeout_steps = cfg_.timeout_steps;
    ep_.curriculum_k = cur.episode;
    ep_.difficulty = ts.difficulty;
    ep_.roughness = ts.roughness;
    ep_.params = m;

    sim_ = SimState{};
    RobotState& r = sim_.robot;
    r.orientation = rot_z(st.spawn_yaw);
    double ground = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < 2; ++i) {
      const Vec3 hub = r.orientation * m.inertial.wheel_arm[static_cast<std::size_t>(i)];
      ground = std::max(ground, field_->height(st.spawn_xy + hub.head<2>()));
    }
    r.position = Vec3(st.spawn_xy.x(), st.spawn_xy.y(), rest_height(m, ground));
    sim_.reset_actuators(m);
    history_.clear();
    prev_action_.fill(0.0);
    record_ = StepRecord{};
    record_.position = r.position;
    record_.attitude = euler_zyx(r.orientation);
    needs_reset_ = false;
    build_observation();
    return obs_;
  }

  /// Policy step: clamp, mask, map, simulate.
  StepResult step(const Action& raw) {
    const Action a = apply_mode_mask(clamp_action(raw), cfg_.mode);
    return advance(map_action(a).clamped(), a);
  }

  /// Low-level command step for scripted and decoupled controllers.
  StepResult step_command(const ActuatorCommand& raw) {
    ActuatorCommand c = raw.clamped();
    if (cfg_.mode == Mode::kWheelsOnly) c.pwm_prop = Vec2::Constant(kPwmMin);
    if (cfg_.mode == Mode::kPropsOnly) c.wheel_rate_ref.setZero();
    return advance(c, command_to_action(c));
  }

 private:
  StepResult advance(const ActuatorCommand& cmd, const Action& reported) {
    if (needs_reset_) throw std::logic_error("step called on a finished episode; reset first");
    StepResult res;
    const double cdt = cfg_.control_dt();
    PowerSplit power = electrical_power(cmd, ep_.params.power);
    bool fault = false;
    bool prop_hit = false;
    double wheel_power_realized = 0.0;
    try {
      for (int k = 0; k < cfg_.decimation; ++k) {
        physics_substep(sim_, ep_.params, *field_, cmd, cfg_.dt);
        if (cfg_.realized_wheel_power) {
          ActuatorCommand realized = cmd;
          realized.wheel_rate_ref = sim_.robot.wheel_rates;
          wheel_power_realized += electrical_power(realized, ep_.params.power).wheel;
        }
        prop_hit = prop_hit || sim_.contact.prop_collision;
      }
    } catch (const NonFiniteState&) {
      fault = true;
    }
    if (cfg_.realized_wheel_power) power.wheel = wheel_power_realized / cfg_.decimation;
    const double energy = (power.prop + power.wheel) * cdt;

    ++ep_.step_count;
    history_.push(sim_.contact.flags());
    prev_action_ = reported;

    TerminationInput ti;
    ti.position = sim_.robot.position;
    ti.goal = ep_.goal;
    ti.prop_collision = prop_hit;
    ti.sim_fault = fault || !sim_.robot.finite();
    ti.step_count = ep_.step_count;
    ti.timeout_steps = ep_.timeout_steps;
    const auto [outcome, r_term] = check_termination(ti, cfg_.termination, cfg_.reward.goal_reward, cfg_.reward.failure_penalty);

    RewardInputs ri;
    if (!ti.sim_fault) {
      ri.position = sim_.robot.position;
      ri.velocity = sim_.robot.velocity;
      ri.gravity_body = projected_gravity(sim_.robot);
      ri.heading_error = heading().heading_error;
    }
    ri.goal = ep_.goal;
    ri.sigma_goal = ep_.sigma_goal;
    ri.energy = energy;
    res.reward = compute_reward(ri, cfg_.reward, r_term);
    res.reward.p_prop = power.prop;
    res.reward.p_wheel = power.wheel;
    res.outcome = outcome;

    ep_.energy += energy;
    ep_.total_reward += res.reward.weighted_total;
    if (!ti.sim_fault)
      ep_.peak_abs_pitch = std::max(ep_.peak_abs_pitch, std::abs(euler_zyx(sim_.robot.orientation).pitch));

    record_.t = ep_.step_count * cdt;
    record_.command = cmd;
    record_.p_prop = power.prop;
    record_.p_wheel = power.wheel;
    record_.energy_cum = ep_.energy;
    record_.reward = res.reward.weighted_total;
    record_.outcome = outcome;
    if (!ti.sim_fault) {
      record_.position = sim_.robot.position;
      record_.attitude = euler_zyx(sim_.robot.orientation);
      record_.velocity = sim_.robot.velocity;
    }

    if (ti.sim_fault) {
      std::fill(obs_.begin(), obs_.end(), 0.0f);
    } else {
      build_observation();
    }
    needs_reset_ = res.done();
    return res;
  }

  GoalCommand heading() const {
    const EulerZYX e = euler_zyx(sim_.robot.orientation);
    return goal_command(sim_.robot.position.head<2>(), ep_.goal, e.yaw);
  }

  void build_observation() {
    const ObservationLayout L{cfg_.history};
    const RobotState& r = sim_.robot;
    const ObservationScales& sc = cfg_.scales;
    auto put = [&](int idx, double v) { obs_[static_cast<std::size_t>(idx)] = static_cast<float>(v); };
    put(L.wheel_rates() + 0, r.wheel_rates[0] / sc.wheel_rate);
    put(L.wheel_rates() + 1, r.wheel_rates[1] / sc.wheel_rate);
    const Vec3 vb = r.orientation.transpose() * r.velocity;
    for (int i = 0; i < 3; ++i) put(L.lin_vel() + i, vb[i] / sc.lin_vel);
    for (int i = 0; i < 3; ++i) put(L.ang_vel() + i, r.angular_velocity[i] / sc.ang_vel);
    const Vec3 g = projected_gravity(r);
    for (int i = 0; i < 3; ++i) put(L.gravity() + i, g[i]);
    for (int k = 0; k < history_.length(); ++k) {
      put(L.contacts() + 2 * k, history_[k][0]);
      put(L.contacts() + 2 * k + 1, history_[k][1]);
    }
    const GoalCommand gc = heading();
    put(L.goal() + 0, gc.dx);
    put(L.goal() + 1, gc.dy);
    put(L.goal() + 2, gc.yaw_rate);

    const double yaw = euler_zyx(r.orientation).yaw;
    const double c = std::cos(yaw), s = std::sin(yaw);
    const double half = 0.5 * (kScanSide - 1);
    for (int j = 0; j < kScanSide; ++j) {
      for (int i = 0; i < kScanSide; ++i) {
        const double bx = (i - half) * cfg_.scan_spacing;
        const double by = (j - half) * cfg_.scan_spacing;
        const Vec2 p = r.position.head<2>() + Vec2(c * bx - s * by, s * bx + c * by);
        const double dh = (field_->height(p) - r.position.z()) / cfg_.scan_range;
        put(L.scan() + j * kScanSide + i, clamp(dh, -1.0, 1.0));
      }
    }
    for (int i = 0; i < kActionDim; ++i) put(L.prev_action() + i, prev_action_[static_cast<std::size_t>(i)]);
  }

  EnvConfig cfg_;
  Rng rng_;
  ContactHistory history_;
  std::shared_ptr<const HeightField> shared_field_;
  std::shared_ptr<const HeightField> field_;
  SimState sim_;
  EpisodeState ep_;
  Action prev_action_{};
  std::vector<float> obs_;
  StepRecord record_;
  std::uint64_t curriculum_k_ = 0;
  bool needs_reset_ = true;
};

// ---------------------------------------------------------------------------
// Vectorized wrapper

struct EpisodeSummary {
  std::size_t env = 0;
  Outcome outcome = Outcome::kRunning;
  double energy = 0.0;
  double total_reward = 0.0;
  int steps = 0;
  double peak_abs_pitch = 0.0;
};

/// Lockstep batch of independent environments. A terminal step delivers the
/// terminal observation; the following step call on that env resets it and
/// returns the fresh observation (reward 0, `reset` flag set, action ignored).
class VecEnv {
 public:
  VecEnv(const EnvConfig& cfg, int num_envs, std::uint64_t master_seed) {
    if (num_envs < 1) throw ConfigError("env count must be at least 1");
    std::shared_ptr<const HeightField> shared;
    if (!cfg.terrain_file.empty())
      shared = std::make_shared<const HeightField>(load_height_field(cfg.terrain_file));
    else if (!cfg.random_difficulty && cfg.randomization.roughness == 0.0)
      shared = std::make_shared<const HeightField>(generate_terrain(cfg.terrain));
    envs_.reserve(static_cast<std::size_t>(num_envs));
    for (int i = 0; i < num_envs; ++i)
      envs_.emplace_back(cfg, derive_seed(master_seed, static_cast<std::uint64_t>(i)), shared);
    obs_dim_ = envs_.front().obs_dim();
    obs_.assign(static_cast<std::size_t>(num_envs) * obs_dim_, 0.0f);
    rewards_.assign(static_cast<std::size_t>(num_envs), 0.0);
    outcomes_.assign(static_cast<std::size_t>(num_envs), Outcome::kRunning);
    resets_.assign(static_cast<std::size_t>(num_envs), 0);
    energy_.assign(static_cast<std::size_t>(num_envs), 0.0);
  }

  int size() const { return static_cast<int>(envs_.size()); }
  int obs_dim() const { return obs_dim_; }
  Env& env(int i) { return envs_[static_cast<std::size_t>(i)]; }
  const Env& env(int i) const { return envs_[static_cast<std::size_t>(i)]; }

  /// Row-major [N x obs_dim].
  const std::vector<float>& observations() const { return obs_; }
  const std::vector<double>& rewards() const { return rewards_; }
  const std::vector<Outcome>& outcomes() const { return outcomes_; }
  const std::vector<char>& reset_flags() const { return resets_; }
  const std::vector<double>& step_energy() const { return energy_; }
  const std::vector<EpisodeSummary>& finished() const { return finished_; }
  void clear_finished() { finished_.clear(); }

  const std::vector<float>& reset() {
    for (int i = 0; i < size(); ++i) {
      copy_obs(i, env(i).reset());
      rewards_[static_cast<std::size_t>(i)] = 0.0;
      outcomes_[static_cast<std::size_t>(i)] = Outcome::kRunning;
      resets_[static_cast<std::size_t>(i)] = 1;
    }
    return obs_;
  }

  /// `actions` is row-major [N x 6].
  void step(std::span<const float> actions) {
    if (actions.size() != static_cast<std::size_t>(size()) * kActionDim)
      throw ConfigError("action batch must be [num_envs x 6]");
    for (int i = 0; i < size(); ++i) {
      Action a;
      for (int k = 0; k < kActionDim; ++k) a[static_cast<std::size_t>(k)] = actions[static_cast<std::size_t>(i) * kActionDim + k];
      step_one(i, [&](Env& e) { return e.step(a); });
    }
  }

  void step_commands(std::span<const ActuatorCommand> cmds) {
    if (cmds.size() != static_cast<std::size_t>(size())) throw ConfigError("command batch must have num_envs entries");
    for (int i = 0; i < size(); ++i) step_one(i, [&](Env& e) { return e.step_command(cmds[static_cast<std::size_t>(i)]); });
  }

 private:
  template <typename F>
  void step_one(int i, F&& f) {
    const std::size_t u = static_cast<std::size_t>(i);
    Env& e = env(i);
    if (e.needs_reset()) {
      copy_obs(i, e.reset());
      rewards_[u] = 0.0;
      outcomes_[u] = Outcome::kRunning;
      resets_[u] = 1;
      energy_[u] = 0.0;
      return;
    }
    const StepResult r = f(e);
    copy_obs(i, e.observation());
    rewards_[u] = r.reward.weighted_total;
    outcomes_[u] = r.outcome;
    resets_[u] = 0;
    energy_[u] = r.reward.energy_step;
    if (r.done()) {
      const EpisodeState& ep = e.episode();
      finished_.push_back({u, r.outcome, ep.energy, ep.total_reward, ep.step_count, ep.peak_abs_pitch});
    }
  }

  void copy_obs(int i, const std::vector<float>& o) {
    std::copy(o.begin(), o.end(), obs_.begin() + static_cast<std::ptrdiff_t>(i) * obs_dim_);
  }

  std::vector<Env> envs_;
  int obs_dim_ = 0;
  std::vector<float> obs_;
  std::vector<double> rewards_;
  std::vector<Outcome> outcomes_;
  std::vector<char> resets_;
  std::vector<double> energy_;
  std::vector<EpisodeSummary> finished_;
};

}  // namespace hll
