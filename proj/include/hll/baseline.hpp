#pragma once

// Rule-based decoupled controller: symmetric throttle PID on pitch, servo
// tilt that cancels body pitch plus a bias, scripted wheel speeds.

#include <hll/actuation.hpp>
#include <hll/rigidbody.hpp>

#include <string>
#include <utility>
#include <vector>

namespace hll {

/// Piecewise-linear wheel speed schedule, held constant past the last knot.
struct WheelScript {
  std::vector<std::pair<double, double>> knots{{0.0, 0.0}};  ///< (t s, rad/s)

  double at(double t) const {
    if (knots.empty()) return 0.0;
    if (t <= knots.front().first) return knots.front().second;
    for (std::size_t i = 1; i < knots.size(); ++i) {
      if (t <= knots[i].first) {
        const auto& [t0, w0] = knots[i - 1];
        const auto& [t1, w1] = knots[i];
        if (t1 <= t0) return w1;
        return w0 + (w1 - w0) * (t - t0) / (t1 - t0);
      }
    }
    return knots.back().second;
  }

  /// Ramp from 0 to `rate` over [start, start + ramp], then hold.
  static WheelScript ramp_hold(double rate, double start, double ramp) {
    return WheelScript{{{0.0, 0.0}, {start, 0.0}, {start + ramp, rate}}};
  }
};

struct DecoupledConfig {
  std::string name = "decouple_stand";
  double pitch_ref = 0.0;    ///< rad, body-y pitch (positive nose-down)
  double hold_pwm = 1350.0;  ///< us
  double kp = 0.0;           ///< us / rad
  double ki = 0.0;           ///< us / (rad s)
  double kd = 0.0;           ///< us s / rad
  double integral_limit = 0.5;  ///< rad s
  double output_limit = 200.0;  ///< us, bound on the PID correction
  double tilt_bias = 0.0;    ///< rad
  WheelScript script;

  void validate() const {
    if (!(hold_pwm >= kPwmMin && hold_pwm <= kPwmMax)) throw ConfigError("hold throttle outside [1000, 2000] us");
    for (double g : {kp, ki, kd, pitch_ref, tilt_bias, integral_limit, output_limit})
      if (!std::isfinite(g)) throw ConfigError("decoupled gains must be finite");
    if (integral_limit < 0.0 || output_limit < 0.0) throw ConfigError("PID limits must be nonnegative");
  }
};

/// Standing pose: level pitch, light throttle, gentle ramp to 0.6 m/s.
inline DecoupledConfig decouple_stand_preset() {
  DecoupledConfig c;
  c.name = "decouple_stand";
  c.pitch_ref = 0.0;
  c.hold_pwm = 1250.0;
  c.kp = 300.0;
  c.kd = 400.0;
  c.output_limit = 150.0;
  c.tilt_bias = 0.1;
  c.script = WheelScript::ramp_hold(20.0, 0.5, 2.0);
  return c;
}

/// Climbing pose: near-hover throttle, thrust tilted forward, slow approach.
inline DecoupledConfig decouple_fwd_preset() {
  DecoupledConfig c;
  c.name = "decouple_fwd";
  c.pitch_ref = 0.0;
  c.hold_pwm = 1450.0;
  c.kp = -300.0;
  c.kd = 400.0;
  c.output_limit = 250.0;
  c.tilt_bias = 0.2;
  c.script = WheelScript::ramp_hold(10.0, 0.5, 1.0);
  return c;
}

inline DecoupledConfig decoupled_preset(const std::string& name) {
  if (name == "decouple_stand") return decouple_stand_preset();
  if (name == "decouple_fwd") return decouple_fwd_preset();
  throw ConfigError("unknown decoupled preset '" + name + "'");
}

class DecoupledController {
 public:
  explicit DecoupledController(DecoupledConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  const DecoupledConfig& config() const { return cfg_; }

  void reset() {
    integral_ = 0.0;
    prev_error_ = 0.0;
    has_prev_ = false;
  }

  /// u_pwm = clip(u_hold + PID(pitch_ref - pitch)); sigma_ref = -pitch + bias.
  ActuatorCommand command(const RobotState& s, double t, double dt) {
    const double pitch = euler_zyx(s.orientation).pitch;
    const double e = cfg_.pitch_ref - pitch;
    integral_ = clamp(integral_ + e * dt, -cfg_.integral_limit, cfg_.integral_limit);
    const double de = has_prev_ && dt > 0.0 ? (e - prev_error_) / dt : 0.0;
    prev_error_ = e;
    has_prev_ = true;

    const double pid = clamp(cfg_.kp * e + cfg_.ki * integral_ + cfg_.kd * de, -cfg_.output_limit, cfg_.output_limit);
    const double pwm = clamp(cfg_.hold_pwm + pid, kPwmMin, kPwmMax);
    const double tilt = clamp(-pitch + cfg_.tilt_bias, -kPi / 2.0, kPi / 2.0);
    const double w = cfg_.script.at(t);

    ActuatorCommand c;
    c.pwm_prop = Vec2(pwm, pwm);
    c.servo_angle_ref = Vec2(tilt, tilt);
    c.wheel_rate_ref = Vec2(w, w);
    return c;
  }

 private:
  DecoupledConfig cfg_;
  double integral_ = 0.0;
  double prev_error_ = 0.0;
  bool has_prev_ = false;
};

inline ActuatorCommand decoupled_command(const RobotState& s, DecoupledController& ctrl, double t, double dt) {
  return ctrl.command(s, t, dt);
}

}  // namespace hll
