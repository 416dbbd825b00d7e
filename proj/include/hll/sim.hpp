#pragma once

// One physics substep of the full robot: actuators, contact, base dynamics,
// wheel spin update and collision checks.

#include <hll/actuation.hpp>
#include <hll/contact.hpp>
#include <hll/rigidbody.hpp>
#include <hll/terrain.hpp>

#include <array>

namespace hll {

/// Everything physical about one robot instance (possibly randomized).
struct RobotModel {
  InertialParams inertial;
  ContactParams contact;
  ThrustMap thrust;
  double thrust_scale = 1.0;
  PowerModel power;
  WheelController wheel_ctrl;  ///< gains and limits; integral state lives in SimState
  ServoModel servo;
  PropellerModel prop;
  double friction = 0.8;

  void validate() const {
    inertial.validate();
    thrust.validate();
    power.validate();
    if (!(friction > 0.0)) throw ConfigError("friction must be positive");
    if (!(thrust_scale > 0.0)) throw ConfigError("thrust scale must be positive");
    if (!(contact.wheel_radius > 0.0) || !(contact.stiffness > 0.0) || contact.damping < 0.0)
      throw ConfigError("contact parameters must be positive");
    if (!(prop.time_constant > 0.0)) throw ConfigError("propeller time constant must be positive");
    if (servo.delay_steps < 0 || servo.delay_steps > kMaxServoDelay)
      throw ConfigError("servo delay out of range");
  }
};

/// Rotor spin direction: prop 1 turns positive, prop 2 negative.
inline constexpr std::array<double, 2> kPropSpin{1.0, -1.0};

struct SimState {
  RobotState robot;
  WheelController wheel;
  std::array<ServoState, 2> servo{};
  ContactState contact;
  Vec2 wheel_torque = Vec2::Zero();
  Vec2 thrust = Vec2::Zero();

  void reset_actuators(const RobotModel& m) {
    wheel = m.wheel_ctrl;
    wheel.reset();
    for (int i = 0; i < 2; ++i) servo[static_cast<std::size_t>(i)].reset(robot.servo_angles[i]);
    wheel_torque.setZero();
    thrust.setZero();
  }
};

inline double prop_thrust(double prop_rate, const RobotModel& m) {
  return m.thrust_scale * pwm_to_thrust(omega_to_pwm(prop_rate), m.thrust);
}

/// Advances the robot by dt under an already clamped command.
inline void physics_substep(SimState& s, const RobotModel& m, const HeightField& field, const ActuatorCommand& cmd,
                            double dt) {
  RobotState& r = s.robot;

  for (int i = 0; i < 2; ++i) {
    ServoState& sv = s.servo[static_cast<std::size_t>(i)];
    r.servo_angles[i] = servo_track_step(cmd.servo_angle_ref[i], m.servo, sv, dt);
    r.servo_rates[i] = sv.rate;
    const double target = kPropSpin[static_cast<std::size_t>(i)] * pwm_to_omega(cmd.pwm_prop[i]);
    r.prop_rates[i] = prop_lag_step(r.prop_rates[i], target, m.prop, dt);
  }

  std::vector<Wrench> wrenches;
  wrenches.reserve(8);
  for (int i = 0; i < 2; ++i) {
    const double f = prop_thrust(r.prop_rates[i], m);
    s.thrust[i] = f;
    const Vec3 fb = thrust_body_vector(f, r.servo_angles[i]);
    wrenches.push_back(Wrench::at_point(fb, m.inertial.prop_arm[static_cast<std::size_t>(i)], Frame::kBody));
    if (m.prop.yaw_drag > 0.0) {
      const double q = -kPropSpin[static_cast<std::size_t>(i)] * m.prop.yaw_drag * r.prop_rates[i] * r.prop_rates[i];
      wrenches.push_back(Wrench::pure_torque(q * thrust_body_vector(1.0, r.servo_angles[i]), Frame::kBody));
    }
  }

  const Vec2 error = cmd.wheel_rate_ref - r.wheel_rates;
  s.wheel_torque = wheel_pi_step(error, s.wheel, dt);

  WheelContactResult wc = wheel_contact(r, m.inertial, m.contact, field, s.wheel_torque, m.friction, dt);
  wrenches.insert(wrenches.end(), wc.wrenches.begin(), wc.wrenches.end());

  RobotState next = integrate_step(r, m.inertial, std::span<const Wrench>(wrenches), dt);
  update_wheel_rates(next, m.inertial, m.contact, wc.state, s.wheel_torque, dt);
  if (!next.finite()) throw NonFiniteState("wheel update produced a non-finite state");

  const CollisionFlags flags = detect_collisions(next, m.inertial, m.contact, field);
  wc.state.body_collision = flags.body;
  wc.state.prop_collision = flags.prop;
  s.contact = wc.state;
  r = next;
}

/// Base height at which the robot rests level on flat ground at `ground`
/// with static wheel penetration m g / (2 k).
inline double rest_height(const RobotModel& m, double ground) {
  const double sink = m.inertial.mass * m.inertial.gravity / (2.0 * m.contact.stiffness);
  return ground + m.contact.wheel_radius - m.inertial.wheel_arm[0].z() - sink;
}

}  // namespace hll
