#pragma once

// 6-DOF base dynamics of the tilt-rotor wheeled robot.
//
//   x' = v
//   m v' = m g + R (sum f_body) + sum f_world
//   R' = R [w]x
//   J w' + w x (J w) = sum torques (body frame)
//
// Propeller thrust, wheel contact forces and the wheel-motor reaction moment
// all arrive as Wrench values about the centre of mass.

#include <hll/core.hpp>

#include <array>
#include <span>
#include <string>

namespace hll {

struct RobotState {
  Vec3 position = Vec3::Zero();          ///< m, inertial frame
  Vec3 velocity = Vec3::Zero();          ///< m/s, inertial frame
  Mat3 orientation = Mat3::Identity();   ///< body -> inertial
  Vec3 angular_velocity = Vec3::Zero();  ///< rad/s, body frame
  Vec2 wheel_angles = Vec2::Zero();      ///< rad, relative to the body
  Vec2 wheel_rates = Vec2::Zero();       ///< rad/s, relative to the body (encoder)
  Vec2 servo_angles = Vec2::Zero();      ///< rad
  Vec2 servo_rates = Vec2::Zero();       ///< rad/s
  Vec2 prop_rates = Vec2::Zero();        ///< rad/s, signed (prop 1 +, prop 2 -)

  bool finite() const {
    return position.allFinite() && velocity.allFinite() && orientation.allFinite() &&
           angular_velocity.allFinite() && wheel_angles.allFinite() && wheel_rates.allFinite() &&
           servo_angles.allFinite() && servo_rates.allFinite() && prop_rates.allFinite();
  }
};

struct InertialParams {
  double mass = 1.0;                                      ///< kg
  Mat3 inertia = Vec3(0.010, 0.008, 0.010).asDiagonal();  ///< kg m^2, body frame
  std::array<Vec3, 2> prop_arm{Vec3(0.0, 0.13, 0.10), Vec3(0.0, -0.13, 0.10)};
  std::array<Vec3, 2> wheel_arm{Vec3(0.0, 0.12, 0.028), Vec3(0.0, -0.12, 0.028)};
  double gravity = 9.81;  ///< m/s^2

  /// Throws ConfigError when mass or inertia are not physical.
  void validate() const {
    if (!(mass > 0.0) || !std::isfinite(mass)) throw ConfigError("mass must be positive");
    if (!inertia.allFinite() || (inertia - inertia.transpose()).cwiseAbs().maxCoeff() > 1e-12)
      throw ConfigError("inertia must be finite and symmetric");
    Eigen::SelfAdjointEigenSolver<Mat3> es(inertia);
    if (es.eigenvalues().minCoeff() <= 0.0) throw ConfigError("inertia must be positive definite");
  }
};

enum class Frame { kBody, kInertial };

struct Wrench {
  Vec3 force = Vec3::Zero();
  Vec3 torque = Vec3::Zero();  ///< about the centre of mass
  Frame frame = Frame::kBody;

  /// Force applied at `point` (offset from the centre of mass, same frame).
  static Wrench at_point(const Vec3& force, const Vec3& point, Frame frame) {
    return Wrench{force, point.cross(force), frame};
  }
  static Wrench pure_torque(const Vec3& torque, Frame frame) {
    return Wrench{Vec3::Zero(), torque, frame};
  }
  bool finite() const { return force.allFinite() && torque.allFinite(); }
};

/// Thrust of magnitude f along the propeller axis tilted by sigma about body y.
inline Vec3 thrust_body_vector(double thrust, double tilt) {
  return Vec3(thrust * std::sin(tilt), 0.0, thrust * std::cos(tilt));
}

/// Rodrigues exponential of a rotation vector.
inline Mat3 so3_exp(const Vec3& phi) {
  const double angle = phi.norm();
  if (angle < 1e-12) return Mat3::Identity() + skew(phi);
  return Eigen::AngleAxisd(angle, phi / angle).toRotationMatrix();
}

/// Gram-Schmidt projection back onto SO(3).
inline Mat3 orthonormalize(const Mat3& r) {
  Vec3 c0 = r.col(0).normalized();
  Vec3 c1 = r.col(1) - c0.dot(r.col(1)) * c0;
  c1.normalize();
  Vec3 c2 = c0.cross(c1);
  Mat3 out;
  out << c0, c1, c2;
  return out;
}

/// Semi-implicit Euler step of the base. Joint-level fields (wheels, servos,
/// propellers) are owned by the actuator models and copied through untouched.
inline RobotState integrate_step(const RobotState& state, const InertialParams& params,
                                 std::span<const Wrench> applied, double dt) {
  Vec3 force_world = Vec3(0.0, 0.0, -params.gravity) * params.mass;
  Vec3 torque_body = Vec3::Zero();
  const Mat3& r = state.orientation;
  for (const Wrench& w : applied) {
    if (w.frame == Frame::kBody) {
      force_world += r * w.force;
      torque_body += w.torque;
    } else {
      force_world += w.force;
      torque_body += r.transpose() * w.torque;
    }
  }

  RobotState next = state;
  next.velocity = state.velocity + dt * force_world / params.mass;
  next.position = state.position + dt * next.velocity;

  const Vec3& omega = state.angular_velocity;
  const Vec3 gyro = omega.cross(params.inertia * omega);
  const Vec3 omega_dot = params.inertia.ldlt().solve(torque_body - gyro);
  next.angular_velocity = omega + dt * omega_dot;
  next.orientation = orthonormalize(r * so3_exp(next.angular_velocity * dt));

  if (!next.finite()) throw NonFiniteState("rigid-body integration produced a non-finite state");
  return next;
}

inline RobotState integrate_step(const RobotState& state, const InertialParams& params,
                                 std::initializer_list<Wrench> applied, double dt) {
  return integrate_step(state, params, std::span<const Wrench>(applied.begin(), applied.size()), dt);
}

/// Inertial down direction expressed in the body frame.
inline Vec3 projected_gravity(const RobotState& state) {
  return state.orientation.transpose() * Vec3(0.0, 0.0, -1.0);
}

/// Kinetic plus gravitational potential energy of the base.
inline double mechanical_energy(const RobotState& s, const InertialParams& p) {
  const double trans = 0.5 * p.mass * s.velocity.squaredNorm();
  const double rot = 0.5 * s.angular_velocity.dot(p.inertia * s.angular_velocity);
  return trans + rot + p.mass * p.gravity * s.position.z();
}

}  // namespace hll
