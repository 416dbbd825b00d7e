#pragma once

// Closed-loop scenarios shared by the unit tests and the acceptance runner.

#include <hll/baseline.hpp>
#include <hll/sim.hpp>

#include <functional>

namespace hll::scenario {

inline constexpr double kPhysicsDt = 0.005;
inline constexpr int kDecimation = 4;
inline constexpr double kControlDt = kPhysicsDt * kDecimation;

struct Outcome {
  double peak_abs_pitch = 0.0;  ///< rad
  double band = 0.0;            ///< rad, max |pitch - reference|
  double max_z = 0.0;
  Vec3 final_position = Vec3::Zero();
  bool prop_collision = false;
  bool sim_fault = false;
  bool mounted = false;         ///< ended past the riser and above the step height
};

/// Single-step field with the default tile (riser at x = 2 m), or flat when h = 0.
inline HeightField step_field(double h) {
  TerrainSpec ts;
  ts.type = h > 0.0 ? TerrainType::kSingleStep : TerrainType::kFlat;
  ts.step_height_override = h;
  return generate_terrain(ts);
}

using CommandFn = std::function<ActuatorCommand(const RobotState&, double t)>;

/// Robot spawned level at rest at (x0, 0) facing +x, driven for `duration` s.
inline Outcome run(const RobotModel& m, const HeightField& field, double h, const CommandFn& command, double duration,
                   double x0 = 1.0, double pitch_ref = 0.0) {
  SimState s;
  s.robot.position = Vec3(x0, 0.0, rest_height(m, 0.0));
  s.reset_actuators(m);
  Outcome o;
  const int steps = static_cast<int>(std::lround(duration / kControlDt));
  for (int k = 0; k < steps; ++k) {
    const ActuatorCommand cmd = command(s.robot, k * kControlDt).clamped();
    for (int j = 0; j < kDecimation; ++j) {
      try {
        physics_substep(s, m, field, cmd, kPhysicsDt);
      } catch (const NonFiniteState&) {
        o.sim_fault = true;
        return o;
      }
      o.prop_collision = o.prop_collision || s.contact.prop_collision;
    }
    const double p = euler_zyx(s.robot.orientation).pitch;
    o.peak_abs_pitch = std::max(o.peak_abs_pitch, std::abs(p));
    o.band = std::max(o.band, std::abs(p - pitch_ref));
    o.max_z = std::max(o.max_z, s.robot.position.z());
  }
  o.final_position = s.robot.position;
  o.mounted = h > 0.0 && o.final_position.x() > 2.2 && o.final_position.z() > h;
  return o;
}

inline Outcome run_decoupled(const DecoupledConfig& cfg, double h, double duration, double x0 = 1.0) {
  const RobotModel m;
  const HeightField f = step_field(h);
  DecoupledController c(cfg);
  c.reset();
  return run(m, f, h, [&](const RobotState& s, double t) { return c.command(s, t, kControlDt); }, duration, x0,
             cfg.pitch_ref);
}

/// Both wheels commanded at the full speed reference, propellers idle.
inline Outcome run_wheels_full(double h, double duration, double x0 = 1.0) {
  const RobotModel m;
  const HeightField f = step_field(h);
  return run(m, f, h,
             [](const RobotState&, double) {
               ActuatorCommand c;
               c.wheel_rate_ref = Vec2::Constant(kWheelRateMax);
               return c;
             },
             duration, x0);
}

}  // namespace hll::scenario
