#pragma once

// Wheel-terrain penalty contact with Coulomb friction and drive traction,
// propeller / chassis collision checks, and the contact-flag history buffer.

#include <hll/actuation.hpp>
#include <hll/rigidbody.hpp>
#include <hll/terrain.hpp>

#include <algorithm>
#include <array>
#include <deque>
#include <limits>
#include <vector>

namespace hll {

struct KeepOutSphere {
  Vec3 center = Vec3::Zero();  ///< body frame, m
  double radius = 0.01;        ///< m
};

struct ContactParams {
  double wheel_radius = 0.03;     ///< m
  double stiffness = 5000.0;      ///< N/m
  double damping = 60.0;          ///< N s/m
  double slip_epsilon = 0.01;     ///< m/s, friction ramp width
  double wheel_inertia = 2.0e-5;  ///< kg m^2
  double wheel_drag = 1.0e-5;     ///< N m s/rad, bearing drag when the wheel spins free
  double prop_radius = 0.05;      ///< m
  double wall_slope_deg = 45.0;   ///< steeper cells act as frictionless vertical walls
  std::vector<KeepOutSphere> keep_out{
      {Vec3(0.05, 0.0, 0.028), 0.015},   // nose
      {Vec3(-0.05, 0.0, 0.028), 0.015},  // tail
      {Vec3(0.0, 0.0, 0.07), 0.02},     // mast
  };
};

struct WheelContact {
  bool in_contact = false;   ///< floor or wall touching
  bool on_floor = false;     ///< traction-bearing contact present
  double penetration = 0.0;  ///< m, floor contact depth along its normal
  double normal_force = 0.0; ///< N, floor contact
  Vec2 tangential = Vec2::Zero();  ///< (longitudinal, lateral) N
  Vec3 contact_point = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  Vec3 forward = Vec3::UnitX();  ///< rolling direction in the contact plane
  Vec3 lateral = Vec3::UnitY();
  double axle_alignment = 1.0;   ///< |axle x normal|
  bool slipping = false;         ///< drive demand exceeded the friction cone or wheel sliding
  bool on_wall = false;
  Vec3 wall_force = Vec3::Zero();  ///< N, horizontal push from a riser
};

struct ContactState {
  std::array<WheelContact, 2> wheels{};
  bool body_collision = false;
  bool prop_collision = false;

  Vec2 flags() const {
    return Vec2(wheels[0].in_contact ? 1.0 : 0.0, wheels[1].in_contact ? 1.0 : 0.0);
  }
  double total_normal_force() const { return wheels[0].normal_force + wheels[1].normal_force; }
};

namespace detail {

inline double local_max_height(const HeightField& f, const Vec2& xy, double radius) {
  const Vec2 lo = f.origin();
  const double res = f.resolution();
  const int ix0 = std::clamp(static_cast<int>(std::floor((xy.x() - radius - lo.x()) / res)), 0, f.nx() - 1);
  const int ix1 = std::clamp(static_cast<int>(std::ceil((xy.x() + radius - lo.x()) / res)), 0, f.nx() - 1);
  const int iy0 = std::clamp(static_cast<int>(std::floor((xy.y() - radius - lo.y()) / res)), 0, f.ny() - 1);
  const int iy1 = std::clamp(static_cast<int>(std::ceil((xy.y() + radius - lo.y()) / res)), 0, f.ny() - 1);
  double m = -std::numeric_limits<double>::infinity();
  for (int iy = iy0; iy <= iy1; ++iy)
    for (int ix = ix0; ix <= ix1; ++ix) m = std::max(m, f.at(ix, iy));
  return m;
}

struct SphereHit {
  bool hit = false;
  double depth = 0.0;
  Vec3 normal = Vec3::UnitZ();
  Vec3 point = Vec3::Zero();  ///< closest surface point
};

struct SphereQuery {
  SphereHit floor;
  SphereHit wall;
  bool any() const { return floor.hit || wall.hit; }
};

inline constexpr int kSphereSamples = 8;  ///< surface samples per radius

/// Sphere against the height field by nearest surface point over a grid of
/// samples under the sphere. Samples on cells steeper than `wall_slope` are
/// treated as vertical faces: their normal is flattened to the horizontal.
inline SphereQuery sphere_query(const HeightField& f, const Vec3& c, double radius, double wall_slope) {
  SphereQuery q;
  const Vec2 cxy = c.head<2>();
  if (c.z() - radius > local_max_height(f, cxy, radius)) return q;

  Vec2 g;
  const double hc = f.height_gradient(cxy, g);
  if (c.z() <= hc) {
    q.floor.hit = true;
    q.floor.depth = radius + hc - c.z();
    q.floor.normal = Vec3(-g.x(), -g.y(), 1.0).normalized();
    q.floor.point = Vec3(cxy.x(), cxy.y(), hc);
    return q;
  }

  const double wall_tan = std::tan(wall_slope * kPi / 180.0);
  const double step = radius / kSphereSamples;
  double best_floor = 0.0;
  double best_wall = 0.0;
  for (int j = -kSphereSamples; j <= kSphereSamples; ++j) {
    for (int i = -kSphereSamples; i <= kSphereSamples; ++i) {
      if (i * i + j * j > kSphereSamples * kSphereSamples) continue;
      const Vec2 p = cxy + step * Vec2(i, j);
      const double h = f.height_gradient(p, g);
      const Vec3 s(p.x(), p.y(), h);
      const Vec3 d = c - s;
      const double dist = d.norm();
      const double depth = radius - dist;
      if (depth <= 0.0) continue;
      const bool steep = g.norm() > wall_tan;
      if (steep) {
        if (depth > best_wall) {
          Vec2 dir = d.head<2>();
          if (dir.norm() < 1e-12) dir = -g;
          best_wall = depth;
          q.wall.hit = true;
          q.wall.depth = depth;
          q.wall.normal = Vec3(dir.x(), dir.y(), 0.0).normalized();
          q.wall.point = s;
        }
      } else if (depth > best_floor) {
        best_floor = depth;
        q.floor.hit = true;
        q.floor.depth = depth;
        q.floor.normal = dist > 1e-12 ? Vec3(d / dist) : Vec3(Vec3::UnitZ());
        q.floor.point = s;
      }
    }
  }
  return q;
}

}  // namespace detail

struct WheelContactResult {
  ContactState state;
  std::vector<Wrench> wrenches;  ///< inertial frame, about the centre of mass
};

inline Vec3 wheel_hub_world(const RobotState& s, const InertialParams& p, int i) {
  return s.position + s.orientation * p.wheel_arm[static_cast<std::size_t>(i)];
}

inline Vec3 wheel_hub_velocity(const RobotState& s, const InertialParams& p, int i) {
  return s.velocity + s.orientation * s.angular_velocity.cross(p.wheel_arm[static_cast<std::size_t>(i)]);
}

/// Penalty contact for both wheels. `wheel_torque` is the motor torque on each
/// wheel about the body y axis (positive rolls forward); the base receives the
/// equal and opposite reaction moment whether or not the wheel touches ground.
/// `mass_share` bounds lateral friction so it never reverses slip in one step.
inline WheelContactResult wheel_contact(const RobotState& s, const InertialParams& p, const ContactParams& c,
                                        const HeightField& field, const Vec2& wheel_torque, double mu, double dt,
                                        double mass_share = -1.0) {
  if (mass_share <= 0.0) mass_share = 0.5 * p.mass;
  WheelContactResult out;
  const Vec3 axle = s.orientation.col(1);
  const double r = c.wheel_radius;
  for (int i = 0; i < 2; ++i) {
    WheelContact& wc = out.state.wheels[static_cast<std::size_t>(i)];
    const Vec3 hub = wheel_hub_world(s, p, i);
    const Vec3 arm_world = hub - s.position;

    // Motor reaction on the base.
    out.wrenches.push_back(Wrench::pure_torque(-wheel_torque[i] * axle, Frame::kInertial));

    const detail::SphereQuery hit = detail::sphere_query(field, hub, r, c.wall_slope_deg);
    if (!hit.any()) continue;
    wc.in_contact = true;
    const Vec3 v_hub = wheel_hub_velocity(s, p, i);

    if (hit.wall.hit) {
      const Vec3 nw = hit.wall.normal;
      const double push = std::max(0.0, c.stiffness * hit.wall.depth - c.damping * v_hub.dot(nw));
      wc.on_wall = true;
      wc.wall_force = push * nw;
      out.wrenches.push_back(Wrench::at_point(wc.wall_force, arm_world, Frame::kInertial));
    }
    if (!hit.floor.hit) continue;

    const Vec3 n = hit.floor.normal;
    Vec3 fwd = axle.cross(n);
    const double align = fwd.norm();
    fwd = align > 1e-9 ? Vec3(fwd / align) : Vec3(s.orientation.col(0));
    const Vec3 lat = n.cross(fwd);
    const Vec3 cp = hub - r * n;

    wc.on_floor = true;
    wc.penetration = hit.floor.depth;
    wc.normal = n;
    wc.forward = fwd;
    wc.lateral = lat;
    wc.contact_point = cp;
    wc.axle_alignment = align;

    const double depth_rate = -v_hub.dot(n);
    const double normal = std::max(0.0, c.stiffness * hit.floor.depth + c.damping * depth_rate);
    wc.normal_force = normal;

    const Vec3 omega_world = s.orientation * s.angular_velocity + s.wheel_rates[i] * axle;
    const Vec3 v_cp = v_hub + omega_world.cross(cp - hub);
    const double slip_long = v_cp.dot(fwd);
    const double slip_lat = v_cp.dot(lat);
    const double limit = mu * normal;
    const double eps = c.slip_epsilon;

    const double drive = wheel_torque[i] / r;
    double f_long;
    if (std::abs(slip_long) < eps) {
      f_long = clamp(drive, -limit, limit);
      wc.slipping = std::abs(drive) > limit;
    } else {
      f_long = -limit * clamp(slip_long / eps, -1.0, 1.0);
      wc.slipping = true;
    }
    double f_lat = -limit * clamp(slip_lat / eps, -1.0, 1.0);
    const double stop = mass_share * std::abs(slip_lat) / dt;
    f_lat = clamp(f_lat, -stop, stop);

    const double mag = std::hypot(f_long, f_lat);
    if (mag > limit && mag > 0.0) {
      f_long *= limit / mag;
      f_lat *= limit / mag;
    }
    wc.tangential = Vec2(f_long, f_lat);

    const Vec3 force = normal * n + f_long * fwd + f_lat * lat;
    out.wrenches.push_back(Wrench::at_point(force, arm_world, Frame::kInertial));
  }
  return out;
}

/// Wheel spin update after the base has moved. A wheel whose traction stayed
/// inside the friction cone rolls without slip; otherwise its spin follows
/// I_w w' = M - F_long r.
inline void update_wheel_rates(RobotState& s, const InertialParams& p, const ContactParams& c,
                               const ContactState& contact, const Vec2& wheel_torque, double dt) {
  const double r = c.wheel_radius;
  for (int i = 0; i < 2; ++i) {
    const WheelContact& wc = contact.wheels[static_cast<std::size_t>(i)];
    double& rate = s.wheel_rates[i];
    if (wc.on_floor && !wc.slipping && wc.axle_alignment > 1e-3) {
      const Vec3 v_hub = wheel_hub_velocity(s, p, i);
      const Vec3 base_omega = s.orientation * s.angular_velocity;
      const double num = v_hub.dot(wc.forward) + base_omega.cross(-r * wc.normal).dot(wc.forward);
      rate = num / (r * wc.axle_alignment);
    } else {
      const double ground = wc.on_floor ? wc.tangential[0] * r * wc.axle_alignment : 0.0;
      rate += dt * (wheel_torque[i] - ground - c.wheel_drag * rate) / c.wheel_inertia;
    }
    rate = clamp(rate, -2.0 * kWheelRateMax, 2.0 * kWheelRateMax);
    s.wheel_angles[i] += dt * rate;
  }
}

// ---------------------------------------------------------------------------

struct CollisionFlags {
  bool body = false;
  bool prop = false;
};

/// Propeller discs are probed at their centre and eight rim points; chassis
/// keep-out spheres with the same probe set as the wheels.
inline CollisionFlags detect_collisions(const RobotState& s, const InertialParams& p, const ContactParams& c,
                                        const HeightField& field) {
  CollisionFlags flags;
  for (int i = 0; i < 2 && !flags.prop; ++i) {
    const Mat3 tilt = rot_y(s.servo_angles[i]);
    const Vec3 u = tilt.col(0);
    const Vec3 w = Vec3::UnitY();
    const Vec3 center = p.prop_arm[static_cast<std::size_t>(i)];
    for (int k = 0; k <= 8; ++k) {
      Vec3 pt = center;
      if (k < 8) {
        const double th = k * kPi / 4.0;
        pt += c.prop_radius * (std::cos(th) * u + std::sin(th) * w);
      }
      const Vec3 world = s.position + s.orientation * pt;
      if (world.z() < field.height(world.head<2>())) {
        flags.prop = true;
        break;
      }
    }
  }
  for (const KeepOutSphere& k : c.keep_out) {
    const Vec3 center = s.position + s.orientation * k.center;
    if (detail::sphere_query(field, center, k.radius, c.wall_slope_deg).any()) {
      flags.body = true;
      break;
    }
  }
  return flags;
}

/// Fixed-length history of per-wheel contact flags, newest first.
class ContactHistory {
 public:
  explicit ContactHistory(int length = 3) : length_(std::max(1, length)) { clear(); }

  void clear() { buf_.assign(static_cast<std::size_t>(length_), Vec2::Zero()); }
  void fill(const Vec2& flags) { buf_.assign(static_cast<std::size_t>(length_), flags); }

  void push(const Vec2& flags) {
    buf_.push_front(flags);
    buf_.pop_back();
  }

  int length() const { return length_; }
  const Vec2& operator[](int i) const { return buf_[static_cast<std::size_t>(i)]; }

  /// Flattened (w1, w2) pairs, newest entry first.
  template <typename Out>
  void write(Out out) const {
    for (const Vec2& f : buf_) {
      *out++ = f[0];
      *out++ = f[1];
    }
  }

 private:
  int length_;
  std::deque<Vec2> buf_;
};

inline ContactHistory contact_history_update(ContactHistory buffer, const Vec2& flags) {
  buffer.push(flags);
  return buffer;
}

}  // namespace hll
