#include <hll/rigidbody.hpp>

#include <gtest/gtest.h>

#include <cstring>

using namespace hll;

namespace {

constexpr double kDt = 0.005;

double orthonormality_error(const Mat3& r) {
  return (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
}

}  // namespace

TEST(ThrustVector, ZeroTiltPointsUp) {
  const Vec3 f = thrust_body_vector(1.0, 0.0);
  EXPECT_EQ(f, Vec3(0.0, 0.0, 1.0));
}

TEST(ThrustVector, QuarterTurnPointsForward) {
  const Vec3 f = thrust_body_vector(1.0, kPi / 2.0);
  EXPECT_NEAR(f.x(), 1.0, 1e-12);
  EXPECT_NEAR(f.y(), 0.0, 1e-12);
  EXPECT_NEAR(f.z(), 0.0, 1e-12);
}

TEST(ThrustVector, ZeroMagnitude) {
  EXPECT_EQ(thrust_body_vector(0.0, 0.7), Vec3::Zero());
}

TEST(Integrate, FreeFallOneSecond) {
  InertialParams p;
  RobotState s;
  for (int k = 0; k < 200; ++k) s = integrate_step(s, p, {}, kDt);
  EXPECT_NEAR(s.position.z(), -4.905, 2.0 * kDt * 9.81);
  EXPECT_NEAR(s.velocity.z(), -9.81, 1e-9);
  EXPECT_NEAR(s.position.x(), 0.0, 1e-15);
}

TEST(Integrate, TorqueFreePrincipalSpin) {
  InertialParams p;
  p.gravity = 0.0;
  p.inertia = Vec3(0.01, 0.01, 0.02).asDiagonal();
  RobotState s;
  s.angular_velocity = Vec3(0.0, 0.0, 3.0);
  const Vec3 w0 = s.angular_velocity;
  for (int k = 0; k < 1000; ++k) s = integrate_step(s, p, {}, kDt);
  EXPECT_LT((s.angular_velocity - w0).norm(), 1e-9);
}

TEST(Integrate, HoverForceBalance) {
  InertialParams p;
  RobotState s;
  s.position.z() = 1.0;
  const double half = 0.5 * p.mass * p.gravity;
  const Wrench left = Wrench::at_point(Vec3(0, 0, half), p.prop_arm[0], Frame::kBody);
  const Wrench right = Wrench::at_point(Vec3(0, 0, half), p.prop_arm[1], Frame::kBody);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const Vec3 v0 = s.velocity;
    s = integrate_step(s, p, {left, right}, kDt);
    worst = std::max(worst, (s.velocity - v0).norm());
  }
  EXPECT_LT(worst, 1e-9);
  EXPECT_LT(s.velocity.norm(), 1e-9);
  EXPECT_LT(s.angular_velocity.norm(), 1e-12);
}

TEST(Integrate, OrthonormalUnderRandomWrenches) {
  InertialParams p;
  Rng rng(7);
  RobotState s;
  double worst = 0.0;
  for (int k = 0; k < 100000; ++k) {
    Wrench w;
    w.force = Vec3(rng.normal(), rng.normal(), rng.normal());
    w.torque = 0.01 * Vec3(rng.normal(), rng.normal(), rng.normal());
    s = integrate_step(s, p, {w}, kDt);
    if (s.angular_velocity.norm() > 50.0) s.angular_velocity *= 0.5;
    worst = std::max(worst, orthonormality_error(s.orientation));
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(Integrate, MomentumConservedWithoutGravity) {
  InertialParams p;
  p.gravity = 0.0;
  RobotState s;
  s.velocity = Vec3(0.3, -0.2, 0.1);
  s.angular_velocity = Vec3(0.0, 1.5, 0.0);
  const Vec3 v0 = s.velocity, w0 = s.angular_velocity;
  for (int k = 0; k < 1000; ++k) s = integrate_step(s, p, {}, kDt);
  EXPECT_LT((s.velocity - v0).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((s.angular_velocity - w0).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Integrate, EnergyDriftUnderGravity) {
  // Symplectic Euler under uniform gravity loses m g^2 dt / 2 per second.
  InertialParams p;
  RobotState s;
  s.position.z() = 2.5;
  s.velocity = Vec3(1.0, 0.5, 3.0);
  s.angular_velocity = Vec3(0.4, -1.0, 0.7);
  const double rate = p.mass * p.gravity * p.gravity * kDt / 2.0;
  double e_prev = mechanical_energy(s, p);
  for (int sec = 0; sec < 3; ++sec) {
    for (int k = 0; k < 200; ++k) s = integrate_step(s, p, {}, kDt);
    const double e = mechanical_energy(s, p);
    EXPECT_LE(std::abs(e - e_prev), rate * 1.001) << "second " << sec;
    EXPECT_LT(std::abs(e - e_prev) / std::abs(e_prev), 0.01) << "second " << sec;
    e_prev = e;
  }
}

TEST(Integrate, RotationalEnergyTorqueFree) {
  InertialParams p;
  p.gravity = 0.0;
  RobotState s;
  s.angular_velocity = Vec3(0.3, 2.0, 0.1);
  const double e0 = mechanical_energy(s, p);
  for (int sec = 0; sec < 5; ++sec)
    for (int k = 0; k < 200; ++k) s = integrate_step(s, p, {}, kDt);
  EXPECT_LT(std::abs(mechanical_energy(s, p) - e0) / e0, 0.01 * 5);
}

TEST(Integrate, BitwiseDeterministic) {
  InertialParams p;
  RobotState s;
  s.angular_velocity = Vec3(0.1, 0.2, 0.3);
  const Wrench w{Vec3(0.1, 0.2, 9.0), Vec3(0.001, -0.002, 0.0005), Frame::kBody};
  const RobotState a = integrate_step(s, p, {w}, kDt);
  const RobotState b = integrate_step(s, p, {w}, kDt);
  EXPECT_EQ(std::memcmp(a.position.data(), b.position.data(), sizeof(double) * 3), 0);
  EXPECT_EQ(std::memcmp(a.orientation.data(), b.orientation.data(), sizeof(double) * 9), 0);
  EXPECT_EQ(std::memcmp(a.angular_velocity.data(), b.angular_velocity.data(), sizeof(double) * 3), 0);
}

TEST(Integrate, InertialFrameWrenchMatchesBody) {
  InertialParams p;
  RobotState s;
  s.orientation = rot_z(0.4) * rot_y(0.2);
  const Vec3 fb(0.5, -0.1, 3.0);
  const RobotState a = integrate_step(s, p, {Wrench{fb, Vec3::Zero(), Frame::kBody}}, kDt);
  const RobotState b = integrate_step(s, p, {Wrench{s.orientation * fb, Vec3::Zero(), Frame::kInertial}}, kDt);
  EXPECT_LT((a.velocity - b.velocity).norm(), 1e-14);
}

TEST(Integrate, NonFiniteThrows) {
  InertialParams p;
  RobotState s;
  Wrench w;
  w.force = Vec3(std::numeric_limits<double>::quiet_NaN(), 0.0, 0.0);
  EXPECT_THROW(integrate_step(s, p, {w}, kDt), NonFiniteState);
}

TEST(Inertia, RejectsNonPhysical) {
  InertialParams p;
  p.mass = 0.0;
  EXPECT_THROW(p.validate(), ConfigError);
  p.mass = 1.0;
  p.inertia = Vec3(0.01, -0.01, 0.01).asDiagonal();
  EXPECT_THROW(p.validate(), ConfigError);
}

TEST(ProjectedGravity, Level) {
  RobotState s;
  EXPECT_EQ(projected_gravity(s), Vec3(0.0, 0.0, -1.0));
}

TEST(ProjectedGravity, NoseDownQuarterTurn) {
  // Positive pitch about body y tips the nose down; gravity then points along body +x.
  RobotState s;
  s.orientation = rot_y(kPi / 2.0);
  const Vec3 g = projected_gravity(s);
  EXPECT_NEAR(g.x(), 1.0, 1e-12);
  EXPECT_NEAR(g.y(), 0.0, 1e-12);
  EXPECT_NEAR(g.z(), 0.0, 1e-12);
}

TEST(Euler, RoundTrip) {
  const EulerZYX e = euler_zyx(from_euler_zyx(0.3, -0.4, 0.2));
  EXPECT_NEAR(e.yaw, 0.3, 1e-12);
  EXPECT_NEAR(e.pitch, -0.4, 1e-12);
  EXPECT_NEAR(e.roll, 0.2, 1e-12);
}
