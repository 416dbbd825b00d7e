#include <hll/env.hpp>

#include <gtest/gtest.h>

#include <cstring>
#include <sstream>

using namespace hll;

namespace {

EnvConfig flat_nominal() {
  EnvConfig c;
  c.terrain.type = TerrainType::kFlat;
  c.randomization = RandomizationSpec{0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  return c;
}

bool same_bits(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

Action random_action(Rng& rng) {
  Action a;
  for (double& v : a) v = rng.uniform(-1.0, 1.0);
  return a;
}

}  // namespace

TEST(GoalCommand, FacingGoal) {
  const GoalCommand g = goal_command(Vec2(0, 0), Vec2(2, 0), 0.0);
  EXPECT_NEAR(g.heading_error, 0.0, 1e-15);
  EXPECT_NEAR(g.yaw_rate, 0.0, 1e-15);
  EXPECT_NEAR(g.dx, 1.0, 1e-6);
}

TEST(GoalCommand, GoalToTheLeft) {
  const GoalCommand g = goal_command(Vec2(0, 0), Vec2(0, 2), 0.0);
  EXPECT_NEAR(g.yaw_rate, 1.0, 1e-12);
  const GoalCommand r = goal_command(Vec2(1, 1), Vec2(1, 3), kPi / 2.0);
  EXPECT_NEAR(r.yaw_rate, 0.0, 1e-12);
}

TEST(GoalCommand, GoalBehind) {
  const GoalCommand g = goal_command(Vec2(0, 0), Vec2(-2, 0), 0.0);
  EXPECT_NEAR(g.yaw_rate, 0.0, 1e-12);
  EXPECT_NEAR(g.dx, -1.0, 1e-6);
}

TEST(ActionMap, ZeroAction) {
  const ActuatorCommand c = map_action(Action{});
  EXPECT_EQ(c.wheel_rate_ref, Vec2::Zero());
  EXPECT_EQ(c.servo_angle_ref, Vec2::Zero());
  EXPECT_EQ(c.pwm_prop, Vec2::Constant(1000.0));
}

TEST(ActionMap, WheelScale) {
  const ActuatorCommand c = map_action(Action{1.0, 0, 0, 0, 0, 0});
  EXPECT_EQ(c.wheel_rate_ref[0], 500.0);
  EXPECT_EQ(c.wheel_rate_ref[1], 0.0);
}

TEST(ActionMap, CounterRotatingPropsShareThrottle) {
  const ActuatorCommand c = map_action(Action{0, 0, 0, 0, 1.0, 1.0});
  EXPECT_EQ(c.pwm_prop, Vec2::Constant(2000.0));
}

TEST(ActionMap, ClampAndNonFinite) {
  const Action a = clamp_action({5.0, -3.0, 0.2, std::numeric_limits<double>::quiet_NaN(), 1.0, -1.0});
  EXPECT_EQ(a, (Action{1.0, -1.0, 0.2, 0.0, 1.0, -1.0}));
}

TEST(ActionMap, ModeMasks) {
  const Action a{0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  EXPECT_EQ(apply_mode_mask(a, Mode::kHybrid), a);
  EXPECT_EQ(apply_mode_mask(a, Mode::kWheelsOnly), (Action{0.1, 0.2, 0.3, 0.4, 0.0, 0.0}));
  EXPECT_EQ(apply_mode_mask(a, Mode::kPropsOnly), (Action{0.0, 0.0, 0.3, 0.4, 0.5, 0.6}));
}

TEST(Reward, AlignedAtReferenceSpeed) {
  RewardInputs in;
  in.goal = Vec2(3.0, 0.0);
  in.velocity = Vec3(2.5, 0.0, 0.0);
  EXPECT_EQ(compute_reward(in, RewardParams{}).r_align, 1.0);
}

TEST(Reward, EnergyTerm) {
  RewardInputs in;
  const RewardParams p;
  in.energy = 20.0;
  EXPECT_NEAR(compute_reward(in, p).r_energy, -0.6321205588285577, 1e-12);
  in.energy = 0.0;
  EXPECT_EQ(compute_reward(in, p).r_energy, 0.0);
}

TEST(Reward, ZeroPenaltyFixedPoints) {
  RewardInputs in;
  in.goal = Vec2(0.0, 0.0);
  in.velocity = Vec3(1.0, 2.0, 2.0);
  const RewardBreakdown r = compute_reward(in, RewardParams{});
  EXPECT_EQ(r.r_tilt, 0.0);
  EXPECT_EQ(r.r_target, 1.0);
  EXPECT_EQ(r.r_speed, 0.0);
  EXPECT_EQ(r.r_heading, 0.0);
}

TEST(Reward, TermsWithinRangesAndExactTotal) {
  const RewardParams p;
  Rng rng(99);
  for (int k = 0; k < 100000; ++k) {
    RewardInputs in;
    in.position = Vec3(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(0, 3));
    in.velocity = Vec3(rng.normal(0, 3), rng.normal(0, 3), rng.normal(0, 3));
    in.gravity_body = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
    in.goal = Vec2(rng.uniform(-5, 5), rng.uniform(-5, 5));
    in.heading_error = rng.uniform(-kPi, kPi);
    in.sigma_goal = rng.uniform(0.5, 10.0);
    in.energy = rng.uniform(0.0, 50.0);
    const double term = rng.uniform() < 0.1 ? 10.0 : 0.0;
    const RewardBreakdown r = compute_reward(in, p, term);
    ASSERT_GE(r.r_align, -1.0);
    ASSERT_LE(r.r_align, 1.0);
    ASSERT_GE(r.r_target, 0.0);
    ASSERT_LE(r.r_target, 1.0);
    ASSERT_GE(r.r_energy, -1.0);
    ASSERT_LE(r.r_energy, 0.0);
    ASSERT_GE(r.r_heading, -1.0);
    ASSERT_LE(r.r_heading, 0.0);
    ASSERT_GE(r.r_tilt, -1.0);
    ASSERT_LE(r.r_tilt, 0.0);
    ASSERT_GE(r.r_speed, -1.0);
    ASSERT_LE(r.r_speed, 0.0);
    const double total = p.w_align * r.r_align + p.w_target * r.r_target + p.w_energy * r.r_energy +
                         p.w_heading * r.r_heading + p.w_tilt * r.r_tilt + p.w_speed * r.r_speed +
                         p.w_term * r.r_term;
    ASSERT_EQ(r.weighted_total, total);
  }
}

TEST(Termination, Goal) {
  TerminationInput in;
  in.position = Vec3(0.19, 0.0, 0.03);
  const auto [o, r] = check_termination(in, TerminationParams{});
  EXPECT_EQ(o, Outcome::kGoal);
  EXPECT_EQ(r, 10.0);
}

TEST(Termination, OutOfBounds) {
  TerminationInput in;
  in.position = Vec3(0.0, 0.0, 3.5);
  in.goal = Vec2(1.0, 1.0);
  const auto [o, r] = check_termination(in, TerminationParams{});
  EXPECT_EQ(o, Outcome::kOutOfBounds);
  EXPECT_EQ(r, -10.0);
}

TEST(Termination, Timeout) {
  TerminationInput in;
  in.goal = Vec2(1.0, 1.0);
  in.step_count = in.timeout_steps;
  const auto [o, r] = check_termination(in, TerminationParams{});
  EXPECT_EQ(o, Outcome::kTimeout);
  EXPECT_EQ(r, 0.0);
  in.step_count = in.timeout_steps - 1;
  EXPECT_EQ(check_termination(in, TerminationParams{}).first, Outcome::kRunning);
}

TEST(Termination, CollisionBeatsGoal) {
  TerminationInput in;
  in.prop_collision = true;
  EXPECT_EQ(check_termination(in, TerminationParams{}).first, Outcome::kPropCollision);
}

TEST(Termination, GoalAndFailureMagnitudesIndependent) {
  TerminationInput in;
  EXPECT_EQ(check_termination(in, TerminationParams{}, 200.0, 7.0).second, 200.0);
  in.prop_collision = true;
  EXPECT_EQ(check_termination(in, TerminationParams{}, 200.0, 7.0).second, -7.0);
}

TEST(Env, ObservationDim) {
  Env e(flat_nominal(), 1);
  EXPECT_EQ(e.obs_dim(), observation_dim(3));
  EXPECT_EQ(observation_dim(3), 2 + 3 + 3 + 3 + 6 + 3 + 36 + 6);
}

TEST(Env, ZeroRandomizationIsNominal) {
  const EnvConfig c = flat_nominal();
  Env e(c, 5);
  for (int k = 0; k < 5; ++k) {
    e.reset();
    const RobotModel& m = e.episode().params;
    EXPECT_EQ(m.inertial.mass, c.robot.inertial.mass);
    EXPECT_EQ(m.inertial.inertia, c.robot.inertial.inertia);
    EXPECT_EQ(m.friction, c.terrain.friction);
    EXPECT_EQ(m.thrust_scale, c.robot.thrust_scale);
    EXPECT_EQ(m.servo.rate_limit, c.robot.servo.rate_limit);
  }
}

TEST(Env, RandomizedMassWithinRange) {
  EnvConfig c;
  Env e(c, 5);
  double lo = 1e9, hi = -1e9;
  for (int k = 0; k < 300; ++k) {
    e.reset();
    const double m = e.episode().params.inertial.mass;
    lo = std::min(lo, m);
    hi = std::max(hi, m);
  }
  EXPECT_GE(lo, 0.8 * c.robot.inertial.mass);
  EXPECT_LE(hi, 1.2 * c.robot.inertial.mass);
  EXPECT_LT(lo, 0.85);
  EXPECT_GT(hi, 1.15);
}

TEST(Env, SeededResetBitwise) {
  const EnvConfig c;
  Env a(c, 77), b(c, 77), d(c, 78);
  EXPECT_TRUE(same_bits(a.reset(), b.reset()));
  EXPECT_FALSE(same_bits(a.reset(), d.reset()));
}

TEST(Env, LevelObservationSlots) {
  Env e(flat_nominal(), 3);
  const std::vector<float> o = e.reset();
  const ObservationLayout L{3};
  EXPECT_EQ(o[L.gravity() + 0], 0.0f);
  EXPECT_EQ(o[L.gravity() + 1], 0.0f);
  EXPECT_EQ(o[L.gravity() + 2], -1.0f);
  for (int i = 1; i < kScanSide * kScanSide; ++i) EXPECT_EQ(o[L.scan() + i], o[L.scan()]);
  const Action a{0.3, -0.2, 0.1, 0.0, 2.0, -0.4};
  e.step(a);
  const Action applied = clamp_action(a);
  for (int i = 0; i < kActionDim; ++i)
    EXPECT_EQ(e.observation()[L.prev_action() + i], static_cast<float>(applied[i]));
}

TEST(Env, RestsUnderZeroAction) {
  Env e(flat_nominal(), 4);
  e.reset();
  const Vec3 p0 = e.sim().robot.position;
  for (int k = 0; k < 200; ++k) {
    const StepResult r = e.step(Action{});
    ASSERT_EQ(r.reward.r_energy, 0.0);
    ASSERT_EQ(r.reward.energy_step, 0.0);
  }
  EXPECT_LT((e.sim().robot.position - p0).head<2>().norm(), 1e-6);
  EXPECT_LT(std::abs(e.sim().robot.position.z() - p0.z()), 1e-4);
  EXPECT_EQ(e.episode().energy, 0.0);
}

TEST(Env, ConstantPowerIntegratesOverControlStep) {
  EnvConfig c = flat_nominal();
  // 50 W per propeller at 1500 us.
  c.robot.power.prop_coeffs = {0.0, 0.0, 0.0, 0.1, -100.0};
  Env e(c, 4);
  e.reset();
  ActuatorCommand cmd;
  cmd.pwm_prop = Vec2::Constant(1500.0);
  const StepResult r = e.step_command(cmd);
  EXPECT_NEAR(r.reward.p_prop, 100.0, 1e-12);
  EXPECT_NEAR(r.reward.energy_step, 2.0, 1e-12);
}

TEST(Env, IdenticalStreamsIdenticalTrajectories) {
  const EnvConfig c;
  Env a(c, 11), b(c, 11);
  a.reset();
  b.reset();
  Rng rng(1);
  for (int k = 0; k < 300; ++k) {
    const Action act = random_action(rng);
    if (a.needs_reset()) {
      ASSERT_TRUE(same_bits(a.reset(), b.reset()));
    }
    const StepResult ra = a.step(act);
    const StepResult rb = b.step(act);
    ASSERT_TRUE(same_bits(a.observation(), b.observation()));
    ASSERT_EQ(std::memcmp(&ra.reward.weighted_total, &rb.reward.weighted_total, sizeof(double)), 0);
    ASSERT_EQ(ra.outcome, rb.outcome);
  }
}

TEST(Env, OutOfRangeActionsMatchClamped) {
  const EnvConfig c;
  Env a(c, 2), b(c, 2);
  a.reset();
  b.reset();
  const Action wild{4.0, -7.0, 1.5, -1.5, 3.0, 9.0};
  for (int k = 0; k < 20; ++k) {
    a.step(wild);
    b.step(clamp_action(wild));
    ASSERT_TRUE(same_bits(a.observation(), b.observation()));
  }
}

TEST(Env, EnergyLedgerMatchesRecord) {
  const EnvConfig c;
  Env e(c, 21);
  e.reset();
  Rng rng(3);
  double sum = 0.0;
  for (int k = 0; k < 100 && !e.needs_reset(); ++k) {
    const StepResult r = e.step(random_action(rng));
    EXPECT_EQ(r.reward.energy_step, (r.reward.p_prop + r.reward.p_wheel) * c.control_dt());
    sum += r.reward.energy_step;
    EXPECT_EQ(e.last_record().energy_cum, sum);
  }
  EXPECT_EQ(e.episode().energy, sum);
}

TEST(Env, WheelsOnlyNeverSpinsProps) {
  EnvConfig c;
  c.mode = Mode::kWheelsOnly;
  Env e(c, 8);
  e.reset();
  Rng rng(3);
  for (int k = 0; k < 50 && !e.needs_reset(); ++k) {
    e.step(random_action(rng));
    EXPECT_EQ(e.last_record().command.pwm_prop, Vec2::Constant(kPwmMin));
    EXPECT_EQ(e.last_record().p_prop, 0.0);
  }
}

TEST(Env, StepAfterDoneThrows) {
  EnvConfig c = flat_nominal();
  c.timeout_steps = 2;
  Env e(c, 1);
  e.reset();
  e.step(Action{});
  EXPECT_EQ(e.step(Action{}).outcome, Outcome::kTimeout);
  EXPECT_THROW(e.step(Action{}), std::logic_error);
}

TEST(VecEnv, SingleEnvMatchesScalar) {
  const EnvConfig c;
  const std::uint64_t seed = 31;
  VecEnv v(c, 1, seed);
  Env e(c, derive_seed(seed, 0));
  ASSERT_TRUE(same_bits(v.reset(), e.reset()));
  Rng rng(4);
  for (int k = 0; k < 200; ++k) {
    const Action a = random_action(rng);
    std::vector<float> af(a.begin(), a.end());
    v.step(af);
    if (v.reset_flags()[0]) {
      e.reset();
    } else {
      const Action rounded{af[0], af[1], af[2], af[3], af[4], af[5]};
      const StepResult r = e.step(rounded);
      ASSERT_EQ(v.rewards()[0], r.reward.weighted_total);
    }
    ASSERT_TRUE(same_bits(v.observations(), e.observation()));
  }
}

TEST(VecEnv, EnvsAreIndependent) {
  const EnvConfig c;
  const std::uint64_t seed = 9;
  VecEnv v(c, 3, seed);
  std::vector<Env> scalar;
  for (int i = 0; i < 3; ++i) scalar.emplace_back(c, derive_seed(seed, static_cast<std::uint64_t>(i)));
  v.reset();
  for (Env& e : scalar) e.reset();
  Rng rng(6);
  std::vector<float> batch(3 * kActionDim);
  for (int k = 0; k < 100; ++k) {
    for (float& x : batch) x = static_cast<float>(rng.uniform(-1.0, 1.0));
    v.step(batch);
    for (int i = 0; i < 3; ++i) {
      Action a;
      for (int j = 0; j < kActionDim; ++j) a[j] = batch[i * kActionDim + j];
      if (v.reset_flags()[i]) scalar[i].reset();
      else scalar[i].step(a);
      const auto row = v.observations().begin() + i * v.obs_dim();
      ASSERT_TRUE(std::equal(row, row + v.obs_dim(), scalar[i].observation().begin()));
    }
  }
}

TEST(VecEnv, ShapeMismatchRejected) {
  VecEnv v(EnvConfig{}, 2, 1);
  v.reset();
  std::vector<float> bad(7, 0.0f);
  EXPECT_THROW(v.step(bad), ConfigError);
  EXPECT_THROW(VecEnv(EnvConfig{}, 0, 1), ConfigError);
}

TEST(VecEnv, SteadyStateBuffersDoNotGrow) {
  VecEnv v(EnvConfig{}, 16, 1);
  v.reset();
  const float* obs = v.observations().data();
  std::vector<float> act(16 * kActionDim, 0.0f);
  for (int k = 0; k < 200; ++k) {
    v.step(act);
    v.clear_finished();
  }
  EXPECT_EQ(v.observations().data(), obs);
  EXPECT_EQ(v.observations().size(), static_cast<std::size_t>(16 * v.obs_dim()));
}

TEST(EpisodeCsv, Header) {
  EXPECT_STREQ(kEpisodeCsvHeader,
               "t,x,y,z,pitch,roll,yaw,vx,vy,vz,pwm1,pwm2,w1_ref,w2_ref,s1,s2,P_prop,P_wheel,E_cum,r_total,outcome");
  std::ostringstream os;
  StepRecord r;
  r.outcome = Outcome::kGoal;
  write_step_record(os, r);
  const std::string row = os.str();
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), 20);
  EXPECT_EQ(row.substr(row.size() - 5), "goal\n");
}
