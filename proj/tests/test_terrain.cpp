#include <hll/terrain.hpp>

#include <gtest/gtest.h>

#include <sstream>

using namespace hll;

namespace {

TerrainSpec at_difficulty(double d) {
  TerrainSpec s;
  s.difficulty = d;
  return s;
}

TerrainSpec single_step(double h) {
  TerrainSpec s;
  s.type = TerrainType::kSingleStep;
  s.step_height_override = h;
  return s;
}

}  // namespace

TEST(StepHeight, Endpoints) {
  EXPECT_NEAR(at_difficulty(0.01).step_height(), 0.01, 1e-12);
  EXPECT_NEAR(at_difficulty(0.70).step_height(), 0.126, 1e-12);
}

TEST(StepHeight, Midpoint) { EXPECT_NEAR(at_difficulty(0.355).step_height(), 0.068, 1e-12); }

TEST(StepHeight, OutOfRangeRejected) {
  EXPECT_THROW(at_difficulty(0.9).validate(), InvalidSpec);
  EXPECT_THROW(at_difficulty(0.0).validate(), InvalidSpec);
}

TEST(Pyramid, RingCountAndMaxElevation) {
  const TerrainSpec s = at_difficulty(0.01);
  EXPECT_EQ(s.ring_count(), 7);
  const HeightField f = generate_terrain(s);
  EXPECT_NEAR(f.max_height(), 0.07, 1e-12);
  EXPECT_NEAR(s.max_elevation(), 0.07, 1e-12);
  EXPECT_EQ(f.min_height(), 0.0);
}

TEST(Pyramid, TooManyRingsRejected) {
  TerrainSpec s;
  s.rings = 20;
  EXPECT_THROW(generate_terrain(s), InvalidSpec);
}

TEST(Pyramid, HeightNondecreasingOutward) {
  const HeightField f = generate_terrain(at_difficulty(0.5));
  for (double theta : {0.0, 0.3, 0.785, 1.2, 2.5, -2.0}) {
    double prev = 0.0;
    for (double r = 0.0; r < 6.9; r += 0.01) {
      const double h = f.height(r * Vec2(std::cos(theta), std::sin(theta)));
      EXPECT_GE(h, prev - 1e-12) << theta << " " << r;
      prev = h;
    }
  }
}

TEST(HeightField, CellCenterIdentity) {
  TerrainSpec s = at_difficulty(0.4);
  s.roughness = 0.004;
  s.seed = 3;
  const HeightField f = generate_terrain(s);
  for (int iy = 0; iy < f.ny(); iy += 17)
    for (int ix = 0; ix < f.nx(); ix += 13) EXPECT_EQ(f.height(f.node(ix, iy)), f.at(ix, iy));
}

TEST(HeightField, FlatPlatform) {
  const HeightField f = generate_terrain(at_difficulty(0.5));
  const HeightSample s = f.sample(Vec2(0.3, -0.7));
  EXPECT_EQ(s.height, 0.0);
  EXPECT_EQ(s.normal, Vec3(0.0, 0.0, 1.0));
  EXPECT_FALSE(s.out_of_bounds);
}

TEST(HeightField, MidRiserBetweenRings) {
  const double h = 0.08;
  const HeightField f = generate_terrain(single_step(h));
  const double mid = f.height(Vec2(1.975, 0.0));
  EXPECT_GT(mid, 0.0);
  EXPECT_LT(mid, h);
  EXPECT_EQ(f.height(Vec2(1.9, 0.0)), 0.0);
  EXPECT_EQ(f.height(Vec2(2.1, 0.0)), h);
}

TEST(HeightField, RiserNormalTiltsInward) {
  const HeightField f = generate_terrain(single_step(0.08));
  const HeightSample s = f.sample(Vec2(1.975, 0.0));
  EXPECT_LT(s.normal.x(), 0.0);
  EXPECT_NEAR(s.normal.norm(), 1.0, 1e-12);
}

TEST(HeightField, OutOfBoundsFlagged) {
  const HeightField f = generate_terrain(at_difficulty(0.5));
  EXPECT_TRUE(f.sample(Vec2(7.5, 0.0)).out_of_bounds);
  EXPECT_FALSE(f.sample(Vec2(6.9, 0.0)).out_of_bounds);
}

TEST(Roughness, ZeroAmplitudeIsBitwiseIdentity) {
  const HeightField f = generate_terrain(at_difficulty(0.5));
  EXPECT_EQ(add_micro_roughness(f, 0.0, 42), f);
}

TEST(Roughness, AmplitudeBound) {
  const HeightField f = generate_terrain(at_difficulty(0.5));
  const HeightField g = add_micro_roughness(f, 0.005, 42);
  double worst = 0.0;
  for (std::size_t i = 0; i < f.data().size(); ++i) worst = std::max(worst, std::abs(g.data()[i] - f.data()[i]));
  EXPECT_LE(worst, 0.005);
  EXPECT_GT(worst, 0.001);
}

TEST(Roughness, Seeded) {
  const HeightField f = generate_terrain(at_difficulty(0.5));
  EXPECT_EQ(add_micro_roughness(f, 0.005, 42), add_micro_roughness(f, 0.005, 42));
  EXPECT_FALSE(add_micro_roughness(f, 0.005, 42) == add_micro_roughness(f, 0.005, 43));
}

TEST(Curriculum, UpperBound) {
  CurriculumState c;
  EXPECT_NEAR(c.upper_bound(), 3.6787944117144233, 1e-12);
  c.episode = 100000000;
  EXPECT_NEAR(c.upper_bound(), 10.0, 1e-6);
}

TEST(Curriculum, DistancesRespectMinimum) {
  const TerrainSpec s = at_difficulty(0.5);
  Rng rng(17);
  CurriculumState c;
  for (int k = 0; k < 10000; ++k) {
    c.episode = static_cast<std::uint64_t>(k);
    const SpawnTarget st = sample_spawn_and_target(s, c, rng);
    EXPECT_GE(st.distance, 0.5);
    EXPECT_LE(std::max(std::abs(st.spawn_xy.x()), std::abs(st.spawn_xy.y())), 2.0);
    EXPECT_LE(st.distance, c.upper_bound() + 1e-12);
  }
}

TEST(Curriculum, OffPlatformTargets) {
  const TerrainSpec s = single_step(0.08);
  SpawnOptions opt;
  opt.require_off_platform = true;
  Rng rng(2);
  CurriculumState c;
  c.episode = 1000;
  for (int k = 0; k < 1000; ++k) {
    const SpawnTarget st = sample_spawn_and_target(s, c, rng, opt);
    EXPECT_GE(std::max(std::abs(st.target_xy.x()), std::abs(st.target_xy.y())), 2.3);
  }
}

TEST(Curriculum, ImpossibleSamplingThrows) {
  TerrainSpec s = single_step(0.08);
  s.platform_width = 0.4;
  Rng rng(1);
  EXPECT_THROW(sample_spawn_and_target(s, CurriculumState{}, rng), SamplingFailed);
}

TEST(GridFile, RoundTrip) {
  TerrainSpec s = at_difficulty(0.3);
  s.roughness = 0.003;
  s.seed = 8;
  const HeightField f = generate_terrain(s);
  std::stringstream ss;
  write_height_field(ss, f, spec_echo(s));
  EXPECT_EQ(read_height_field(ss), f);
}

TEST(GridFile, MissingFile) { EXPECT_THROW(load_height_field("/nonexistent/terrain.grid"), MissingArtifact); }
