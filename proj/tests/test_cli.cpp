#include <hll/app.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

using namespace hll;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

CliResult hll_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "hll");
  std::vector<char*> argv;
  for (std::string& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  CliResult r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hll_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) { return hll::cli::read_text(p); }

std::string field(const std::string& text, const std::string& key) {
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line))
    if (line.rfind(key + " ", 0) == 0) return line.substr(key.size() + 1);
  return {};
}

const std::vector<std::string> kTinyTrain{"--set", "ppo.horizon=8", "--set", "ppo.minibatch=32",
                                          "--set", "ppo.epochs=1",  "--set", "network.actor_hidden=16",
                                          "--set", "network.critic_hidden=16", "--envs", "4"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST(Cli, TerrainHardestStepHeight) {
  const fs::path d = scratch("terrain_hard");
  const CliResult r = hll_cli({"terrain", "--difficulty", "0.70", "-o", d.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(field(r.out, "step_height_m"), "0.126000");
  EXPECT_TRUE(fs::exists(d / "terrain.grid"));
  EXPECT_TRUE(fs::exists(d / "manifest.ini"));
}

TEST(Cli, TerrainEasiest) {
  const fs::path d = scratch("terrain_easy");
  const CliResult r = hll_cli({"terrain", "--difficulty", "0.01", "--roughness", "0", "-o", d.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(field(r.out, "rings"), "7");
  EXPECT_EQ(field(r.out, "max_elevation_m"), "0.070000");
}

TEST(Cli, TerrainChecksumDeterministic) {
  const fs::path a = scratch("terrain_a"), b = scratch("terrain_b"), c = scratch("terrain_c");
  const std::vector<std::string> flags{"terrain", "--difficulty", "0.4", "--roughness", "0.004", "--seed", "7"};
  const CliResult ra = hll_cli(with(flags, {"-o", a.string()}));
  const CliResult rb = hll_cli(with(flags, {"-o", b.string()}));
  ASSERT_EQ(ra.code, 0);
  EXPECT_EQ(field(ra.out, "checksum"), field(rb.out, "checksum"));
  EXPECT_EQ(slurp(a / "terrain.grid"), slurp(b / "terrain.grid"));
  const CliResult rc = hll_cli({"terrain", "--difficulty", "0.4", "--roughness", "0.004", "--seed", "8", "-o", c.string()});
  EXPECT_NE(field(ra.out, "checksum"), field(rc.out, "checksum"));
}

TEST(Cli, TerrainOutOfRangeDifficulty) {
  EXPECT_EQ(hll_cli({"terrain", "--difficulty", "0.9", "-o", scratch("terrain_bad").string()}).code, kExitConfig);
}

TEST(Cli, ScriptedZeroActionOnFlatGround) {
  const fs::path d = scratch("rollout_zero");
  const CliResult r = hll_cli({"rollout", "--controller", "scripted", "--set", "terrain.type=flat", "--set",
                           "env.timeout_steps=100", "-o", d.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto s = nlohmann::json::parse(slurp(d / "summary.json"));
  const auto& ep = s["episodes"][0];
  EXPECT_EQ(ep["energy_J"].get<double>(), 0.0);
  EXPECT_FALSE(ep["success"].get<bool>());
  EXPECT_EQ(ep["outcome"].get<std::string>(), "timeout");
  const std::string csv = slurp(d / "episode_0000.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kEpisodeCsvHeader);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 101);
}

TEST(Cli, MeanPowerIsEnergyOverDuration) {
  const fs::path d = scratch("rollout_power");
  const CliResult r = hll_cli({"rollout", "--controller", "scripted", "--set", "run.action=0.2,0.2,0,0,0.3,0.3",
                           "--set", "env.timeout_steps=50", "--episodes", "2", "-o", d.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto s = nlohmann::json::parse(slurp(d / "summary.json"));
  for (const auto& ep : s["episodes"]) {
    const double e = ep["energy_J"].get<double>();
    EXPECT_GT(e, 0.0);
    EXPECT_EQ(ep["mean_power_W"].get<double>(), e / ep["duration_s"].get<double>());
  }
}

TEST(Cli, DecoupledStandFailsStep) {
  const fs::path d = scratch("rollout_stand");
  const CliResult r = hll_cli({"rollout", "-c", std::string(HLL_SOURCE_DIR) + "/config/decouple_stand.ini", "-o", d.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto s = nlohmann::json::parse(slurp(d / "summary.json"));
  EXPECT_FALSE(s["episodes"][0]["success"].get<bool>());
  EXPECT_LT(s["episodes"][0]["peak_abs_pitch_deg"].get<double>(), 45.0);
}

TEST(Cli, RolloutCsvByteIdentical) {
  const fs::path a = scratch("rollout_det_a"), b = scratch("rollout_det_b");
  const std::vector<std::string> flags{"rollout", "--controller", "scripted", "--set",
                                       "run.action=0.5,0.4,0.1,0.1,0.5,0.5", "--set", "env.timeout_steps=80",
                                       "--envs", "2", "--episodes", "3", "--seed", "12"};
  ASSERT_EQ(hll_cli(with(flags, {"-o", a.string()})).code, 0);
  ASSERT_EQ(hll_cli(with(flags, {"-o", b.string()})).code, 0);
  for (const char* f : {"episode_0000.csv", "episode_0001.csv", "episode_0002.csv", "summary.json"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(hll_cli({"rollout", "--controller", "policy", "-o", scratch("rc_missing").string()}).code, kExitMissing);
  EXPECT_EQ(hll_cli({"rollout", "--checkpoint", "/nonexistent.ckpt", "-o", scratch("rc_missing2").string()}).code,
            kExitMissing);
  EXPECT_EQ(hll_cli({"rollout", "--set", "robot.mas=1", "-o", scratch("rc_key").string()}).code, kExitConfig);
  EXPECT_EQ(hll_cli({"rollout", "-c", "/nonexistent.ini"}).code, kExitMissing);
  EXPECT_EQ(hll_cli({}).code, kExitConfig);
  EXPECT_EQ(hll_cli({"fly"}).code, kExitConfig);
  EXPECT_EQ(hll_cli({"rollout", "--controller", "decoupled", "--mode", "wheels_only", "-o", scratch("rc_mode").string()})
                .code,
            kExitConfig);
}

TEST(Cli, TrainZeroStepsWritesInitialCheckpoint) {
  const fs::path d = scratch("train_zero");
  const CliResult r = hll_cli(with({"train", "--total-steps", "0", "-o", d.string()}, kTinyTrain));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(d / "latest.ckpt"));
  EXPECT_TRUE(fs::exists(d / "ckpt_000000.ckpt"));
  EXPECT_EQ(slurp(d / "metrics.csv"), std::string(kMetricsCsvHeader) + "\n");
  const TrainerState s = load_checkpoint((d / "latest.ckpt").string());
  EXPECT_EQ(s.update, 0);
  EXPECT_EQ(s.steps, 0);
}

TEST(Cli, TrainMetricsByteIdentical) {
  const fs::path a = scratch("train_det_a"), b = scratch("train_det_b");
  const std::vector<std::string> flags = with({"train", "--total-steps", "96", "--seed", "5"}, kTinyTrain);
  ASSERT_EQ(hll_cli(with(flags, {"-o", a.string()})).code, 0);
  ASSERT_EQ(hll_cli(with(flags, {"-o", b.string()})).code, 0);
  const std::string ma = slurp(a / "metrics.csv");
  EXPECT_EQ(std::count(ma.begin(), ma.end(), '\n'), 4);
  EXPECT_EQ(ma, slurp(b / "metrics.csv"));
  const TrainerState sa = load_checkpoint((a / "latest.ckpt").string());
  const TrainerState sb = load_checkpoint((b / "latest.ckpt").string());
  EXPECT_EQ(sa.policy.params(), sb.policy.params());
  EXPECT_EQ(sa.rng_state, sb.rng_state);
}

TEST(Cli, TrainResumeContinues) {
  const fs::path d = scratch("train_resume");
  ASSERT_EQ(hll_cli(with({"train", "--total-steps", "32", "-o", d.string()}, kTinyTrain)).code, 0);
  const CliResult r = hll_cli(with({"train", "--resume", "--total-steps", "96", "-o", d.string()}, kTinyTrain));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(load_checkpoint((d / "latest.ckpt").string()).update, 3);
  const std::string m = slurp(d / "metrics.csv");
  EXPECT_EQ(std::count(m.begin(), m.end(), '\n'), 4);
}

TEST(Cli, PolicyRolloutFromCheckpoint) {
  const fs::path t = scratch("policy_train"), d = scratch("policy_rollout");
  ASSERT_EQ(hll_cli(with({"train", "--total-steps", "32", "-o", t.string()}, kTinyTrain)).code, 0);
  const CliResult r = hll_cli({"rollout", "--checkpoint", (t / "latest.ckpt").string(), "--set",
                           "env.timeout_steps=30", "-o", d.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(d / "episode_0000.csv"));
}

TEST(Cli, AblateEvaluationOnly) {
  const fs::path t = scratch("abl_train"), d = scratch("abl_eval");
  ASSERT_EQ(hll_cli(with({"train", "--total-steps", "0", "-o", t.string()}, kTinyTrain)).code, 0);
  const std::string ck = (t / "latest.ckpt").string();
  const CliResult r = hll_cli({"ablate", "--checkpoints", ck + "," + ck + "," + ck, "--set", "run.eval_envs=2", "--set",
                           "run.eval_episodes=2", "--set", "env.timeout_steps=20", "--set", "run.eval_step_height=0.08",
                               "-o", d.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = slurp(d / "ablation.csv");
  std::istringstream is(csv);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(is, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0], "mode,success_rate,mean_energy_J");
  EXPECT_EQ(lines[1].substr(0, 7), "hybrid,");
  EXPECT_EQ(lines[2].substr(0, 12), "wheels_only,");
  EXPECT_EQ(lines[3].substr(0, 11), "props_only,");
  EXPECT_EQ(hll_cli({"ablate", "--checkpoints", ck + "," + ck, "-o", d.string()}).code, kExitConfig);
}

TEST(Cli, CalibrateSyntheticThrust) {
  const fs::path d = scratch("calibrate");
  const CliResult r = hll_cli({"calibrate", "--kind", "thrust", "--synthetic", "200", "-o", d.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const fs::path file = d / "calibration_thrust.ini";
  ASSERT_TRUE(fs::exists(file)) << r.out;
  const KeyValues kv = KeyValues::load(file.string());
  EXPECT_LE(std::stod(kv.get("meta.rmse")), 8e-3);
  EXPECT_NO_THROW(resolve_config(kv));
  EXPECT_EQ(hll_cli({"calibrate", "--kind", "thrust", "--synthetic", "5", "-o", d.string()}).code, kExitConfig);
}
