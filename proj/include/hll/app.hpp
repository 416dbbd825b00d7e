#pragma once

// Command-line front end: terrain, rollout, train, ablate, calibrate.
// Every command resolves one manifest (config files, then --set overrides,
// then dedicated flags) and writes its echo next to the outputs.

#include <hll/baseline.hpp>
#include <hll/config.hpp>
#include <hll/trainer.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace hll {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitMissing = 3;
inline constexpr int kExitSimFault = 4;

enum class Controller { kPolicy, kDecoupled, kScripted };

inline Controller controller_from_string(const std::string& s) {
  if (s == "policy") return Controller::kPolicy;
  if (s == "decoupled") return Controller::kDecoupled;
  if (s == "scripted") return Controller::kScripted;
  throw ConfigError("unknown controller '" + s + "'");
}

struct RunManifest {
  std::string controller = "policy";
  std::uint64_t seed = 1;
  int envs = 1;
  std::string out = "runs/default";
  int episodes = 1;
  std::string checkpoint;
  std::string preset;
  std::array<double, kActionDim> action{};  ///< scripted controller, held constant
  int eval_episodes = 256;
  int eval_envs = 64;
  double eval_step_height = -1.0;  ///< m, fixed step for ablation evaluation; negative keeps the training terrain

  void validate() const {
    controller_from_string(controller);
    if (envs < 1 || episodes < 1 || eval_episodes < 1 || eval_envs < 1)
      throw ConfigError("run counts must be at least 1");
    if (out.empty()) throw ConfigError("output directory must be set");
  }
};

template <typename V>
void visit_config(V& v, RunManifest& r) {
  v("run.controller", r.controller);
  v("run.seed", r.seed);
  v("run.envs", r.envs);
  v("run.out", r.out);
  v("run.episodes", r.episodes);
  v("run.checkpoint", r.checkpoint);
  v("run.preset", r.preset);
  v("run.action", r.action);
  v("run.eval_episodes", r.eval_episodes);
  v("run.eval_envs", r.eval_envs);
  v("run.eval_step_height", r.eval_step_height);
}

struct ResolvedConfig {
  RunManifest run;
  EnvConfig env;
  PPOConfig ppo;
  DecoupledConfig decoupled;

  /// Full resolved configuration; loadable again with --config.
  std::string echo() const {
    return config_echo(run) + "\n" + config_echo(env) + "\n" + config_echo(ppo) + "\n" + config_echo(decoupled);
  }
};

inline ResolvedConfig resolve_config(const KeyValues& kv) {
  ResolvedConfig c;
  ConfigReader r(kv);
  visit_config(r, c.run);
  c.decoupled = c.run.preset.empty() ? decouple_stand_preset() : decoupled_preset(c.run.preset);
  visit_config(r, c.decoupled);
  visit_config(r, c.env);
  visit_config(r, c.ppo);
  r.require_all_known(kFreeformPrefixes);
  c.ppo.seed = c.run.seed;
  c.run.validate();
  c.env.validate();
  c.ppo.validate();
  c.decoupled.validate();
  return c;
}

namespace cli {

struct CommonOptions {
  std::vector<std::string> configs;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> mode;
  std::optional<int> envs;
  std::optional<std::string> terrain_file;
};

inline void add_common(CLI::App* app, CommonOptions& o, bool with_envs = true) {
  app->add_option("-c,--config", o.configs, "config file (repeatable, later files win; default $HLL_CONFIG)");
  app->add_option("--set", o.sets, "override, section.key=value (repeatable)");
  app->add_option("--seed", o.seed, "master seed");
  app->add_option("-o,--out", o.out, "output directory");
  app->add_option("--mode", o.mode, "hybrid | wheels_only | props_only");
  if (with_envs) app->add_option("--envs", o.envs, "number of parallel environments");
  app->add_option("--terrain-file", o.terrain_file, "height-field grid file used instead of the generator");
}

/// Config files, then --set, then dedicated flags. `envs_key` names the
/// config key the --envs flag writes.
inline KeyValues gather(const CommonOptions& o, const std::string& envs_key) {
  KeyValues kv;
  std::vector<std::string> paths = o.configs;
  if (paths.empty())
    if (const char* env = std::getenv("HLL_CONFIG"); env && *env) paths.emplace_back(env);
  for (const std::string& p : paths) kv.merge(KeyValues::load(p));
  for (const std::string& s : o.sets) kv.apply_override(s);
  if (o.seed) kv.set("run.seed", std::to_string(*o.seed));
  if (o.out) kv.set("run.out", *o.out);
  if (o.mode) kv.set("env.mode", *o.mode);
  if (o.envs) kv.set(envs_key, std::to_string(*o.envs));
  if (o.terrain_file) kv.set("terrain.file", *o.terrain_file);
  return kv;
}

inline std::filesystem::path prepare_out(const std::string& dir) {
  std::filesystem::path p(dir);
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec || !std::filesystem::is_directory(p)) throw ConfigError("cannot create output directory '" + dir + "'");
  const std::filesystem::path probe = p / ".write_probe";
  {
    std::ofstream os(probe);
    if (!os) throw ConfigError("output directory '" + dir + "' is not writable");
  }
  std::filesystem::remove(probe, ec);
  return p;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write '" + path.string() + "'");
  os << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingArtifact("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline nlohmann::json mean_std(const std::vector<double>& xs) {
  nlohmann::json j;
  if (xs.empty()) {
    j["mean"] = nullptr;
    j["std"] = nullptr;
    return j;
  }
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - m) * (x - m);
  var /= static_cast<double>(xs.size());
  j["mean"] = m;
  j["std"] = std::sqrt(var);
  return j;
}

/// Deterministic mean action for a row-major observation batch.
inline std::vector<float> policy_actions(const Policy& policy, const RunningNorm& norm, bool normalize,
                                         const std::vector<float>& obs, int n, int obs_dim) {
  Eigen::Map<const MatX<float>> o(obs.data(), obs_dim, n);
  const MatX<float> x = normalize ? norm.apply(o.eval()) : MatX<float>(o);
  const MatX<float> mu = policy.mean(x);
  std::vector<float> out(static_cast<std::size_t>(n) * kActionDim);
  Eigen::Map<MatX<float>>(out.data(), kActionDim, n) = mu;
  return out;
}

// ---------------------------------------------------------------------------
// terrain

struct TerrainOptions {
  std::optional<double> difficulty;
  std::optional<double> roughness;
  std::optional<double> step_height;
  std::optional<std::string> type;
  std::optional<int> rings;
  std::string file = "terrain.grid";
};

inline int cmd_terrain(const CommonOptions& co, const TerrainOptions& to, std::ostream& out) {
  KeyValues kv = gather(co, "run.envs");
  if (to.difficulty) kv.set("terrain.difficulty", detail::fmt_double(*to.difficulty));
  if (to.roughness) kv.set("terrain.roughness", detail::fmt_double(*to.roughness));
  if (to.step_height) kv.set("terrain.step_height", detail::fmt_double(*to.step_height));
  if (to.type) kv.set("terrain.type", *to.type);
  if (to.rings) kv.set("terrain.rings", std::to_string(*to.rings));
  if (co.seed || !kv.has("terrain.seed")) kv.set("terrain.seed", kv.has("run.seed") ? kv.get("run.seed") : "1");
  const ResolvedConfig rc = resolve_config(kv);
  const TerrainSpec& spec = rc.env.terrain;
  const HeightField field = generate_terrain(spec);

  const std::filesystem::path dir = prepare_out(rc.run.out);
  std::ostringstream grid;
  write_height_field(grid, field, spec_echo(spec));
  const std::string bytes = grid.str();
  const std::filesystem::path path = dir / to.file;
  write_text(path, bytes);
  write_text(dir / "manifest.ini", rc.echo());

  double max_elev = -std::numeric_limits<double>::infinity();
  for (int iy = 0; iy < field.ny(); ++iy)
    for (int ix = 0; ix < field.nx(); ++ix) max_elev = std::max(max_elev, field.at(ix, iy));
  char buf[256];
  std::snprintf(buf, sizeof buf, "type %s\nrings %d\nstep_height_m %.6f\nmax_elevation_m %.6f\ncells %dx%d\n",
                to_string(spec.type), spec.ring_count(), spec.step_height(), max_elev, field.nx(), field.ny());
  out << buf << "checksum " << hex64(fnv1a(bytes)) << "\nfile " << path.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// rollout

struct EpisodeLog {
  int index = 0;
  int env = 0;
  Outcome outcome = Outcome::kRunning;
  int steps = 0;
  double energy = 0.0;
  double duration = 0.0;
  double peak_abs_pitch = 0.0;
  double total_reward = 0.0;
};

inline nlohmann::json episode_json(const EpisodeLog& e) {
  nlohmann::json j;
  j["index"] = e.index;
  j["env"] = e.env;
  j["outcome"] = to_string(e.outcome);
  j["success"] = e.outcome == Outcome::kGoal;
  j["steps"] = e.steps;
  j["energy_J"] = e.energy;
  j["duration_s"] = e.duration;
  j["mean_power_W"] = e.duration > 0.0 ? e.energy / e.duration : 0.0;
  j["peak_abs_pitch_deg"] = e.peak_abs_pitch * 180.0 / kPi;
  j["total_reward"] = e.total_reward;
  return j;
}

inline std::string episode_file(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "episode_%04d.csv", index);
  return buf;
}

/// Runs `run.episodes` episodes across `run.envs` lockstep environments and
/// writes one CSV per completed episode plus summary.json.
inline int cmd_rollout(const ResolvedConfig& rc, std::ostream& out) {
  const RunManifest& run = rc.run;
  const Controller ctrl = controller_from_string(run.controller);
  if (ctrl == Controller::kDecoupled && rc.env.mode != Mode::kHybrid)
    throw ConfigError("the decoupled controller drives wheels and propellers; use mode hybrid");

  std::optional<TrainerState> ckpt;
  if (ctrl == Controller::kPolicy) {
    if (run.checkpoint.empty()) throw MissingArtifact("controller 'policy' needs run.checkpoint");
    ckpt = load_checkpoint(run.checkpoint);
  }
  const std::filesystem::path dir = prepare_out(run.out);
  write_text(dir / "manifest.ini", rc.echo());

  VecEnv envs(rc.env, run.envs, run.seed);
  if (ckpt && ckpt->policy.spec().obs_dim != envs.obs_dim())
    throw ConfigError("checkpoint observation width " + std::to_string(ckpt->policy.spec().obs_dim) +
                      " does not match the environment (" + std::to_string(envs.obs_dim()) + ")");
  const int n = envs.size();
  const double cdt = rc.env.control_dt();
  std::vector<DecoupledController> decoupled(static_cast<std::size_t>(n), DecoupledController(rc.decoupled));
  std::vector<std::string> buffers(static_cast<std::size_t>(n));
  std::vector<EpisodeLog> logs;
  envs.reset();

  std::vector<float> actions(static_cast<std::size_t>(n) * kActionDim);
  std::vector<ActuatorCommand> commands(static_cast<std::size_t>(n));
  std::ostringstream row;
  while (static_cast<int>(logs.size()) < run.episodes) {
    for (int i = 0; i < n; ++i) {
      if (envs.reset_flags()[static_cast<std::size_t>(i)]) {
        decoupled[static_cast<std::size_t>(i)].reset();
        buffers[static_cast<std::size_t>(i)] = std::string(kEpisodeCsvHeader) + "\n";
      }
    }
    switch (ctrl) {
      case Controller::kPolicy:
        actions = policy_actions(ckpt->policy, ckpt->norm, rc.ppo.normalize_obs, envs.observations(), n, envs.obs_dim());
        envs.step(actions);
        break;
      case Controller::kScripted:
        for (int i = 0; i < n; ++i)
          for (int k = 0; k < kActionDim; ++k)
            actions[static_cast<std::size_t>(i) * kActionDim + k] = static_cast<float>(run.action[static_cast<std::size_t>(k)]);
        envs.step(actions);
        break;
      case Controller::kDecoupled:
        for (int i = 0; i < n; ++i) {
          const Env& e = envs.env(i);
          const double t = e.episode().step_count * cdt;
          commands[static_cast<std::size_t>(i)] = decoupled[static_cast<std::size_t>(i)].command(e.sim().robot, t, cdt);
        }
        envs.step_commands(commands);
        break;
    }
    for (int i = 0; i < n && static_cast<int>(logs.size()) < run.episodes; ++i) {
      const std::size_t u = static_cast<std::size_t>(i);
      if (envs.reset_flags()[u]) continue;
      const Env& e = envs.env(i);
      row.str("");
      write_step_record(row, e.last_record());
      buffers[u] += row.str();
      if (envs.outcomes()[u] == Outcome::kRunning) continue;
      EpisodeLog log;
      log.index = static_cast<int>(logs.size());
      log.env = i;
      log.outcome = envs.outcomes()[u];
      log.steps = e.episode().step_count;
      log.energy = e.episode().energy;
      log.duration = log.steps * cdt;
      log.peak_abs_pitch = e.episode().peak_abs_pitch;
      log.total_reward = e.episode().total_reward;
      write_text(dir / episode_file(log.index), buffers[u]);
      logs.push_back(log);
    }
  }

  nlohmann::json summary;
  summary["controller"] = run.controller;
  summary["mode"] = to_string(rc.env.mode);
  summary["seed"] = run.seed;
  summary["episodes"] = nlohmann::json::array();
  std::vector<double> energy, power, duration, pitch;
  int goals = 0, faults = 0;
  for (const EpisodeLog& l : logs) {
    const nlohmann::json ej = episode_json(l);
    summary["episodes"].push_back(ej);
    energy.push_back(l.energy);
    power.push_back(ej["mean_power_W"].get<double>());
    duration.push_back(l.duration);
    pitch.push_back(ej["peak_abs_pitch_deg"].get<double>());
    goals += l.outcome == Outcome::kGoal;
    faults += l.outcome == Outcome::kSimFault;
  }
  summary["success_rate"] = static_cast<double>(goals) / static_cast<double>(logs.size());
  summary["energy_J"] = mean_std(energy);
  summary["mean_power_W"] = mean_std(power);
  summary["duration_s"] = mean_std(duration);
  summary["peak_abs_pitch_deg"] = mean_std(pitch);
  summary["sim_faults"] = faults;
  write_text(dir / "summary.json", summary.dump(2) + "\n");

  char buf[256];
  std::snprintf(buf, sizeof buf, "episodes %zu success_rate %.4f energy_J %.4f peak_pitch_deg %.3f sim_faults %d\n",
                logs.size(), summary["success_rate"].get<double>(), summary["energy_J"]["mean"].get<double>(),
                summary["peak_abs_pitch_deg"]["mean"].get<double>(), faults);
  out << buf;
  return faults ? kExitSimFault : kExitOk;
}

// ---------------------------------------------------------------------------
// train

inline std::string checkpoint_name(int update) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt_%06d.ckpt", update);
  return buf;
}

/// Keeps the header and rows whose update index is at most `last_update`.
inline std::string trim_metrics(const std::string& csv, int last_update) {
  std::istringstream is(csv);
  std::string line, kept;
  bool header = true;
  while (std::getline(is, line)) {
    if (header) {
      kept += line + "\n";
      header = false;
      continue;
    }
    if (line.empty()) continue;
    if (std::stoi(line.substr(0, line.find(','))) <= last_update) kept += line + "\n";
  }
  return kept;
}

struct TrainOutcome {
  std::filesystem::path latest;
  int updates = 0;
  std::int64_t steps = 0;
  int aborted_updates = 0;
};

/// Trains into `dir`: metrics.csv, ckpt_<update>.ckpt and latest.ckpt.
inline TrainOutcome train_into(const std::filesystem::path& dir, const ResolvedConfig& rc, bool resume,
                               std::ostream& out) {
  const std::string manifest = rc.echo();
  write_text(dir / "manifest.ini", manifest);
  Trainer trainer(rc.env, rc.ppo);
  const std::filesystem::path metrics_path = dir / "metrics.csv";
  const std::filesystem::path latest = dir / "latest.ckpt";
  std::string metrics = std::string(kMetricsCsvHeader) + "\n";
  if (resume) {
    const TrainerState s = load_checkpoint(latest.string());
    trainer.restore(s);
    if (std::filesystem::exists(metrics_path)) metrics = trim_metrics(read_text(metrics_path), s.update);
    out << "resumed at update " << s.update << " (" << s.steps << " steps)\n";
  }
  write_text(metrics_path, metrics);

  auto checkpoint = [&]() {
    const TrainerState s = trainer.snapshot(manifest);
    save_checkpoint((dir / checkpoint_name(trainer.updates())).string(), s);
    save_checkpoint(latest.string(), s);
  };
  if (!resume) checkpoint();

  TrainOutcome res;
  std::ofstream mos(metrics_path, std::ios::app | std::ios::binary);
  while (trainer.steps() < rc.ppo.total_steps) {
    const UpdateMetrics m = trainer.update();
    if (m.diag.aborted) {
      ++res.aborted_updates;
      out << "update " << m.update << " rejected: " << m.diag.message << "\n";
    }
    write_metrics_row(mos, m);
    mos.flush();
    char buf[200];
    std::snprintf(buf, sizeof buf, "update %d steps %lld return %.3f success %.3f energy_J %.2f\n", m.update,
                  static_cast<long long>(m.steps), m.mean_return, m.success_rate, m.mean_energy);
    out << buf << std::flush;
    if (m.update % rc.ppo.checkpoint_every == 0 || trainer.steps() >= rc.ppo.total_steps) checkpoint();
  }
  res.latest = latest;
  res.updates = trainer.updates();
  res.steps = trainer.steps();
  return res;
}

inline int cmd_train(const ResolvedConfig& rc, bool resume, std::ostream& out) {
  const std::filesystem::path dir = prepare_out(rc.run.out);
  const TrainOutcome t = train_into(dir, rc, resume, out);
  out << "trained " << t.updates << " updates, " << t.steps << " steps; latest " << t.latest.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// ablate

inline constexpr std::uint64_t kEvalStream = 0xE7A1;

inline const char* kAblationCsvHeader = "mode,success_rate,mean_energy_J";

inline int cmd_ablate(const ResolvedConfig& rc, const std::vector<std::string>& checkpoints, bool resume,
                      std::ostream& out) {
  const std::array<Mode, 3> modes{Mode::kHybrid, Mode::kWheelsOnly, Mode::kPropsOnly};
  if (!checkpoints.empty() && checkpoints.size() != modes.size())
    throw ConfigError("--checkpoints takes exactly three paths (hybrid, wheels_only, props_only)");
  for (const std::string& p : checkpoints)
    if (!std::filesystem::exists(p)) throw MissingArtifact("checkpoint '" + p + "' not found");

  const std::filesystem::path dir = prepare_out(rc.run.out);
  write_text(dir / "manifest.ini", rc.echo());
  std::ofstream csv(dir / "ablation.csv", std::ios::binary);
  csv << kAblationCsvHeader << "\n" << std::flush;
  nlohmann::json table = nlohmann::json::array();

  for (std::size_t k = 0; k < modes.size(); ++k) {
    ResolvedConfig mrc = rc;
    mrc.env.mode = modes[k];
    mrc.run.out = (dir / to_string(modes[k])).string();
    std::string ckpt_path;
    if (checkpoints.empty()) {
      const std::filesystem::path mdir = prepare_out(mrc.run.out);
      bool done = false;
      if (resume && std::filesystem::exists(mdir / "latest.ckpt"))
        done = load_checkpoint((mdir / "latest.ckpt").string()).steps >= mrc.ppo.total_steps;
      out << "== " << to_string(modes[k]) << "\n";
      if (!done) train_into(mdir, mrc, resume && std::filesystem::exists(mdir / "latest.ckpt"), out);
      ckpt_path = (mdir / "latest.ckpt").string();
    } else {
      ckpt_path = checkpoints[k];
    }
    const TrainerState s = load_checkpoint(ckpt_path);
    EnvConfig eval_env = mrc.env;
    if (rc.run.eval_step_height >= 0.0) {
      eval_env.random_difficulty = false;
      eval_env.terrain.step_height_override = rc.run.eval_step_height;
    }
    const EvalResult r = evaluate_policy(eval_env, s.policy, s.norm, mrc.ppo.normalize_obs, rc.run.eval_envs,
                                         rc.run.eval_episodes, derive_seed(rc.run.seed, kEvalStream));
    char buf[128];
    std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f\n", to_string(modes[k]), r.success_rate, r.mean_energy_success);
    csv << buf << std::flush;
    nlohmann::json row;
    row["mode"] = to_string(modes[k]);
    row["checkpoint"] = ckpt_path;
    row["episodes"] = r.episodes;
    row["successes"] = r.successes;
    row["success_rate"] = r.success_rate;
    row["mean_energy_J"] = std::isfinite(r.mean_energy_success) ? nlohmann::json(r.mean_energy_success) : nlohmann::json();
    row["mean_energy_all_J"] = r.mean_energy;
    table.push_back(row);
    write_text(dir / "ablation.json", table.dump(2) + "\n");
    out << buf;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// calibrate

struct CalibrateOptions {
  std::string kind = "thrust";
  std::string bench;
  int synthetic = 0;
  double noise = 3.94e-3;
  std::string file;
};

/// Two numeric columns per line; non-numeric lines (headers) are skipped.
inline std::vector<Sample> read_bench_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw MissingArtifact("bench file '" + path + "' not found");
  std::vector<Sample> out;
  std::string line;
  while (std::getline(is, line)) {
    for (char& c : line)
      if (c == ',' || c == ';' || c == '\t') c = ' ';
    std::istringstream ls(line);
    Sample s;
    if (ls >> s.x >> s.y) out.push_back(s);
  }
  return out;
}

inline int cmd_calibrate(const ResolvedConfig& rc, const CalibrateOptions& co, std::ostream& out) {
  if (co.bench.empty() == (co.synthetic == 0)) throw ConfigError("give exactly one of --bench or --synthetic");
  const RobotModel& m = rc.env.robot;
  std::vector<Sample> data;
  std::string source;
  if (!co.bench.empty()) {
    data = read_bench_csv(co.bench);
    source = co.bench;
  } else {
    const std::uint64_t seed = derive_seed(rc.run.seed, 0xCA1B);
    if (co.kind == "thrust")
      data = synthetic_bench([&](double u) { return pwm_to_thrust(u, m.thrust); }, kPwmMin, kPwmMax, co.synthetic, co.noise, seed);
    else if (co.kind == "prop_power")
      data = synthetic_bench([&](double u) { return m.power.prop_power(u); }, kPwmMin, kPwmMax, co.synthetic, co.noise,
                             seed);
    else if (co.kind == "wheel_power")
      data = synthetic_bench([&](double r) { return m.power.wheel_power(r); }, 0.0, m.power.rpm_max, co.synthetic,
                             co.noise, seed);
    source = "synthetic from configured model, noise sd " + detail::fmt_double(co.noise);
  }

  ConfigWriter w;
  double rmse = 0.0;
  if (co.kind == "thrust") {
    ThrustFit f = fit_thrust_map(data);
    w("thrust.coeffs", f.map.coeffs);
    rmse = f.rmse;
  } else if (co.kind == "prop_power") {
    PowerFit f = fit_power_model(data, {}, m.power);
    w("power.prop_coeffs", f.model.prop_coeffs);
    rmse = f.prop_rmse;
  } else if (co.kind == "wheel_power") {
    PowerFit f = fit_power_model({}, data, m.power);
    w("power.wheel_coeffs", f.model.wheel_coeffs);
    rmse = f.wheel_rmse;
  } else {
    throw ConfigError("unknown calibration kind '" + co.kind + "'");
  }
  w("meta.kind", co.kind);
  w("meta.source", source);
  w("meta.samples", static_cast<int>(data.size()));
  w("meta.rmse", rmse);

  const std::filesystem::path dir = prepare_out(rc.run.out);
  const std::filesystem::path path = dir / (co.file.empty() ? "calibration_" + co.kind + ".ini" : co.file);
  write_text(path, w.str());
  char buf[160];
  std::snprintf(buf, sizeof buf, "kind %s samples %zu rmse %.6g\n", co.kind.c_str(), data.size(), rmse);
  out << buf << "file " << path.string() << "\n";
  return kExitOk;
}

inline int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::kMissingArtifact: return kExitMissing;
    case ErrorKind::kNonFiniteState:
    case ErrorKind::kNonFiniteGradient: return kExitSimFault;
    default: return kExitConfig;
  }
}

}  // namespace cli

/// Entry point shared by the `hll` binary and the tests.
inline int run_cli(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Tilting-bicopter wheeled robot simulator and trainer", "hll"};
  app.require_subcommand(1);

  cli::CommonOptions co;
  cli::TerrainOptions to;
  CLI::App* terrain = app.add_subcommand("terrain", "generate a height field and print its summary");
  cli::add_common(terrain, co, false);
  terrain->add_option("--difficulty", to.difficulty, "stair difficulty");
  terrain->add_option("--roughness", to.roughness, "micro-roughness amplitude (m)");
  terrain->add_option("--step-height", to.step_height, "explicit step height (m)");
  terrain->add_option("--type", to.type, "inverted_pyramid | single_step | flat");
  terrain->add_option("--rings", to.rings, "stair ring count (0 fills the tile)");
  terrain->add_option("--file", to.file, "grid file name inside the output directory");

  std::optional<std::string> controller, checkpoint, preset;
  std::optional<int> episodes;
  CLI::App* rollout = app.add_subcommand("rollout", "run episodes and log them");
  cli::add_common(rollout, co);
  rollout->add_option("--controller", controller, "policy | decoupled | scripted");
  rollout->add_option("--checkpoint", checkpoint, "policy checkpoint");
  rollout->add_option("--preset", preset, "decoupled preset (decouple_stand | decouple_fwd)");
  rollout->add_option("--episodes", episodes, "episodes to record");

  bool resume = false;
  std::optional<std::int64_t> total_steps;
  CLI::App* train = app.add_subcommand("train", "train a policy");
  cli::add_common(train, co);
  train->add_flag("--resume", resume, "continue from latest.ckpt in the output directory");
  train->add_option("--total-steps", total_steps, "environment steps to train for");

  std::vector<std::string> ckpts;
  CLI::App* ablate = app.add_subcommand("ablate", "train or evaluate hybrid / wheels-only / props-only");
  cli::add_common(ablate, co);
  ablate->add_option("--checkpoints", ckpts, "three checkpoints to evaluate instead of training")->delimiter(',');
  ablate->add_flag("--resume", resume, "reuse finished modes and continue interrupted ones");
  ablate->add_option("--total-steps", total_steps, "environment steps per mode");

  cli::CalibrateOptions cal;
  CLI::App* calibrate = app.add_subcommand("calibrate", "fit thrust or power maps to bench data");
  cli::add_common(calibrate, co, false);
  calibrate->add_option("--kind", cal.kind, "thrust | prop_power | wheel_power");
  calibrate->add_option("--bench", cal.bench, "bench CSV with two columns (input, measurement)");
  calibrate->add_option("--synthetic", cal.synthetic, "generate N noisy samples from the configured model");
  calibrate->add_option("--noise", cal.noise, "synthetic noise standard deviation");
  calibrate->add_option("--file", cal.file, "output file name inside the output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (terrain->parsed()) return cli::cmd_terrain(co, to, out);

    const bool trains = train->parsed() || ablate->parsed();
    KeyValues kv = cli::gather(co, trains ? "ppo.num_envs" : "run.envs");
    if (controller) kv.set("run.controller", *controller);
    if (checkpoint) kv.set("run.checkpoint", *checkpoint);
    if (preset) kv.set("run.preset", *preset);
    if (episodes) kv.set("run.episodes", std::to_string(*episodes));
    if (total_steps) kv.set("ppo.total_steps", std::to_string(*total_steps));
    const ResolvedConfig rc = resolve_config(kv);

    if (rollout->parsed()) return cli::cmd_rollout(rc, out);
    if (train->parsed()) return cli::cmd_train(rc, resume, out);
    if (ablate->parsed()) return cli::cmd_ablate(rc, ckpts, resume, out);
    if (calibrate->parsed()) return cli::cmd_calibrate(rc, cal, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return cli::exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitConfig;
}

}  // namespace hll
