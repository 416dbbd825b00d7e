// Drives the decoupled baseline at a single step in the RL environment and
// prints an energy breakdown per phase. Usage: step_climb [step_height_m] [preset]

#include <hll/baseline.hpp>
#include <hll/env.hpp>

#include <cstdio>
#include <string>

int main(int argc, char** argv) {
  using namespace hll;
  const double h = argc > 1 ? std::stod(argv[1]) : 0.08;
  const std::string preset = argc > 2 ? argv[2] : "decouple_fwd";

  EnvConfig cfg;
  cfg.terrain.type = TerrainType::kSingleStep;
  cfg.terrain.step_height_override = h;
  cfg.randomization = RandomizationSpec{0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  cfg.timeout_steps = 500;

  Env env(cfg, 7);
  env.reset();
  DecoupledController ctrl(decoupled_preset(preset));
  ctrl.reset();

  std::printf("%s on a %.3f m step, goal at (%.2f, %.2f)\n", preset.c_str(), h, env.episode().goal.x(),
              env.episode().goal.y());
  std::printf("%6s %8s %8s %8s %9s %9s %9s\n", "t", "x", "z", "pitch", "P_prop", "P_wheel", "E_cum");
  const double dt = cfg.control_dt();
  int k = 0;
  StepResult r;
  do {
    r = env.step_command(ctrl.command(env.sim().robot, k * dt, dt));
    const StepRecord& rec = env.last_record();
    if (k % 25 == 0 || r.done())
      std::printf("%6.2f %8.3f %8.3f %8.1f %9.2f %9.2f %9.2f\n", rec.t, rec.position.x(), rec.position.z(),
                  rec.attitude.pitch * 180.0 / kPi, rec.p_prop, rec.p_wheel, rec.energy_cum);
    ++k;
  } while (!r.done());
  std::printf("outcome %s after %.2f s\n", to_string(r.outcome), k * dt);
  return 0;
}
