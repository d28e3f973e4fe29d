// fishswim: train, evaluate and compare swimming controllers, calibrate the
// servo model, synthesize reference responses and dump flow fields.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "fishswim/baseline.hpp"
#include "fishswim/calibrate.hpp"
#include "fishswim/config.hpp"
#include "fishswim/errors.hpp"
#include "fishswim/harness.hpp"

namespace fs = std::filesystem;
using namespace fishswim;

namespace {

struct Options {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  std::string task;
  std::string checkpoint;
  std::string refs;
  int trials = 3;
  int episodes = 50;
  std::int64_t steps = 0;
  std::int64_t max_episodes = 0;
  double time = 2.0;
  calibrate::ServoParams servo;
};

config::RunConfig load_config(const Options& o) {
  config::RunConfig c = o.config.empty() ? config::parse("{}", "<defaults>") : config::load(o.config);
  if (!o.task.empty()) c.env.task.kind = env::parse_task(o.task);
  env::validate(c.env);
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::string text;
  for (const std::string& l : lines) text += l + '\n';
  write_text(path, text);
}

harness::ControllerFactory policy_factory(const Options& o, const config::RunConfig& c) {
  if (c.train.env == config::EnvKind::kSanity) {
    throw ConfigError("rollouts run the fish environment; this configuration trains on the sanity environment");
  }
  if (o.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  auto agent = std::make_shared<sac::SacAgent>(sac::load_checkpoint(o.checkpoint, c.sac, config::policy_hash(c)));
  const double limit = c.env.sim.morphology.joint_limit;
  return [agent, limit] { return std::make_unique<harness::PolicyController>(agent, limit); };
}

harness::ControllerFactory baseline_factory(const config::RunConfig& c) {
  return [cfg = c.baseline] { return std::make_unique<baseline::WaypointController>(cfg); };
}

int cmd_train(const Options& o) {
  if (o.out.empty()) throw ConfigError("--out is required");
  config::RunConfig c = load_config(o);
  if (o.steps > 0) c.train.total_steps = o.steps;
  if (o.max_episodes > 0) c.train.max_episodes = o.max_episodes;
  const harness::TrainRunSummary s = harness::run_training(c, o.seed, o.out, &std::cerr);
  std::cout << "steps " << s.train.steps << " episodes " << s.train.episodes << " successes " << s.train.successes
            << " aborted " << s.train.aborted << '\n';
  return 0;
}

int cmd_eval(const Options& o) {
  const config::RunConfig c = load_config(o);
  std::vector<std::string> log;
  const harness::EvalMetrics m = harness::evaluate(c.env, policy_factory(o, c), o.episodes, o.seed, &log);
  const std::string report = harness::to_json(m);
  if (!o.out.empty()) {
    write_text(fs::path(o.out) / "metrics.json", report + '\n');
    write_lines(fs::path(o.out) / "trajectories.jsonl", log);
  }
  std::cout << report << '\n';
  return 0;
}

int cmd_compare(const Options& o) {
  const config::RunConfig c = load_config(o);
  std::vector<std::string> policy_log;
  std::vector<std::string> baseline_log;
  const harness::Comparison cmp = harness::compare(c.env, policy_factory(o, c), baseline_factory(c), o.trials,
                                                   o.seed, &policy_log, &baseline_log);
  const std::string report = harness::to_json(cmp);
  if (!o.out.empty()) {
    write_text(fs::path(o.out) / "comparison.json", report + '\n');
    write_lines(fs::path(o.out) / "policy_trajectories.jsonl", policy_log);
    write_lines(fs::path(o.out) / "baseline_trajectories.jsonl", baseline_log);
  }
  std::cout << report << '\n';
  return 0;
}

int cmd_calibrate(const Options& o) {
  const config::RunConfig c = load_config(o);
  const calibrate::FitResult r = harness::calibrate_directory(o.refs, c);
  const std::string report = calibrate::to_json(r);
  if (!o.out.empty()) {
    write_text(fs::path(o.out) / "calibration.json", report + '\n');
    write_text(fs::path(o.out) / "servo_fragment.json", harness::calibration_fragment(r) + '\n');
  }
  std::cout << report << '\n';
  return 0;
}

int cmd_synth_refs(const Options& o) {
  if (o.out.empty()) throw ConfigError("--out is required");
  const config::RunConfig c = load_config(o);
  const double limit = c.env.sim.morphology.joint_limit;
  calibrate::Excitation step;
  calibrate::Excitation sine;
  sine.kind = calibrate::ExcitationKind::kSinusoid;
  const fs::path out(o.out);
  fs::create_directories(out);
  for (const auto& [name, e] : {std::pair{"step", step}, std::pair{"sine", sine}}) {
    const calibrate::ResponseTrace t =
        calibrate::run_open_loop(calibrate::generate_excitation(e, limit), o.servo, c.calibrate_setup);
    calibrate::write_csv((out / (std::string(name) + ".csv")).string(), t);
  }
  std::cout << "kp " << o.servo.kp << " kd " << o.servo.kd << " latency " << o.servo.latency << " -> "
            << out.string() << '\n';
  return 0;
}

int cmd_dump_field(const Options& o) {
  const config::RunConfig c = load_config(o);
  const harness::ControllerFactory make = o.checkpoint.empty() ? baseline_factory(c) : policy_factory(o, c);
  std::unique_ptr<env::Controller> controller = make();
  env::FishEnvConfig ec = c.env;
  ec.episode.t_max = std::max(1, static_cast<int>(std::ceil(o.time / (ec.sim.dt * ec.episode.substeps_per_control))));
  env::FishEnv fish(ec);
  env::Observation obs = fish.reset(o.seed);
  controller->reset();
  std::vector<std::string> log{env::to_json_line(fish.last_record())};
  while (true) {
    const env::StepResult r = fish.step(controller->act(obs));
    obs = r.observation;
    log.push_back(env::to_json_line(fish.last_record()));
    if (env::is_terminal(r.status)) break;
  }
  if (o.out.empty()) {
    std::cout << lbm::dump_field_csv(fish.sim().grid(), fish.sim().scaling());
    return 0;
  }
  const fs::path out(o.out);
  fs::create_directories(out);
  write_text(out / "field.csv", lbm::dump_field_csv(fish.sim().grid(), fish.sim().scaling()));
  std::ofstream markers(out / "markers.csv", std::ios::binary);
  markers << "x,y\n";
  for (const Vec2& p : fish.sim().body().markers(fish.sim().fish()).position) markers << p.x << ',' << p.y << '\n';
  write_lines(out / "trajectory.jsonl", log);
  std::cout << "t " << fish.sim().time() << " s, " << fish.sim().grid().nx() << "x" << fish.sim().grid().ny()
            << " cells -> " << (out / "field.csv").string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learning-based swimming control on a coupled lattice Boltzmann fish simulator"};
  app.require_subcommand(1);
  Options o;

  auto common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config, "Run configuration (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Run seed");
    sub->add_option("--out", o.out, "Output directory");
  };
  auto task = [&o](CLI::App* sub) {
    sub->add_option("--task", o.task, "position, uturn or pentagram")
        ->check(CLI::IsMember({"position", "uturn", "pentagram"}));
  };

  CLI::App* train = app.add_subcommand("train", "Train a SAC policy");
  common(train);
  train->add_option("--steps", o.steps, "Override train.total_steps");
  train->add_option("--episodes", o.max_episodes, "Override train.max_episodes");

  CLI::App* eval = app.add_subcommand("eval", "Deterministic policy rollouts");
  common(eval);
  task(eval);
  eval->add_option("--checkpoint", o.checkpoint, "Policy checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--episodes", o.episodes, "Number of episodes")->check(CLI::PositiveNumber);

  CLI::App* compare = app.add_subcommand("compare", "Policy against the CPG-PID baseline on paired seeds");
  common(compare);
  task(compare);
  compare->add_option("--checkpoint", o.checkpoint, "Policy checkpoint")->required()->check(CLI::ExistingFile);
  compare->add_option("--trials", o.trials, "Paired trials")->check(CLI::PositiveNumber);

  CLI::App* calib = app.add_subcommand("calibrate", "Fit servo gains and latency to reference responses");
  common(calib);
  calib->add_option("--refs", o.refs, "Directory of reference CSV files")->required();

  CLI::App* synth = app.add_subcommand("synth-refs", "Write simulated step and sinusoid responses for known servo parameters");
  common(synth);
  synth->add_option("--kp", o.servo.kp, "Servo stiffness")->check(CLI::PositiveNumber);
  synth->add_option("--kd", o.servo.kd, "Servo damping")->check(CLI::NonNegativeNumber);
  synth->add_option("--latency", o.servo.latency, "Command latency in seconds")->check(CLI::NonNegativeNumber);

  CLI::App* dump = app.add_subcommand("dump-field", "Swim for a while and write the flow field");
  common(dump);
  task(dump);
  dump->add_option("--checkpoint", o.checkpoint, "Policy checkpoint (default: CPG-PID baseline)")
      ->check(CLI::ExistingFile);
  dump->add_option("--time", o.time, "Simulated time in seconds")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(o);
    if (*eval) return cmd_eval(o);
    if (*compare) return cmd_compare(o);
    if (*calib) return cmd_calibrate(o);
    if (*synth) return cmd_synth_refs(o);
    if (*dump) return cmd_dump_field(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const NumericFault& e) {
    std::cerr << "numeric fault: " << e.what() << '\n';
    return 4;
  }
  return 1;
}
