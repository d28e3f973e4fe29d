#include "fishswim/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <ostream>
#include <sstream>

#include "fishswim/errors.hpp"
#include "fishswim/sanity_env.hpp"

namespace fishswim::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kEvalStream = 0x65766151ULL;

double joint_norm(const body::JointVector& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json outcome_json(const EpisodeOutcome& o) {
  return {{"index", o.index},
          {"seed", o.seed},
          {"status", env::to_string(o.status)},
          {"success", o.success},
          {"steps", o.steps},
          {"waypoints_reached", o.waypoints_reached},
          {"time_to_target", o.success ? json(o.time_to_target) : json(nullptr)},
          {"elapsed", o.elapsed},
          {"path_length", o.path_length},
          {"energy", o.energy},
          {"min_turning_radius", finite_or_null(o.min_turning_radius)}};
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const std::string& l : lines) out << l << '\n';
}

}  // namespace

double trapezoid_energy(const std::vector<body::JointVector>& joint_velocities, double dt) {
  double e = 0.0;
  for (std::size_t i = 1; i < joint_velocities.size(); ++i) {
    e += 0.5 * dt * (joint_norm(joint_velocities[i - 1]) + joint_norm(joint_velocities[i]));
  }
  return e;
}

double min_turning_radius(const std::vector<double>& speed, const std::vector<double>& angular_velocity,
                          double speed_floor) {
  double r = std::numeric_limits<double>::infinity();
  const std::size_t n = std::min(speed.size(), angular_velocity.size());
  for (std::size_t i = 0; i < n; ++i) {
    const double w = std::abs(angular_velocity[i]);
    if (speed[i] < speed_floor || w == 0.0) continue;
    r = std::min(r, speed[i] / w);
  }
  return r;
}

EvalMetrics summarize(std::vector<EpisodeOutcome> outcomes) {
  std::sort(outcomes.begin(), outcomes.end(),
            [](const EpisodeOutcome& a, const EpisodeOutcome& b) { return a.index < b.index; });
  EvalMetrics m;
  m.episodes = static_cast<int>(outcomes.size());
  int successes = 0;
  double time = 0.0;
  for (const EpisodeOutcome& o : outcomes) {
    if (o.success) {
      ++successes;
      time += o.time_to_target;
    }
    if (o.status == env::Status::kAborted) ++m.aborted;
    m.mean_path_length += o.path_length;
    m.mean_energy += o.energy;
    m.min_turning_radius = std::min(m.min_turning_radius, o.min_turning_radius);
  }
  if (m.episodes > 0) {
    m.success_rate = static_cast<double>(successes) / m.episodes;
    m.mean_path_length /= m.episodes;
    m.mean_energy /= m.episodes;
  }
  if (successes > 0) m.mean_time_to_target = time / successes;
  m.outcomes = std::move(outcomes);
  return m;
}

EpisodeOutcome run_episode(env::FishEnv& env, env::Controller& controller, std::uint64_t seed, std::int64_t index,
                           std::vector<std::string>* trajectory,
                           const std::function<void(env::FishEnv&)>& after_reset) {
  EpisodeOutcome o;
  o.index = index;
  o.seed = seed;
  controller.reset();
  env::Observation obs = env.reset(seed);
  if (after_reset) after_reset(env);
  const double period = env.control_period();

  std::vector<body::JointVector> jdot;
  std::vector<double> speed;
  std::vector<double> omega;
  Vec2 previous = env.last_record().position;
  auto record = [&](const env::TrajectoryRecord& r) {
    jdot.push_back(r.joint_velocities);
    speed.push_back(norm(r.velocity));
    omega.push_back(r.angular_velocity);
    o.path_length += norm(r.position - previous);
    previous = r.position;
    if (trajectory) trajectory->push_back(env::to_json_line(r));
  };
  record(env.last_record());

  if (env.distance() < env.config().episode.success_radius && env.targets().size() == 1) {
    o.status = env::Status::kSuccess;
    o.success = true;
    o.waypoints_reached = 1;
  } else {
    int waypoint = env.waypoint();
    while (true) {
      const env::StepResult r = env.step(controller.act(obs));
      obs = r.observation;
      record(env.last_record());
      if (env.waypoint() != waypoint || r.status == env::Status::kSuccess) ++o.waypoints_reached;
      waypoint = env.waypoint();
      if (env::is_terminal(r.status)) {
        o.status = r.status;
        break;
      }
    }
    o.success = o.status == env::Status::kSuccess;
  }
  o.steps = env.step_count();
  o.elapsed = o.steps * period;
  if (o.success) o.time_to_target = o.elapsed;
  o.energy = trapezoid_energy(jdot, period);
  o.min_turning_radius = min_turning_radius(speed, omega);
  return o;
}

PolicyController::PolicyController(std::shared_ptr<sac::SacAgent> agent, double action_limit)
    : agent_(std::move(agent)), limit_(action_limit) {}

env::Action PolicyController::act(const env::Observation& obs) {
  env::Action a = agent_->sample(obs, true).action;
  for (double& v : a) v *= limit_;
  return a;
}

EvalMetrics evaluate(const env::FishEnvConfig& config, const ControllerFactory& make, int episodes,
                     std::uint64_t seed, std::vector<std::string>* trajectories) {
  if (episodes <= 0) throw ConfigError("episode count must be positive");
  env::FishEnv env(config);
  std::unique_ptr<env::Controller> controller = make();
  std::vector<EpisodeOutcome> outcomes;
  for (int i = 0; i < episodes; ++i) {
    outcomes.push_back(run_episode(env, *controller, sac::episode_seed(seed, i), i, trajectories));
  }
  return summarize(std::move(outcomes));
}

Comparison compare(const env::FishEnvConfig& config, const ControllerFactory& policy,
                   const ControllerFactory& baseline, int trials, std::uint64_t seed,
                   std::vector<std::string>* policy_log, std::vector<std::string>* baseline_log) {
  Comparison c;
  c.policy = evaluate(config, policy, trials, seed, policy_log);
  c.baseline = evaluate(config, baseline, trials, seed, baseline_log);
  // Equal values (including two infinite radii) pair to exactly zero.
  auto diff = [](double a, double b) { return a == b ? 0.0 : a - b; };
  for (int i = 0; i < trials; ++i) {
    const EpisodeOutcome& p = c.policy.outcomes[i];
    const EpisodeOutcome& b = c.baseline.outcomes[i];
    c.time_difference.push_back(diff(p.elapsed, b.elapsed));
    c.energy_difference.push_back(diff(p.energy, b.energy));
    c.turning_radius_difference.push_back(diff(p.min_turning_radius, b.min_turning_radius));
    c.path_difference.push_back(diff(p.path_length, b.path_length));
  }
  return c;
}

namespace {

json metrics_json(const EvalMetrics& m) {
  json episodes = json::array();
  for (const EpisodeOutcome& o : m.outcomes) episodes.push_back(outcome_json(o));
  return {{"episodes", m.episodes},
          {"success_rate", m.success_rate},
          {"mean_time_to_target", m.mean_time_to_target},
          {"mean_path_length", m.mean_path_length},
          {"mean_energy", m.mean_energy},
          {"min_turning_radius", finite_or_null(m.min_turning_radius)},
          {"aborted", m.aborted},
          {"outcomes", episodes}};
}

json series_json(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(finite_or_null(x));
  return a;
}

}  // namespace

std::string to_json(const EvalMetrics& m) { return metrics_json(m).dump(); }

std::string to_json(const Comparison& c) {
  json j;
  j["policy"] = metrics_json(c.policy);
  j["baseline"] = metrics_json(c.baseline);
  j["paired_difference"] = {{"elapsed", series_json(c.time_difference)},
                            {"energy", series_json(c.energy_difference)},
                            {"min_turning_radius", series_json(c.turning_radius_difference)},
                            {"path_length", series_json(c.path_difference)}};
  return j.dump();
}

namespace {

std::string checkpoint_name(std::int64_t episode) {
  std::ostringstream s;
  s << "ep_" << std::setw(6) << std::setfill('0') << episode;
  return s.str();
}

double sanity_success_rate(const env::SanityConfig& cfg, sac::SacAgent& agent, int episodes, std::uint64_t seed) {
  env::SanityEnv env(cfg);
  int successes = 0;
  for (int i = 0; i < episodes; ++i) {
    env::Observation obs = env.reset(sac::episode_seed(seed, i));
    while (true) {
      env::Action a = agent.sample(obs, true).action;
      for (double& v : a) v *= env.action_limit();
      const env::StepResult r = env.step(a);
      obs = r.observation;
      if (env::is_terminal(r.status)) {
        successes += r.status == env::Status::kSuccess;
        break;
      }
    }
  }
  return static_cast<double>(successes) / episodes;
}

}  // namespace

TrainRunSummary run_training(const config::RunConfig& cfg, std::uint64_t seed, const std::string& out_dir,
                             std::ostream* progress) {
  const fs::path root(out_dir);
  fs::create_directories(root / "checkpoints");
  fs::create_directories(root / "eval");
  {
    std::ofstream c(root / "config.json", std::ios::binary);
    c << config::to_json(cfg) << '\n';
  }
  const std::string hash = config::policy_hash(cfg);
  const bool fish = cfg.train.env == config::EnvKind::kFish;

  std::unique_ptr<env::Environment> env;
  if (fish) {
    env = std::make_unique<env::FishEnv>(cfg.env);
  } else {
    env = std::make_unique<env::SanityEnv>(cfg.sanity);
  }
  sac::SacAgent agent(cfg.sac, seed);

  std::ofstream metrics(root / "metrics.jsonl", std::ios::binary);
  std::ofstream eval_log(root / "eval.jsonl", std::ios::binary);
  if (!metrics || !eval_log) throw DataError("cannot write logs under " + root.string());

  TrainRunSummary summary;
  const std::uint64_t eval_seed = seed ^ kEvalStream;
  sac::TrainCallbacks callbacks;
  callbacks.on_episode = [&](const sac::EpisodeLog& e) {
    metrics << sac::to_json_line(e) << '\n';
    if (progress && e.episode % 10 == 0) {
      *progress << "episode " << e.episode << " steps " << e.steps << " return " << e.episode_return << " "
                << env::to_string(e.status) << '\n';
    }
  };
  callbacks.on_checkpoint = [&](const sac::SacAgent& a, std::int64_t episode, bool halted) {
    const std::string name = halted ? "halted" : checkpoint_name(episode);
    const fs::path path = root / "checkpoints" / (name + ".ckpt");
    sac::save_checkpoint(path.string(), a, hash);
    summary.checkpoints.push_back(path.string());
    if (halted) return;

    // Evaluation runs on a copy so the learner's sampling stream is untouched.
    auto snapshot = std::make_shared<sac::SacAgent>(a);
    json line;
    line["episode"] = episode;
    line["checkpoint"] = path.filename().string();
    if (fish) {
      std::vector<std::string> trajectories;
      const EvalMetrics m = evaluate(
          cfg.env,
          [&] { return std::make_unique<PolicyController>(snapshot, cfg.env.sim.morphology.joint_limit); },
          cfg.train.eval_episodes, eval_seed, &trajectories);
      write_lines(root / "eval" / (name + ".jsonl"), trajectories);
      line["metrics"] = metrics_json(m);
    } else {
      line["metrics"] = {{"episodes", cfg.train.eval_episodes},
                         {"success_rate",
                          sanity_success_rate(cfg.sanity, *snapshot, cfg.train.eval_episodes, eval_seed)}};
    }
    eval_log << line.dump() << '\n';
    eval_log.flush();
    if (progress) *progress << "checkpoint " << name << '\n';
  };

  sac::TrainOptions options;
  options.total_steps = cfg.train.total_steps;
  options.max_episodes = cfg.train.max_episodes;
  options.checkpoint_every = cfg.train.checkpoint_every;
  options.seed = seed;
  summary.train = sac::train(*env, agent, options, callbacks);

  const fs::path final_path = root / "checkpoints" / "final.ckpt";
  sac::save_checkpoint(final_path.string(), agent, hash);
  summary.checkpoints.push_back(final_path.string());
  return summary;
}

calibrate::FitResult calibrate_directory(const std::string& dir, const config::RunConfig& cfg) {
  if (!fs::is_directory(dir)) throw DataError("reference directory '" + dir + "' does not exist");
  std::vector<fs::path> files;
  for (const fs::directory_entry& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  }
  if (files.empty()) throw DataError("no reference CSV files in '" + dir + "'");
  std::sort(files.begin(), files.end());
  std::vector<calibrate::ResponseTrace> refs;
  for (const fs::path& f : files) refs.push_back(calibrate::read_csv(f.string()));
  return calibrate::fit_servo_params(refs, cfg.calibrate_setup, cfg.calibrate);
}

std::string calibration_fragment(const calibrate::FitResult& r) {
  const double kp = r.params.kp;
  const double kd = r.params.kd;
  json j;
  j["fish"]["servo"]["kp"] = {kp, kp, kp};
  j["fish"]["servo"]["kd"] = {kd, kd, kd};
  j["randomization"]["latency_mean"] = r.params.latency;
  return j.dump(2);
}

}  // namespace fishswim::harness
