#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <set>

#include "fishswim/baseline.hpp"
#include "fishswim/errors.hpp"
#include "fishswim/harness.hpp"

using namespace fishswim;
using namespace fishswim::harness;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

env::FishEnvConfig tiny_env() {
  env::FishEnvConfig c;
  c.sim.nx = 32;
  c.sim.ny = 32;
  c.sim.fluid.domain_x = 1.6;
  c.sim.fluid.domain_y = 1.6;
  c.episode.t_max = 12;
  c.episode.min_target_distance = 0.3;
  return c;
}

class Sweep : public env::Controller {
 public:
  void reset() override { k_ = 0; }
  env::Action act(const env::Observation&) override {
    const double a = 0.4 * std::sin(0.5 * k_++);
    return {0.3 * a, 0.6 * a, a};
  }

 private:
  int k_ = 0;
};

class Replay : public env::Controller {
 public:
  explicit Replay(std::vector<env::Action> actions) : actions_(std::move(actions)) {}
  void reset() override { k_ = 0; }
  env::Action act(const env::Observation&) override { return actions_.at(k_++); }

 private:
  std::vector<env::Action> actions_;
  std::size_t k_ = 0;
};

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fishswim_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("energy of a 30 degree 1 Hz oscillation over one second") {
  const double dt = 1e-4;
  const double a = deg2rad(30.0);
  std::vector<body::JointVector> v;
  const double w = 2.0 * std::numbers::pi;
  for (int k = 0; k <= 10000; ++k) v.push_back({0.0, 0.0, a * w * std::cos(w * k * dt)});
  // Four quarter swings of amplitude A.
  CHECK(trapezoid_energy(v, dt) == doctest::Approx(4.0 * a).epsilon(1e-6));
  CHECK(4.0 * a == doctest::Approx(2.094).epsilon(1e-3));
  const std::vector<body::JointVector> still(50, body::JointVector{});
  CHECK(trapezoid_energy(still, 0.02) == 0.0);
  CHECK(trapezoid_energy({}, 0.02) == 0.0);
}

TEST_CASE("turning radius ignores slow and straight samples") {
  CHECK(min_turning_radius({0.1, 0.2}, {0.5, 0.5}) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(std::isinf(min_turning_radius({0.01}, {1.0})));
  CHECK(std::isinf(min_turning_radius({0.3, 0.3}, {0.0, 0.0})));
}

TEST_CASE("summary averages time over successes only") {
  std::vector<EpisodeOutcome> o(3);
  o[0].index = 2;
  o[0].success = true;
  o[0].time_to_target = 4.0;
  o[0].energy = 3.0;
  o[1].index = 0;
  o[1].success = true;
  o[1].time_to_target = 2.0;
  o[1].min_turning_radius = 0.5;
  o[2].index = 1;
  o[2].status = env::Status::kAborted;
  const EvalMetrics m = summarize(o);
  CHECK(m.episodes == 3);
  CHECK(m.success_rate == doctest::Approx(2.0 / 3.0));
  CHECK(m.mean_time_to_target == 3.0);
  CHECK(m.mean_energy == 1.0);
  CHECK(m.min_turning_radius == 0.5);
  CHECK(m.aborted == 1);
  CHECK(m.outcomes[0].index == 0);
  CHECK(m.outcomes[2].index == 2);
  std::reverse(o.begin(), o.end());
  CHECK(to_json(summarize(o)) == to_json(m));
}

TEST_CASE("a target at the nose is reached at time zero") {
  env::FishEnv e(tiny_env());
  Sweep c;
  const EpisodeOutcome o =
      run_episode(e, c, 5, 0, nullptr, [](env::FishEnv& f) { f.set_targets({f.sim().fish().base_position}); });
  CHECK(o.success);
  CHECK(o.time_to_target == 0.0);
  CHECK(o.steps == 0);
  CHECK(o.energy == 0.0);
}

TEST_CASE("logged commands replay the trajectory") {
  const env::FishEnvConfig cfg = tiny_env();
  env::FishEnv e(cfg);
  Sweep sweep;
  std::vector<std::string> log;
  const EpisodeOutcome first = run_episode(e, sweep, 77, 0, &log);
  REQUIRE(log.size() == static_cast<std::size_t>(first.steps) + 1);
  std::vector<env::Action> actions;
  for (std::size_t i = 1; i < log.size(); ++i) actions.push_back(json::parse(log[i])["J_des"].get<env::Action>());

  env::FishEnv again(cfg);
  Replay replay(actions);
  std::vector<std::string> log2;
  const EpisodeOutcome second = run_episode(again, replay, 77, 0, &log2);
  REQUIRE(log2.size() == log.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto p = json::parse(log[i])["pose"].get<std::vector<double>>();
    const auto q = json::parse(log2[i])["pose"].get<std::vector<double>>();
    for (int k = 0; k < 3; ++k) worst = std::max(worst, std::abs(p[k] - q[k]));
  }
  CHECK(worst <= 1e-9);
  CHECK(second.energy == doctest::Approx(first.energy).epsilon(1e-12));
}

TEST_CASE("identical controllers compare to zero differences") {
  const env::FishEnvConfig cfg = tiny_env();
  const ControllerFactory make = [] { return std::make_unique<Sweep>(); };
  std::vector<std::string> a, b;
  const Comparison c = compare(cfg, make, make, 2, 3, &a, &b);
  REQUIRE(c.time_difference.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(c.time_difference[i] == 0.0);
    CHECK(c.energy_difference[i] == 0.0);
    CHECK(c.turning_radius_difference[i] == 0.0);
    CHECK(c.path_difference[i] == 0.0);
  }
  CHECK(a == b);
  const json j = json::parse(to_json(c));
  CHECK(j.contains("policy"));
  CHECK(j.contains("baseline"));
}

TEST_CASE("evaluation is reproducible and seeds episodes independently") {
  const env::FishEnvConfig cfg = tiny_env();
  const ControllerFactory make = [] { return std::make_unique<baseline::WaypointController>(); };
  std::vector<std::string> t1, t2;
  const EvalMetrics m1 = evaluate(cfg, make, 3, 11, &t1);
  const EvalMetrics m2 = evaluate(cfg, make, 3, 11, &t2);
  CHECK(t1 == t2);
  CHECK(to_json(m1) == to_json(m2));
  std::set<std::uint64_t> seeds;
  for (const EpisodeOutcome& o : m1.outcomes) seeds.insert(o.seed);
  CHECK(seeds.size() == 3);
}

TEST_CASE("calibration input directory errors") {
  const config::RunConfig cfg = config::parse("{}");
  CHECK_THROWS_AS(calibrate_directory("/nonexistent/refs", cfg), DataError);
  const fs::path empty = scratch("empty_refs");
  CHECK_THROWS_AS(calibrate_directory(empty.string(), cfg), DataError);
  std::ofstream(empty / "notes.txt") << "no traces";
  CHECK_THROWS_AS(calibrate_directory(empty.string(), cfg), DataError);
  fs::remove_all(empty);
}

TEST_CASE("calibration fragment loads back into a configuration") {
  calibrate::FitResult r;
  r.params = {5.5, 0.25, 0.072};
  const config::RunConfig c = config::parse(calibration_fragment(r));
  for (int j = 0; j < body::kJoints; ++j) {
    CHECK(c.env.sim.servo.kp[j] == 5.5);
    CHECK(c.env.sim.servo.kd[j] == 0.25);
  }
  CHECK(c.env.randomization.latency_mean == 0.072);
}

TEST_CASE("training writes logs, checkpoints and evaluation snapshots") {
  config::RunConfig cfg = config::parse(R"({
    "fluid": {"nx": 32, "ny": 32, "domain_x": 1.6, "domain_y": 1.6},
    "episode": {"t_max": 5, "min_target_distance": 0.3},
    "sac": {"hidden": [16, 16], "batch_size": 16, "warmup_steps": 10},
    "train": {"total_steps": 12, "checkpoint_every": 2, "eval_episodes": 10}
  })");
  const fs::path out = scratch("train");
  const TrainRunSummary s = run_training(cfg, 4, out.string());
  CHECK(s.train.steps == 12);
  CHECK(fs::exists(out / "config.json"));
  CHECK(fs::exists(out / "checkpoints" / "final.ckpt"));
  CHECK(read_lines(out / "metrics.jsonl").size() == static_cast<std::size_t>(s.train.episodes));
  const std::vector<std::string> evals = read_lines(out / "eval.jsonl");
  REQUIRE(!evals.empty());
  const json first = json::parse(evals.front());
  const std::string name = fs::path(first["checkpoint"].get<std::string>()).stem().string();
  const fs::path snapshot = out / "eval" / (name + ".jsonl");
  REQUIRE(fs::exists(snapshot));
  std::set<std::int64_t> episodes;
  for (const std::string& line : read_lines(snapshot)) {
    episodes.insert(json::parse(line)["episode"].get<std::int64_t>());
  }
  CHECK(episodes.size() == 10);
  CHECK(config::load((out / "config.json").string()).env.sim.nx == 32);
  fs::remove_all(out);
}
