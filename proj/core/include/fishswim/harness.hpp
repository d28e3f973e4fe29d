#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "fishswim/config.hpp"
#include "fishswim/env.hpp"
#include "fishswim/sac.hpp"

// Evaluation, comparison and training runs with their metrics and logs.
namespace fishswim::harness {

inline constexpr double kTurnSpeedFloor = 0.02;  // m/s

// Trapezoidal integral of |Jdot| over samples spaced dt apart (rad).
double trapezoid_energy(const std::vector<body::JointVector>& joint_velocities, double dt);

// Minimum |v| / |omega| over samples with |v| >= speed_floor; infinity when
// no sample qualifies or the fish never rotates.
double min_turning_radius(const std::vector<double>& speed, const std::vector<double>& angular_velocity,
                          double speed_floor = kTurnSpeedFloor);

struct EpisodeOutcome {
  std::int64_t index = 0;
  std::uint64_t seed = 0;
  env::Status status = env::Status::kRunning;
  bool success = false;
  int steps = 0;
  int waypoints_reached = 0;
  double time_to_target = 0.0;  // s, success only
  double elapsed = 0.0;         // s, episode duration
  double path_length = 0.0;     // m, nose path
  double energy = 0.0;          // rad
  double min_turning_radius = std::numeric_limits<double>::infinity();
};

struct EvalMetrics {
  int episodes = 0;
  double success_rate = 0.0;
  double mean_time_to_target = 0.0;  // over successful episodes
  double mean_path_length = 0.0;
  double mean_energy = 0.0;
  // Smallest per-episode minimum over the run; infinity when undefined.
  double min_turning_radius = std::numeric_limits<double>::infinity();
  int aborted = 0;
  std::vector<EpisodeOutcome> outcomes;
};

// Order-independent reduction of outcomes sorted by index.
EvalMetrics summarize(std::vector<EpisodeOutcome> outcomes);

// Runs one episode to completion. When a trajectory sink is given it
// receives one JSON line per control step, starting with the reset state.
// A target already within the success radius at reset counts as reached at
// time 0.
EpisodeOutcome run_episode(env::FishEnv& env, env::Controller& controller, std::uint64_t seed,
                           std::int64_t index, std::vector<std::string>* trajectory = nullptr,
                           const std::function<void(env::FishEnv&)>& after_reset = {});

// Deterministic policy rollouts scaled to the environment's joint limit.
class PolicyController : public env::Controller {
 public:
  PolicyController(std::shared_ptr<sac::SacAgent> agent, double action_limit);
  void reset() override {}
  env::Action act(const env::Observation& obs) override;

 private:
  std::shared_ptr<sac::SacAgent> agent_;
  double limit_;
};

using ControllerFactory = std::function<std::unique_ptr<env::Controller>()>;

// Episodes use seeds episode_seed(seed, i); trajectories are appended in
// episode order.
EvalMetrics evaluate(const env::FishEnvConfig& config, const ControllerFactory& make, int episodes,
                     std::uint64_t seed, std::vector<std::string>* trajectories = nullptr);

struct Comparison {
  EvalMetrics policy;
  EvalMetrics baseline;
  // Per-trial policy minus baseline.
  std::vector<double> time_difference;
  std::vector<double> energy_difference;
  std::vector<double> turning_radius_difference;
  std::vector<double> path_difference;
};

Comparison compare(const env::FishEnvConfig& config, const ControllerFactory& policy,
                   const ControllerFactory& baseline, int trials, std::uint64_t seed,
                   std::vector<std::string>* policy_log = nullptr, std::vector<std::string>* baseline_log = nullptr);

std::string to_json(const EvalMetrics& m);
std::string to_json(const Comparison& c);

struct TrainRunSummary {
  sac::TrainSummary train;
  std::vector<std::string> checkpoints;
};

// Trains on the configured environment, writing metrics.jsonl, periodic
// checkpoints and, for the fish environment, an evaluation snapshot of
// eval_episodes deterministic trajectories per checkpoint.
TrainRunSummary run_training(const config::RunConfig& cfg, std::uint64_t seed, const std::string& out_dir,
                             std::ostream* progress = nullptr);

// Reads every *.csv in dir (sorted by name) and fits the servo model.
// Throws DataError when the directory holds no CSV files.
calibrate::FitResult calibrate_directory(const std::string& dir, const config::RunConfig& cfg);
// Config fragment that loads the fitted gains and latency.
std::string calibration_fragment(const calibrate::FitResult& r);

}  // namespace fishswim::harness
