#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "fishswim/body.hpp"
#include "fishswim/coupling.hpp"
#include "fishswim/vec2.hpp"

// Target-reaching MDP around the coupled fish simulation.
namespace fishswim::env {

inline constexpr int kObsDim = 11;
inline constexpr int kActDim = 3;

// v (2, body frame), omega, J (3), Jdot (3), p (2, target in body frame).
using Observation = std::array<double, kObsDim>;
// Desired joint angles (rad).
using Action = std::array<double, kActDim>;
using Rng = std::mt19937_64;

enum class Status { kRunning, kSuccess, kFailed, kTruncated, kAborted };
const char* to_string(Status s);
bool is_terminal(Status s);

enum class MachPolicy { kReport, kAbort };

struct RewardWeights {
  double approach = 10.0;
  double energy = 0.001;
  double terminal = 10.0;
};

struct EpisodeConfig {
  int t_max = 100;                 // control steps
  double success_radius = 0.05;    // m
  int substeps_per_control = 5;    // control period = substeps * fluid dt
  double wall_margin = 0.3;        // m
  double min_target_distance = 0.2;  // m
  RewardWeights reward;
  MachPolicy mach_policy = MachPolicy::kReport;
};

struct RandomizationConfig {
  bool enabled = true;
  double latency_mean = 0.068;        // s, sampled once per episode
  double latency_half_range = 0.02;   // s
  double position_sigma = 0.05;       // m, per step
  double direction_sigma = deg2rad(3.0);
  double joint_sigma = deg2rad(2.0);
};

enum class TaskKind { kPosition, kUturn, kPentagram };
const char* to_string(TaskKind k);
TaskKind parse_task(const std::string& name);

struct TaskConfig {
  TaskKind kind = TaskKind::kPosition;
  double uturn_distance = 1.5;    // m behind the nose
  double pentagram_radius = 1.2;  // m, centred in the domain
};

struct RewardTerms {
  double approach = 0.0;
  double energy = 0.0;
  double terminal = 0.0;
  double total = 0.0;
};

// r_appr = w.approach (d_prev - d_t), r_ener = w.energy |Jdot|^2, r_term = +w.terminal on
// success, -w.terminal on failure; total = r_appr - r_ener + r_term.
RewardTerms compute_reward(double d_prev, double d_t, const body::JointVector& joint_velocities, Status status,
                           const RewardWeights& w = {});

// Success when within the radius, failure when the nose left the domain,
// truncation at t_max, otherwise running.
Status classify(double distance, bool inside_domain, int step, const EpisodeConfig& cfg);

// Noise model for one observation; sigma zero disables a channel.
struct ObservationNoise {
  double position_sigma = 0.0;
  double direction_sigma = 0.0;
  double joint_sigma = 0.0;
};
ObservationNoise noise_of(const RandomizationConfig& r);

// Perturbs the raw pose (position, heading, joint angles), then expresses the
// target in the perturbed body frame.
Observation observe(const body::FishState& state, Vec2 target_world, const ObservationNoise& noise, Rng& rng);

double sample_latency(const RandomizationConfig& r, Rng& rng);

struct StepResult {
  Observation observation{};
  RewardTerms reward;
  Status status = Status::kRunning;
};

// Minimal episodic interface shared by the fish and the point-mass stand-in.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual Observation reset(std::uint64_t seed) = 0;
  virtual StepResult step(const Action& action) = 0;
  // Symmetric bound on every action component.
  virtual double action_limit() const = 0;
  virtual int step_count() const = 0;
};

// Observation-to-action map driven by the evaluation harness.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual void reset() = 0;
  virtual Action act(const Observation& obs) = 0;
};

struct FishEnvConfig {
  coupling::SimConfig sim;
  EpisodeConfig episode;
  RandomizationConfig randomization;
  TaskConfig task;
};

void validate(const FishEnvConfig& c);

// Everything logged for one control step; pose is the true nose pose.
struct TrajectoryRecord {
  std::uint64_t episode = 0;
  std::uint64_t seed = 0;
  int t = 0;
  double time = 0.0;  // s
  Vec2 position;
  double heading = 0.0;
  Vec2 velocity;  // body frame
  double angular_velocity = 0.0;
  body::JointVector joint_angles{};
  body::JointVector joint_velocities{};
  Action desired{};
  Vec2 target;
  int waypoint = 0;
  RewardTerms reward;
  Status status = Status::kRunning;
};

std::string to_json_line(const TrajectoryRecord& r);

class FishEnv : public Environment {
 public:
  explicit FishEnv(FishEnvConfig config);

  Observation reset(std::uint64_t seed) override;
  StepResult step(const Action& action) override;
  double action_limit() const override { return config_.sim.morphology.joint_limit; }
  int step_count() const override { return t_; }

  const FishEnvConfig& config() const { return config_; }
  const coupling::CoupledSim& sim() const { return *sim_; }
  double latency() const { return latency_; }
  Vec2 target() const { return targets_[waypoint_]; }
  const std::vector<Vec2>& targets() const { return targets_; }
  int waypoint() const { return waypoint_; }
  double distance() const;
  double control_period() const { return config_.sim.dt * config_.episode.substeps_per_control; }
  const TrajectoryRecord& last_record() const { return record_; }
  std::uint64_t episodes() const { return episodes_; }
  std::uint64_t mach_violations() const { return sim_ ? sim_->mach_violations() : 0; }
  const std::string& abort_reason() const { return abort_reason_; }
  // Replaces the spawned targets; only valid before the first step.
  void set_targets(std::vector<Vec2> targets);

 private:
  void spawn(Rng& rng);
  Observation noisy_observation();
  void fill_record(const Action& action, const RewardTerms& reward, Status status);

  FishEnvConfig config_;
  std::unique_ptr<coupling::CoupledSim> sim_;
  Rng rng_;
  std::uint64_t seed_ = 0;
  std::uint64_t episodes_ = 0;
  double latency_ = 0.0;
  std::vector<Vec2> targets_{Vec2{}};
  int waypoint_ = 0;
  int t_ = 0;
  int waypoint_start_ = 0;
  bool done_ = true;
  std::string abort_reason_;
  TrajectoryRecord record_;
};

// Star-stroke waypoints on a circle: vertices at 90 + 72k degrees visited in
// the order k = 0, 2, 4, 1, 3.
std::vector<Vec2> pentagram_waypoints(Vec2 center, double radius);

}  // namespace fishswim::env
