#include "fishswim/env.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numbers>

#include "fishswim/errors.hpp"

namespace fishswim::env {

const char* to_string(Status s) {
  switch (s) {
    case Status::kRunning: return "running";
    case Status::kSuccess: return "success";
    case Status::kFailed: return "failed";
    case Status::kTruncated: return "truncated";
    case Status::kAborted: return "aborted";
  }
  return "unknown";
}

bool is_terminal(Status s) { return s != Status::kRunning; }

const char* to_string(TaskKind k) {
  switch (k) {
    case TaskKind::kPosition: return "position";
    case TaskKind::kUturn: return "uturn";
    case TaskKind::kPentagram: return "pentagram";
  }
  return "unknown";
}

TaskKind parse_task(const std::string& name) {
  if (name == "position") return TaskKind::kPosition;
  if (name == "uturn") return TaskKind::kUturn;
  if (name == "pentagram") return TaskKind::kPentagram;
  throw ConfigError("unknown task '" + name + "' (expected position, uturn or pentagram)");
}

RewardTerms compute_reward(double d_prev, double d_t, const body::JointVector& joint_velocities, Status status,
                           const RewardWeights& w) {
  RewardTerms r;
  r.approach = w.approach * (d_prev - d_t);
  double sq = 0.0;
  for (double v : joint_velocities) sq += v * v;
  r.energy = w.energy * sq;
  if (status == Status::kSuccess) r.terminal = w.terminal;
  if (status == Status::kFailed) r.terminal = -w.terminal;
  r.total = r.approach - r.energy + r.terminal;
  return r;
}

Status classify(double distance, bool inside_domain, int step, const EpisodeConfig& cfg) {
  if (!inside_domain) return Status::kFailed;
  if (distance < cfg.success_radius) return Status::kSuccess;
  if (step >= cfg.t_max) return Status::kTruncated;
  return Status::kRunning;
}

ObservationNoise noise_of(const RandomizationConfig& r) {
  if (!r.enabled) return {};
  return {r.position_sigma, r.direction_sigma, r.joint_sigma};
}

Observation observe(const body::FishState& state, Vec2 target_world, const ObservationNoise& noise, Rng& rng) {
  auto gauss = [&rng](double sigma) { return sigma > 0.0 ? std::normal_distribution<double>(0.0, sigma)(rng) : 0.0; };
  Vec2 position = state.base_position;
  position.x += gauss(noise.position_sigma);
  position.y += gauss(noise.position_sigma);
  const double heading = state.heading + gauss(noise.direction_sigma);
  body::JointVector joints = state.joint_angles;
  for (double& j : joints) j += gauss(noise.joint_sigma);

  const Vec2 p = rotate(target_world - position, -heading);
  return {state.base_linear_velocity.x,
          state.base_linear_velocity.y,
          state.base_angular_velocity,
          joints[0],
          joints[1],
          joints[2],
          state.joint_velocities[0],
          state.joint_velocities[1],
          state.joint_velocities[2],
          p.x,
          p.y};
}

double sample_latency(const RandomizationConfig& r, Rng& rng) {
  if (!r.enabled || r.latency_half_range <= 0.0) return r.latency_mean;
  return std::uniform_real_distribution<double>(r.latency_mean - r.latency_half_range,
                                                 r.latency_mean + r.latency_half_range)(rng);
}

void validate(const FishEnvConfig& c) {
  body::validate(c.sim.morphology);
  body::validate(c.sim.servo);
  const EpisodeConfig& e = c.episode;
  if (e.t_max <= 0) throw ConfigError("episode.t_max must be positive");
  if (!(e.success_radius > 0.0)) throw ConfigError("episode.success_radius must be positive");
  if (e.substeps_per_control <= 0) throw ConfigError("episode.substeps_per_control must be positive");
  if (e.wall_margin < 0.0 || e.min_target_distance < 0.0) throw ConfigError("episode margins must be >= 0");
  const RandomizationConfig& r = c.randomization;
  if (r.latency_half_range < 0.0 || r.latency_mean - r.latency_half_range < 0.0) {
    throw ConfigError("randomization latency interval must be non-negative");
  }
  if (r.position_sigma < 0.0 || r.direction_sigma < 0.0 || r.joint_sigma < 0.0) {
    throw ConfigError("randomization sigmas must be >= 0");
  }
  const double d = std::min(c.sim.fluid.domain_x, c.sim.fluid.domain_y);
  const double box = d - 2.0 * e.wall_margin;
  if (box <= c.sim.morphology.total_length()) {
    throw ConfigError("domain of " + std::to_string(d) + " m leaves no room for the fish inside the wall margin");
  }
  if (c.task.kind == TaskKind::kPentagram && c.task.pentagram_radius > 0.5 * box) {
    throw ConfigError("pentagram radius " + std::to_string(c.task.pentagram_radius) +
                      " m exceeds the domain margins (max " + std::to_string(0.5 * box) + " m)");
  }
  if (c.task.kind == TaskKind::kUturn && c.task.uturn_distance > box) {
    throw ConfigError("uturn distance " + std::to_string(c.task.uturn_distance) +
                      " m does not fit inside the domain margins (max " + std::to_string(box) + " m)");
  }
  const int max_delay = body::latency_steps(r.latency_mean + r.latency_half_range, c.sim.dt);
  if (max_delay > 10000) throw ConfigError("latency is too long for the substep");
}

std::string to_json_line(const TrajectoryRecord& r) {
  using nlohmann::json;
  json j;
  j["episode"] = r.episode;
  j["seed"] = r.seed;
  j["t"] = r.t;
  j["time"] = r.time;
  j["pose"] = {r.position.x, r.position.y, r.heading};
  j["velocity"] = {r.velocity.x, r.velocity.y, r.angular_velocity};
  j["J"] = r.joint_angles;
  j["Jdot"] = r.joint_velocities;
  j["J_des"] = r.desired;
  j["target"] = {r.target.x, r.target.y};
  j["waypoint"] = r.waypoint;
  j["reward_terms"] = {{"appr", r.reward.approach},
                       {"ener", r.reward.energy},
                       {"term", r.reward.terminal},
                       {"total", r.reward.total}};
  j["status"] = to_string(r.status);
  return j.dump();
}

std::vector<Vec2> pentagram_waypoints(Vec2 center, double radius) {
  if (radius < 0.0) throw ConfigError("pentagram radius must be >= 0");
  std::vector<Vec2> out;
  for (int k : {0, 2, 4, 1, 3}) {
    const double a = deg2rad(90.0 + 72.0 * k);
    out.push_back(center + radius * Vec2{std::cos(a), std::sin(a)});
  }
  return out;
}

FishEnv::FishEnv(FishEnvConfig config) : config_(std::move(config)) { validate(config_); }

double FishEnv::distance() const { return norm(targets_[waypoint_] - sim_->fish().base_position); }

void FishEnv::spawn(Rng& rng) {
  const double dx = config_.sim.fluid.domain_x;
  const double dy = config_.sim.fluid.domain_y;
  const double m = config_.episode.wall_margin;
  const double length = config_.sim.morphology.total_length();
  std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
  auto uniform = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

  body::FishState fish;
  fish.heading = angle(rng);
  const Vec2 dir{std::cos(fish.heading), std::sin(fish.heading)};
  const double half = 0.5 * length;
  constexpr int kMaxTries = 10000;

  switch (config_.task.kind) {
    case TaskKind::kPosition: {
      const Vec2 centre{uniform(m + half, dx - m - half), uniform(m + half, dy - m - half)};
      fish.base_position = centre + half * dir;
      Vec2 target;
      int tries = 0;
      do {
        target = {uniform(m, dx - m), uniform(m, dy - m)};
        if (++tries > kMaxTries) throw ConfigError("cannot place a target away from the fish");
      } while (norm(target - fish.base_position) < config_.episode.min_target_distance);
      targets_ = {target};
      break;
    }
    case TaskKind::kUturn: {
      // Centre range per axis that keeps both the body and the target inside the margins.
      const Vec2 back = (half - config_.task.uturn_distance) * dir;
      auto axis = [&](double size, double offset) {
        const double lo = std::max(m + half, m - offset);
        const double hi = std::min(size - m - half, size - m - offset);
        if (lo > hi) throw ConfigError("uturn target does not fit behind the fish");
        return uniform(lo, hi);
      };
      const Vec2 centre{axis(dx, back.x), axis(dy, back.y)};
      fish.base_position = centre + half * dir;
      targets_ = {centre + back};
      break;
    }
    case TaskKind::kPentagram: {
      const Vec2 centre{0.5 * dx, 0.5 * dy};
      fish.base_position = centre + half * dir;
      targets_ = pentagram_waypoints(centre, config_.task.pentagram_radius);
      break;
    }
  }
  const int delay = body::latency_steps(latency_, config_.sim.dt);
  sim_ = std::make_unique<coupling::CoupledSim>(config_.sim, fish, delay);
}

Observation FishEnv::reset(std::uint64_t seed) {
  seed_ = seed;
  rng_.seed(seed);
  latency_ = sample_latency(config_.randomization, rng_);
  waypoint_ = 0;
  t_ = 0;
  waypoint_start_ = 0;
  abort_reason_.clear();
  spawn(rng_);
  done_ = false;
  ++episodes_;
  fill_record(sim_->fish().joint_angles, {}, Status::kRunning);
  return noisy_observation();
}

void FishEnv::set_targets(std::vector<Vec2> targets) {
  if (!sim_ || t_ != 0) throw ConfigError("targets can only be replaced right after reset()");
  if (targets.empty()) throw ConfigError("at least one target is required");
  targets_ = std::move(targets);
  waypoint_ = 0;
  record_.target = targets_[0];
}

Observation FishEnv::noisy_observation() {
  return observe(sim_->fish(), targets_[waypoint_], noise_of(config_.randomization), rng_);
}

void FishEnv::fill_record(const Action& action, const RewardTerms& reward, Status status) {
  const body::FishState& f = sim_->fish();
  record_.episode = episodes_ - 1;
  record_.seed = seed_;
  record_.t = t_;
  record_.time = sim_->time();
  record_.position = f.base_position;
  record_.heading = f.heading;
  record_.velocity = f.base_linear_velocity;
  record_.angular_velocity = f.base_angular_velocity;
  record_.joint_angles = f.joint_angles;
  record_.joint_velocities = f.joint_velocities;
  record_.desired = action;
  record_.target = targets_[waypoint_];
  record_.waypoint = waypoint_;
  record_.reward = reward;
  record_.status = status;
}

StepResult FishEnv::step(const Action& action) {
  if (!sim_ || done_) throw ConfigError("step() on a finished episode; call reset() first");
  const double limit = action_limit();
  body::JointVector command{};
  for (int i = 0; i < kActDim; ++i) {
    if (!std::isfinite(action[i])) throw ConfigError("non-finite action component " + std::to_string(i));
    command[i] = std::clamp(action[i], -limit, limit);
  }

  const double d_prev = distance();
  StepResult out;
  bool left_domain = false;
  sim_->command(command);
  try {
    for (int s = 0; s < config_.episode.substeps_per_control; ++s) {
      const coupling::SubstepReport r = sim_->substep();
      if (config_.episode.mach_policy == MachPolicy::kAbort && r.max_lattice_speed >= lbm::kMaxLatticeSpeed) {
        throw NumericFault("lattice speed " + std::to_string(r.max_lattice_speed) + " reached the Mach limit");
      }
    }
  } catch (const NumericFault& e) {
    abort_reason_ = e.what();
    ++t_;
    done_ = true;
    out.status = Status::kAborted;
    fill_record(command, {}, Status::kAborted);
    out.observation = observe(sim_->fish(), targets_[waypoint_], {}, rng_);
    return out;
  } catch (const OutOfDomain&) {
    left_domain = true;
  }
  ++t_;

  const Vec2 nose = sim_->fish().base_position;
  const bool inside = !left_domain && nose.x >= 0.0 && nose.x <= sim_->domain_x() && nose.y >= 0.0 &&
                      nose.y <= sim_->domain_y();
  const double d = distance();
  Status status = classify(d, inside, t_ - waypoint_start_, config_.episode);
  out.reward = compute_reward(d_prev, d, sim_->fish().joint_velocities, status, config_.episode.reward);
  fill_record(command, out.reward, status);

  // Intermediate waypoints pay the terminal bonus and hand over the next one.
  if (status == Status::kSuccess && waypoint_ + 1 < static_cast<int>(targets_.size())) {
    ++waypoint_;
    waypoint_start_ = t_;
    status = Status::kRunning;
  }
  out.status = status;
  done_ = is_terminal(status);
  out.observation = noisy_observation();
  return out;
}

}  // namespace fishswim::env
