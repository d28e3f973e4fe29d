#pragma once

#include "fishswim/env.hpp"

// Fluid-free stand-in with the fish env's observation and action layout: a
// drag-damped point mass where action[0] is forward thrust and action[1] the
// turn rate (both as fractions of the action limit); action[2] is ignored.
namespace fishswim::env {

struct SanityConfig {
  double action_limit = deg2rad(60.0);
  double control_period = 0.02;  // s
  int integration_substeps = 4;
  double thrust = 20.0;          // m/s^2 at full action
  double drag = 10.0;            // 1/s
  double max_turn_rate = 12.0;   // rad/s at full action
  double min_target_distance = 0.2;
  double max_target_distance = 0.8;
  double arena_half_width = 2.0;  // m, leaving it is a failure
  EpisodeConfig episode;
};

class SanityEnv : public Environment {
 public:
  explicit SanityEnv(SanityConfig config = {});

  Observation reset(std::uint64_t seed) override;
  StepResult step(const Action& action) override;
  double action_limit() const override { return config_.action_limit; }
  int step_count() const override { return t_; }

  const SanityConfig& config() const { return config_; }
  Vec2 position() const { return position_; }
  Vec2 target() const { return target_; }
  double heading() const { return heading_; }
  double speed() const { return speed_; }

 private:
  Observation observation() const;

  SanityConfig config_;
  Rng rng_;
  Vec2 position_;
  Vec2 target_;
  double heading_ = 0.0;
  double speed_ = 0.0;
  double turn_rate_ = 0.0;
  Action last_action_{};
  int t_ = 0;
  bool done_ = true;
};

// Steer-then-drive controller used as the reachability reference.
Action sanity_controller(const Observation& obs, const SanityConfig& config);

}  // namespace fishswim::env
