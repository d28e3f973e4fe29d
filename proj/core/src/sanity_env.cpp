#include "fishswim/sanity_env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fishswim/errors.hpp"

namespace fishswim::env {

SanityEnv::SanityEnv(SanityConfig config) : config_(config) {
  if (!(config_.action_limit > 0.0) || !(config_.control_period > 0.0) || config_.integration_substeps <= 0) {
    throw ConfigError("sanity env needs a positive action limit, period and substep count");
  }
  if (!(config_.min_target_distance < config_.max_target_distance)) {
    throw ConfigError("sanity env target distance range is empty");
  }
}

Observation SanityEnv::reset(std::uint64_t seed) {
  rng_.seed(seed);
  std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
  std::uniform_real_distribution<double> dist(config_.min_target_distance, config_.max_target_distance);
  position_ = {};
  heading_ = angle(rng_);
  const double bearing = angle(rng_);
  target_ = dist(rng_) * Vec2{std::cos(bearing), std::sin(bearing)};
  speed_ = 0.0;
  turn_rate_ = 0.0;
  last_action_ = {};
  t_ = 0;
  done_ = false;
  return observation();
}

Observation SanityEnv::observation() const {
  const Vec2 p = rotate(target_ - position_, -heading_);
  return {speed_, 0.0, turn_rate_, last_action_[0], last_action_[1], last_action_[2], 0.0, 0.0, 0.0, p.x, p.y};
}

StepResult SanityEnv::step(const Action& action) {
  if (done_) throw ConfigError("step() on a finished episode; call reset() first");
  const double lim = config_.action_limit;
  for (int i = 0; i < kActDim; ++i) last_action_[i] = std::clamp(action[i], -lim, lim);
  const double thrust = config_.thrust * last_action_[0] / lim;
  turn_rate_ = config_.max_turn_rate * last_action_[1] / lim;

  const double d_prev = norm(target_ - position_);
  const double h = config_.control_period / config_.integration_substeps;
  for (int s = 0; s < config_.integration_substeps; ++s) {
    speed_ += h * (thrust - config_.drag * speed_);
    heading_ = wrap_angle(heading_ + h * turn_rate_);
    position_ += h * speed_ * Vec2{std::cos(heading_), std::sin(heading_)};
  }
  ++t_;
  const double d = norm(target_ - position_);
  const double w = config_.arena_half_width;
  const bool inside = std::abs(position_.x) <= w && std::abs(position_.y) <= w;
  StepResult out;
  out.status = classify(d, inside, t_, config_.episode);
  out.reward = compute_reward(d_prev, d, {}, out.status, config_.episode.reward);
  out.observation = observation();
  done_ = is_terminal(out.status);
  return out;
}

Action sanity_controller(const Observation& obs, const SanityConfig& c) {
  const double px = obs[9];
  const double py = obs[10];
  const double speed = obs[0];
  const double bearing = std::atan2(py, px);
  const double d = std::hypot(px, py);
  const double turn = std::clamp(bearing / (c.max_turn_rate * c.control_period), -1.0, 1.0);
  // Accelerate while still turning once the target is less than ~80 degrees
  // off the nose.
  const double desired = std::abs(bearing) < 1.4 ? std::min(c.thrust / c.drag, 15.0 * d) * std::cos(bearing) : 0.0;
  const double thrust = std::clamp((c.drag * desired + 25.0 * (desired - speed)) / c.thrust, -1.0, 1.0);
  return {thrust * c.action_limit, turn * c.action_limit, 0.0};
}

}  // namespace fishswim::env
