#include "fishswim/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fishswim/errors.hpp"

namespace fishswim::baseline {

void validate(const CpgParams& p, double joint_limit) {
  if (!(p.frequency >= 0.0)) throw ConfigError("cpg frequency must be >= 0");
  for (int i = 0; i < body::kJoints; ++i) {
    if (p.amplitude[i] < 0.0) throw ConfigError("cpg amplitudes must be >= 0");
    if (std::abs(p.offset) + p.amplitude[i] > joint_limit + 1e-12) {
      throw ConfigError("cpg offset + amplitude of joint " + std::to_string(i + 1) + " exceeds the joint limit");
    }
  }
}

body::JointVector cpg_output(const CpgParams& p, double t) {
  body::JointVector j{};
  const double w = 2.0 * std::numbers::pi * p.frequency;
  for (int i = 0; i < body::kJoints; ++i) j[i] = p.offset + p.amplitude[i] * std::sin(w * t + p.phase[i]);
  return j;
}

CpgGenerator::CpgGenerator(const CpgParams& initial, double smoothing_time)
    : current_(initial), target_(initial), smoothing_time_(smoothing_time) {
  if (!(smoothing_time >= 0.0)) throw ConfigError("cpg smoothing time must be >= 0");
}

void CpgGenerator::reset(const CpgParams& p) {
  current_ = p;
  target_ = p;
  theta_ = 0.0;
}

body::JointVector CpgGenerator::step(double dt) {
  body::JointVector j{};
  for (int i = 0; i < body::kJoints; ++i) j[i] = current_.offset + current_.amplitude[i] * std::sin(theta_ + current_.phase[i]);

  theta_ = std::fmod(theta_ + 2.0 * std::numbers::pi * current_.frequency * dt, 2.0 * std::numbers::pi);
  const double k = smoothing_time_ > 0.0 ? 1.0 - std::exp(-dt / smoothing_time_) : 1.0;
  auto blend = [k](double& cur, double tgt) { cur += k * (tgt - cur); };
  blend(current_.frequency, target_.frequency);
  blend(current_.offset, target_.offset);
  for (int i = 0; i < body::kJoints; ++i) {
    blend(current_.amplitude[i], target_.amplitude[i]);
    blend(current_.phase[i], target_.phase[i]);
  }
  return j;
}

Pid::Pid(PidGains gains) : gains_(gains) {
  if (gains_.kp < 0.0 || gains_.ki < 0.0 || gains_.kd < 0.0) throw ConfigError("pid gains must be >= 0");
  if (!(gains_.output_limit > 0.0)) throw ConfigError("pid output limit must be positive");
}

void Pid::reset() {
  integral_ = 0.0;
  previous_ = 0.0;
  primed_ = false;
}

double Pid::update(double error, double dt) {
  if (!(dt > 0.0)) throw ConfigError("pid dt must be positive");
  integral_ += error * dt;
  if (gains_.ki > 0.0) {
    const double bound = gains_.output_limit / gains_.ki;
    integral_ = std::clamp(integral_, -bound, bound);
  }
  const double derivative = primed_ ? wrap_angle(error - previous_) / dt : 0.0;
  previous_ = error;
  primed_ = true;
  const double u = gains_.kp * error + gains_.ki * integral_ + gains_.kd * derivative;
  return std::clamp(u, -gains_.output_limit, gains_.output_limit);
}

void validate(const WaypointConfig& c) {
  CpgParams probe = c.cpg;
  probe.offset = 0.0;
  validate(probe, c.joint_limit);
  if (!(c.slow_radius >= 0.0)) throw ConfigError("baseline slow radius must be >= 0");
  if (!(c.control_period > 0.0)) throw ConfigError("baseline control period must be positive");
}

WaypointController::WaypointController(WaypointConfig config)
    : config_(config), pid_(config.pid), generator_(config.cpg, config.smoothing_time) {
  validate(config_);
}

void WaypointController::reset() {
  pid_.reset();
  generator_.reset(config_.cpg);
  last_error_ = 0.0;
}

env::Action WaypointController::act(const env::Observation& obs) {
  const double px = obs[9];
  const double py = obs[10];
  last_error_ = std::atan2(py, px);
  const double d = std::hypot(px, py);
  CpgParams target = config_.cpg;
  target.offset = pid_.update(last_error_, config_.control_period);
  const double scale = config_.slow_radius > 0.0 ? std::min(1.0, d / config_.slow_radius) : 1.0;
  for (int i = 0; i < body::kJoints; ++i) {
    target.amplitude[i] = std::min(scale * config_.cpg.amplitude[i], config_.joint_limit - std::abs(target.offset));
    target.amplitude[i] = std::max(target.amplitude[i], 0.0);
  }
  generator_.set_target(target);
  const body::JointVector j = generator_.step(config_.control_period);
  env::Action a{};
  for (int i = 0; i < body::kJoints; ++i) a[i] = std::clamp(j[i], -config_.joint_limit, config_.joint_limit);
  return a;
}

}  // namespace fishswim::baseline
