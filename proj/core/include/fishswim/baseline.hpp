#pragma once

#include "fishswim/body.hpp"
#include "fishswim/env.hpp"

// Comparison controller: sinusoidal CPG joint commands steered by a PID loop
// on the heading error, which sets the shared joint offset.
namespace fishswim::baseline {

struct CpgParams {
  double frequency = 1.5;  // Hz
  body::JointVector amplitude{deg2rad(15.0), deg2rad(20.0), deg2rad(30.0)};
  body::JointVector phase{0.0, deg2rad(-60.0), deg2rad(-120.0)};
  double offset = 0.0;  // rad, turning bias shared by all joints
};

// Throws ConfigError unless |offset| + amplitude_i <= joint_limit and the
// frequency and amplitudes are non-negative.
void validate(const CpgParams& p, double joint_limit);

// J_des,i(t) = offset + A_i sin(2 pi f t + phi_i)
body::JointVector cpg_output(const CpgParams& p, double t);

// CPG whose parameters move toward new settings with a first-order lag, with
// the oscillator phase integrated so frequency changes stay continuous.
class CpgGenerator {
 public:
  explicit CpgGenerator(const CpgParams& initial, double smoothing_time = 0.1);

  void set_target(const CpgParams& target) { target_ = target; }
  // Command at the current time, then advances by dt.
  body::JointVector step(double dt);
  const CpgParams& current() const { return current_; }
  double phase() const { return theta_; }
  void reset(const CpgParams& p);

 private:
  CpgParams current_;
  CpgParams target_;
  double smoothing_time_;
  double theta_ = 0.0;
};

struct PidGains {
  double kp = 1.2;
  double ki = 0.05;
  double kd = 0.1;
  double output_limit = deg2rad(30.0);
};

class Pid {
 public:
  explicit Pid(PidGains gains = {});

  // error in (-pi, pi]; output clamped to +-output_limit, integral clamped to
  // +-output_limit / ki.
  double update(double error, double dt);
  void reset();
  double integral() const { return integral_; }
  const PidGains& gains() const { return gains_; }

 private:
  PidGains gains_;
  double integral_ = 0.0;
  double previous_ = 0.0;
  bool primed_ = false;
};

struct WaypointConfig {
  CpgParams cpg;
  PidGains pid;
  double slow_radius = 0.3;      // m, amplitudes shrink inside it
  double control_period = 0.02;  // s
  double smoothing_time = 0.1;   // s
  double joint_limit = deg2rad(60.0);
};

void validate(const WaypointConfig& c);

class WaypointController : public env::Controller {
 public:
  explicit WaypointController(WaypointConfig config = {});

  void reset() override;
  env::Action act(const env::Observation& obs) override;
  double last_heading_error() const { return last_error_; }
  const CpgGenerator& generator() const { return generator_; }

 private:
  WaypointConfig config_;
  Pid pid_;
  CpgGenerator generator_;
  double last_error_ = 0.0;
};

}  // namespace fishswim::baseline
