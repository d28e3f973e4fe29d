#pragma once

#include <array>
#include <string>
#include <vector>

#include "fishswim/body.hpp"
#include "fishswim/coupling.hpp"

// Open-loop actuator response matching: drive the free-floating fish with
// step or sinusoid joint commands, compare joint angles against reference
// recordings, and fit the servo gains and command latency.
namespace fishswim::calibrate {

inline constexpr double kSamplePeriod = 0.02;  // s, 50 Hz feedback

enum class ExcitationKind { kStep, kSinusoid };

struct Excitation {
  ExcitationKind kind = ExcitationKind::kStep;
  double amplitude = deg2rad(20.0);  // rad
  double frequency = 1.0;            // Hz, sinusoid only
  double duration = 4.0;             // s
  double step_time = 1.0;            // s, step only
};

// One command per 50 Hz sample, shared by all three joints. Throws
// ConfigError when the amplitude exceeds the joint limit.
std::vector<double> generate_excitation(const Excitation& e, double joint_limit = deg2rad(60.0));

// Row k: time t_k = k * 0.02 s, the command issued at t_k and the joint
// angle measured at t_k (before that command acts).
struct ResponseTrace {
  std::string name;
  std::vector<double> t;
  std::vector<body::JointVector> command;
  std::vector<body::JointVector> measured;

  std::size_t size() const { return t.size(); }
};

// Throws DataError unless timestamps increase uniformly by 0.02 s and the
// columns have equal length.
void validate(const ResponseTrace& trace);

// CSV with header t,j1_cmd,j1_pos,j2_cmd,j2_pos,j3_cmd,j3_pos.
std::string to_csv(const ResponseTrace& trace);
ResponseTrace parse_csv(const std::string& text, const std::string& name = "");
ResponseTrace read_csv(const std::string& path);
void write_csv(const std::string& path, const ResponseTrace& trace);

struct ServoParams {
  double kp = 4.0;       // N m / rad, all joints
  double kd = 0.15;      // N m s / rad
  double latency = 0.0;  // s
};

// Pool used for open-loop runs: the default fish centred in a small tank.
struct OpenLoopSetup {
  coupling::SimConfig sim;
  int substeps_per_sample = 5;
};
OpenLoopSetup default_open_loop_setup();

ResponseTrace run_open_loop(const std::vector<body::JointVector>& commands, const ServoParams& params,
                            const OpenLoopSetup& setup);
ResponseTrace run_open_loop(const std::vector<double>& commands, const ServoParams& params,
                            const OpenLoopSetup& setup);

// Root-mean-square difference of measured angles per joint. Throws DataError
// on length or timestamp mismatch.
body::JointVector response_error(const ResponseTrace& sim, const ResponseTrace& ref);

struct FitOptions {
  std::vector<double> kp_grid{0.5, 1.26, 3.17, 8.0, 20.0};
  std::vector<double> kd_grid{0.01, 0.0376, 0.141, 0.532, 2.0};
  double kp_range[2] = {0.5, 20.0};
  double kd_range[2] = {0.01, 2.0};
  double latency_range[2] = {0.0, 0.12};
  ServoParams initial;
  int max_refinement_evaluations = 60;
};

struct FitResult {
  ServoParams params;
  double total_rmse = 0.0;    // sum over traces and joints
  double initial_rmse = 0.0;  // at FitOptions::initial
  std::vector<body::JointVector> residuals;  // per trace
  int evaluations = 0;
  std::string warning;
};

// Coarse (kp, kd) grid then pattern search in log gains. Every latency in
// latency_range is scored exactly for each gain pair, at substep resolution.
// Ties go to the smallest (kp, kd, latency). Never returns worse than the
// initial guess.
FitResult fit_servo_params(const std::vector<ResponseTrace>& refs, const OpenLoopSetup& setup,
                           const FitOptions& options = {});

std::string to_json(const FitResult& r);

}  // namespace fishswim::calibrate
