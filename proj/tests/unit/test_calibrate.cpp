#include <doctest.h>

#include <cmath>
#include <numeric>

#include "fishswim/calibrate.hpp"
#include "fishswim/errors.hpp"

using namespace fishswim;
using namespace fishswim::calibrate;

namespace {

OpenLoopSetup small_setup() {
  OpenLoopSetup s = default_open_loop_setup();
  s.sim.nx = 40;
  s.sim.ny = 40;
  s.sim.fluid.domain_x = 1.0;
  s.sim.fluid.domain_y = 1.0;
  return s;
}

ResponseTrace constant_trace(std::size_t n, double value) {
  ResponseTrace t;
  for (std::size_t k = 0; k < n; ++k) {
    t.t.push_back(static_cast<double>(k) * kSamplePeriod);
    t.command.push_back({0.0, 0.0, 0.0});
    t.measured.push_back({value, value, value});
  }
  return t;
}

// Time at which joint 0 first crosses half the final command, interpolated.
double half_rise_time(const ResponseTrace& t, double level) {
  for (std::size_t k = 1; k < t.size(); ++k) {
    const double a = t.measured[k - 1][0];
    const double b = t.measured[k][0];
    if (a < level && b >= level) return t.t[k - 1] + (level - a) / (b - a) * kSamplePeriod;
  }
  return -1.0;
}

}  // namespace

TEST_CASE("step excitation switches at the step time") {
  Excitation e;
  e.amplitude = deg2rad(20.0);
  const std::vector<double> c = generate_excitation(e);
  REQUIRE(c.size() == 200);
  for (std::size_t k = 0; k < c.size(); ++k) {
    const double t = static_cast<double>(k) * kSamplePeriod;
    CHECK(c[k] == (t < 1.0 - 1e-9 ? 0.0 : deg2rad(20.0)));
  }
}

TEST_CASE("sinusoid excitation is zero-mean and periodic") {
  Excitation e;
  e.kind = ExcitationKind::kSinusoid;
  e.frequency = 1.0;
  const std::vector<double> c = generate_excitation(e);
  REQUIRE(c.size() == 200);
  CHECK(std::abs(std::accumulate(c.begin(), c.end(), 0.0)) < 1e-12);
  for (std::size_t k = 0; k + 50 < c.size(); ++k) CHECK(c[k] == doctest::Approx(c[k + 50]).epsilon(1e-12));
  e.amplitude = deg2rad(70.0);
  CHECK_THROWS_AS(generate_excitation(e), ConfigError);
}

TEST_CASE("CSV traces round-trip") {
  ResponseTrace t = constant_trace(5, 0.1);
  t.command[2] = {0.3, -0.2, 0.1};
  t.measured[3] = {0.123456789012345, 1e-9, -0.5};
  const ResponseTrace back = parse_csv(to_csv(t), "x");
  CHECK(back.t == t.t);
  CHECK(back.command == t.command);
  CHECK(back.measured == t.measured);
}

TEST_CASE("malformed CSV traces are data errors") {
  CHECK_THROWS_AS(parse_csv(""), DataError);
  CHECK_THROWS_AS(parse_csv("t,a,b\n0,1,2\n"), DataError);
  const std::string header = "t,j1_cmd,j1_pos,j2_cmd,j2_pos,j3_cmd,j3_pos\n";
  CHECK_THROWS_AS(parse_csv(header), DataError);
  CHECK_THROWS_AS(parse_csv(header + "0,0,0,0,0,0\n"), DataError);
  CHECK_THROWS_AS(parse_csv(header + "0,0,0,0,0,0,abc\n"), DataError);
  CHECK_THROWS_AS(parse_csv(header + "0,0,0,0,0,0,0\n0.03,0,0,0,0,0,0\n"), DataError);
  CHECK_THROWS_AS(parse_csv(header + "0,0,0,0,0,0,0\n0,0,0,0,0,0,0\n"), DataError);
  CHECK_NOTHROW(parse_csv(header + "0,0,0,0,0,0,0\r\n0.02,0,0,0,0,0,0\r\n"));
}

TEST_CASE("response error of identical, offset and hand-computed traces") {
  const ResponseTrace a = constant_trace(5, 0.0);
  for (double r : response_error(a, a)) CHECK(r == 0.0);
  for (double r : response_error(constant_trace(5, 0.03), a)) CHECK(r == doctest::Approx(0.03).epsilon(1e-14));

  ResponseTrace b = a;
  const double d[5] = {0.1, -0.2, 0.0, 0.3, 0.1};
  for (int k = 0; k < 5; ++k) b.measured[k][1] = d[k];
  // sqrt((0.01 + 0.04 + 0 + 0.09 + 0.01) / 5) = sqrt(0.03)
  const body::JointVector r = response_error(b, a);
  CHECK(r[0] == 0.0);
  CHECK(r[1] == doctest::Approx(std::sqrt(0.03)).epsilon(1e-14));

  CHECK_THROWS_AS(response_error(constant_trace(4, 0.0), a), DataError);
}

TEST_CASE("open-loop runs are deterministic and a stiff servo settles") {
  const OpenLoopSetup s = small_setup();
  Excitation e;
  e.duration = 2.0;
  e.step_time = 0.2;
  const std::vector<double> cmd = generate_excitation(e);
  ServoParams stiff{20.0, 0.5, 0.0};
  const ResponseTrace a = run_open_loop(cmd, stiff, s);
  const ResponseTrace b = run_open_loop(cmd, stiff, s);
  CHECK(a.measured == b.measured);
  for (int j = 0; j < body::kJoints; ++j) {
    CHECK(std::abs(a.measured.back()[j] - e.amplitude) <= 0.02 * e.amplitude);
  }
  CHECK_THROWS_AS(run_open_loop(cmd, ServoParams{0.0, 0.1, 0.0}, s), ConfigError);
}

TEST_CASE("command latency delays the step response") {
  const OpenLoopSetup s = small_setup();
  Excitation e;
  e.duration = 1.2;
  e.step_time = 0.2;
  const std::vector<double> cmd = generate_excitation(e);
  const double level = 0.5 * e.amplitude;
  const double base = half_rise_time(run_open_loop(cmd, ServoParams{4.0, 0.15, 0.0}, s), level);
  REQUIRE(base > 0.0);
  double previous = 0.0;
  for (double latency : {0.02, 0.048, 0.068, 0.1}) {
    const double shifted = half_rise_time(run_open_loop(cmd, ServoParams{4.0, 0.15, latency}, s), level);
    const double lag = shifted - base;
    CHECK(lag >= latency - 1e-4);  // interpolation between 50 Hz samples
    CHECK(lag == doctest::Approx(latency).epsilon(0.004 / latency));
    CHECK(lag > previous);
    previous = lag;
  }
}

TEST_CASE("fitting the simulator's own output returns its parameters") {
  const OpenLoopSetup s = small_setup();
  Excitation step;
  step.duration = 1.2;
  step.step_time = 0.2;
  Excitation sine;
  sine.kind = ExcitationKind::kSinusoid;
  sine.duration = 1.2;
  const ServoParams truth{3.17, 0.141, 0.0};
  const std::vector<ResponseTrace> refs{run_open_loop(generate_excitation(step), truth, s),
                                        run_open_loop(generate_excitation(sine), truth, s)};
  FitOptions o;
  o.kp_grid = {1.26, 3.17, 8.0};
  o.kd_grid = {0.0376, 0.141, 0.532};
  o.max_refinement_evaluations = 10;
  o.initial = ServoParams{8.0, 0.532, 0.04};
  const FitResult r = fit_servo_params(refs, s, o);
  CHECK(r.params.kp == doctest::Approx(truth.kp).epsilon(1e-12));
  CHECK(r.params.kd == doctest::Approx(truth.kd).epsilon(1e-12));
  CHECK(r.params.latency == 0.0);
  CHECK(r.total_rmse < 1e-12);
  CHECK(r.total_rmse <= r.initial_rmse);
  REQUIRE(r.residuals.size() == 2);
  CHECK(to_json(r).find("\"kp\"") != std::string::npos);

  // The initial guess wins when nothing beats it.
  o.initial = truth;
  const FitResult same = fit_servo_params(refs, s, o);
  CHECK(same.total_rmse <= same.initial_rmse);
  CHECK(same.params.kp == truth.kp);
}

TEST_CASE("latency is a pure time shift of the response") {
  const OpenLoopSetup s = small_setup();
  Excitation sine;
  sine.kind = ExcitationKind::kSinusoid;
  sine.duration = 1.0;
  const std::vector<double> cmd = generate_excitation(sine);
  const ResponseTrace now = run_open_loop(cmd, ServoParams{4.0, 0.15, 0.0}, s);
  const ResponseTrace late = run_open_loop(cmd, ServoParams{4.0, 0.15, 0.04}, s);
  double worst = 0.0;
  for (std::size_t k = 2; k < now.size(); ++k) {
    for (int j = 0; j < body::kJoints; ++j) worst = std::max(worst, std::abs(late.measured[k][j] - now.measured[k - 2][j]));
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("fitted latency increases with the true latency") {
  const OpenLoopSetup s = small_setup();
  Excitation step;
  step.duration = 1.0;
  step.step_time = 0.2;
  Excitation sine;
  sine.kind = ExcitationKind::kSinusoid;
  sine.duration = 1.0;
  FitOptions o;
  o.kp_grid = {4.0};
  o.kd_grid = {0.15};
  o.max_refinement_evaluations = 0;
  o.initial = ServoParams{4.0, 0.15, 0.0};
  double previous = -1.0;
  for (double truth : {0.0, 0.02, 0.044, 0.068, 0.1}) {
    const ServoParams p{4.0, 0.15, truth};
    const std::vector<ResponseTrace> refs{run_open_loop(generate_excitation(step), p, s),
                                          run_open_loop(generate_excitation(sine), p, s)};
    const FitResult r = fit_servo_params(refs, s, o);
    CHECK(r.params.latency == doctest::Approx(truth).epsilon(1e-9));
    CHECK(r.params.latency > previous);
    previous = r.params.latency;
  }
}

TEST_CASE("fit requires a step and a sinusoid") {
  const OpenLoopSetup s = small_setup();
  CHECK_THROWS_AS(fit_servo_params({}, s), DataError);
  CHECK_THROWS_AS(fit_servo_params({constant_trace(10, 0.0)}, s), DataError);
}
