#include <doctest.h>

#include <cmath>
#include <numbers>

#include "fishswim/baseline.hpp"
#include "fishswim/errors.hpp"

using namespace fishswim;
using namespace fishswim::baseline;

TEST_CASE("CPG output at a quarter period reaches the amplitude") {
  CpgParams p;
  p.frequency = 1.0;
  p.amplitude = {deg2rad(30.0), 0.0, 0.0};
  p.phase = {0.0, 0.0, 0.0};
  const body::JointVector j = cpg_output(p, 0.25);
  CHECK(rad2deg(j[0]) == doctest::Approx(30.0).epsilon(1e-12));
  CHECK(j[1] == 0.0);
}

TEST_CASE("zero amplitude holds the offset and output is periodic") {
  CpgParams p;
  p.amplitude = {0.0, 0.0, 0.0};
  p.offset = 0.2;
  for (double t : {0.0, 0.13, 1.7}) {
    for (double v : cpg_output(p, t)) CHECK(v == 0.2);
  }
  CpgParams q;
  const double period = 1.0 / q.frequency;
  for (double t : {0.05, 0.31, 0.9}) {
    const body::JointVector a = cpg_output(q, t);
    const body::JointVector b = cpg_output(q, t + period);
    for (int i = 0; i < body::kJoints; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
  }
}

TEST_CASE("CPG parameters must fit inside the joint limit") {
  CpgParams p;
  CHECK_NOTHROW(validate(p, deg2rad(60.0)));
  p.offset = deg2rad(35.0);
  CHECK_THROWS_AS(validate(p, deg2rad(60.0)), ConfigError);
  p.offset = 0.0;
  p.frequency = -1.0;
  CHECK_THROWS_AS(validate(p, deg2rad(60.0)), ConfigError);
}

TEST_CASE("smoothed parameter jumps keep commands continuous") {
  CpgParams start;
  start.amplitude = {0.0, 0.0, 0.0};
  CpgGenerator g(start, 0.1);
  CpgParams jump = start;
  jump.offset = 0.4;
  g.set_target(jump);
  const double dt = 0.02;
  body::JointVector prev = g.step(dt);
  for (int k = 0; k < 100; ++k) {
    const body::JointVector now = g.step(dt);
    CHECK(std::abs(now[0] - prev[0]) <= dt / 0.1 * 0.4 + 1e-12);
    prev = now;
  }
  CHECK(g.current().offset == doctest::Approx(0.4).epsilon(1e-6));
}

TEST_CASE("proportional PID output") {
  Pid pid({1.0, 0.0, 0.0, 1.0});
  CHECK(pid.update(0.0, 0.02) == 0.0);
  pid.reset();
  CHECK(pid.update(0.2, 0.02) == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("integral stays clamped under sustained saturation") {
  PidGains g;
  g.kp = 0.0;
  g.ki = 0.5;
  g.kd = 0.0;
  g.output_limit = 0.3;
  Pid pid(g);
  for (int k = 0; k < 1000; ++k) CHECK(std::abs(pid.update(2.0, 0.02)) <= 0.3);
  CHECK(pid.integral() == doctest::Approx(0.3 / 0.5).epsilon(1e-12));
  // Unwinds as soon as the error reverses.
  double out = 0.0;
  for (int k = 0; k < 10; ++k) out = pid.update(-2.0, 0.02);
  CHECK(out < 0.3);
}

TEST_CASE("PID is a deterministic function of the error history") {
  Pid a, b;
  for (double e : {0.1, -0.3, 0.5, 0.05}) CHECK(a.update(e, 0.02) == b.update(e, 0.02));
}

TEST_CASE("waypoint controller steers toward the target") {
  WaypointController ahead;
  env::Observation o{};
  o[9] = 1.0;
  ahead.act(o);
  CHECK(ahead.last_heading_error() == 0.0);
  CHECK(ahead.generator().current().offset == doctest::Approx(0.0).epsilon(1e-15));

  WaypointController left;
  o[9] = 0.0;
  o[10] = 1.0;
  for (int k = 0; k < 5; ++k) left.act(o);
  CHECK(left.last_heading_error() == doctest::Approx(std::numbers::pi / 2.0).epsilon(1e-15));
  CHECK(left.generator().current().offset > 0.0);
}

TEST_CASE("waypoint commands stay inside the joint limit") {
  WaypointConfig c;
  WaypointController ctl(c);
  env::Observation o{};
  o[9] = -1.0;
  o[10] = 1e-3;
  for (int k = 0; k < 500; ++k) {
    for (double a : ctl.act(o)) CHECK(std::abs(a) <= c.joint_limit);
  }
}
