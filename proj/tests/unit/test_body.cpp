#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fishswim/body.hpp"
#include "fishswim/errors.hpp"

using namespace fishswim;
using namespace fishswim::body;

TEST_CASE("normalized density of a four-link chain") {
  const std::vector<double> m{0.6, 0.2, 0.1, 0.1};
  const std::vector<double> l{0.2, 0.1, 0.1, 0.1};
  const std::vector<double> rho = normalized_density(m, l);
  REQUIRE(rho.size() == 4);
  CHECK(rho[0] == doctest::Approx(1.5).epsilon(1e-14));
  CHECK(rho[1] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(rho[2] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(rho[3] == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("uniform and single-link densities are one") {
  const std::vector<double> l{0.3, 0.1, 0.2};
  std::vector<double> m;
  for (double v : l) m.push_back(2.5 * v);
  for (double r : normalized_density(m, l)) CHECK(r == doctest::Approx(1.0).epsilon(1e-14));
  const std::vector<double> one_m{0.7};
  const std::vector<double> one_l{0.4};
  CHECK(normalized_density(one_m, one_l)[0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("normalized density rejects bad input") {
  const std::vector<double> m{1.0, 2.0};
  const std::vector<double> l{1.0};
  CHECK_THROWS_AS(normalized_density(m, l), ConfigError);
  const std::vector<double> bad{1.0, -1.0};
  CHECK_THROWS_AS(normalized_density(m, bad), ConfigError);
  CHECK_THROWS_AS(normalized_density(std::vector<double>{}, std::vector<double>{}), ConfigError);
}

TEST_CASE("masses matching a density profile keep the total mass") {
  const std::vector<double> target{1.2, 1.0, 0.8, 0.9};
  const std::vector<double> l{0.24, 0.07, 0.07, 0.14};
  const auto m = masses_matching_density(target, l, 1.1);
  double total = 0.0;
  for (double v : m) total += v;
  CHECK(total == doctest::Approx(1.1).epsilon(1e-14));
  const std::vector<double> mv(m.begin(), m.end());
  const std::vector<double> rho = normalized_density(mv, l);
  for (int i = 1; i < 4; ++i) CHECK(rho[i] / rho[0] == doctest::Approx(target[i] / target[0]).epsilon(1e-12));
}

TEST_CASE("servo torque follows the PD law") {
  ServoModel s;
  s.kp = {2.0, 2.0, 2.0};
  s.kd = {0.5, 0.5, 0.5};
  const JointVector t = servo_torque(s, {1.0, 0.3, 0.0}, {0.5, 0.3, 0.0}, {0.2, 0.0, 0.0});
  CHECK(t[0] == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(t[1] == 0.0);
  CHECK(t[2] == 0.0);
}

TEST_CASE("servo torque saturates at the limit") {
  ServoModel s;
  s.kp = {1e6, 1e6, 1e6};
  const JointVector t = servo_torque(s, {0.5, -0.5, 0.1}, {0.0, 0.0, 0.0}, {0.0, 0.0, 0.0});
  CHECK(t[0] == s.torque_limit);
  CHECK(t[1] == -s.torque_limit);
  CHECK(t[2] == s.torque_limit);
}

TEST_CASE("servo torque is gated at the speed limit") {
  ServoModel s;
  const JointVector t = servo_torque(s, {1.0, 1.0, -1.0}, {0.0, 0.0, 0.0}, {s.speed_limit, -s.speed_limit, 0.0});
  CHECK(t[0] == 0.0);
  CHECK(t[1] > 0.0);  // braking is allowed
  CHECK(t[2] < 0.0);
}

TEST_CASE("latency buffer replays commands with the configured delay") {
  CHECK(latency_steps(0.068, 0.004) == 17);
  CHECK(latency_steps(0.0, 0.004) == 0);
  const JointVector initial{0.01, 0.02, 0.03};
  LatencyBuffer b(17, initial);
  for (int t = 0; t <= 20; ++t) b.push(t, {double(t), 0.0, 0.0});
  CHECK(b.delayed(20)[0] == 3.0);
  CHECK(b.delayed(5) == initial);
  LatencyBuffer zero(0, initial);
  zero.push(4, {7.0, 7.0, 7.0});
  CHECK(zero.delayed(4)[0] == 7.0);
  CHECK(zero.delayed(3) == initial);
}

TEST_CASE("latency buffer memory stays bounded") {
  LatencyBuffer b(5, {});
  for (int t = 0; t < 1000; ++t) b.push(t, {double(t), 0.0, 0.0});
  CHECK(b.size() <= 24);
  CHECK(b.delayed(999)[0] == 994.0);
}

TEST_CASE("straight fish outline spans the body length and is symmetric") {
  const Morphology m = default_morphology();
  FishState s;
  const MarkerGeometry g = marker_geometry(m, s, 0.01);
  CHECK(g.warning.empty());
  double xmin = 1e9, xmax = -1e9;
  for (const Vec2& p : g.markers.position) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
  }
  // Extremes lie within one marker spacing of nose and tail.
  CHECK(xmax <= 1e-12);
  CHECK(xmax > -0.01);
  CHECK(xmin >= -m.total_length() - 1e-12);
  CHECK(xmin < -m.total_length() + 0.01);
  CHECK(m.total_length() == doctest::Approx(0.52));
  // Every marker has a mirror image.
  for (const Vec2& p : g.markers.position) {
    const bool mirrored = std::any_of(g.markers.position.begin(), g.markers.position.end(), [&](const Vec2& q) {
      return std::abs(q.x - p.x) < 1e-12 && std::abs(q.y + p.y) < 1e-12;
    });
    CHECK(mirrored);
  }
}

TEST_CASE("joint rotation moves distal markers with speed proportional to the lever arm") {
  const Morphology m = default_morphology();
  FishBody body(m, 0.01);
  FishState s;
  s.joint_velocities = {1.0, 0.0, 0.0};
  const Markers mk = body.markers(s);
  const Vec2 joint1{-m.links[0].length, 0.0};
  int checked = 0;
  for (std::size_t i = 0; i < mk.position.size(); ++i) {
    if (mk.link[i] == 0) {
      CHECK(norm(mk.velocity[i]) < 1e-14);
      continue;
    }
    const double r = norm(mk.position[i] - joint1);
    CHECK(norm(mk.velocity[i]) == doctest::Approx(r).epsilon(1e-12));
    ++checked;
  }
  CHECK(checked >= 3);
}

TEST_CASE("outline self-intersection is detected for a folded chain") {
  const Morphology m = default_morphology();
  FishState s;
  s.joint_angles = {deg2rad(60.0), deg2rad(60.0), deg2rad(60.0)};
  CHECK_FALSE(marker_geometry(m, s, 0.01).warning.empty());
  const std::vector<Vec2> square{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  CHECK_FALSE(outline_self_intersects(square));
  const std::vector<Vec2> bow{{0, 0}, {1, 1}, {1, 0}, {0, 1}};
  CHECK(outline_self_intersects(bow));
}

TEST_CASE("resting fish without torques or forces stays put") {
  FishBody body(default_morphology(), 0.01);
  FishState s;
  s.base_position = {1.0, 2.0};
  s.heading = 0.3;
  s.joint_angles = {0.1, -0.2, 0.1};
  const std::vector<Vec2> forces(body.marker_template().size());
  const FishState n = body.step(s, {}, forces, 0.004);
  CHECK(n.base_position.x == doctest::Approx(s.base_position.x).epsilon(1e-15));
  CHECK(n.base_position.y == doctest::Approx(s.base_position.y).epsilon(1e-15));
  CHECK(n.heading == doctest::Approx(s.heading).epsilon(1e-15));
  for (int j = 0; j < kJoints; ++j) {
    CHECK(n.joint_angles[j] == doctest::Approx(s.joint_angles[j]).epsilon(1e-15));
    CHECK(n.joint_velocities[j] == 0.0);
  }
}

TEST_CASE("internal torques conserve linear and angular momentum") {
  FishBody body(default_morphology(), 0.01);
  FishState s;
  s.base_linear_velocity = {0.1, 0.02};
  s.base_angular_velocity = 0.3;
  s.joint_angles = {0.2, -0.1, 0.3};
  s.joint_velocities = {0.5, -1.0, 0.8};
  const std::vector<Vec2> forces(body.marker_template().size());
  const Vec2 p0 = body.linear_momentum(s);
  const double l0 = body.angular_momentum_about_com(s);
  for (int k = 0; k < 50; ++k) {
    const FishState n = body.step(s, {0.3, -0.2, 0.1}, forces, 0.004);
    const Vec2 p = body.linear_momentum(n);
    const double l = body.angular_momentum_about_com(n);
    CHECK(norm(p - body.linear_momentum(s)) <= 1e-8 * norm(p0));
    CHECK(std::abs(l - body.angular_momentum_about_com(s)) <= 1e-8 * std::abs(l0));
    s = n;
  }
}

TEST_CASE("a constant external force changes the momentum by F t") {
  FishBody body(default_morphology(), 0.01);
  FishState s;
  s.joint_angles = {0.1, 0.1, -0.2};
  const std::size_t n = body.marker_template().size();
  const Vec2 total{0.5, -0.2};
  const std::vector<Vec2> forces(n, total / static_cast<double>(n));
  const double dt = 0.004;
  const int steps = 100;
  for (int k = 0; k < steps; ++k) s = body.step(s, {}, forces, dt);
  const Vec2 v = body.linear_momentum(s) / body.total_mass();
  const Vec2 expected = total * (steps * dt) / body.total_mass();
  CHECK(norm(v - expected) < 1e-6);
}

TEST_CASE("joint limits clamp the chain") {
  Morphology m = default_morphology();
  FishBody body(m, 0.01);
  FishState s;
  s.joint_angles = {m.joint_limit - 1e-4, 0.0, 0.0};
  s.joint_velocities = {5.0, 0.0, 0.0};
  const std::vector<Vec2> forces(body.marker_template().size());
  const FishState n = body.step(s, {}, forces, 0.004);
  CHECK(n.joint_angles[0] <= m.joint_limit + 1e-12);
  CHECK(n.joint_velocities[0] <= 1e-12);
}

TEST_CASE("morphology validation") {
  Morphology m = default_morphology();
  CHECK_NOTHROW(validate(m));
  m.links[2].mass = 0.0;
  CHECK_THROWS_AS(validate(m), ConfigError);
  ServoModel s;
  s.torque_limit = -1.0;
  CHECK_THROWS_AS(validate(s), ConfigError);
}
