#include "fishswim/body.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "fishswim/errors.hpp"

namespace fishswim::body {

double Morphology::total_mass() const {
  double m = 0.0;
  for (const auto& l : links) m += l.mass;
  return m;
}

double Morphology::total_length() const {
  double s = 0.0;
  for (const auto& l : links) s += l.length;
  return s;
}

Morphology default_morphology() {
  Morphology m;
  m.links = {LinkSpec{0.62, 0.24, 0.12}, LinkSpec{0.15, 0.07, 0.09}, LinkSpec{0.15, 0.07, 0.06},
             LinkSpec{0.18, 0.14, 0.035}};
  m.tail_tip_width = 0.01;
  return m;
}

void validate(const Morphology& m) {
  for (std::size_t k = 0; k < m.links.size(); ++k) {
    const auto& l = m.links[k];
    if (!(l.mass > 0.0) || !(l.length > 0.0) || !(l.width > 0.0)) {
      throw ConfigError("link " + std::to_string(k) + " needs positive mass, length and width");
    }
  }
  if (!(m.joint_limit > 0.0) || m.joint_limit >= std::numbers::pi) {
    throw ConfigError("joint limit must lie in (0, pi)");
  }
  if (!(m.tail_tip_width > 0.0)) throw ConfigError("tail tip width must be positive");
}

std::vector<double> normalized_density(std::span<const double> masses, std::span<const double> lengths) {
  if (masses.empty() || masses.size() != lengths.size()) {
    throw ConfigError("normalized density needs equal, non-empty mass and length lists");
  }
  double total_m = 0.0;
  double total_l = 0.0;
  for (std::size_t i = 0; i < masses.size(); ++i) {
    if (!(masses[i] > 0.0) || !(lengths[i] > 0.0)) {
      throw ConfigError("normalized density needs positive masses and lengths (entry " + std::to_string(i) + ")");
    }
    total_m += masses[i];
    total_l += lengths[i];
  }
  std::vector<double> out(masses.size());
  for (std::size_t i = 0; i < masses.size(); ++i) out[i] = (masses[i] / lengths[i]) * (total_l / total_m);
  return out;
}

std::array<double, kLinks> masses_matching_density(std::span<const double> target,
                                                   std::span<const double> lengths, double total_mass) {
  if (target.size() != kLinks || lengths.size() != kLinks) {
    throw ConfigError("density matching needs one entry per link");
  }
  double weighted = 0.0;
  for (int k = 0; k < kLinks; ++k) {
    if (!(target[k] > 0.0) || !(lengths[k] > 0.0)) throw ConfigError("density matching needs positive input");
    weighted += target[k] * lengths[k];
  }
  std::array<double, kLinks> m{};
  for (int k = 0; k < kLinks; ++k) m[k] = target[k] * lengths[k] * total_mass / weighted;
  return m;
}

void validate(const ServoModel& s) {
  for (int i = 0; i < kJoints; ++i) {
    if (!(s.kp[i] > 0.0) || !(s.kd[i] > 0.0)) throw ConfigError("servo kp and kd must be positive");
  }
  if (!(s.torque_limit > 0.0) || !(s.speed_limit > 0.0)) {
    throw ConfigError("servo torque and speed limits must be positive");
  }
}

JointVector servo_torque(const ServoModel& model, const JointVector& desired, const JointVector& angles,
                         const JointVector& velocities) {
  JointVector t{};
  for (int i = 0; i < kJoints; ++i) {
    double ti = model.kp[i] * (desired[i] - angles[i]) - model.kd[i] * velocities[i];
    ti = std::clamp(ti, -model.torque_limit, model.torque_limit);
    if (std::abs(velocities[i]) >= model.speed_limit && ti * velocities[i] > 0.0) ti = 0.0;
    t[i] = ti;
  }
  return t;
}

int latency_steps(double latency, double substep) {
  if (!(substep > 0.0)) throw ConfigError("substep must be positive");
  if (latency < 0.0) throw ConfigError("latency must be non-negative");
  return static_cast<int>(std::lround(latency / substep));
}

LatencyBuffer::LatencyBuffer(int delay_steps, const JointVector& initial_command, int max_delay_steps)
    : delay_steps_(delay_steps), initial_(initial_command) {
  if (delay_steps < 0) throw ConfigError("delay must be non-negative");
  capacity_ = static_cast<std::size_t>(std::max(delay_steps, max_delay_steps)) + 2;
}

void LatencyBuffer::push(std::int64_t substep, const JointVector& command) {
  if (!history_.empty() && substep < history_.back().stamp) {
    throw ConfigError("latency buffer stamps must be non-decreasing");
  }
  if (!history_.empty() && history_.back().stamp == substep) {
    history_.back().command = command;
    return;
  }
  history_.push_back({substep, command});
  // Drop entries that can no longer be the newest one at or before t - delay.
  while (history_.size() > capacity_) history_.pop_front();
}

JointVector LatencyBuffer::delayed(std::int64_t substep) const {
  const std::int64_t wanted = substep - delay_steps_;
  for (auto it = history_.rbegin(); it != history_.rend(); ++it) {
    if (it->stamp <= wanted) return it->command;
  }
  return initial_;
}

namespace {

// Dense straight-pose outline, closed, starting at the nose.
std::vector<Vec2> straight_outline(const FishBody& body, double total_length, int samples_per_side) {
  std::vector<Vec2> pts;
  pts.reserve(2 * samples_per_side + 2);
  for (int i = 0; i <= samples_per_side; ++i) {
    const double s = total_length * i / samples_per_side;
    pts.push_back({-s, -body.half_width(s)});
  }
  for (int i = samples_per_side; i >= 1; --i) {
    const double s = total_length * i / samples_per_side;
    pts.push_back({-s, body.half_width(s)});
  }
  return pts;
}

struct LinkState {
  std::array<Vec2, kLinks> c;
  std::array<double, kLinks> phi{};
  std::array<Vec2, kLinks> v;
  std::array<double, kLinks> w{};
};

// One constraint row: J v = sum_k lin_k . v_k + ang_k w_k.
struct Row {
  std::array<Vec2, kLinks> lin{};
  std::array<double, kLinks> ang{};
};

using SmallMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 9, 9>;
using SmallVector = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 9, 1>;

void add_pin_rows(std::vector<Row>& rows, int a, int b, Vec2 arm_a, Vec2 arm_b) {
  Row rx;
  rx.lin[a] = {1.0, 0.0};
  rx.ang[a] = -arm_a.y;
  rx.lin[b] = {-1.0, 0.0};
  rx.ang[b] = arm_b.y;
  Row ry;
  ry.lin[a] = {0.0, 1.0};
  ry.ang[a] = arm_a.x;
  ry.lin[b] = {0.0, -1.0};
  ry.ang[b] = -arm_b.x;
  rows.push_back(rx);
  rows.push_back(ry);
}

void add_angle_row(std::vector<Row>& rows, int a, int b) {
  Row r;
  r.ang[a] = 1.0;
  r.ang[b] = -1.0;
  rows.push_back(r);
}

}  // namespace

FishBody::FishBody(Morphology morphology, double marker_spacing) : morphology_(std::move(morphology)) {
  validate(morphology_);
  if (!(marker_spacing > 0.0)) throw ConfigError("marker spacing must be positive");
  double s = 0.0;
  for (int k = 0; k < kLinks; ++k) {
    const auto& l = morphology_.links[k];
    front_arc_[k] = s;
    s += l.length;
    inertia_[k] = l.mass * (l.length * l.length + l.width * l.width) / 12.0;
    total_mass_ += l.mass;
  }

  const double length = morphology_.total_length();
  const auto dense = straight_outline(*this, length, 4000);
  std::vector<double> arc(dense.size() + 1, 0.0);
  for (std::size_t i = 0; i < dense.size(); ++i) {
    const Vec2& p = dense[i];
    const Vec2& q = dense[(i + 1) % dense.size()];
    arc[i + 1] = arc[i] + norm(q - p);
    outline_area_ += 0.5 * cross(p, q);
  }
  outline_area_ = std::abs(outline_area_);
  const double perimeter = arc.back();
  const int n = std::max(8, static_cast<int>(std::lround(perimeter / marker_spacing)));
  const double seg = perimeter / n;
  std::size_t j = 0;
  for (int m = 0; m < n; ++m) {
    const double t = (m + 0.5) * seg;
    while (arc[j + 1] < t) ++j;
    const double frac = (t - arc[j]) / (arc[j + 1] - arc[j]);
    const Vec2 p = dense[j] + (dense[(j + 1) % dense.size()] - dense[j]) * frac;
    const double s_here = std::clamp(-p.x, 0.0, length);
    int link = 0;
    for (int k = 1; k < kLinks; ++k) {
      if (s_here >= front_arc_[k]) link = k;
    }
    markers_.push_back({link, Vec2{p.x + front_arc_[link], p.y}, seg});
  }
}

double FishBody::half_width(double s) const {
  const auto& links = morphology_.links;
  const double length = morphology_.total_length();
  if (s <= 0.0 || s > length) return 0.0;
  const double head = links[0].length;
  const double nose = 0.4 * head;
  if (s < nose) {
    const double r = (nose - s) / nose;
    return 0.5 * links[0].width * std::sqrt(std::max(0.0, 1.0 - r * r));
  }
  if (s < head) {
    const double r = (s - nose) / (head - nose);
    return 0.5 * (links[0].width + r * (links[1].width - links[0].width));
  }
  for (int k = 1; k < kLinks; ++k) {
    const double end = front_arc_[k] + links[k].length;
    if (s <= end || k == kLinks - 1) {
      const double next = k + 1 < kLinks ? links[k + 1].width : morphology_.tail_tip_width;
      const double r = (s - front_arc_[k]) / links[k].length;
      return 0.5 * (links[k].width + r * (next - links[k].width));
    }
  }
  return 0.0;
}

LinkFrames FishBody::frames(const FishState& state) const {
  LinkFrames f;
  double phi = state.heading;
  double w = state.base_angular_velocity;
  f.joint[0] = state.base_position;
  f.joint_velocity[0] = rotate(state.base_linear_velocity, state.heading);
  for (int k = 0; k < kLinks; ++k) {
    if (k > 0) {
      phi -= state.joint_angles[k - 1];
      w -= state.joint_velocities[k - 1];
      const Vec2 prev_axis{std::cos(f.angle[k - 1]), std::sin(f.angle[k - 1])};
      f.joint[k] = f.joint[k - 1] - morphology_.links[k - 1].length * prev_axis;
      f.joint_velocity[k] = f.joint_velocity[k - 1] + cross(f.angular_velocity[k - 1], f.joint[k] - f.joint[k - 1]);
    }
    f.angle[k] = phi;
    f.angular_velocity[k] = w;
    const Vec2 axis{std::cos(phi), std::sin(phi)};
    f.com[k] = f.joint[k] - 0.5 * morphology_.links[k].length * axis;
    f.com_velocity[k] = f.joint_velocity[k] + cross(w, f.com[k] - f.joint[k]);
  }
  return f;
}

Markers FishBody::markers(const FishState& state) const {
  const LinkFrames f = frames(state);
  Markers m;
  m.position.reserve(markers_.size());
  m.velocity.reserve(markers_.size());
  m.link.reserve(markers_.size());
  m.segment.reserve(markers_.size());
  for (const auto& t : markers_) {
    const Vec2 x = f.joint[t.link] + rotate(t.local, f.angle[t.link]);
    m.position.push_back(x);
    m.velocity.push_back(f.joint_velocity[t.link] + cross(f.angular_velocity[t.link], x - f.joint[t.link]));
    m.link.push_back(t.link);
    m.segment.push_back(t.segment);
  }
  return m;
}

FishState FishBody::to_state(const LinkFrames& f) const {
  FishState s;
  s.heading = wrap_angle(f.angle[0]);
  s.base_position = f.joint[0];
  s.base_linear_velocity = rotate(f.joint_velocity[0], -f.angle[0]);
  s.base_angular_velocity = f.angular_velocity[0];
  const double limit = morphology_.joint_limit;
  for (int j = 0; j < kJoints; ++j) {
    s.joint_angles[j] = std::clamp(f.angle[j] - f.angle[j + 1], -limit, limit);
    s.joint_velocities[j] = f.angular_velocity[j] - f.angular_velocity[j + 1];
  }
  return s;
}

FishState FishBody::step(const FishState& state, const JointVector& torques, std::span<const Vec2> marker_forces,
                         double dt) const {
  if (!(dt > 0.0)) throw ConfigError("body step needs dt > 0");
  if (!marker_forces.empty() && marker_forces.size() != markers_.size()) {
    throw ConfigError("marker force count " + std::to_string(marker_forces.size()) + " != marker count " +
                      std::to_string(markers_.size()));
  }
  const auto& links = morphology_.links;
  const LinkFrames f0 = frames(state);

  LinkState x0;
  for (int k = 0; k < kLinks; ++k) {
    x0.c[k] = f0.com[k];
    x0.phi[k] = f0.angle[k];
    x0.v[k] = f0.com_velocity[k];
    x0.w[k] = f0.angular_velocity[k];
  }
  std::array<double, kLinks> inv_m{};
  std::array<double, kLinks> inv_i{};
  for (int k = 0; k < kLinks; ++k) {
    inv_m[k] = 1.0 / links[k].mass;
    inv_i[k] = 1.0 / inertia_[k];
  }

  // Unconstrained impulses: external marker forces and internal joint torques.
  LinkState pred = x0;
  if (!marker_forces.empty()) {
    for (std::size_t m = 0; m < markers_.size(); ++m) {
      const auto& t = markers_[m];
      const int k = t.link;
      const Vec2 xm = f0.joint[k] + rotate(t.local, f0.angle[k]);
      const Vec2 impulse = marker_forces[m] * dt;
      pred.v[k] += impulse * inv_m[k];
      pred.w[k] += cross(xm - x0.c[k], impulse) * inv_i[k];
    }
  }
  for (int j = 0; j < kJoints; ++j) {
    pred.w[j] += torques[j] * dt * inv_i[j];
    pred.w[j + 1] -= torques[j] * dt * inv_i[j + 1];
  }

  auto distal_arm = [&](int k, double phi) { return rotate(Vec2{-0.5 * links[k].length, 0.0}, phi); };
  auto proximal_arm = [&](int k, double phi) { return rotate(Vec2{0.5 * links[k].length, 0.0}, phi); };

  auto apply = [&](LinkState& s, const std::vector<Row>& rows, const SmallVector& lambda) {
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (int k = 0; k < kLinks; ++k) {
        s.v[k] += rows[r].lin[k] * (lambda[r] * inv_m[k]);
        s.w[k] += rows[r].ang[k] * lambda[r] * inv_i[k];
      }
    }
  };
  auto coupling = [&](const std::vector<Row>& a, const std::vector<Row>& b) {
    SmallMatrix g(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      for (std::size_t j = 0; j < b.size(); ++j) {
        double sum = 0.0;
        for (int k = 0; k < kLinks; ++k) {
          sum += dot(a[i].lin[k], b[j].lin[k]) * inv_m[k] + a[i].ang[k] * b[j].ang[k] * inv_i[k];
        }
        g(i, j) = sum;
      }
    }
    return g;
  };

  // Position stage: impulses applied at the start-of-step joint points,
  // solved by Newton so that the end-of-step joints coincide exactly.
  std::array<int, kJoints> limit_sign{};  // +1 / -1 when clamped at +/- limit
  LinkState x1;
  for (int pass = 0; pass <= kJoints; ++pass) {
    std::vector<Row> impulse_rows;
    for (int j = 0; j < kJoints; ++j) {
      const Vec2 point = x0.c[j] + distal_arm(j, x0.phi[j]);
      add_pin_rows(impulse_rows, j, j + 1, point - x0.c[j], point - x0.c[j + 1]);
    }
    std::vector<int> angle_joint;
    for (int j = 0; j < kJoints; ++j) {
      if (limit_sign[j] != 0) {
        add_angle_row(impulse_rows, j, j + 1);
        angle_joint.push_back(j);
      }
    }
    const int n = static_cast<int>(impulse_rows.size());
    SmallVector lambda = SmallVector::Zero(n);
    for (int iter = 0; iter < 30; ++iter) {
      x1 = pred;
      apply(x1, impulse_rows, lambda);
      for (int k = 0; k < kLinks; ++k) {
        x1.c[k] = x0.c[k] + x1.v[k] * dt;
        x1.phi[k] = x0.phi[k] + x1.w[k] * dt;
      }
      SmallVector g(n);
      std::vector<Row> jac_rows;
      for (int j = 0; j < kJoints; ++j) {
        const Vec2 ra = distal_arm(j, x1.phi[j]);
        const Vec2 rb = proximal_arm(j + 1, x1.phi[j + 1]);
        const Vec2 gap = (x1.c[j] + ra) - (x1.c[j + 1] + rb);
        g[2 * j] = gap.x;
        g[2 * j + 1] = gap.y;
        add_pin_rows(jac_rows, j, j + 1, ra, rb);
      }
      for (std::size_t a = 0; a < angle_joint.size(); ++a) {
        const int j = angle_joint[a];
        g[2 * kJoints + a] = (x1.phi[j] - x1.phi[j + 1]) - limit_sign[j] * morphology_.joint_limit;
        add_angle_row(jac_rows, j, j + 1);
      }
      if (g.cwiseAbs().maxCoeff() < 1e-15) break;
      const SmallMatrix jac = coupling(jac_rows, impulse_rows) * dt;
      lambda -= jac.partialPivLu().solve(g);
    }
    bool changed = false;
    for (int j = 0; j < kJoints; ++j) {
      if (limit_sign[j] != 0) continue;
      const double rel = x1.phi[j] - x1.phi[j + 1];
      if (std::abs(rel) > morphology_.joint_limit) {
        limit_sign[j] = rel > 0.0 ? 1 : -1;
        changed = true;
      }
    }
    if (!changed) break;
  }

  // Velocity stage: project onto the joint constraints at the end pose, with
  // each joint impulse acting at a single shared point.
  {
    std::vector<Row> rows;
    for (int j = 0; j < kJoints; ++j) {
      const Vec2 point = x1.c[j] + distal_arm(j, x1.phi[j]);
      add_pin_rows(rows, j, j + 1, point - x1.c[j], point - x1.c[j + 1]);
    }
    for (int j = 0; j < kJoints; ++j) {
      if (limit_sign[j] != 0 && (x1.w[j] - x1.w[j + 1]) * limit_sign[j] > 0.0) add_angle_row(rows, j, j + 1);
    }
    const int n = static_cast<int>(rows.size());
    SmallVector jv(n);
    for (int r = 0; r < n; ++r) {
      double sum = 0.0;
      for (int k = 0; k < kLinks; ++k) sum += dot(rows[r].lin[k], x1.v[k]) + rows[r].ang[k] * x1.w[k];
      jv[r] = sum;
    }
    const SmallVector mu = coupling(rows, rows).ldlt().solve(-jv);
    apply(x1, rows, mu);
  }

  LinkFrames f1;
  for (int k = 0; k < kLinks; ++k) {
    f1.com[k] = x1.c[k];
    f1.angle[k] = x1.phi[k];
    f1.com_velocity[k] = x1.v[k];
    f1.angular_velocity[k] = x1.w[k];
    f1.joint[k] = x1.c[k] + proximal_arm(k, x1.phi[k]);
    f1.joint_velocity[k] = x1.v[k] + cross(x1.w[k], f1.joint[k] - x1.c[k]);
  }
  FishState out = to_state(f1);
  const bool finite = std::isfinite(out.base_position.x) && std::isfinite(out.base_position.y) &&
                      std::isfinite(out.heading) && std::isfinite(out.base_linear_velocity.x) &&
                      std::isfinite(out.base_linear_velocity.y) && std::isfinite(out.base_angular_velocity) &&
                      std::all_of(out.joint_angles.begin(), out.joint_angles.end(), [](double a) { return std::isfinite(a); }) &&
                      std::all_of(out.joint_velocities.begin(), out.joint_velocities.end(),
                                  [](double a) { return std::isfinite(a); });
  if (!finite) throw NumericFault("fish body state became non-finite");
  return out;
}

Vec2 FishBody::linear_momentum(const FishState& state) const {
  const LinkFrames f = frames(state);
  Vec2 p;
  for (int k = 0; k < kLinks; ++k) p += morphology_.links[k].mass * f.com_velocity[k];
  return p;
}

Vec2 FishBody::center_of_mass(const FishState& state) const {
  const LinkFrames f = frames(state);
  Vec2 c;
  for (int k = 0; k < kLinks; ++k) c += morphology_.links[k].mass * f.com[k];
  return c / total_mass_;
}

double FishBody::angular_momentum_about_com(const FishState& state) const {
  const LinkFrames f = frames(state);
  Vec2 c;
  for (int k = 0; k < kLinks; ++k) c += morphology_.links[k].mass * f.com[k];
  c = c / total_mass_;
  double l = 0.0;
  for (int k = 0; k < kLinks; ++k) {
    l += morphology_.links[k].mass * cross(f.com[k] - c, f.com_velocity[k]) + inertia_[k] * f.angular_velocity[k];
  }
  return l;
}

double FishBody::kinetic_energy(const FishState& state) const {
  const LinkFrames f = frames(state);
  double e = 0.0;
  for (int k = 0; k < kLinks; ++k) {
    e += 0.5 * morphology_.links[k].mass * dot(f.com_velocity[k], f.com_velocity[k]) +
         0.5 * inertia_[k] * f.angular_velocity[k] * f.angular_velocity[k];
  }
  return e;
}

bool outline_self_intersects(std::span<const Vec2> pts) {
  const std::size_t n = pts.size();
  if (n < 4) return false;
  auto orient = [](const Vec2& a, const Vec2& b, const Vec2& c) { return cross(b - a, c - a); };
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = pts[i];
    const Vec2& b = pts[(i + 1) % n];
    for (std::size_t j = i + 2; j < n; ++j) {
      if ((j + 1) % n == i) continue;  // adjacent through the wrap
      const Vec2& c = pts[j];
      const Vec2& d = pts[(j + 1) % n];
      const double o1 = orient(a, b, c);
      const double o2 = orient(a, b, d);
      const double o3 = orient(c, d, a);
      const double o4 = orient(c, d, b);
      if (o1 * o2 < 0.0 && o3 * o4 < 0.0) return true;
    }
  }
  return false;
}

MarkerGeometry marker_geometry(const Morphology& morphology, const FishState& state, double spacing) {
  const FishBody body(morphology, spacing);
  MarkerGeometry g;
  g.markers = body.markers(state);
  if (outline_self_intersects(g.markers.position)) {
    g.warning = "fish outline self-intersects at the current joint angles";
  }
  return g;
}

}  // namespace fishswim::body
