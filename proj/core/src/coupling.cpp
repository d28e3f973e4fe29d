#include "fishswim/coupling.hpp"

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <string>

#include "fishswim/errors.hpp"

namespace fishswim::coupling {

double delta_kernel(double r) {
  const double a = std::abs(r);
  if (a < 1.0) return (3.0 - 2.0 * a + std::sqrt(1.0 + 4.0 * a - 4.0 * a * a)) / 8.0;
  if (a < 2.0) return (5.0 - 2.0 * a - std::sqrt(-7.0 + 12.0 * a - 4.0 * a * a)) / 8.0;
  return 0.0;
}

namespace {

struct Stencil {
  std::array<int, 4> xs{};
  std::array<int, 4> ys{};
  std::array<double, 4> wx{};
  std::array<double, 4> wy{};
  double inv_total = 1.0;
};

// Index/weight pairs along one axis; out-of-range cells get weight zero on
// walled edges and wrap on periodic ones.
void axis_weights(double pos, double dx, int n, lbm::Edge edge, std::array<int, 4>& idx,
                  std::array<double, 4>& w, double& sum) {
  const double xi = pos / dx - 0.5;
  const int base = static_cast<int>(std::floor(xi)) - 1;
  sum = 0.0;
  for (int k = 0; k < 4; ++k) {
    int i = base + k;
    double wk = delta_kernel(xi - i);
    if (i < 0 || i >= n) {
      if (edge == lbm::Edge::kPeriodic) {
        i = ((i % n) + n) % n;
      } else {
        wk = 0.0;
        i = 0;
      }
    }
    idx[k] = i;
    w[k] = wk;
    sum += wk;
  }
}

Stencil make_stencil(const lbm::LatticeGrid& grid, double dx, Vec2 p) {
  const auto& shape = grid.shape();
  const double lx = dx * shape.nx;
  const double ly = dx * shape.ny;
  if (shape.x_edges == lbm::Edge::kPeriodic) {
    p.x = std::fmod(std::fmod(p.x, lx) + lx, lx);
  } else if (!(p.x >= 0.0 && p.x <= lx)) {
    throw OutOfDomain("marker at x=" + std::to_string(p.x) + " m left the domain");
  }
  if (shape.y_edges == lbm::Edge::kPeriodic) {
    p.y = std::fmod(std::fmod(p.y, ly) + ly, ly);
  } else if (!(p.y >= 0.0 && p.y <= ly)) {
    throw OutOfDomain("marker at y=" + std::to_string(p.y) + " m left the domain");
  }
  Stencil s;
  double sx = 0.0;
  double sy = 0.0;
  axis_weights(p.x, dx, shape.nx, shape.x_edges, s.xs, s.wx, sx);
  axis_weights(p.y, dx, shape.ny, shape.y_edges, s.ys, s.wy, sy);
  s.inv_total = 1.0 / (sx * sy);
  return s;
}

}  // namespace

std::vector<Vec2> interpolate_velocity(const lbm::LatticeGrid& grid, const lbm::LatticeScaling& scaling,
                                       std::span<const Vec2> markers) {
  std::vector<Vec2> out(markers.size());
  const auto u = grid.u_field();
  for (std::size_t m = 0; m < markers.size(); ++m) {
    const Stencil s = make_stencil(grid, scaling.dx, markers[m]);
    Vec2 acc;
    for (int j = 0; j < 4; ++j) {
      if (s.wy[j] == 0.0) continue;
      for (int i = 0; i < 4; ++i) {
        if (s.wx[i] == 0.0) continue;
        acc += u[grid.index(s.xs[i], s.ys[j])] * (s.wx[i] * s.wy[j]);
      }
    }
    out[m] = acc * (s.inv_total * scaling.velocity_scale());
  }
  return out;
}

MarkerForces direct_forcing(std::span<const Vec2> fluid_velocity, std::span<const Vec2> body_velocity,
                            std::span<const double> segment, std::span<const Vec2> positions, Vec2 com, double dt,
                            const ForcingGeometry& geometry) {
  const std::size_t n = fluid_velocity.size();
  if (body_velocity.size() != n || segment.size() != n || positions.size() != n) {
    throw ConfigError("direct forcing needs matched marker lists");
  }
  MarkerForces out;
  out.force.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double mass = geometry.density * segment[k] * geometry.dx * geometry.depth;
    const Vec2 f = (fluid_velocity[k] - body_velocity[k]) * (mass / dt);
    out.force[k] = f;
    out.total_force += f;
    out.total_torque_about_com += cross(positions[k] - com, f);
  }
  return out;
}

std::vector<Vec2> spread_force(const lbm::LatticeGrid& grid, const lbm::LatticeScaling& scaling, double depth,
                               std::span<const Vec2> markers, std::span<const Vec2> forces) {
  if (markers.size() != forces.size()) throw ConfigError("spread_force needs one force per marker");
  std::vector<Vec2> field(grid.cell_count());
  const double to_lattice = 1.0 / (scaling.force_scale_per_depth() * depth);
  for (std::size_t m = 0; m < markers.size(); ++m) {
    const Stencil s = make_stencil(grid, scaling.dx, markers[m]);
    const Vec2 reaction = -forces[m] * (to_lattice * s.inv_total);
    for (int j = 0; j < 4; ++j) {
      if (s.wy[j] == 0.0) continue;
      for (int i = 0; i < 4; ++i) {
        if (s.wx[i] == 0.0) continue;
        field[grid.index(s.xs[i], s.ys[j])] += reaction * (s.wx[i] * s.wy[j]);
      }
    }
  }
  return field;
}

ChainLinearization::ChainLinearization(const body::FishBody& body, const body::FishState& state,
                                       std::span<const double> marker_mass)
    : marker_mass_(marker_mass.begin(), marker_mass.end()) {
  const std::size_t n = body.marker_template().size();
  if (marker_mass.size() != n) throw ConfigError("implicit forcing needs one mass per marker");

  auto with_velocity = [&](int axis) {
    body::FishState s = state;
    Vec2 v_world;
    if (axis == 0) v_world.x = 1.0;
    if (axis == 1) v_world.y = 1.0;
    s.base_linear_velocity = rotate(v_world, -state.heading);
    s.base_angular_velocity = axis == 2 ? 1.0 : 0.0;
    for (int j = 0; j < body::kJoints; ++j) s.joint_velocities[j] = axis == 3 + j ? 1.0 : 0.0;
    return s;
  };
  const Vec2 v_world = rotate(state.base_linear_velocity, state.heading);
  velocity_ << v_world.x, v_world.y, state.base_angular_velocity, state.joint_velocities[0],
      state.joint_velocities[1], state.joint_velocities[2];

  std::array<body::LinkFrames, kDof> link_cols;
  for (int i = 0; i < kDof; ++i) {
    const body::FishState s = with_velocity(i);
    link_cols[i] = body.frames(s);
    marker_cols_[i] = body.markers(s).velocity;
  }
  const auto& links = body.morphology().links;
  mass_.setZero();
  for (int k = 0; k < body::kLinks; ++k) {
    const double ik = body.link_inertia(k);
    for (int a = 0; a < kDof; ++a) {
      for (int b = 0; b < kDof; ++b) {
        mass_(a, b) += links[k].mass * dot(link_cols[a].com_velocity[k], link_cols[b].com_velocity[k]) +
                       ik * link_cols[a].angular_velocity[k] * link_cols[b].angular_velocity[k];
      }
    }
  }
  added_.setZero();
  for (std::size_t m = 0; m < n; ++m) {
    for (int a = 0; a < kDof; ++a) {
      for (int b = a; b < kDof; ++b) added_(a, b) += marker_mass_[m] * dot(marker_cols_[a][m], marker_cols_[b][m]);
    }
  }
  for (int a = 0; a < kDof; ++a) {
    for (int b = 0; b < a; ++b) added_(a, b) = added_(b, a);
  }
}

ChainLinearization::Vec ChainLinearization::solve(std::span<const Vec2> fluid_velocity,
                                                  const body::JointVector& torques,
                                                  const body::JointVector& joint_stiffness,
                                                  const body::JointVector& joint_drive, double dt) const {
  if (fluid_velocity.size() != marker_mass_.size()) throw ConfigError("one fluid velocity per marker expected");
  Mat lhs = mass_ + added_;
  Vec rhs = mass_ * velocity_;
  for (std::size_t m = 0; m < marker_mass_.size(); ++m) {
    for (int a = 0; a < kDof; ++a) rhs[a] += marker_mass_[m] * dot(marker_cols_[a][m], fluid_velocity[m]);
  }
  for (int j = 0; j < body::kJoints; ++j) {
    lhs(3 + j, 3 + j) += dt * joint_stiffness[j];
    rhs[3 + j] += dt * (torques[j] + joint_drive[j]);
  }
  return lhs.ldlt().solve(rhs);
}

std::vector<Vec2> ChainLinearization::marker_velocities(const Vec& generalized) const {
  const std::size_t n = marker_mass_.size();
  std::vector<Vec2> out(n);
  for (std::size_t m = 0; m < n; ++m) {
    Vec2 v;
    for (int a = 0; a < kDof; ++a) v += marker_cols_[a][m] * generalized[a];
    out[m] = v;
  }
  return out;
}

std::vector<Vec2> implicit_marker_velocities(const body::FishBody& body, const body::FishState& state,
                                             const body::JointVector& torques,
                                             std::span<const Vec2> fluid_velocity,
                                             std::span<const double> marker_mass, double dt) {
  const ChainLinearization lin(body, state, marker_mass);
  return lin.marker_velocities(lin.solve(fluid_velocity, torques, {}, {}, dt));
}

body::JointVector implicit_servo_torque(const body::ServoModel& servo, const ChainLinearization& lin,
                                        const body::FishState& state, const body::JointVector& desired,
                                        std::span<const Vec2> fluid_velocity, double dt) {
  // Joints start on the implicit PD law; any that saturate or hit the speed
  // gate get a fixed torque and the rest are re-solved. The set only shrinks.
  std::array<bool, body::kJoints> implicit{};
  implicit.fill(true);
  body::JointVector fixed{};
  body::JointVector torque{};
  for (int pass = 0; pass <= body::kJoints; ++pass) {
    body::JointVector stiffness{};
    body::JointVector drive{};
    for (int j = 0; j < body::kJoints; ++j) {
      if (!implicit[j]) continue;
      stiffness[j] = servo.kd[j] + dt * servo.kp[j];
      drive[j] = servo.kp[j] * (desired[j] - state.joint_angles[j]);
    }
    const ChainLinearization::Vec qd = lin.solve(fluid_velocity, fixed, stiffness, drive, dt);
    bool changed = false;
    for (int j = 0; j < body::kJoints; ++j) {
      if (!implicit[j]) {
        torque[j] = fixed[j];
        continue;
      }
      const double rate = qd[3 + j];
      const double t = drive[j] - stiffness[j] * rate;
      const double v = state.joint_velocities[j];
      const bool gated = std::abs(v) >= servo.speed_limit && t * v > 0.0;
      if (gated || std::abs(t) > servo.torque_limit) {
        implicit[j] = false;
        fixed[j] = gated ? 0.0 : std::copysign(servo.torque_limit, t);
        changed = true;
      }
      torque[j] = t;
    }
    if (!changed) return torque;
  }
  return fixed;
}

namespace {

lbm::LatticeGrid make_pool(const SimConfig& c, const lbm::LatticeScaling& s) {
  return lbm::LatticeGrid({c.nx, c.ny, lbm::Edge::kBounceBack, lbm::Edge::kBounceBack}, s.tau);
}

}  // namespace

CoupledSim::CoupledSim(const SimConfig& config, const body::FishState& initial, int delay_steps)
    : config_(config),
      scaling_(lbm::unit_convert(config.fluid, config.nx, config.ny, config.dt)),
      grid_(make_pool(config, scaling_)),
      body_(config.morphology, config.marker_spacing_cells * scaling_.dx),
      fish_(initial),
      latency_(delay_steps, initial.joint_angles) {
  body::validate(config.servo);
  depth_ = config.effective_depth > 0.0
               ? config.effective_depth
               : body_.total_mass() / (config.fluid.physical_density * body_.outline_area());
  last_used_ = initial.joint_angles;
}

void CoupledSim::command(const body::JointVector& desired) { latency_.push(substep_, desired); }

SubstepReport CoupledSim::substep() {
  SubstepReport report;
  const body::Markers markers = body_.markers(fish_);
  const std::vector<Vec2> fluid_u = interpolate_velocity(grid_, scaling_, markers.position);
  const ForcingGeometry geom{scaling_.dx, depth_, config_.fluid.physical_density};

  std::vector<double> marker_mass(markers.segment.size());
  for (std::size_t k = 0; k < marker_mass.size(); ++k) {
    marker_mass[k] = geom.density * markers.segment[k] * geom.dx * geom.depth;
  }
  const ChainLinearization lin(body_, fish_, marker_mass);

  // Servo on the delayed command, evaluated at the predicted end-of-substep
  // joint state; the torque is then held fixed for the exchange and the body.
  last_used_ = latency_.delayed(substep_);
  last_torque_ = implicit_servo_torque(config_.servo, lin, fish_, last_used_, fluid_u, config_.dt);
  const std::vector<Vec2> body_u =
      lin.marker_velocities(lin.solve(fluid_u, last_torque_, {}, {}, config_.dt));
  const MarkerForces forces = direct_forcing(fluid_u, body_u, markers.segment, markers.position,
                                             body_.center_of_mass(fish_), config_.dt, geom);
  const std::vector<Vec2> field = spread_force(grid_, scaling_, depth_, markers.position, forces.force);

  const double to_physical = scaling_.force_scale_per_depth() * depth_ * config_.dt;
  Vec2 fluid_force;
  for (const Vec2& f : field) fluid_force += f;
  report.fluid_impulse = fluid_force * to_physical;
  report.body_impulse = forces.total_force * config_.dt;

  grid_.apply_body_force(field);
  grid_.collide_stream();
  report.wall_impulse = grid_.last_wall_impulse() * to_physical;
  report.max_lattice_speed = grid_.max_speed();
  if (report.max_lattice_speed >= lbm::kMaxLatticeSpeed) ++mach_violations_;

  fish_ = body_.step(fish_, last_torque_, forces.force, config_.dt);
  ++substep_;
  return report;
}

Vec2 CoupledSim::fluid_momentum() const {
  return grid_.total_momentum() * (scaling_.force_scale_per_depth() * depth_ * config_.dt);
}

}  // namespace fishswim::coupling
