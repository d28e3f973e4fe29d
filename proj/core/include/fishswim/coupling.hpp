#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "fishswim/body.hpp"
#include "fishswim/lbm.hpp"
#include "fishswim/vec2.hpp"

// Direct-forcing immersed boundary exchange between the lattice fluid and
// the fish outline markers, and the coupled fluid/body substep.
namespace fishswim::coupling {

// Peskin's 4-point regularized delta in cell units; support |r| < 2.
double delta_kernel(double r);

// Marker velocities (m/s) interpolated from the grid's bare velocity field.
// Kernel weights are renormalised over in-domain cells near walls. Throws
// OutOfDomain when a marker lies outside a walled edge.
std::vector<Vec2> interpolate_velocity(const lbm::LatticeGrid& grid, const lbm::LatticeScaling& scaling,
                                       std::span<const Vec2> markers);

struct MarkerForces {
  std::vector<Vec2> force;  // on the body, N
  Vec2 total_force;
  double total_torque_about_com = 0.0;
};

struct ForcingGeometry {
  double dx = 0.0;        // m
  double depth = 0.0;     // m, extrusion of the 2D body
  double density = 0.0;   // kg/m^3
};

// Hydrodynamic force on the body per marker:
//   F_k = rho (u_fluid - u_body) / dt * (segment_k * dx * depth).
// `positions` and `com` are only used for the torque total.
MarkerForces direct_forcing(std::span<const Vec2> fluid_velocity, std::span<const Vec2> body_velocity,
                            std::span<const double> segment, std::span<const Vec2> positions, Vec2 com, double dt,
                            const ForcingGeometry& geometry);

// Lattice force field carrying the reaction -F_k onto the fluid. The field
// sums to -sum F_k (in lattice units) up to rounding.
std::vector<Vec2> spread_force(const lbm::LatticeGrid& grid, const lbm::LatticeScaling& scaling, double depth,
                               std::span<const Vec2> markers, std::span<const Vec2> forces);

// Linearised velocity update of the chain about its current pose, in the
// generalized velocities (nose vx, vy in world frame, head rate, 3 joint
// rates). Marker forcing F_k = m_k (u_fluid,k - u_body,k) / dt is taken
// implicitly in the body velocity by adding the marker masses
// (m_k = density * segment * dx * depth) to the mass matrix. Velocity-product
// terms are neglected.
class ChainLinearization {
 public:
  static constexpr int kDof = 3 + body::kJoints;
  using Mat = Eigen::Matrix<double, kDof, kDof>;
  using Vec = Eigen::Matrix<double, kDof, 1>;

  ChainLinearization(const body::FishBody& body, const body::FishState& state, std::span<const double> marker_mass);

  // End-of-substep generalized velocity under fixed joint torques plus an
  // implicit joint law  drive_j - stiffness_j * rate_j.
  Vec solve(std::span<const Vec2> fluid_velocity, const body::JointVector& torques,
            const body::JointVector& joint_stiffness, const body::JointVector& joint_drive, double dt) const;
  std::vector<Vec2> marker_velocities(const Vec& generalized) const;
  const Mat& mass_matrix() const { return mass_; }
  const Mat& added_mass() const { return added_; }

 private:
  std::vector<double> marker_mass_;
  std::array<std::vector<Vec2>, kDof> marker_cols_;
  Mat mass_;
  Mat added_;
  Vec velocity_;
};

// Servo torque (PD law, saturation and speed gating of body::servo_torque)
// evaluated at the joint angles and rates predicted for the end of the
// substep.
body::JointVector implicit_servo_torque(const body::ServoModel& servo, const ChainLinearization& lin,
                                        const body::FishState& state, const body::JointVector& desired,
                                        std::span<const Vec2> fluid_velocity, double dt);

// Body marker velocities at the end of a substep with implicit forcing.
std::vector<Vec2> implicit_marker_velocities(const body::FishBody& body, const body::FishState& state,
                                             const body::JointVector& torques,
                                             std::span<const Vec2> fluid_velocity,
                                             std::span<const double> marker_mass, double dt);

struct SimConfig {
  lbm::FluidParams fluid;
  int nx = 190;
  int ny = 190;
  double dt = 0.004;  // s, fluid and body substep
  body::Morphology morphology = body::default_morphology();
  body::ServoModel servo;
  // Extrusion depth of the planar body (m). Zero makes the fish neutrally
  // buoyant: depth = mass / (fluid density * outline area).
  double effective_depth = 0.0;
  double marker_spacing_cells = 0.7;
};

struct SubstepReport {
  double max_lattice_speed = 0.0;
  Vec2 fluid_impulse;  // N s applied to the fluid by the body
  Vec2 body_impulse;   // N s applied to the body by the fluid
  Vec2 wall_impulse;   // N s absorbed by the pool walls
};

class CoupledSim {
 public:
  CoupledSim(const SimConfig& config, const body::FishState& initial, int delay_steps);

  // Records a new desired joint command at the current substep index.
  void command(const body::JointVector& desired);
  // markers -> interpolate -> direct forcing -> spread -> collide/stream ->
  // servo on the delayed command -> body step. Throws NumericFault or
  // OutOfDomain.
  SubstepReport substep();

  const body::FishState& fish() const { return fish_; }
  const body::FishBody& body() const { return body_; }
  const lbm::LatticeGrid& grid() const { return grid_; }
  const lbm::LatticeScaling& scaling() const { return scaling_; }
  const SimConfig& config() const { return config_; }
  double depth() const { return depth_; }
  double time() const { return static_cast<double>(substep_) * config_.dt; }
  std::int64_t substep_index() const { return substep_; }
  int delay_steps() const { return latency_.delay_steps(); }
  body::JointVector last_applied_command() const { return last_used_; }
  body::JointVector last_torque() const { return last_torque_; }
  std::uint64_t mach_violations() const { return mach_violations_; }

  // Physical fluid momentum per the extruded depth (kg m/s).
  Vec2 fluid_momentum() const;
  double domain_x() const { return scaling_.dx * grid_.nx(); }
  double domain_y() const { return scaling_.dx * grid_.ny(); }

 private:
  SimConfig config_;
  lbm::LatticeScaling scaling_;
  lbm::LatticeGrid grid_;
  body::FishBody body_;
  body::FishState fish_;
  body::LatencyBuffer latency_;
  double depth_ = 0.0;
  std::int64_t substep_ = 0;
  body::JointVector last_used_{};
  body::JointVector last_torque_{};
  std::uint64_t mach_violations_ = 0;
};

}  // namespace fishswim::coupling
