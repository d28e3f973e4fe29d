#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <vector>

#include "fishswim/vec2.hpp"

// Free-floating planar fish: a rigid head followed by three actuated links.
//
// Conventions: the base frame sits at the nose with +x pointing forward, so
// a straight fish at the origin with heading 0 occupies x in [-L, 0]. Link k
// has orientation phi_k = heading - (J_1 + ... + J_k); a positive joint angle
// deflects everything behind that joint toward the fish's left (+y).
namespace fishswim::body {

inline constexpr int kJoints = 3;
inline constexpr int kLinks = kJoints + 1;
using JointVector = std::array<double, kJoints>;

struct LinkSpec {
  double mass = 0.0;    // kg
  double length = 0.0;  // m
  double width = 0.0;   // m, full lateral width at the front of the link
};

struct Morphology {
  std::array<LinkSpec, kLinks> links;
  double joint_limit = deg2rad(60.0);  // rad, symmetric
  // Width at the very end of the tail (m).
  double tail_tip_width = 0.01;

  double total_mass() const;
  double total_length() const;
};

// 0.52 m / 1.1 kg fish split as head 0.24 m, two 0.07 m mid-links and a
// 0.14 m tail with masses 0.62 / 0.15 / 0.15 / 0.18 kg.
Morphology default_morphology();
// Throws ConfigError on non-positive masses/lengths/widths or joint limit.
void validate(const Morphology& m);

// rho_i = (m_i / l_i) * (sum l / sum m). Throws ConfigError on empty,
// mismatched or non-positive input.
std::vector<double> normalized_density(std::span<const double> masses, std::span<const double> lengths);

// Rescales link masses so their normalized densities equal `target` while the
// total mass stays `total_mass`.
std::array<double, kLinks> masses_matching_density(std::span<const double> target,
                                                   std::span<const double> lengths, double total_mass);

struct FishState {
  Vec2 base_position;         // nose, world frame (m)
  double heading = 0.0;       // rad in (-pi, pi]
  Vec2 base_linear_velocity;  // nose velocity in the body frame (m/s)
  double base_angular_velocity = 0.0;  // rad/s
  JointVector joint_angles{};          // rad
  JointVector joint_velocities{};      // rad/s
};

struct ServoModel {
  JointVector kp{4.0, 4.0, 4.0};     // N m / rad
  JointVector kd{0.15, 0.15, 0.15};  // N m s / rad
  double torque_limit = 1.67;        // N m (17 kg cm)
  double speed_limit = 5.24;         // rad/s (60 deg / 0.2 s)
};

void validate(const ServoModel& s);

// PD surrogate of the position servo, saturated at the torque limit. Torque
// that would push a joint already at the speed limit further is zeroed.
JointVector servo_torque(const ServoModel& model, const JointVector& desired, const JointVector& angles,
                         const JointVector& velocities);

// Number of fluid substeps closest to `latency` seconds.
int latency_steps(double latency, double substep);

// Command history replayed with a fixed delay. Commands are stamped with the
// substep index at which they were issued; the command in force at substep t
// is the latest one stamped <= t - delay.
class LatencyBuffer {
 public:
  LatencyBuffer(int delay_steps, const JointVector& initial_command, int max_delay_steps = 22);

  void push(std::int64_t substep, const JointVector& command);
  JointVector delayed(std::int64_t substep) const;
  int delay_steps() const { return delay_steps_; }
  std::size_t size() const { return history_.size(); }

 private:
  struct Entry {
    std::int64_t stamp;
    JointVector command;
  };
  int delay_steps_;
  std::size_t capacity_;
  JointVector initial_;
  std::deque<Entry> history_;
};

// One boundary marker, fixed to a link.
struct MarkerTemplate {
  int link = 0;
  Vec2 local;             // link frame, origin at the link's front joint
  double segment = 0.0;   // outline length the marker represents (m)
};

struct Markers {
  std::vector<Vec2> position;  // world (m)
  std::vector<Vec2> velocity;  // world (m/s)
  std::vector<int> link;
  std::vector<double> segment;
};

// Rigid pose and twist of every link.
struct LinkFrames {
  std::array<Vec2, kLinks> joint;     // front joint (link 0: the nose)
  std::array<Vec2, kLinks> com;
  std::array<double, kLinks> angle{};
  std::array<Vec2, kLinks> joint_velocity;
  std::array<Vec2, kLinks> com_velocity;
  std::array<double, kLinks> angular_velocity{};
};

class FishBody {
 public:
  // `marker_spacing` is the target outline distance between markers.
  FishBody(Morphology morphology, double marker_spacing);

  const Morphology& morphology() const { return morphology_; }
  std::span<const MarkerTemplate> marker_template() const { return markers_; }
  double total_mass() const { return total_mass_; }
  // Area enclosed by the straight outline (m^2).
  double outline_area() const { return outline_area_; }
  // Half-width of the outline at arc length s from the nose.
  double half_width(double s) const;

  LinkFrames frames(const FishState& state) const;
  Markers markers(const FishState& state) const;

  // Advances the chain by semi-implicit Euler with exact joint constraints.
  // Joint torques act equal and opposite on adjacent links; marker forces
  // (N, world frame, one per marker) act at marker positions. Joints that
  // would leave the limit are clamped and their relative velocity zeroed.
  // Throws NumericFault on a non-finite result.
  FishState step(const FishState& state, const JointVector& torques, std::span<const Vec2> marker_forces,
                 double dt) const;

  Vec2 linear_momentum(const FishState& state) const;
  double angular_momentum_about_com(const FishState& state) const;
  Vec2 center_of_mass(const FishState& state) const;
  double kinetic_energy(const FishState& state) const;
  double link_inertia(int k) const { return inertia_[k]; }

 private:
  FishState to_state(const LinkFrames& f) const;

  Morphology morphology_;
  std::array<double, kLinks> front_arc_{};  // arc length of each front joint
  std::array<double, kLinks> inertia_{};    // about the link COM
  std::vector<MarkerTemplate> markers_;
  double total_mass_ = 0.0;
  double outline_area_ = 0.0;
};

struct MarkerGeometry {
  Markers markers;
  std::string warning;  // non-empty when the outline self-intersects
};

// Closed outline markers (right side nose to tail, tail edge, left side back
// to the nose) at roughly `spacing` metres apart.
MarkerGeometry marker_geometry(const Morphology& morphology, const FishState& state, double spacing);

bool outline_self_intersects(std::span<const Vec2> closed_outline);

}  // namespace fishswim::body
