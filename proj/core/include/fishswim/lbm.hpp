#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fishswim/vec2.hpp"

// Two-dimensional D2Q9 lattice-Boltzmann solver with BGK collision and
// Guo body forcing. All quantities inside LatticeGrid are in lattice units
// (dx = dt = 1, reference density 1); LatticeScaling converts to SI.
namespace fishswim::lbm {

inline constexpr int kQ = 9;
inline constexpr std::array<int, kQ> kCx{0, 1, 0, -1, 0, 1, -1, -1, 1};
inline constexpr std::array<int, kQ> kCy{0, 0, 1, 0, -1, 1, 1, -1, -1};
inline constexpr std::array<double, kQ> kWeights{
    4.0 / 9.0,  1.0 / 9.0,  1.0 / 9.0,  1.0 / 9.0, 1.0 / 9.0,
    1.0 / 36.0, 1.0 / 36.0, 1.0 / 36.0, 1.0 / 36.0};
inline constexpr std::array<int, kQ> kOpposite{0, 3, 4, 1, 2, 7, 8, 5, 6};
inline constexpr double kSoundSpeed = 0.57735026918962576;  // 1/sqrt(3)
// Low-Mach validity bound on |u| in lattice units.
inline constexpr double kMaxLatticeSpeed = 0.3;

using Distribution = std::array<double, kQ>;

Distribution equilibrium(double rho, Vec2 u);

struct Moments {
  double rho = 0.0;
  Vec2 u;
};

// Zeroth and first moments. Throws NumericFault when rho <= 0 or non-finite.
Moments macroscopics(const Distribution& f);

enum class CellFlag : std::uint8_t { kFluid = 0, kWall = 1 };

// What happens at the edges of the rectangular domain, per axis.
enum class Edge : std::uint8_t { kPeriodic, kBounceBack };

struct GridShape {
  int nx = 0;
  int ny = 0;
  Edge x_edges = Edge::kBounceBack;
  Edge y_edges = Edge::kBounceBack;
};

class LatticeGrid {
 public:
  // Fluid initialised at rest with unit density. Throws ConfigError if
  // tau <= 0.5 or the shape is empty.
  LatticeGrid(GridShape shape, double tau);

  int nx() const { return shape_.nx; }
  int ny() const { return shape_.ny; }
  const GridShape& shape() const { return shape_; }
  double tau() const { return tau_; }
  std::size_t cell_count() const { return static_cast<std::size_t>(shape_.nx) * shape_.ny; }
  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * shape_.nx + x; }

  // Sets every fluid cell to the equilibrium of (rho, u).
  void fill_equilibrium(double rho, Vec2 u);
  void set_cell_equilibrium(int x, int y, double rho, Vec2 u);
  void set_distribution(int x, int y, const Distribution& f);
  Distribution distribution(int x, int y) const;

  void set_flag(int x, int y, CellFlag flag);
  CellFlag flag(int x, int y) const { return flags_[index(x, y)]; }

  // Macroscopic fields of the current distributions (no force correction).
  double rho(int x, int y) const { return rho_[index(x, y)]; }
  Vec2 u(int x, int y) const { return u_[index(x, y)]; }
  std::span<const double> rho_field() const { return rho_; }
  std::span<const Vec2> u_field() const { return u_; }

  // Per-cell force density used by the next collide_stream, lattice units.
  // Throws ConfigError when the field size does not match the grid.
  void apply_body_force(std::span<const Vec2> force);
  void clear_body_force();
  std::span<const Vec2> body_force() const { return force_; }

  // One BGK collision with Guo forcing followed by push streaming with
  // half-way bounce-back at walls and flagged solid cells. Throws
  // NumericFault naming the first non-finite or non-positive cell.
  void collide_stream();

  // Sum of rho over fluid cells, reduced in cell order.
  double total_mass() const;
  // Sum of c_i f_i over fluid cells (bare momentum, no half-force shift).
  Vec2 total_momentum() const;
  // Momentum the walls absorbed during the last collide_stream.
  Vec2 last_wall_impulse() const { return wall_impulse_; }
  double max_speed() const;
  std::uint64_t steps() const { return steps_; }

 private:
  void update_macroscopics();

  GridShape shape_;
  double tau_;
  std::vector<double> f_;      // kQ planes of cell_count() values
  std::vector<double> f_next_;
  std::vector<double> rho_;
  std::vector<Vec2> u_;
  std::vector<Vec2> force_;
  std::vector<CellFlag> flags_;
  Vec2 wall_impulse_;
  std::uint64_t steps_ = 0;
};

struct FluidParams {
  double physical_density = 1000.0;  // kg/m^3
  // m^2/s. Zero selects the effective viscosity giving tau = default_tau.
  double kinematic_viscosity = 0.0;
  double domain_x = 3.6;  // m
  double domain_y = 3.6;  // m
  // Stored but not used by the solver.
  double slip_ratio = 1.013;
  double default_tau = 0.55;
};

// Smallest relaxation time unit_convert accepts; below it BGK is not usable.
inline constexpr double kMinStableTau = 0.505;
inline constexpr double kMaxTau = 2.0;

// tau = 3 nu dt / dx^2 + 1/2
double relaxation_time(double viscosity, double dx, double dt);
double viscosity_for_tau(double tau, double dx, double dt);

// Bidirectional conversion between SI and lattice units.
struct LatticeScaling {
  double dx = 1.0;           // m per cell
  double dt = 1.0;           // s per step
  double tau = 1.0;
  double viscosity = 1.0 / 6.0;  // m^2/s
  double density = 1.0;      // kg/m^3 per lattice density unit

  double velocity_scale() const { return dx / dt; }
  // Force density per cell: lattice -> N per metre of depth.
  double force_scale_per_depth() const { return density * dx * dx * dx / (dt * dt); }
  double to_lattice_velocity(double v) const { return v / velocity_scale(); }
  double to_physical_velocity(double v) const { return v * velocity_scale(); }
  double to_lattice_viscosity(double nu) const { return nu * dt / (dx * dx); }
  double to_physical_viscosity(double nu) const { return nu * dx * dx / dt; }
};

// Derives dx from the domain and resolution. Throws ConfigError (with a
// suggested viscosity/timestep) when tau falls outside [kMinStableTau, 2].
LatticeScaling unit_convert(const FluidParams& params, int nx, int ny, double dt);

// CSV of x, y, rho, ux, uy in SI units for every cell, row by row from y = 0.
std::string dump_field_csv(const LatticeGrid& grid, const LatticeScaling& scaling);

}  // namespace fishswim::lbm
