#include "fishswim/lbm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "fishswim/errors.hpp"

namespace fishswim::lbm {

Distribution equilibrium(double rho, Vec2 u) {
  const double usq = dot(u, u);
  Distribution feq{};
  for (int i = 0; i < kQ; ++i) {
    const double cu = kCx[i] * u.x + kCy[i] * u.y;
    feq[i] = kWeights[i] * rho * (1.0 + 3.0 * cu + 4.5 * cu * cu - 1.5 * usq);
  }
  return feq;
}

Moments macroscopics(const Distribution& f) {
  Moments m;
  Vec2 j;
  for (int i = 0; i < kQ; ++i) {
    m.rho += f[i];
    j.x += kCx[i] * f[i];
    j.y += kCy[i] * f[i];
  }
  if (!(m.rho > 0.0) || !std::isfinite(m.rho)) {
    throw NumericFault("non-positive or non-finite density " + std::to_string(m.rho));
  }
  m.u = j / m.rho;
  return m;
}

LatticeGrid::LatticeGrid(GridShape shape, double tau) : shape_(shape), tau_(tau) {
  if (shape.nx <= 0 || shape.ny <= 0) throw ConfigError("lattice grid needs nx, ny > 0");
  if (!(tau > 0.5)) throw ConfigError("BGK relaxation time must exceed 0.5, got " + std::to_string(tau));
  const std::size_t n = cell_count();
  f_.assign(kQ * n, 0.0);
  f_next_.assign(kQ * n, 0.0);
  rho_.assign(n, 1.0);
  u_.assign(n, Vec2{});
  force_.assign(n, Vec2{});
  flags_.assign(n, CellFlag::kFluid);
  fill_equilibrium(1.0, {});
}

void LatticeGrid::fill_equilibrium(double rho, Vec2 u) {
  const Distribution feq = equilibrium(rho, u);
  const std::size_t n = cell_count();
  for (int i = 0; i < kQ; ++i) std::fill_n(f_.begin() + i * n, n, feq[i]);
  update_macroscopics();
}

void LatticeGrid::set_cell_equilibrium(int x, int y, double rho, Vec2 u) {
  set_distribution(x, y, equilibrium(rho, u));
}

void LatticeGrid::set_distribution(int x, int y, const Distribution& f) {
  const std::size_t n = cell_count();
  const std::size_t c = index(x, y);
  double r = 0.0;
  Vec2 j;
  for (int i = 0; i < kQ; ++i) {
    f_[i * n + c] = f[i];
    r += f[i];
    j.x += kCx[i] * f[i];
    j.y += kCy[i] * f[i];
  }
  rho_[c] = r;
  u_[c] = r > 0.0 ? j / r : Vec2{};
}

Distribution LatticeGrid::distribution(int x, int y) const {
  const std::size_t n = cell_count();
  const std::size_t c = index(x, y);
  Distribution f{};
  for (int i = 0; i < kQ; ++i) f[i] = f_[i * n + c];
  return f;
}

void LatticeGrid::set_flag(int x, int y, CellFlag flag) { flags_[index(x, y)] = flag; }

void LatticeGrid::apply_body_force(std::span<const Vec2> force) {
  if (force.size() != cell_count()) {
    throw ConfigError("body force field has " + std::to_string(force.size()) + " cells, grid has " +
                      std::to_string(cell_count()));
  }
  std::copy(force.begin(), force.end(), force_.begin());
}

void LatticeGrid::clear_body_force() { std::fill(force_.begin(), force_.end(), Vec2{}); }

void LatticeGrid::collide_stream() {
  const int nx = shape_.nx;
  const int ny = shape_.ny;
  const std::size_t n = cell_count();
  const double omega = 1.0 / tau_;
  const double force_prefactor = 1.0 - 0.5 * omega;
  const bool wrap_x = shape_.x_edges == Edge::kPeriodic;
  const bool wrap_y = shape_.y_edges == Edge::kPeriodic;

  // Each (target cell, direction) slot is written by exactly one source, so
  // rows are independent; wall impulses are reduced per row then in order.
  std::vector<Vec2> row_wall(ny);

#pragma omp parallel for schedule(static)
  for (int y = 0; y < ny; ++y) {
    Vec2 wall_acc;
    for (int x = 0; x < nx; ++x) {
      const std::size_t c = static_cast<std::size_t>(y) * nx + x;
      if (flags_[c] == CellFlag::kWall) continue;

      Distribution f;
      double rho = 0.0;
      double jx = 0.0;
      double jy = 0.0;
      for (int i = 0; i < kQ; ++i) {
        f[i] = f_[i * n + c];
        rho += f[i];
        jx += kCx[i] * f[i];
        jy += kCy[i] * f[i];
      }
      const Vec2 force = force_[c];
      const Vec2 u{(jx + 0.5 * force.x) / rho, (jy + 0.5 * force.y) / rho};
      const Distribution feq = equilibrium(rho, u);

      for (int i = 0; i < kQ; ++i) {
        const double cu = kCx[i] * u.x + kCy[i] * u.y;
        const double src = kWeights[i] * ((3.0 * (kCx[i] - u.x) + 9.0 * cu * kCx[i]) * force.x +
                                          (3.0 * (kCy[i] - u.y) + 9.0 * cu * kCy[i]) * force.y);
        const double post = f[i] - omega * (f[i] - feq[i]) + force_prefactor * src;

        int tx = x + kCx[i];
        int ty = y + kCy[i];
        bool bounce = false;
        if (tx < 0 || tx >= nx) {
          if (wrap_x) {
            tx = (tx + nx) % nx;
          } else {
            bounce = true;
          }
        }
        if (ty < 0 || ty >= ny) {
          if (wrap_y) {
            ty = (ty + ny) % ny;
          } else {
            bounce = true;
          }
        }
        if (!bounce && flags_[static_cast<std::size_t>(ty) * nx + tx] == CellFlag::kWall) bounce = true;

        if (bounce) {
          f_next_[kOpposite[i] * n + c] = post;
          wall_acc.x += 2.0 * kCx[i] * post;
          wall_acc.y += 2.0 * kCy[i] * post;
        } else {
          f_next_[i * n + static_cast<std::size_t>(ty) * nx + tx] = post;
        }
      }
    }
    row_wall[y] = wall_acc;
  }

  Vec2 wall;
  for (const Vec2& w : row_wall) wall += w;
  wall_impulse_ = wall;

  f_.swap(f_next_);
  ++steps_;
  update_macroscopics();
}

void LatticeGrid::update_macroscopics() {
  const int nx = shape_.nx;
  const int ny = shape_.ny;
  const std::size_t n = cell_count();
  std::vector<int> row_fault(ny, -1);

#pragma omp parallel for schedule(static)
  for (int y = 0; y < ny; ++y) {
    for (int x = 0; x < nx; ++x) {
      const std::size_t c = static_cast<std::size_t>(y) * nx + x;
      if (flags_[c] == CellFlag::kWall) {
        rho_[c] = 1.0;
        u_[c] = {};
        continue;
      }
      double rho = 0.0;
      double jx = 0.0;
      double jy = 0.0;
      for (int i = 0; i < kQ; ++i) {
        const double fi = f_[i * n + c];
        rho += fi;
        jx += kCx[i] * fi;
        jy += kCy[i] * fi;
      }
      rho_[c] = rho;
      u_[c] = {jx / rho, jy / rho};
      if (row_fault[y] < 0 && !(rho > 0.0 && std::isfinite(rho) && std::isfinite(jx) && std::isfinite(jy))) {
        row_fault[y] = x;
      }
    }
  }
  for (int y = 0; y < ny; ++y) {
    if (row_fault[y] >= 0) {
      const std::size_t c = index(row_fault[y], y);
      throw NumericFault("lattice fault at cell (" + std::to_string(row_fault[y]) + ", " + std::to_string(y) +
                         ") after step " + std::to_string(steps_) + ": rho=" + std::to_string(rho_[c]));
    }
  }
}

double LatticeGrid::total_mass() const {
  double m = 0.0;
  for (std::size_t c = 0; c < cell_count(); ++c) {
    if (flags_[c] == CellFlag::kFluid) m += rho_[c];
  }
  return m;
}

Vec2 LatticeGrid::total_momentum() const {
  Vec2 p;
  for (std::size_t c = 0; c < cell_count(); ++c) {
    if (flags_[c] == CellFlag::kFluid) p += rho_[c] * u_[c];
  }
  return p;
}

double LatticeGrid::max_speed() const {
  double m = 0.0;
  for (std::size_t c = 0; c < cell_count(); ++c) {
    if (flags_[c] == CellFlag::kFluid) m = std::max(m, norm(u_[c]));
  }
  return m;
}

double relaxation_time(double viscosity, double dx, double dt) { return 3.0 * viscosity * dt / (dx * dx) + 0.5; }

double viscosity_for_tau(double tau, double dx, double dt) { return (tau - 0.5) / 3.0 * dx * dx / dt; }

LatticeScaling unit_convert(const FluidParams& params, int nx, int ny, double dt) {
  if (nx <= 0 || ny <= 0) throw ConfigError("grid resolution must be positive");
  if (!(dt > 0.0)) throw ConfigError("fluid timestep must be positive");
  if (!(params.physical_density > 0.0)) throw ConfigError("fluid density must be positive");
  const double dx = params.domain_x / nx;
  const double dy = params.domain_y / ny;
  if (std::abs(dx - dy) > 1e-12 * dx) {
    throw ConfigError("lattice cells must be square: domain/resolution gives dx=" + std::to_string(dx) +
                      ", dy=" + std::to_string(dy));
  }
  LatticeScaling s;
  s.dx = dx;
  s.dt = dt;
  s.density = params.physical_density;
  s.viscosity = params.kinematic_viscosity > 0.0 ? params.kinematic_viscosity
                                                 : viscosity_for_tau(params.default_tau, dx, dt);
  s.tau = relaxation_time(s.viscosity, dx, dt);
  if (s.tau < kMinStableTau || s.tau > kMaxTau) {
    char msg[512];
    std::snprintf(msg, sizeof msg,
                  "viscosity %.6g m^2/s at dx=%.6g m, dt=%.6g s gives tau=%.7f outside [%.3f, %.1f]; "
                  "use viscosity >= %.6g m^2/s, or dt >= %.6g s, or nx <= %d",
                  s.viscosity, dx, dt, s.tau, kMinStableTau, kMaxTau, viscosity_for_tau(kMinStableTau, dx, dt),
                  (kMinStableTau - 0.5) * dx * dx / (3.0 * s.viscosity),
                  static_cast<int>(params.domain_x / std::sqrt(3.0 * s.viscosity * dt / (kMinStableTau - 0.5))));
    throw ConfigError(msg);
  }
  return s;
}

std::string dump_field_csv(const LatticeGrid& grid, const LatticeScaling& scaling) {
  std::ostringstream out;
  out.precision(9);
  out << "x_m,y_m,rho_kg_m3,ux_m_s,uy_m_s\n";
  for (int y = 0; y < grid.ny(); ++y) {
    for (int x = 0; x < grid.nx(); ++x) {
      const Vec2 u = grid.u(x, y);
      out << (x + 0.5) * scaling.dx << ',' << (y + 0.5) * scaling.dx << ',' << grid.rho(x, y) * scaling.density
          << ',' << scaling.to_physical_velocity(u.x) << ',' << scaling.to_physical_velocity(u.y) << '\n';
    }
  }
  return out.str();
}

}  // namespace fishswim::lbm
