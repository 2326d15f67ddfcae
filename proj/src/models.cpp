#include "enkfsq/models.hpp"

#include <cmath>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>

#include "enkfsq/csv.hpp"

namespace enkfsq::models {

VectorXd l40_tendency(const VectorXd& z, double forcing) {
  const Index n = z.size();
  if (n < 4) throw std::invalid_argument("L40 state needs at least 4 variables");
  VectorXd dz(n);
  for (Index i = 0; i < n; ++i) {
    const double zp1 = z((i + 1) % n);
    const double zm1 = z((i + n - 1) % n);
    const double zm2 = z((i + n - 2) % n);
    dz(i) = (zp1 - zm2) * zm1 - z(i) + forcing;
  }
  return dz;
}

VectorXd rk4_step(const VectorXd& z, const L40Params& p) {
  if (!(p.dt > 0.0)) throw std::invalid_argument("L40 time step must be positive");
  const double h = p.dt;
  const VectorXd k1 = l40_tendency(z, p.forcing);
  const VectorXd k2 = l40_tendency(z + 0.5 * h * k1, p.forcing);
  const VectorXd k3 = l40_tendency(z + 0.5 * h * k2, p.forcing);
  const VectorXd k4 = l40_tendency(z + h * k3, p.forcing);
  return z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

VectorXd l40_initial_state(const L40Params& p) {
  VectorXd z = VectorXd::Constant(p.n, p.forcing);
  if (p.n >= 20) z(19) += 0.001;
  return z;
}

VectorXd lsst_upwind(const VectorXd& c, const LSSTParams& p, double velocity,
                     const VectorXd& sources) {
  const double storage = p.retardation * p.porosity;
  const double courant = velocity * p.dt / (storage * p.dx);
  if (!(courant >= 0.0 && courant < 1.0)) {
    throw std::runtime_error("LSST Courant number " + std::to_string(courant) +
                             " outside [0, 1)");
  }
  const Index n = c.size();
  VectorXd next(n);
  // r_c phi (C_i' - C_i) = -(dt/dx) (U C_i - U C_{i-1}) + q_i
  double upstream = p.inflow_conc;
  for (Index i = 0; i < n; ++i) {
    next(i) = c(i) - courant * (c(i) - upstream) + sources(i) / storage;
    upstream = c(i);
  }
  return next;
}

VectorXd lsst_step(const VectorXd& c, const LSSTParams& p, ModelRole role,
                   rng::SplitMix64& noise) {
  if (c.size() != p.n_cells) throw std::invalid_argument("LSST state has wrong size");
  if (role == ModelRole::Truth) {
    return lsst_upwind(c, p, p.darcy_velocity, VectorXd::Constant(c.size(), p.source));
  }
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double velocity =
      p.darcy_velocity + p.velocity_noise_rel * p.darcy_velocity * gauss(noise);
  VectorXd sources(c.size());
  for (Index i = 0; i < c.size(); ++i) sources(i) = p.source + p.source_noise_std * gauss(noise);
  return lsst_upwind(c, p, velocity, sources);
}

VectorXd lsst_step(const VectorXd& c, const LSSTParams& p) {
  rng::SplitMix64 unused(0);
  return lsst_step(c, p, ModelRole::Truth, unused);
}

VectorXd lsst_initial_state(const LSSTParams& p) {
  VectorXd c(p.n_cells);
  for (Index i = 0; i < p.n_cells; ++i) {
    const double x = p.coordinate == GridCoordinate::CellIndex
                         ? static_cast<double>(i + 1)
                         : (static_cast<double>(i) + 0.5) * p.dx;
    c(i) = 3.0 + std::sin(5.0 * x);
  }
  return c;
}

Index state_size(const ModelParams& p) {
  return std::visit(
      [](const auto& m) -> Index {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, L40Params>) {
          return m.n;
        } else {
          return m.n_cells;
        }
      },
      p);
}

VectorXd initial_state(const ModelParams& p) {
  if (const auto* l40 = std::get_if<L40Params>(&p)) return l40_initial_state(*l40);
  return lsst_initial_state(std::get<LSSTParams>(p));
}

VectorXd step(const VectorXd& x, const ModelParams& p, ModelRole role, rng::SplitMix64& noise) {
  if (const auto* l40 = std::get_if<L40Params>(&p)) return rk4_step(x, *l40);
  return lsst_step(x, std::get<LSSTParams>(p), role, noise);
}

MatrixXd generate_truth(const ModelParams& p, Index steps) {
  if (steps < 1) throw std::invalid_argument("trajectory needs at least one state");
  VectorXd x = initial_state(p);
  MatrixXd traj(steps, x.size());
  traj.row(0) = x.transpose();
  rng::SplitMix64 unused(0);
  for (Index t = 1; t < steps; ++t) {
    x = step(x, p, ModelRole::Truth, unused);
    traj.row(t) = x.transpose();
  }
  return traj;
}

void write_trajectory_csv(std::ostream& out, const MatrixXd& trajectory) {
  out << "step";
  for (Index j = 0; j < trajectory.cols(); ++j) out << ",var_" << j;
  out << '\n';
  for (Index t = 0; t < trajectory.rows(); ++t) {
    out << t;
    for (Index j = 0; j < trajectory.cols(); ++j) out << ',' << csv::number(trajectory(t, j));
    out << '\n';
  }
}

}  // namespace enkfsq::models
