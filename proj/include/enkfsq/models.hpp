#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <string>
#include <variant>

#include "enkfsq/rng.hpp"

namespace enkfsq::models {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class ModelRole { Truth, Forecast };

// Lorenz-96 with 40 variables ("L40").
struct L40Params {
  double forcing = 8.0;
  double dt = 0.05;
  Index n = 40;

  static L40Params truth() { return {}; }
  static L40Params forecast() { return {.forcing = 8.1}; }
};

/// Coordinate fed to sin(5 x_i) in the LSST initial condition.
enum class GridCoordinate {
  CellIndex,         // x_i = i, 1-based
  CellCenterMeters,  // x_i = (i - 1/2) dx
};

// 1-D linear subsurface solute transport
//   r_c d(phi C)/dt + d(U C)/dx = q
// on a uniform grid, steady west-to-east Darcy flow, Dirichlet inflow at the
// west face and zero-gradient outflow at the east face.
struct LSSTParams {
  Index n_cells = 100;
  double dx = 10.0;                // m
  double dt = 36000.0;             // s (10 h)
  double darcy_velocity = 1.18e-4; // m/s
  double porosity = 0.334;
  double retardation = 5.19;
  double source = 3e-6;            // ppm per step
  double inflow_conc = 5.0;        // ppm
  // Forecast-role noise, standard deviations: additive on q (ppm), and
  // relative to darcy_velocity on U.
  double source_noise_std = 0.01;
  double velocity_noise_rel = 0.01;
  GridCoordinate coordinate = GridCoordinate::CellIndex;

  double effective_velocity() const { return darcy_velocity / (retardation * porosity); }
  double courant() const { return effective_velocity() * dt / dx; }

  static LSSTParams truth() { return {}; }
  static LSSTParams forecast() { return {.porosity = 0.30, .retardation = 6.87}; }
};

using ModelParams = std::variant<L40Params, LSSTParams>;

// ---- L40 -------------------------------------------------------------------

/// dz_i/dt = (z_{i+1} - z_{i-2}) z_{i-1} - z_i + F, cyclic indices.
VectorXd l40_tendency(const VectorXd& z, double forcing);

/// One classical fourth-order Runge-Kutta step.
VectorXd rk4_step(const VectorXd& z, const L40Params& p);

/// z_i = F everywhere except z_20 = F + 0.001 (1-based).
VectorXd l40_initial_state(const L40Params& p);

// ---- LSST ------------------------------------------------------------------

/// One explicit first-order upwind step. The Forecast role perturbs q (per
/// cell) and U (uniformly) with Gaussian noise drawn from `noise`; the Truth
/// role draws nothing. Throws std::runtime_error if the (perturbed) Courant
/// number leaves [0, 1).
VectorXd lsst_step(const VectorXd& c, const LSSTParams& p, ModelRole role,
                   rng::SplitMix64& noise);
VectorXd lsst_step(const VectorXd& c, const LSSTParams& p);

/// Upwind step with explicit per-cell sources and a given velocity.
VectorXd lsst_upwind(const VectorXd& c, const LSSTParams& p, double velocity,
                     const VectorXd& sources);

/// C(x, 0) = 3 + sin(5 x_i).
VectorXd lsst_initial_state(const LSSTParams& p);

// ---- shared ----------------------------------------------------------------

Index state_size(const ModelParams& p);
VectorXd initial_state(const ModelParams& p);

/// Advances one model step. L40 ignores `role` and `noise` (the role only
/// selects parameters there).
VectorXd step(const VectorXd& x, const ModelParams& p, ModelRole role, rng::SplitMix64& noise);

/// Deterministic truth-role trajectory of `steps` states (row 0 is the
/// initial condition). Throws std::invalid_argument if steps < 1.
MatrixXd generate_truth(const ModelParams& p, Index steps);

/// Trajectory dump: header `step,var_0,...,var_{n-1}`, one row per state.
void write_trajectory_csv(std::ostream& out, const MatrixXd& trajectory);

}  // namespace enkfsq::models
