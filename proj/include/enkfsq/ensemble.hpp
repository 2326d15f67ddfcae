#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

namespace enkfsq {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// n x N ensemble of model states, one member per column.
/// Construction enforces N >= 2 and finite entries.
class EnsembleMatrix {
 public:
  explicit EnsembleMatrix(MatrixXd states);

  Index state_size() const noexcept { return states_.rows(); }
  Index members() const noexcept { return states_.cols(); }

  const MatrixXd& states() const noexcept { return states_; }
  auto member(Index i) const { return states_.col(i); }

  MatrixXd release() && noexcept { return std::move(states_); }

 private:
  MatrixXd states_;
};

struct EnsembleStats {
  VectorXd mean;
  MatrixXd anomalies;

  Index members() const noexcept { return anomalies.cols(); }
};

/// Linear selection operator: row k observes state component rows()[k].
class ObservationOperator {
 public:
  ObservationOperator(std::vector<Index> rows, Index state_size);

  static ObservationOperator identity(Index state_size);

  const std::vector<Index>& rows() const noexcept { return rows_; }
  Index obs_size() const noexcept { return static_cast<Index>(rows_.size()); }
  Index state_size() const noexcept { return state_size_; }

  VectorXd apply(const VectorXd& x) const;
  // Applies H to every column.
  MatrixXd apply(const MatrixXd& x) const;

 private:
  std::vector<Index> rows_;
  Index state_size_;
};

struct GainContext {
  MatrixXd gain;                 // n x m
  VectorXd obs_error_variances;  // diag(R), m
};

EnsembleStats compute_stats(const EnsembleMatrix& ens);

/// K = (1/(N-1)) A (HA)^T [ (1/(N-1)) (HA)(HA)^T + diag(r) ]^{-1}, through a
/// Cholesky solve of the m x m innovation covariance.
GainContext kalman_gain(const EnsembleStats& stats, const ObservationOperator& h,
                        const VectorXd& r_diag);

/// Shared pieces of the gain for one forecast ensemble. Filters that need a
/// different diag(R) per member (EnKF-SQ) factor the innovation covariance
/// once per distinct R and apply it to innovation vectors directly.
class GainSolver {
 public:
  GainSolver(const EnsembleStats& stats, const ObservationOperator& h);

  // A Factor refers back to its solver and must not outlive it.
  class Factor {
   public:
    /// K d, without forming K.
    VectorXd increment(const VectorXd& innovation) const;
    MatrixXd gain() const;

   private:
    friend class GainSolver;
    Factor(const MatrixXd& cross, Eigen::LLT<MatrixXd> llt)
        : cross_(&cross), llt_(std::move(llt)) {}

    const MatrixXd* cross_;
    Eigen::LLT<MatrixXd> llt_;
  };

  /// Throws std::domain_error if the innovation covariance is not
  /// numerically SPD.
  Factor factor(const VectorXd& r_diag) const;

  Index obs_size() const noexcept { return innovation_cov_.rows(); }

 private:
  MatrixXd cross_;           // P^f H^T, n x m
  MatrixXd innovation_cov_;  // H P^f H^T, m x m
};

}  // namespace enkfsq
