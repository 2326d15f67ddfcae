#include "enkfsq/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace enkfsq {

EnsembleMatrix::EnsembleMatrix(MatrixXd states) : states_(std::move(states)) {
  if (states_.cols() < 2) {
    throw std::invalid_argument("ensemble needs at least 2 members, got " +
                                std::to_string(states_.cols()));
  }
  if (states_.rows() < 1) {
    throw std::invalid_argument("ensemble state dimension must be positive");
  }
  if (!states_.allFinite()) {
    throw std::invalid_argument("ensemble contains non-finite entries");
  }
}

ObservationOperator::ObservationOperator(std::vector<Index> rows, Index state_size)
    : rows_(std::move(rows)), state_size_(state_size) {
  std::vector<Index> sorted = rows_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw std::invalid_argument("observation operator has duplicate state indices");
  }
  for (Index r : rows_) {
    if (r < 0 || r >= state_size_) {
      throw std::invalid_argument("observation index " + std::to_string(r) +
                                  " outside [0, " + std::to_string(state_size_) + ")");
    }
  }
}

ObservationOperator ObservationOperator::identity(Index state_size) {
  std::vector<Index> rows(static_cast<std::size_t>(state_size));
  for (Index i = 0; i < state_size; ++i) rows[static_cast<std::size_t>(i)] = i;
  return ObservationOperator(std::move(rows), state_size);
}

VectorXd ObservationOperator::apply(const VectorXd& x) const {
  VectorXd y(obs_size());
  for (Index k = 0; k < obs_size(); ++k) y(k) = x(rows_[static_cast<std::size_t>(k)]);
  return y;
}

MatrixXd ObservationOperator::apply(const MatrixXd& x) const {
  MatrixXd y(obs_size(), x.cols());
  for (Index k = 0; k < obs_size(); ++k) y.row(k) = x.row(rows_[static_cast<std::size_t>(k)]);
  return y;
}

EnsembleStats compute_stats(const EnsembleMatrix& ens) {
  EnsembleStats s;
  s.mean = ens.states().rowwise().mean();
  s.anomalies = ens.states().colwise() - s.mean;
  return s;
}

GainSolver::GainSolver(const EnsembleStats& stats, const ObservationOperator& h) {
  if (stats.anomalies.rows() != h.state_size()) {
    throw std::invalid_argument("observation operator does not match state size");
  }
  if (stats.members() < 2) {
    throw std::invalid_argument("gain needs at least 2 members");
  }
  const MatrixXd ha = h.apply(stats.anomalies);
  const double scale = 1.0 / static_cast<double>(stats.members() - 1);
  cross_ = scale * stats.anomalies * ha.transpose();
  innovation_cov_ = scale * ha * ha.transpose();
}

GainSolver::Factor GainSolver::factor(const VectorXd& r_diag) const {
  if (r_diag.size() != obs_size()) {
    throw std::invalid_argument("R diagonal has " + std::to_string(r_diag.size()) +
                                " entries, expected " + std::to_string(obs_size()));
  }
  if (obs_size() < 1) throw std::invalid_argument("gain needs at least one observation");
  for (Index k = 0; k < r_diag.size(); ++k) {
    if (!(r_diag(k) > 0.0) || !std::isfinite(r_diag(k))) {
      throw std::invalid_argument("observation error variances must be positive and finite");
    }
  }
  MatrixXd s = innovation_cov_;
  s.diagonal() += r_diag;
  Eigen::LLT<MatrixXd> llt(s);
  if (llt.info() != Eigen::Success || !llt.matrixLLT().allFinite()) {
    throw std::domain_error("innovation covariance is not positive definite");
  }
  return Factor(cross_, std::move(llt));
}

VectorXd GainSolver::Factor::increment(const VectorXd& innovation) const {
  return *cross_ * llt_.solve(innovation);
}

MatrixXd GainSolver::Factor::gain() const {
  // K^T = S^{-1} (P H^T)^T
  return llt_.solve(cross_->transpose()).transpose();
}

GainContext kalman_gain(const EnsembleStats& stats, const ObservationOperator& h,
                        const VectorXd& r_diag) {
  GainSolver solver(stats, h);
  return GainContext{solver.factor(r_diag).gain(), r_diag};
}

}  // namespace enkfsq
