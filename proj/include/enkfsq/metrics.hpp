#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "enkfsq/ensemble.hpp"

namespace enkfsq::metrics {

struct RunMetrics {
  std::vector<double> rmse_series;           // forecast, one per analysis time
  std::vector<double> aes_series;            // forecast spread, same times
  std::vector<double> analysis_rmse_series;  // after each analysis
  double time_avg_rmse = 0.0;
  double time_avg_analysis_rmse = 0.0;
  double skew_a = 0.0;  // at the last analysis
  double skew_o = 0.0;
};

/// sqrt(mean((a - b)^2)). Throws std::invalid_argument on length mismatch.
double rmse(const VectorXd& estimate, const VectorXd& reference);

/// Arithmetic mean; throws std::invalid_argument on empty input.
double time_avg_rmse(std::span<const double> series);
double multi_run_avg(std::span<const double> runs);

/// Sample standard deviation (1/(L-1)); 0 for a single value.
double sample_std(std::span<const double> values);

/// Average ensemble spread: mean over state components of the per-component
/// sample standard deviation (1/(N-1)).
double aes(const EnsembleMatrix& ens);

/// Mean absolute skewness over rows of `samples` (one row per variable, one
/// column per member), with 1/N moments. Rows with zero variance count as 0
/// and are reported through `zero_variance_rows`.
double mean_abs_skewness(const MatrixXd& samples, std::size_t* zero_variance_rows = nullptr);

inline double skew_analysis(const EnsembleMatrix& ens, std::size_t* zero_variance_rows = nullptr) {
  return mean_abs_skewness(ens.states(), zero_variance_rows);
}
/// `perturbations` is m x N: perturbed observation j of member i at (j, i).
inline double skew_obs(const MatrixXd& perturbations, std::size_t* zero_variance_rows = nullptr) {
  return mean_abs_skewness(perturbations, zero_variance_rows);
}

/// Centered moving average over 2*(window/2)+1 points, shrinking
/// symmetrically near the ends. Throws std::invalid_argument if window < 1.
std::vector<double> moving_average(std::span<const double> series, std::size_t window);

/// Spearman rank correlation (average ranks for ties).
double spearman_rho(std::span<const double> x, std::span<const double> y);

}  // namespace enkfsq::metrics
