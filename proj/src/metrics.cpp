#include "enkfsq/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace enkfsq::metrics {

double rmse(const VectorXd& estimate, const VectorXd& reference) {
  if (estimate.size() != reference.size()) {
    throw std::invalid_argument("rmse: vectors differ in length");
  }
  if (estimate.size() == 0) throw std::invalid_argument("rmse: empty vectors");
  return std::sqrt((estimate - reference).squaredNorm() / static_cast<double>(estimate.size()));
}

double time_avg_rmse(std::span<const double> series) {
  if (series.empty()) throw std::invalid_argument("cannot average an empty series");
  return std::accumulate(series.begin(), series.end(), 0.0) / static_cast<double>(series.size());
}

double multi_run_avg(std::span<const double> runs) { return time_avg_rmse(runs); }

double sample_std(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double mean = time_avg_rmse(values);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

double aes(const EnsembleMatrix& ens) {
  const MatrixXd a = ens.states().colwise() - ens.states().rowwise().mean();
  const VectorXd var = a.rowwise().squaredNorm() / static_cast<double>(ens.members() - 1);
  return var.cwiseSqrt().mean();
}

double mean_abs_skewness(const MatrixXd& samples, std::size_t* zero_variance_rows) {
  if (samples.rows() == 0) throw std::invalid_argument("skewness of an empty sample set");
  if (samples.cols() < 3) throw std::invalid_argument("skewness needs at least 3 members");
  const double inv_n = 1.0 / static_cast<double>(samples.cols());
  std::size_t flagged = 0;
  double total = 0.0;
  for (Index j = 0; j < samples.rows(); ++j) {
    const double mean = samples.row(j).mean();
    double m2 = 0.0;
    double m3 = 0.0;
    for (Index i = 0; i < samples.cols(); ++i) {
      const double d = samples(j, i) - mean;
      m2 += d * d;
      m3 += d * d * d;
    }
    m2 *= inv_n;
    m3 *= inv_n;
    if (!(m2 > 0.0)) {
      ++flagged;
      continue;
    }
    total += std::abs(m3 / std::pow(m2, 1.5));
  }
  if (zero_variance_rows) *zero_variance_rows = flagged;
  return total / static_cast<double>(samples.rows());
}

std::vector<double> moving_average(std::span<const double> series, std::size_t window) {
  if (window < 1) throw std::invalid_argument("moving average window must be >= 1");
  const std::size_t n = series.size();
  const std::size_t half = window / 2;
  std::vector<double> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t h = std::min({half, t, n - 1 - t});
    double sum = 0.0;
    for (std::size_t k = t - h; k <= t + h; ++k) sum += series[k];
    out[t] = sum / static_cast<double>(2 * h + 1);
  }
  return out;
}

namespace {

std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman_rho(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("spearman: need two equal-length series of >= 2 values");
  }
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const double mx = time_avg_rmse(rx);
  const double my = time_avg_rmse(ry);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace enkfsq::metrics
