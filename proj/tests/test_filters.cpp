#include <doctest.h>

#include <random>

#include "enkfsq/filters.hpp"
#include "enkfsq/observation.hpp"

using namespace enkfsq;
using namespace enkfsq::filters;
using obs::ObservationBatch;

namespace {

obs::Observation hard(Index site, double value, double sigma_obs) {
  obs::Observation o;
  o.site = site;
  o.value = value;
  o.sigma_obs = sigma_obs;
  return o;
}

obs::Observation soft(Index site, double mu, double sigma_obs, double sigma_or,
                      obs::LimitSide side = obs::LimitSide::Upper) {
  obs::Observation o;
  o.site = site;
  o.sigma_obs = sigma_obs;
  o.sigma_or = sigma_or;
  o.limit = {mu, side};
  return o;
}

MatrixXd gaussian_ensemble(Index n, Index members, double mean, double std, std::uint64_t seed) {
  rng::SplitMix64 g(seed);
  std::normal_distribution<double> d(mean, std);
  MatrixXd x(n, members);
  for (Index j = 0; j < members; ++j)
    for (Index i = 0; i < n; ++i) x(i, j) = d(g);
  return x;
}

double mean_of(const MatrixXd& x) { return x.mean(); }
double var_of(const MatrixXd& x) {
  const double m = x.mean();
  return (x.array() - m).square().sum() / static_cast<double>(x.size() - 1);
}

// Textbook DEnKF with a dense inverse.
MatrixXd denkf_oracle(const MatrixXd& x, const std::vector<Index>& sites, const VectorXd& y,
                      const VectorXd& r) {
  const Index n = x.rows(), N = x.cols(), m = static_cast<Index>(sites.size());
  const VectorXd mean = x.rowwise().mean();
  const MatrixXd a = x.colwise() - mean;
  MatrixXd h = MatrixXd::Zero(m, n);
  for (Index k = 0; k < m; ++k) h(k, sites[static_cast<std::size_t>(k)]) = 1.0;
  const MatrixXd p = a * a.transpose() / static_cast<double>(N - 1);
  const MatrixXd k = p * h.transpose() * (h * p * h.transpose() + MatrixXd(r.asDiagonal())).inverse();
  const VectorXd mean_a = mean + k * (y - h * mean);
  const MatrixXd a_a = a - 0.5 * k * h * a;
  return a_a.colwise() + mean_a;
}

}  // namespace

TEST_CASE("enkf_analysis") {
  SUBCASE("conjugate Gaussian, N = 1e4") {
    const EnsembleMatrix f(gaussian_ensemble(1, 10000, 0.0, 1.0, 1));
    ObservationBatch b;
    b.rows.push_back(hard(0, 1.0, 1.0));
    const auto res = enkf_analysis(f, b, {.seed = 3, .step = 0});
    const double m = mean_of(res.analysis.states());
    const double v = var_of(res.analysis.states());
    CHECK(std::abs(m - 0.5) < 3.0 * std::sqrt(0.5 / 10000));
    CHECK(std::abs(v - 0.5) < 3.0 * 0.5 * std::sqrt(2.0 / 9999));
    CHECK(res.diagnostics.hard_rows == 1);
    CHECK(res.diagnostics.perturbed_obs.cols() == 10000);
  }
  SUBCASE("huge observation error leaves the forecast") {
    const MatrixXd x = gaussian_ensemble(4, 30, 1.0, 2.0, 2);
    ObservationBatch b;
    b.rows = {hard(0, 1.0, 1e8), hard(3, -2.0, 1e8)};
    const auto res = enkf_analysis(EnsembleMatrix(x), b, {.seed = 1});
    CHECK((res.analysis.states() - x).cwiseAbs().maxCoeff() < 1e-6);
  }
  SUBCASE("zero spread") {
    const MatrixXd x = MatrixXd::Constant(3, 10, 4.0);
    ObservationBatch b;
    b.rows = {hard(1, 9.0, 0.5)};
    CHECK(enkf_analysis(EnsembleMatrix(x), b, {.seed = 1}).analysis.states() == x);
  }
  SUBCASE("empty batch is a logged no-op") {
    const MatrixXd x = gaussian_ensemble(3, 10, 0.0, 1.0, 4);
    const auto res = enkf_analysis(EnsembleMatrix(x), {}, {.seed = 1});
    CHECK(res.diagnostics.skipped);
    CHECK(res.analysis.states() == x);
  }
  SUBCASE("out-of-range rows are refused") {
    ObservationBatch b;
    b.rows = {soft(0, 1.0, 1.0, 2.0)};
    CHECK_THROWS_AS(enkf_analysis(EnsembleMatrix(gaussian_ensemble(2, 5, 0, 1, 1)), b, {}),
                    std::invalid_argument);
  }
}

TEST_CASE("enkfsq_analysis") {
  const MatrixXd x = gaussian_ensemble(6, 40, 0.0, 1.0, 7);
  const EnsembleMatrix f(x);

  SUBCASE("without out-of-range rows it is the stochastic EnKF, bit for bit") {
    ObservationBatch b;
    b.rows = {hard(0, 0.3, 0.5), hard(4, -1.0, 0.5)};
    const PerturbationStreams s{.seed = 11, .step = 5};
    const auto a = enkf_analysis(f, b, s);
    const auto c = enkfsq_analysis(f, b, s);
    CHECK(a.analysis.states() == c.analysis.states());
    CHECK(c.diagnostics.distinct_gains == 1);
  }
  SUBCASE("a member exactly at the limit counts as in range") {
    MatrixXd y = x;
    const double mu = 0.25;
    y(2, 0) = mu;
    y(2, 1) = std::nextafter(mu, 10.0);
    ObservationBatch b;
    b.rows = {soft(2, mu, 0.5, 2.0)};
    const auto res = enkfsq_analysis(EnsembleMatrix(y), b, {.seed = 1});
    CHECK(res.diagnostics.member_outside[0] == 0);
    CHECK(res.diagnostics.member_outside[1] == 1);
  }
  SUBCASE("per-member R switches the gain") {
    ObservationBatch b;
    b.rows = {soft(2, 0.0, 0.5, 2.0), hard(3, 0.1, 0.5)};
    const auto res = enkfsq_analysis(f, b, {.seed = 2});
    CHECK(res.diagnostics.distinct_gains == 2);
    CHECK(res.diagnostics.or_rows == 1);
    CHECK(res.diagnostics.hard_rows == 1);
    // member-wise replay with an explicit gain per member
    const EnsembleStats st = compute_stats(f);
    const ObservationOperator h({2, 3}, 6);
    for (Index i = 0; i < 40; ++i) {
      VectorXd r(2);
      const double s_or = x(2, i) > 0.0 ? 2.0 : 0.5;
      r << s_or * s_or, 0.25;
      const MatrixXd k = kalman_gain(st, h, r).gain;
      VectorXd d(2);
      d << res.diagnostics.perturbed_obs(0, i) - x(2, i), res.diagnostics.perturbed_obs(1, i) - x(3, i);
      CHECK((res.analysis.states().col(i) - (x.col(i) + k * d)).norm() < 1e-12);
    }
  }
  SUBCASE("prior mode out of range: members barely move") {
    const MatrixXd prior = gaussian_ensemble(1, 10000, 3.0, 1.0, 9);
    ObservationBatch b;
    b.rows = {soft(0, 1.0, 1.0, 3.0)};
    const auto res = enkfsq_analysis(EnsembleMatrix(prior), b, {.seed = 9});
    const double shift = mean_of(res.analysis.states()) - mean_of(prior);
    CHECK(std::abs(shift) < 0.1 * 1.0);
  }
  SUBCASE("lower limits mirror upper ones") {
    ObservationBatch up, low;
    up.rows = {soft(1, 0.2, 0.5, 1.5), soft(4, -0.3, 0.5, 1.5)};
    low.rows = {soft(1, -0.2, 0.5, 1.5, obs::LimitSide::Lower),
                soft(4, 0.3, 0.5, 1.5, obs::LimitSide::Lower)};
    const auto a = enkfsq_analysis(f, up, {.seed = 4});
    const auto c = enkfsq_analysis(EnsembleMatrix(-x), low, {.seed = 4});
    CHECK(a.analysis.states() == -c.analysis.states());
  }
  SUBCASE("missing sigma_or") {
    ObservationBatch b;
    b.rows = {soft(0, 0.0, 1.0, 1.0)};
    b.rows[0].sigma_or.reset();
    CHECK_THROWS_AS(enkfsq_analysis(f, b, {}), std::invalid_argument);
  }
  SUBCASE("unobserved uncorrelated component is untouched") {
    MatrixXd y = x;
    y.row(5).setConstant(1.5);
    ObservationBatch b;
    b.rows = {soft(0, 0.0, 0.5, 2.0), hard(1, 0.2, 0.5)};
    CHECK(enkfsq_analysis(EnsembleMatrix(y), b, {.seed = 1}).analysis.states().row(5) == y.row(5));
    CHECK(pdenkf_analysis(EnsembleMatrix(y), b).analysis.states().row(5) == y.row(5));
    CHECK(enkf_analysis(EnsembleMatrix(y), b.hard_only(), {.seed = 1}).analysis.states().row(5) ==
          y.row(5));
  }
}

TEST_CASE("pdenkf_analysis") {
  const MatrixXd x = gaussian_ensemble(5, 25, 1.0, 1.0, 12);
  const EnsembleMatrix f(x);

  SUBCASE("hard rows only: textbook DEnKF") {
    ObservationBatch b;
    b.rows = {hard(0, 1.4, 0.7), hard(3, 0.2, 0.4)};
    VectorXd y(2), r(2);
    y << 1.4, 0.2;
    r << 0.49, 0.16;
    const MatrixXd oracle = denkf_oracle(x, {0, 3}, y, r);
    const MatrixXd joint = pdenkf_analysis(f, b).analysis.states();
    CHECK((joint - oracle).norm() / oracle.norm() < 1e-12);
    // serial: the same textbook update one row at a time
    const MatrixXd first = denkf_oracle(x, {0}, y.head(1), r.head(1));
    const MatrixXd serial_oracle = denkf_oracle(first, {3}, y.tail(1), r.tail(1));
    const MatrixXd serial = pdenkf_analysis(f, b, PdenkfMode::Serial).analysis.states();
    CHECK((serial - serial_oracle).norm() / serial_oracle.norm() < 1e-12);
  }
  SUBCASE("every member out of range: nothing moves") {
    ObservationBatch b;
    b.rows = {soft(1, x.row(1).minCoeff() - 1.0, 0.5, 2.0), soft(2, x.row(2).minCoeff() - 0.1, 0.5, 2.0)};
    for (auto mode : {PdenkfMode::Joint, PdenkfMode::Serial}) {
      const auto res = pdenkf_analysis(f, b, mode);
      CHECK(res.analysis.states() == x);
      for (int c : res.diagnostics.member_outside) CHECK(c == 2);
    }
  }
  SUBCASE("scalar hand case") {
    MatrixXd s(1, 3);
    s << -1, 0, 1;  // variance 1
    ObservationBatch b;
    b.rows = {hard(0, 2.0, 1.0)};
    const MatrixXd a = pdenkf_analysis(EnsembleMatrix(s), b).analysis.states();
    CHECK(a(0, 0) == doctest::Approx(1.0 - 0.75).epsilon(1e-14));
    CHECK(a(0, 1) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(a(0, 2) == doctest::Approx(1.0 + 0.75).epsilon(1e-14));
  }
  SUBCASE("virtual observation moves in-range members only, mean untouched otherwise") {
    const double mu = 1.0;
    ObservationBatch b;
    b.rows = {soft(2, mu, 0.5, 2.0)};
    const EnsembleStats st = compute_stats(f);
    VectorXd r(1);
    r << 0.25;
    const MatrixXd k = kalman_gain(st, ObservationOperator({2}, 5), r).gain;
    for (auto mode : {PdenkfMode::Joint, PdenkfMode::Serial}) {
      const MatrixXd a = pdenkf_analysis(f, b, mode).analysis.states();
      for (Index i = 0; i < 25; ++i) {
        const VectorXd expect = x(2, i) > mu ? VectorXd(x.col(i))
                                             : VectorXd(x.col(i) + 0.5 * k * (mu - x(2, i)));
        CHECK((a.col(i) - expect).norm() < 1e-12);
      }
    }
  }
  SUBCASE("deterministic") {
    ObservationBatch b;
    b.rows = {soft(2, 1.0, 0.5, 2.0), hard(0, 0.5, 0.5)};
    CHECK(pdenkf_analysis(f, b).analysis.states() == pdenkf_analysis(f, b).analysis.states());
    CHECK(pdenkf_analysis(f, b, PdenkfMode::Serial).analysis.states() ==
          pdenkf_analysis(f, b, PdenkfMode::Serial).analysis.states());
  }
  SUBCASE("empty batch") {
    CHECK(pdenkf_analysis(f, {}).diagnostics.skipped);
  }
}

TEST_CASE("filter names") {
  for (auto k : {FilterKind::EnKFAll, FilterKind::EnKFIgnore, FilterKind::EnKFSQ, FilterKind::PDEnKF,
                 FilterKind::FreeRun}) {
    CHECK(parse_filter_kind(to_string(k)) == k);
  }
  CHECK(parse_filter_kind("sq") == FilterKind::EnKFSQ);
  CHECK_FALSE(parse_filter_kind("kalman").has_value());
}
