#include "enkfsq/filters.hpp"

#include <map>
#include <random>
#include <stdexcept>
#include <string>

#include "enkfsq/two_piece.hpp"

namespace enkfsq::filters {

std::string_view to_string(FilterKind kind) {
  switch (kind) {
    case FilterKind::EnKFAll: return "EnKF-ALL";
    case FilterKind::EnKFIgnore: return "EnKF-IG";
    case FilterKind::EnKFSQ: return "EnKF-SQ";
    case FilterKind::PDEnKF: return "PDEnKF";
    case FilterKind::FreeRun: return "FreeRun";
  }
  return "?";
}

std::optional<FilterKind> parse_filter_kind(std::string_view name) {
  for (auto k : {FilterKind::EnKFAll, FilterKind::EnKFIgnore, FilterKind::EnKFSQ,
                 FilterKind::PDEnKF, FilterKind::FreeRun}) {
    if (name == to_string(k)) return k;
  }
  if (name == "all") return FilterKind::EnKFAll;
  if (name == "ig" || name == "ignore") return FilterKind::EnKFIgnore;
  if (name == "sq") return FilterKind::EnKFSQ;
  if (name == "pdenkf") return FilterKind::PDEnKF;
  if (name == "free" || name == "none") return FilterKind::FreeRun;
  return std::nullopt;
}

namespace {

AnalysisResult unchanged(const EnsembleMatrix& forecast, std::size_t members) {
  AnalysisDiagnostics diag;
  diag.skipped = true;
  diag.member_outside.assign(members, 0);
  return {forecast, std::move(diag)};
}

// Shared by the stochastic EnKF and EnKF-SQ: with no out-of-range rows the
// two produce the same arithmetic, draw for draw.
AnalysisResult stochastic_update(const EnsembleMatrix& forecast,
                                 const obs::ObservationBatch& batch,
                                 const PerturbationStreams& streams) {
  const Index n_members = forecast.members();
  if (batch.empty()) return unchanged(forecast, static_cast<std::size_t>(n_members));

  const Index m = static_cast<Index>(batch.size());
  for (const auto& o : batch.rows) {
    if (o.out_of_range() && !(o.sigma_or && *o.sigma_or > 0.0)) {
      throw std::invalid_argument("out-of-range observation at site " + std::to_string(o.site) +
                                  " has no sigma_or");
    }
  }

  const ObservationOperator h = batch.operator_for(forecast.state_size());
  const EnsembleStats stats = compute_stats(forecast);
  const GainSolver solver(stats, h);
  const MatrixXd hx = h.apply(forecast.states());

  // Likelihood of each out-of-range row, in the upper-limit frame.
  std::vector<std::optional<obs::TwoPieceGaussian>> or_likelihood(static_cast<std::size_t>(m));
  AnalysisDiagnostics diag;
  for (Index k = 0; k < m; ++k) {
    const auto& o = batch.rows[static_cast<std::size_t>(k)];
    if (o.out_of_range()) {
      or_likelihood[static_cast<std::size_t>(k)].emplace(o.limit.sign() * o.limit.mu, o.sigma_obs,
                                                         *o.sigma_or);
      ++diag.or_rows;
    } else {
      ++diag.hard_rows;
    }
  }

  MatrixXd analysis = forecast.states();
  diag.perturbed_obs.resize(m, n_members);
  diag.member_outside.assign(static_cast<std::size_t>(n_members), 0);

  std::map<std::vector<bool>, GainSolver::Factor> factors;
  std::vector<bool> pattern(static_cast<std::size_t>(m));
  VectorXd r(m);
  VectorXd innovation(m);
  std::normal_distribution<double> gauss(0.0, 1.0);

  for (Index i = 0; i < n_members; ++i) {
    int outside = 0;
    for (Index k = 0; k < m; ++k) {
      const auto& o = batch.rows[static_cast<std::size_t>(k)];
      auto gen = streams.at(o.site, i);
      gauss.reset();
      double y = 0.0;
      bool beyond = false;
      if (o.out_of_range()) {
        beyond = o.limit.exceeds(hx(k, i));
        y = o.limit.sign() * obs::sample_two_piece_exact(*or_likelihood[static_cast<std::size_t>(k)], gen);
      } else {
        y = *o.value + o.sigma_obs * gauss(gen);
      }
      pattern[static_cast<std::size_t>(k)] = beyond;
      outside += beyond ? 1 : 0;
      const double sigma = beyond ? *o.sigma_or : o.sigma_obs;
      r(k) = sigma * sigma;
      diag.perturbed_obs(k, i) = y;
      innovation(k) = y - hx(k, i);
    }
    diag.member_outside[static_cast<std::size_t>(i)] = outside;

    auto it = factors.find(pattern);
    if (it == factors.end()) it = factors.emplace(pattern, solver.factor(r)).first;
    analysis.col(i) += it->second.increment(innovation);
  }
  diag.distinct_gains = factors.size();
  return {EnsembleMatrix(std::move(analysis)), std::move(diag)};
}

}  // namespace

AnalysisResult enkf_analysis(const EnsembleMatrix& forecast, const obs::ObservationBatch& batch,
                             const PerturbationStreams& streams) {
  if (batch.or_count() != 0) {
    throw std::invalid_argument("stochastic EnKF batch contains out-of-range rows");
  }
  return stochastic_update(forecast, batch, streams);
}

AnalysisResult enkfsq_analysis(const EnsembleMatrix& forecast, const obs::ObservationBatch& batch,
                               const PerturbationStreams& streams) {
  return stochastic_update(forecast, batch, streams);
}

namespace {

AnalysisResult pdenkf_joint(const EnsembleMatrix& forecast, const obs::ObservationBatch& batch) {
  const Index m = static_cast<Index>(batch.size());
  const Index n_members = forecast.members();
  const ObservationOperator h = batch.operator_for(forecast.state_size());
  const EnsembleStats stats = compute_stats(forecast);

  VectorXd r(m);
  for (Index k = 0; k < m; ++k) {
    const double s = batch.rows[static_cast<std::size_t>(k)].sigma_obs;
    r(k) = s * s;
  }
  const GainContext gain = kalman_gain(stats, h, r);
  const MatrixXd hx = h.apply(forecast.states());
  const VectorXd hmean = h.apply(stats.mean);

  AnalysisDiagnostics diag;
  diag.member_outside.assign(static_cast<std::size_t>(n_members), 0);

  // Mean innovation: hard rows only.
  VectorXd mean_innovation = VectorXd::Zero(m);
  for (Index k = 0; k < m; ++k) {
    const auto& o = batch.rows[static_cast<std::size_t>(k)];
    if (o.out_of_range()) {
      ++diag.or_rows;
    } else {
      ++diag.hard_rows;
      mean_innovation(k) = *o.value - hmean(k);
    }
  }

  MatrixXd analysis = forecast.states();
  VectorXd v(m);
  for (Index i = 0; i < n_members; ++i) {
    int outside = 0;
    for (Index k = 0; k < m; ++k) {
      const auto& o = batch.rows[static_cast<std::size_t>(k)];
      if (!o.out_of_range()) {
        v(k) = -(hx(k, i) - hmean(k));  // -H a_i
      } else if (o.limit.exceeds(hx(k, i))) {
        v(k) = 0.0;
        ++outside;
      } else {
        v(k) = o.limit.mu - hx(k, i);
      }
    }
    diag.member_outside[static_cast<std::size_t>(i)] = outside;
    // x_i + K d_mean + K v_i / 2  ==  (mean + K d_mean) + (a_i + K v_i / 2)
    analysis.col(i) += gain.gain * (mean_innovation + 0.5 * v);
  }
  diag.distinct_gains = 1;
  return {EnsembleMatrix(std::move(analysis)), std::move(diag)};
}

AnalysisResult pdenkf_serial(const EnsembleMatrix& forecast, const obs::ObservationBatch& batch) {
  const Index n_members = forecast.members();
  MatrixXd x = forecast.states();
  AnalysisDiagnostics diag;
  diag.member_outside.assign(static_cast<std::size_t>(n_members), 0);
  const double scale = 1.0 / static_cast<double>(n_members - 1);

  for (const auto& o : batch.rows) {
    const VectorXd mean = x.rowwise().mean();
    const MatrixXd a = x.colwise() - mean;
    const Eigen::RowVectorXd ha = a.row(o.site);
    const double hph = scale * ha.squaredNorm();
    const double denom = hph + o.sigma_obs * o.sigma_obs;
    if (!(denom > 0.0)) throw std::domain_error("non-positive innovation variance");
    const VectorXd k = (scale * (a * ha.transpose())) / denom;

    if (!o.out_of_range()) {
      ++diag.hard_rows;
      const VectorXd new_mean = mean + k * (*o.value - mean(o.site));
      x = (a - 0.5 * k * ha).colwise() + new_mean;
      continue;
    }
    ++diag.or_rows;
    for (Index i = 0; i < n_members; ++i) {
      if (o.limit.exceeds(x(o.site, i))) {
        ++diag.member_outside[static_cast<std::size_t>(i)];
        continue;
      }
      x.col(i) += 0.5 * k * (o.limit.mu - x(o.site, i));
    }
  }
  diag.distinct_gains = batch.size();
  return {EnsembleMatrix(std::move(x)), std::move(diag)};
}

}  // namespace

AnalysisResult pdenkf_analysis(const EnsembleMatrix& forecast, const obs::ObservationBatch& batch,
                               PdenkfMode mode) {
  if (batch.empty()) return unchanged(forecast, static_cast<std::size_t>(forecast.members()));
  return mode == PdenkfMode::Joint ? pdenkf_joint(forecast, batch) : pdenkf_serial(forecast, batch);
}

}  // namespace enkfsq::filters
