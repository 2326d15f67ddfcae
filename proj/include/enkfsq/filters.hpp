#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "enkfsq/ensemble.hpp"
#include "enkfsq/observation.hpp"
#include "enkfsq/rng.hpp"

namespace enkfsq::filters {

/// Analysis schemes. EnKFAll assimilates uncensored batches, EnKFIgnore
/// censored batches with out-of-range rows dropped, EnKFSQ and PDEnKF
/// consume both row kinds. FreeRun performs no analysis.
enum class FilterKind { EnKFAll, EnKFIgnore, EnKFSQ, PDEnKF, FreeRun };

std::string_view to_string(FilterKind kind);
std::optional<FilterKind> parse_filter_kind(std::string_view name);

struct AnalysisDiagnostics {
  std::size_t hard_rows = 0;
  std::size_t or_rows = 0;
  /// Per member: number of out-of-range rows for which the member itself
  /// lies beyond the detection limit.
  std::vector<int> member_outside;
  /// Distinct gains factored in this analysis.
  std::size_t distinct_gains = 0;
  /// Perturbed observations y_i, one column per member (stochastic schemes
  /// only; empty for PDEnKF).
  MatrixXd perturbed_obs;
  bool skipped = false;  // empty batch, analysis == forecast
};

struct AnalysisResult {
  EnsembleMatrix analysis;
  AnalysisDiagnostics diagnostics;
};

/// Addresses the perturbation draw of (analysis step, site, member).
struct PerturbationStreams {
  std::uint64_t seed = 0;
  std::uint64_t step = 0;

  rng::SplitMix64 at(Index site, Index member) const {
    return rng::stream(seed, rng::Stream::ObsPerturbation, step,
                       static_cast<std::uint64_t>(site), static_cast<std::uint64_t>(member));
  }
};

/// Stochastic EnKF with perturbed observations y_i = y + N(0, sigma_obs^2).
/// Throws std::invalid_argument if the batch holds out-of-range rows.
AnalysisResult enkf_analysis(const EnsembleMatrix& forecast, const obs::ObservationBatch& batch,
                             const PerturbationStreams& streams);

/// EnKF-SQ. For every member, each out-of-range row is checked against the
/// detection limit; R(or, or) becomes sigma_or^2 where the member is beyond
/// it and sigma_obs^2 otherwise, and the member is updated with its own gain.
/// Out-of-range rows are perturbed with draws from the two-piece Gaussian
/// (mu, sigma_obs, sigma_or), in-range rows with N(y, sigma_obs^2).
/// Throws std::invalid_argument if an out-of-range row lacks sigma_or.
AnalysisResult enkfsq_analysis(const EnsembleMatrix& forecast, const obs::ObservationBatch& batch,
                               const PerturbationStreams& streams);

enum class PdenkfMode {
  Joint,   // all rows in one update, eligibility masked per member
  Serial,  // one row at a time in batch order, statistics refreshed per row
};

/// Partial deterministic EnKF. Hard rows follow the DEnKF (mean with the full
/// gain, anomalies with half of it). Out-of-range rows leave the mean alone
/// and act as a virtual observation at the limit, with variance sigma_obs^2,
/// that moves only members still inside the observable range, by half the
/// gain. The result is not recentred.
AnalysisResult pdenkf_analysis(const EnsembleMatrix& forecast, const obs::ObservationBatch& batch,
                               PdenkfMode mode = PdenkfMode::Joint);

}  // namespace enkfsq::filters
