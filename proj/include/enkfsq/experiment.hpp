#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "enkfsq/config.hpp"
#include "enkfsq/metrics.hpp"
#include "enkfsq/two_piece.hpp"

namespace enkfsq::harness {

struct AnalysisLog {
  Index step = 0;
  std::size_t hard_rows = 0;
  std::size_t or_rows = 0;
  std::size_t distinct_gains = 0;
  double mean_members_outside = 0.0;
};

struct RunRecord {
  std::string config_hash;
  std::uint64_t seed = 0;
  filters::FilterKind filter = filters::FilterKind::EnKFSQ;
  metrics::RunMetrics metrics;
  std::vector<Index> analysis_steps;
  std::vector<int> or_counts;  // per analysis time, from the censored stream
  std::vector<AnalysisLog> log;
  double mu = 0.0;
  double sigma_or = 0.0;
  double free_run_rmse = 0.0;  // divergence reference; 0 for the free run
  bool diverged = false;
  std::string note;
  double wall_seconds = 0.0;  // never written to CSV

  double or_fraction() const;
};

/// Detection limit and sigma_or for one seed, from the climatology.
struct CensoringSetup {
  obs::DetectionLimit limit;
  double sigma_or = 0.0;  // alpha already applied; NaN when nothing is censored
};

/// Climatology samples: the truth-parameter run over
/// cfg.effective_climatology_steps() steps, observed with noise at every
/// network site. Read from cfg.climatology_file instead when it is set.
obs::ClimatologyEstimate build_climatology(const ExperimentConfig& cfg, std::uint64_t seed);
CensoringSetup censoring_for(const ExperimentConfig& cfg, const obs::ClimatologyEstimate& clim);

/// One twin experiment for one seed. Divergence is recorded, not thrown;
/// `free_run_rmse` <= 0 disables the RMSE-ratio test.
RunRecord run_single(const ExperimentConfig& cfg, std::uint64_t seed, double free_run_rmse);

/// Time-averaged free-run RMSE for the model setup of `cfg` and `seed`,
/// memoized process-wide.
double free_run_rmse(const ExperimentConfig& cfg, std::uint64_t seed);

/// Runs task(i) for i in [0, count) on `threads` workers (0: hardware
/// concurrency). Rethrows the first exception after all workers stop.
void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& task);

/// One record per seed, in seed order.
std::vector<RunRecord> run_twin_experiment(const ExperimentConfig& cfg, unsigned threads = 1);

/// Several configurations at once, sharing one worker pool. Result i holds
/// the records of cfgs[i].
std::vector<std::vector<RunRecord>> run_many(const std::vector<ExperimentConfig>& cfgs,
                                             unsigned threads = 1);

struct SweepRow {
  double sweep_value = 0.0;
  filters::FilterKind scheme = filters::FilterKind::EnKFSQ;
  double mean_rmse = 0.0;  // over non-diverged seeds
  double std_rmse = 0.0;
  double skew_a = 0.0;
  double skew_o = 0.0;
  std::size_t runs = 0;
  std::size_t diverged = 0;
};

struct SweepResult {
  std::string name;
  std::vector<SweepRow> rows;
  std::vector<RunRecord> records;

  /// Row for (value, scheme); throws std::out_of_range when absent.
  const SweepRow& at(double value, filters::FilterKind scheme) const;
  std::vector<double> values() const;
};

/// Aggregates one group of seeds; `use_analysis` selects the analysis RMSE.
SweepRow summarize(double value, filters::FilterKind scheme, const std::vector<RunRecord>& runs,
                   bool use_analysis = false);

std::vector<Index> default_ensemble_sizes();  // 25, 35, ..., 145, 150
std::vector<double> default_or_fractions();   // 0, 0.1, ..., 0.9
std::vector<double> default_alphas();         // 0.05, 0.20, ..., 1.85

inline const std::vector<filters::FilterKind> kSweepSchemes = {
    filters::FilterKind::EnKFAll, filters::FilterKind::EnKFSQ, filters::FilterKind::EnKFIgnore};

SweepResult sweep_ensemble_size(const ExperimentConfig& base, const std::vector<Index>& sizes,
                                unsigned threads = 1,
                                const std::vector<filters::FilterKind>& schemes = kSweepSchemes);
/// EnKF-ALL does not see the detection limit, so it runs once and its row is
/// repeated at every fraction.
SweepResult sweep_detection_limit(const ExperimentConfig& base, const std::vector<double>& fractions,
                                  unsigned threads = 1,
                                  const std::vector<filters::FilterKind>& schemes = kSweepSchemes);
/// EnKF-SQ analysis RMSE per alpha, with the (alpha-independent) PDEnKF
/// reference run once and repeated on every row.
SweepResult sweep_alpha(const ExperimentConfig& base, const std::vector<double>& alphas,
                        unsigned threads = 1);

// ---- scalar posterior demo ----------------------------------------------------

struct SampleSummary {
  double mode = 0.0;  // kernel density maximum
  double mean = 0.0;
  double std = 0.0;
};

struct PosteriorReport {
  double prior_mean = 0.0;
  double prior_std = 1.0;
  obs::TwoPieceGaussian likelihood{0.0, 1.0, 1.0};
  std::vector<double> prior;
  std::vector<double> bayes;
  std::vector<double> enkf_sq;
  SampleSummary prior_summary;
  SampleSummary bayes_summary;
  SampleSummary sq_summary;
  std::size_t proposals = 0;
  double acceptance_rate = 0.0;
};

/// Bayes posterior prior x two-piece likelihood by acceptance-rejection with
/// proposal N(mu, 2 sigma_or^2), against a scalar EnKF-SQ update of an
/// n-member prior ensemble carrying one out-of-range observation. Throws
/// std::runtime_error when the acceptance rate falls below 1e-3.
PosteriorReport posterior_demo(double prior_mean, double prior_std, const obs::TwoPieceGaussian& d,
                               std::size_t n_samples = 10000, std::uint64_t seed = 1);

/// Kernel density mode with Silverman's bandwidth, on a 2001-point grid.
double kde_mode(const std::vector<double>& samples);
SampleSummary summarize_samples(const std::vector<double>& samples);

// ---- CSV output ----------------------------------------------------------------

/// `step,rmse,aes,n_or`, one line per analysis time.
void write_run_csv(std::ostream& out, const RunRecord& rec);
/// Per-analysis diagnostics plus the centred moving average of the RMSE.
void write_diagnostics_csv(std::ostream& out, const RunRecord& rec, std::size_t ma_window);
/// One line per run.
void write_runs_summary_csv(std::ostream& out, const std::vector<RunRecord>& recs);
/// `sweep_value,scheme,mean_rmse,std_rmse,skew_a,skew_o`.
void write_sweep_csv(std::ostream& out, const SweepResult& sweep);
/// `bin_center,prior,bayes,enkf_sq` densities on shared bins.
void write_posterior_histogram_csv(std::ostream& out, const PosteriorReport& rep, int bins = 80);
/// `quantity,prior,bayes,enkf_sq` for mode, mean and std.
void write_posterior_summary_csv(std::ostream& out, const PosteriorReport& rep);

/// File stem of a run: `<scheme>_<hash>_s<seed>`.
std::string run_file_stem(const RunRecord& rec);

}  // namespace enkfsq::harness
