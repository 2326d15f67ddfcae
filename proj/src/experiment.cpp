#include "enkfsq/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <future>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <ostream>
#include <random>
#include <stdexcept>
#include <thread>

#include "enkfsq/csv.hpp"

namespace enkfsq::harness {

using filters::FilterKind;

double RunRecord::or_fraction() const {
  std::size_t total = 0;
  std::size_t rows = 0;
  for (std::size_t k = 0; k < or_counts.size(); ++k) {
    total += static_cast<std::size_t>(or_counts[k]);
    rows += k < log.size() ? log[k].hard_rows + log[k].or_rows : 0;
  }
  return rows == 0 ? 0.0 : static_cast<double>(total) / static_cast<double>(rows);
}

// ---- climatology ----------------------------------------------------------------

obs::ClimatologyEstimate build_climatology(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (!cfg.climatology_file.empty()) {
    std::ifstream in(cfg.climatology_file);
    if (!in) throw ConfigError("cannot open climatology file `" + cfg.climatology_file + "`");
    return obs::read_climatology_csv(in);
  }
  const Index steps = cfg.effective_climatology_steps();
  const MatrixXd run = models::generate_truth(cfg.truth_params(), steps + 1);
  const std::vector<Index> sites = cfg.sites();
  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(steps) * sites.size());
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (Index t = 1; t <= steps; ++t) {
    for (Index s : sites) {
      auto gen = rng::stream(seed, rng::Stream::Climatology, static_cast<std::uint64_t>(t),
                             static_cast<std::uint64_t>(s));
      gauss.reset();
      samples.push_back(run(t, s) + cfg.sigma_obs * gauss(gen));
    }
  }
  return obs::ClimatologyEstimate(std::move(samples));
}

CensoringSetup censoring_for(const ExperimentConfig& cfg, const obs::ClimatologyEstimate& clim) {
  CensoringSetup out;
  out.limit.side = cfg.limit_side;
  const double s = out.limit.sign();
  // Work in the frame where the limit is an upper one.
  std::vector<double> mirrored = clim.samples();
  if (s < 0) {
    for (double& v : mirrored) v = -v;
  }
  const obs::ClimatologyEstimate frame(std::move(mirrored));
  const double mu_frame = cfg.mu ? s * *cfg.mu
                                 : obs::detection_limit_for_or_fraction(frame, cfg.or_fraction_target);
  if (mu_frame == -std::numeric_limits<double>::infinity()) {
    throw ConfigError("or_fraction 1 censors every observation");
  }
  out.limit.mu = s * mu_frame;
  if (!std::isfinite(mu_frame)) {
    out.sigma_or = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  try {
    out.sigma_or = cfg.alpha * obs::sigma_or_from_climatology(frame, mu_frame, cfg.sigma_or_mode);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("sigma_or: ") + e.what());
  }
  return out;
}

// ---- one run -------------------------------------------------------------------

namespace {

bool all_finite(const MatrixXd& x) { return x.allFinite(); }

MatrixXd initial_ensemble(const ExperimentConfig& cfg, const MatrixXd& truth, std::uint64_t seed) {
  const Index n = truth.cols();
  const Index members = cfg.ensemble_size;
  // L40: climatological (time-mean) state; LSST: the known initial plume.
  const VectorXd centre = cfg.model == ModelKind::L40 ? VectorXd(truth.colwise().mean().transpose())
                                                      : VectorXd(truth.row(0).transpose());
  const double std = cfg.init_perturbation_std();
  MatrixXd x(n, members);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (Index i = 0; i < members; ++i) {
    auto gen = rng::stream(seed, rng::Stream::InitPerturbation, static_cast<std::uint64_t>(i));
    gauss.reset();
    for (Index j = 0; j < n; ++j) x(j, i) = centre(j) + std * gauss(gen);
  }
  return x;
}

obs::ObservationBatch batch_for(FilterKind kind, const VectorXd& truth_t,
                                const ObservationOperator& network, const ExperimentConfig& cfg,
                                const CensoringSetup& cens, const obs::ObservationBatch& censored,
                                std::uint64_t seed, std::uint64_t step) {
  switch (kind) {
    case FilterKind::EnKFAll: {
      // Same noise stream as the censored batch, nothing withheld.
      const obs::DetectionLimit none{std::numeric_limits<double>::infinity(), obs::LimitSide::Upper};
      return obs::observe_truth(truth_t, network, cfg.sigma_obs, none, seed, step);
    }
    case FilterKind::EnKFIgnore: return censored.hard_only();
    default: {
      obs::ObservationBatch b = censored;
      if (b.or_count() > 0) b.set_sigma_or(cens.sigma_or);
      return b;
    }
  }
}

}  // namespace

RunRecord run_single(const ExperimentConfig& cfg, std::uint64_t seed, double free_rmse) {
  const auto t0 = std::chrono::steady_clock::now();
  cfg.validate();

  RunRecord rec;
  rec.config_hash = cfg.hash();
  rec.seed = seed;
  rec.filter = cfg.filter;
  rec.free_run_rmse = free_rmse;

  const Index steps = cfg.total_steps();
  const models::ModelParams truth_p = cfg.truth_params();
  const models::ModelParams fc_p = cfg.forecast_params();
  const MatrixXd truth = models::generate_truth(truth_p, steps + 1);

  const CensoringSetup cens = censoring_for(cfg, build_climatology(cfg, seed));
  rec.mu = cens.limit.mu;
  rec.sigma_or = cens.sigma_or;

  const Index n = truth.cols();
  const ObservationOperator network(cfg.sites(), n);
  MatrixXd x = initial_ensemble(cfg, truth, seed);
  const Index members = x.cols();

  auto& m = rec.metrics;
  const auto diverge = [&](std::string why) {
    rec.diverged = true;
    rec.note = std::move(why);
  };

  for (Index t = 1; t <= steps && !rec.diverged; ++t) {
    for (Index i = 0; i < members; ++i) {
      auto noise = rng::stream(seed, rng::Stream::ModelNoise, static_cast<std::uint64_t>(t),
                               static_cast<std::uint64_t>(i));
      try {
        x.col(i) = models::step(x.col(i), fc_p, models::ModelRole::Forecast, noise);
      } catch (const std::runtime_error& e) {
        diverge(std::string("model step failed: ") + e.what());
        break;
      }
    }
    if (rec.diverged) break;
    if (!all_finite(x)) {
      diverge("non-finite forecast state at step " + std::to_string(t));
      break;
    }
    if (t % cfg.obs_every != 0) continue;

    const VectorXd truth_t = truth.row(t).transpose();
    const EnsembleMatrix forecast(x);
    const double f_rmse = metrics::rmse(forecast.states().rowwise().mean(), truth_t);
    m.rmse_series.push_back(f_rmse);
    m.aes_series.push_back(metrics::aes(forecast));
    rec.analysis_steps.push_back(t);

    const auto step_key = static_cast<std::uint64_t>(t);
    const obs::ObservationBatch censored =
        obs::observe_truth(truth_t, network, cfg.sigma_obs, cens.limit, seed, step_key);
    rec.or_counts.push_back(static_cast<int>(censored.or_count()));

    if (free_rmse > 0.0 && f_rmse > cfg.divergence_factor * free_rmse) {
      diverge("forecast RMSE exceeded " + csv::number(cfg.divergence_factor) +
              "x the free-run RMSE at step " + std::to_string(t));
      break;
    }

    AnalysisLog entry;
    entry.step = t;
    filters::AnalysisDiagnostics diag;
    if (cfg.filter != FilterKind::FreeRun) {
      const obs::ObservationBatch batch =
          batch_for(cfg.filter, truth_t, network, cfg, cens, censored, seed, step_key);
      const filters::PerturbationStreams streams{seed, step_key};
      try {
        filters::AnalysisResult res =
            cfg.filter == FilterKind::PDEnKF
                ? filters::pdenkf_analysis(forecast, batch, cfg.pdenkf_mode)
                : cfg.filter == FilterKind::EnKFSQ ? filters::enkfsq_analysis(forecast, batch, streams)
                                                   : filters::enkf_analysis(forecast, batch, streams);
        x = std::move(res.analysis).release();
        diag = std::move(res.diagnostics);
      } catch (const std::domain_error& e) {
        diverge(std::string("analysis failed: ") + e.what());
        break;
      } catch (const std::invalid_argument& e) {
        // Non-finite analysis states are rejected by EnsembleMatrix.
        diverge(std::string("analysis failed: ") + e.what());
        break;
      }
      entry.hard_rows = diag.hard_rows;
      entry.or_rows = diag.or_rows;
      entry.distinct_gains = diag.distinct_gains;
      if (!diag.member_outside.empty()) {
        double sum = 0.0;
        for (int v : diag.member_outside) sum += v;
        entry.mean_members_outside = sum / static_cast<double>(diag.member_outside.size());
      }
    }
    // Row counts of the censored stream, whatever the scheme consumed.
    entry.or_rows = censored.or_count();
    entry.hard_rows = censored.size() - entry.or_rows;
    rec.log.push_back(entry);

    m.analysis_rmse_series.push_back(metrics::rmse(x.rowwise().mean(), truth_t));

    if (t + cfg.obs_every > steps && members >= 3) {
      m.skew_a = metrics::mean_abs_skewness(x);
      if (diag.perturbed_obs.rows() > 0) m.skew_o = metrics::mean_abs_skewness(diag.perturbed_obs);
    }
  }

  if (!m.rmse_series.empty()) m.time_avg_rmse = metrics::time_avg_rmse(m.rmse_series);
  if (!m.analysis_rmse_series.empty()) {
    m.time_avg_analysis_rmse = metrics::time_avg_rmse(m.analysis_rmse_series);
  }
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

// ---- free-run reference ------------------------------------------------------------

namespace {

// Fields that cannot change a free run are reset so that sweeps share entries.
std::string free_run_key(const ExperimentConfig& cfg, std::uint64_t seed) {
  ExperimentConfig k = cfg;
  const ExperimentConfig d = cfg.model == ModelKind::L40 ? ExperimentConfig::l40() : ExperimentConfig::lsst();
  k.filter = FilterKind::FreeRun;
  k.or_fraction_target = d.or_fraction_target;
  k.mu.reset();
  k.limit_side = d.limit_side;
  k.alpha = d.alpha;
  k.sigma_obs = d.sigma_obs;
  k.sigma_or_mode = d.sigma_or_mode;
  k.pdenkf_mode = d.pdenkf_mode;
  k.observed_sites.clear();
  k.climatology_steps = d.climatology_steps;
  k.climatology_file.clear();
  k.divergence_factor = d.divergence_factor;
  k.moving_average_window = d.moving_average_window;
  k.seeds = {seed};
  return k.canonical();
}

struct FreeRunCache {
  std::mutex mutex;
  std::map<std::string, std::shared_future<double>> entries;
};

FreeRunCache& free_cache() {
  static FreeRunCache cache;
  return cache;
}

}  // namespace

double free_run_rmse(const ExperimentConfig& cfg, std::uint64_t seed) {
  const std::string key = free_run_key(cfg, seed);
  auto& cache = free_cache();
  std::promise<double> promise;
  std::shared_future<double> fut;
  bool owner = false;
  {
    std::lock_guard lock(cache.mutex);
    auto it = cache.entries.find(key);
    if (it == cache.entries.end()) {
      fut = promise.get_future().share();
      cache.entries.emplace(key, fut);
      owner = true;
    } else {
      fut = it->second;
    }
  }
  if (owner) {
    try {
      ExperimentConfig free = cfg;
      free.filter = FilterKind::FreeRun;
      // The free run needs no censoring; keep climatology out of its way.
      free.or_fraction_target = 0.0;
      free.mu.reset();
      free.climatology_file.clear();
      const RunRecord rec = run_single(free, seed, 0.0);
      promise.set_value(rec.metrics.time_avg_rmse);
    } catch (...) {
      promise.set_exception(std::current_exception());
    }
  }
  return fut.get();
}

// ---- parallel execution ------------------------------------------------------------

void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& task) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(count, 1)));
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        task(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(count);
        return;
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (unsigned k = 0; k < threads; ++k) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);
}

std::vector<std::vector<RunRecord>> run_many(const std::vector<ExperimentConfig>& cfgs,
                                             unsigned threads) {
  std::vector<std::pair<std::size_t, std::size_t>> jobs;
  std::vector<std::vector<RunRecord>> out(cfgs.size());
  for (std::size_t c = 0; c < cfgs.size(); ++c) {
    cfgs[c].validate();
    out[c].resize(cfgs[c].seeds.size());
    for (std::size_t s = 0; s < cfgs[c].seeds.size(); ++s) jobs.emplace_back(c, s);
  }
  parallel_for(jobs.size(), threads, [&](std::size_t j) {
    const auto [c, s] = jobs[j];
    const ExperimentConfig& cfg = cfgs[c];
    const std::uint64_t seed = cfg.seeds[s];
    const double ref = cfg.filter == FilterKind::FreeRun ? 0.0 : free_run_rmse(cfg, seed);
    out[c][s] = run_single(cfg, seed, ref);
  });
  return out;
}

std::vector<RunRecord> run_twin_experiment(const ExperimentConfig& cfg, unsigned threads) {
  return std::move(run_many({cfg}, threads).front());
}

// ---- sweeps ----------------------------------------------------------------------

const SweepRow& SweepResult::at(double value, FilterKind scheme) const {
  for (const auto& r : rows) {
    if (r.scheme == scheme && std::abs(r.sweep_value - value) <= 1e-9 * std::max(1.0, std::abs(value))) {
      return r;
    }
  }
  throw std::out_of_range("no sweep row for " + std::string(filters::to_string(scheme)) + " at " +
                          csv::number(value));
}

std::vector<double> SweepResult::values() const {
  std::vector<double> v;
  for (const auto& r : rows) {
    if (std::find(v.begin(), v.end(), r.sweep_value) == v.end()) v.push_back(r.sweep_value);
  }
  return v;
}

SweepRow summarize(double value, FilterKind scheme, const std::vector<RunRecord>& runs,
                   bool use_analysis) {
  SweepRow row;
  row.sweep_value = value;
  row.scheme = scheme;
  std::vector<double> rmse, sa, so;
  for (const auto& r : runs) {
    ++row.runs;
    if (r.diverged) {
      ++row.diverged;
      continue;
    }
    rmse.push_back(use_analysis ? r.metrics.time_avg_analysis_rmse : r.metrics.time_avg_rmse);
    sa.push_back(r.metrics.skew_a);
    so.push_back(r.metrics.skew_o);
  }
  if (rmse.empty()) {
    row.mean_rmse = row.std_rmse = row.skew_a = row.skew_o = std::numeric_limits<double>::quiet_NaN();
    return row;
  }
  row.mean_rmse = metrics::multi_run_avg(rmse);
  row.std_rmse = metrics::sample_std(rmse);
  row.skew_a = metrics::multi_run_avg(sa);
  row.skew_o = metrics::multi_run_avg(so);
  return row;
}

std::vector<Index> default_ensemble_sizes() {
  std::vector<Index> v;
  for (Index n = 25; n <= 145; n += 10) v.push_back(n);
  v.push_back(150);
  return v;
}

std::vector<double> default_or_fractions() {
  std::vector<double> v;
  for (int k = 0; k <= 9; ++k) v.push_back(k / 10.0);
  return v;
}

std::vector<double> default_alphas() {
  std::vector<double> v;
  for (int k = 0; k <= 12; ++k) v.push_back((5.0 + 15.0 * k) / 100.0);
  return v;
}

namespace {

void append_records(SweepResult& res, std::vector<std::vector<RunRecord>>& runs) {
  for (auto& group : runs) {
    for (auto& r : group) res.records.push_back(std::move(r));
  }
}

}  // namespace

SweepResult sweep_ensemble_size(const ExperimentConfig& base, const std::vector<Index>& sizes,
                                unsigned threads, const std::vector<FilterKind>& schemes) {
  std::vector<ExperimentConfig> cfgs;
  std::vector<std::pair<double, FilterKind>> keys;
  for (Index n : sizes) {
    for (FilterKind k : schemes) {
      ExperimentConfig c = base;
      c.ensemble_size = n;
      c.filter = k;
      cfgs.push_back(c);
      keys.emplace_back(static_cast<double>(n), k);
    }
  }
  auto runs = run_many(cfgs, threads);
  SweepResult res;
  res.name = "ensemble_size";
  for (std::size_t i = 0; i < cfgs.size(); ++i) {
    res.rows.push_back(summarize(keys[i].first, keys[i].second, runs[i]));
  }
  append_records(res, runs);
  return res;
}

SweepResult sweep_detection_limit(const ExperimentConfig& base, const std::vector<double>& fractions,
                                  unsigned threads, const std::vector<FilterKind>& schemes) {
  std::vector<ExperimentConfig> cfgs;
  std::vector<std::pair<double, FilterKind>> keys;
  const bool has_all = std::find(schemes.begin(), schemes.end(), FilterKind::EnKFAll) != schemes.end();
  if (has_all) {
    ExperimentConfig c = base;
    c.filter = FilterKind::EnKFAll;
    c.mu.reset();
    c.or_fraction_target = fractions.empty() ? 0.0 : fractions.front();
    cfgs.push_back(c);
    keys.emplace_back(std::numeric_limits<double>::quiet_NaN(), FilterKind::EnKFAll);
  }
  for (double f : fractions) {
    for (FilterKind k : schemes) {
      if (k == FilterKind::EnKFAll) continue;
      ExperimentConfig c = base;
      c.mu.reset();
      c.or_fraction_target = f;
      c.filter = k;
      cfgs.push_back(c);
      keys.emplace_back(f, k);
    }
  }
  auto runs = run_many(cfgs, threads);
  SweepResult res;
  res.name = "detection_limit";
  for (double f : fractions) {
    for (FilterKind k : schemes) {
      for (std::size_t i = 0; i < cfgs.size(); ++i) {
        if (keys[i].second != k) continue;
        if (k == FilterKind::EnKFAll || keys[i].first == f) {
          res.rows.push_back(summarize(f, k, runs[i]));
          break;
        }
      }
    }
  }
  append_records(res, runs);
  return res;
}

SweepResult sweep_alpha(const ExperimentConfig& base, const std::vector<double>& alphas,
                        unsigned threads) {
  std::vector<ExperimentConfig> cfgs;
  ExperimentConfig pd = base;
  pd.filter = FilterKind::PDEnKF;
  cfgs.push_back(pd);
  for (double a : alphas) {
    ExperimentConfig c = base;
    c.alpha = a;
    c.filter = FilterKind::EnKFSQ;
    cfgs.push_back(c);
  }
  auto runs = run_many(cfgs, threads);
  SweepResult res;
  res.name = "alpha";
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    res.rows.push_back(summarize(alphas[i], FilterKind::EnKFSQ, runs[i + 1], true));
    res.rows.push_back(summarize(alphas[i], FilterKind::PDEnKF, runs[0], true));
  }
  append_records(res, runs);
  return res;
}

// ---- posterior demo --------------------------------------------------------------

double kde_mode(const std::vector<double>& samples) {
  if (samples.size() < 2) throw std::invalid_argument("kde_mode needs at least 2 samples");
  std::vector<double> s = samples;
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double mean = 0.0;
  for (double v : s) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : s) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / (n - 1.0));
  auto quantile = [&](double p) {
    const double h = (n - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, s.size() - 1);
    return s[lo] + (h - static_cast<double>(lo)) * (s[hi] - s[lo]);
  };
  const double iqr = quantile(0.75) - quantile(0.25);
  double spread = std::min(sd, iqr / 1.34);
  if (!(spread > 0.0)) spread = sd > 0.0 ? sd : 1.0;
  const double bw = 0.9 * spread * std::pow(n, -0.2);

  constexpr int kGrid = 2001;
  const double lo = s.front();
  const double hi = s.back();
  double best_x = lo;
  double best = -1.0;
  for (int g = 0; g < kGrid; ++g) {
    const double xg = lo + (hi - lo) * g / (kGrid - 1);
    // Only samples within 6 bandwidths contribute measurably.
    const auto first = std::lower_bound(s.begin(), s.end(), xg - 6.0 * bw);
    const auto last = std::upper_bound(s.begin(), s.end(), xg + 6.0 * bw);
    double dens = 0.0;
    for (auto it = first; it != last; ++it) {
      const double u = (xg - *it) / bw;
      dens += std::exp(-0.5 * u * u);
    }
    if (dens > best) {
      best = dens;
      best_x = xg;
    }
  }
  return best_x;
}

SampleSummary summarize_samples(const std::vector<double>& samples) {
  SampleSummary out;
  if (samples.empty()) return out;
  const double n = static_cast<double>(samples.size());
  for (double v : samples) out.mean += v;
  out.mean /= n;
  double var = 0.0;
  for (double v : samples) var += (v - out.mean) * (v - out.mean);
  out.std = samples.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
  out.mode = samples.size() > 1 ? kde_mode(samples) : samples.front();
  return out;
}

namespace {

double log_normal_pdf(double x, double mean, double std) {
  const double z = (x - mean) / std;
  return -0.5 * z * z - std::log(std * std::sqrt(2.0 * std::numbers::pi));
}

}  // namespace

PosteriorReport posterior_demo(double prior_mean, double prior_std, const obs::TwoPieceGaussian& d,
                               std::size_t n_samples, std::uint64_t seed) {
  if (!(prior_std > 0.0) || !std::isfinite(prior_mean)) {
    throw std::invalid_argument("posterior_demo: prior needs a finite mean and positive std");
  }
  if (n_samples < 3) throw std::invalid_argument("posterior_demo: need at least 3 samples");

  PosteriorReport rep;
  rep.prior_mean = prior_mean;
  rep.prior_std = prior_std;
  rep.likelihood = d;

  // Bayes: target f = prior * likelihood, proposal g = N(mu, 2 sigma_or^2).
  const double q = std::sqrt(2.0) * d.sigma2();
  const auto log_ratio = [&](double x) {
    return log_normal_pdf(x, prior_mean, prior_std) + d.log_pdf(x) - log_normal_pdf(x, d.mu(), q);
  };
  // log(f/g) is a quadratic on each half; take its maximum over the half.
  double log_m = -std::numeric_limits<double>::infinity();
  for (int half = 0; half < 2; ++half) {
    const double sh = half == 0 ? d.sigma1() : d.sigma2();
    const double a = 1.0 / (prior_std * prior_std) + 1.0 / (sh * sh) - 1.0 / (q * q);
    if (!(a > 0.0)) {
      throw std::runtime_error("posterior_demo: proposal tails are lighter than the target");
    }
    double xs = (prior_mean / (prior_std * prior_std) + d.mu() * (1.0 / (sh * sh) - 1.0 / (q * q))) / a;
    xs = half == 0 ? std::min(xs, d.mu()) : std::max(xs, d.mu());
    log_m = std::max(log_m, log_ratio(xs));
  }

  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto gen = rng::stream(seed, rng::Stream::Demo, 2);
  const auto max_proposals = static_cast<std::size_t>(static_cast<double>(n_samples) / 1e-3);
  rep.bayes.reserve(n_samples);
  while (rep.bayes.size() < n_samples) {
    if (rep.proposals >= max_proposals) {
      throw std::runtime_error("posterior_demo: acceptance rate below 1e-3 (degenerate configuration)");
    }
    const double x = d.mu() + q * gauss(gen);
    ++rep.proposals;
    if (std::log(unit(gen)) < log_ratio(x) - log_m) rep.bayes.push_back(x);
  }
  rep.acceptance_rate = static_cast<double>(n_samples) / static_cast<double>(rep.proposals);

  // EnKF-SQ on a scalar state observed directly.
  MatrixXd prior(1, static_cast<Index>(n_samples));
  for (std::size_t i = 0; i < n_samples; ++i) {
    auto g = rng::stream(seed, rng::Stream::Demo, 1, i);
    gauss.reset();
    prior(0, static_cast<Index>(i)) = prior_mean + prior_std * gauss(g);
  }
  obs::ObservationBatch batch;
  obs::Observation o;
  o.site = 0;
  o.sigma_obs = d.sigma1();
  o.sigma_or = d.sigma2();
  o.limit = {d.mu(), obs::LimitSide::Upper};
  batch.rows.push_back(o);
  const filters::AnalysisResult res =
      filters::enkfsq_analysis(EnsembleMatrix(prior), batch, filters::PerturbationStreams{seed, 0});

  rep.prior.assign(prior.data(), prior.data() + prior.size());
  const MatrixXd& post = res.analysis.states();
  rep.enkf_sq.assign(post.data(), post.data() + post.size());

  rep.prior_summary = summarize_samples(rep.prior);
  rep.bayes_summary = summarize_samples(rep.bayes);
  rep.sq_summary = summarize_samples(rep.enkf_sq);
  return rep;
}

// ---- CSV -------------------------------------------------------------------------

void write_run_csv(std::ostream& out, const RunRecord& rec) {
  out << "step,rmse,aes,n_or\n";
  for (std::size_t k = 0; k < rec.metrics.rmse_series.size(); ++k) {
    out << rec.analysis_steps[k] << ',' << csv::number(rec.metrics.rmse_series[k]) << ','
        << csv::number(rec.metrics.aes_series[k]) << ',' << rec.or_counts[k] << '\n';
  }
}

void write_diagnostics_csv(std::ostream& out, const RunRecord& rec, std::size_t ma_window) {
  const auto ma = metrics::moving_average(rec.metrics.rmse_series, ma_window);
  out << "step,hard_rows,or_rows,distinct_gains,mean_members_outside,analysis_rmse,rmse_ma\n";
  for (std::size_t k = 0; k < rec.log.size(); ++k) {
    const auto& e = rec.log[k];
    out << e.step << ',' << e.hard_rows << ',' << e.or_rows << ',' << e.distinct_gains << ','
        << csv::number(e.mean_members_outside) << ','
        << csv::number(rec.metrics.analysis_rmse_series[k]) << ',' << csv::number(ma[k]) << '\n';
  }
}

void write_runs_summary_csv(std::ostream& out, const std::vector<RunRecord>& recs) {
  out << "config_hash,seed,scheme,time_avg_rmse,time_avg_analysis_rmse,mean_aes,or_fraction,mu,"
         "sigma_or,skew_a,skew_o,free_run_rmse,diverged,note\n";
  for (const auto& r : recs) {
    const double mean_aes = r.metrics.aes_series.empty() ? 0.0 : metrics::time_avg_rmse(r.metrics.aes_series);
    out << r.config_hash << ',' << r.seed << ',' << filters::to_string(r.filter) << ','
        << csv::number(r.metrics.time_avg_rmse) << ',' << csv::number(r.metrics.time_avg_analysis_rmse)
        << ',' << csv::number(mean_aes) << ',' << csv::number(r.or_fraction()) << ','
        << csv::number(r.mu) << ',' << csv::number(r.sigma_or) << ',' << csv::number(r.metrics.skew_a)
        << ',' << csv::number(r.metrics.skew_o) << ',' << csv::number(r.free_run_rmse) << ','
        << (r.diverged ? 1 : 0) << ',' << '"' << r.note << '"' << '\n';
  }
}

void write_sweep_csv(std::ostream& out, const SweepResult& sweep) {
  out << "sweep_value,scheme,mean_rmse,std_rmse,skew_a,skew_o\n";
  for (const auto& r : sweep.rows) {
    out << csv::number(r.sweep_value) << ',' << filters::to_string(r.scheme) << ','
        << csv::number(r.mean_rmse) << ',' << csv::number(r.std_rmse) << ',' << csv::number(r.skew_a)
        << ',' << csv::number(r.skew_o) << '\n';
  }
}

void write_posterior_histogram_csv(std::ostream& out, const PosteriorReport& rep, int bins) {
  if (bins < 1) throw std::invalid_argument("histogram needs at least one bin");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto* v : {&rep.prior, &rep.bayes, &rep.enkf_sq}) {
    for (double x : *v) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  }
  if (!(hi > lo)) hi = lo + 1.0;
  const double width = (hi - lo) / bins;
  auto density = [&](const std::vector<double>& v) {
    std::vector<double> h(static_cast<std::size_t>(bins), 0.0);
    for (double x : v) {
      auto b = static_cast<int>((x - lo) / width);
      b = std::clamp(b, 0, bins - 1);
      h[static_cast<std::size_t>(b)] += 1.0;
    }
    for (double& c : h) c /= static_cast<double>(v.size()) * width;
    return h;
  };
  const auto hp = density(rep.prior);
  const auto hb = density(rep.bayes);
  const auto hs = density(rep.enkf_sq);
  out << "bin_center,prior,bayes,enkf_sq\n";
  for (int b = 0; b < bins; ++b) {
    const auto i = static_cast<std::size_t>(b);
    out << csv::number(lo + (b + 0.5) * width) << ',' << csv::number(hp[i]) << ','
        << csv::number(hb[i]) << ',' << csv::number(hs[i]) << '\n';
  }
}

void write_posterior_summary_csv(std::ostream& out, const PosteriorReport& rep) {
  out << "quantity,prior,bayes,enkf_sq\n";
  const auto row = [&](const char* name, auto field) {
    out << name << ',' << csv::number(rep.prior_summary.*field) << ','
        << csv::number(rep.bayes_summary.*field) << ',' << csv::number(rep.sq_summary.*field) << '\n';
  };
  row("mode", &SampleSummary::mode);
  row("mean", &SampleSummary::mean);
  row("std", &SampleSummary::std);
}

std::string run_file_stem(const RunRecord& rec) {
  return std::string(filters::to_string(rec.filter)) + "_" + rec.config_hash + "_s" +
         std::to_string(rec.seed);
}

}  // namespace enkfsq::harness
