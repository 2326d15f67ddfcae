#include "enkfsq/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "enkfsq/csv.hpp"
#include "enkfsq/experiment.hpp"

namespace enkfsq::cli {

namespace fs = std::filesystem;
using harness::ConfigError;
using harness::ExperimentConfig;

namespace {

struct Common {
  std::string config;
  std::string preset;
  std::string out;
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  bool quiet = false;
  std::vector<std::string> sets;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "Config file (key = value lines)");
  sub->add_option("--preset", c.preset, "Base preset: l40, l40_desk, lsst, lsst_desk");
  sub->add_option("--out", c.out, "Output directory (default: $ENKFSQ_OUT_DIR, else ./enkfsq_out)");
  sub->add_option("--seed", c.seed, "Run this single seed instead of the configured list");
  sub->add_option("--threads", c.threads, "Worker threads; 0 = all cores")->default_val(1);
  sub->add_flag("--quiet", c.quiet, "No per-run summary lines");
  sub->add_option("--set", c.sets, "Override a config key, key=value (repeatable)");
}

ExperimentConfig build_config(const Common& c) {
  ExperimentConfig cfg;
  if (!c.preset.empty()) harness::apply_setting(cfg, "preset", c.preset);
  if (!c.config.empty()) cfg = harness::load_config(c.config, cfg);
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got `" + kv + "`");
    harness::apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed) cfg.seeds = {*c.seed};
  cfg.validate();
  return cfg;
}

fs::path out_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("ENKFSQ_OUT_DIR"); env && *env) return env;
  return "enkfsq_out";
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write `" + p.string() + "`");
  return f;
}

std::vector<double> parse_values(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("--values: cannot parse `" + item + "`");
    }
  }
  if (out.empty()) throw ConfigError("--values is empty");
  return out;
}

void print_run(std::ostream& out, const harness::RunRecord& r) {
  out << filters::to_string(r.filter) << " seed=" << r.seed
      << " rmse=" << csv::number(r.metrics.time_avg_rmse)
      << " analysis_rmse=" << csv::number(r.metrics.time_avg_analysis_rmse)
      << " or_fraction=" << csv::number(r.or_fraction());
  if (r.diverged) out << " DIVERGED (" << r.note << ")";
  out << '\n';
}

// Per-run CSVs under dir/runs; returns true when any run diverged.
bool write_runs(const fs::path& dir, const std::vector<harness::RunRecord>& recs,
                std::size_t ma_window, bool quiet, std::ostream& out) {
  fs::create_directories(dir / "runs");
  bool diverged = false;
  for (const auto& r : recs) {
    const std::string stem = harness::run_file_stem(r);
    auto f = open_out(dir / "runs" / (stem + ".csv"));
    harness::write_run_csv(f, r);
    auto g = open_out(dir / "runs" / (stem + "_diag.csv"));
    harness::write_diagnostics_csv(g, r, ma_window);
    diverged = diverged || r.diverged;
    if (!quiet) print_run(out, r);
  }
  auto s = open_out(dir / "runs_summary.csv");
  harness::write_runs_summary_csv(s, recs);
  return diverged;
}

void write_config(const fs::path& dir, const ExperimentConfig& cfg) {
  fs::create_directories(dir);
  auto f = open_out(dir / "config.txt");
  f << cfg.canonical();
}

int finish_sweep(const fs::path& dir, const ExperimentConfig& cfg, const harness::SweepResult& res,
                 bool quiet, std::ostream& out) {
  write_config(dir, cfg);
  const bool diverged = write_runs(dir, res.records, cfg.moving_average_window, true, out);
  auto f = open_out(dir / ("sweep_" + res.name + ".csv"));
  harness::write_sweep_csv(f, res);
  if (!quiet) {
    for (const auto& row : res.rows) {
      out << res.name << '=' << csv::number(row.sweep_value) << ' ' << filters::to_string(row.scheme)
          << " mean_rmse=" << csv::number(row.mean_rmse) << " std_rmse=" << csv::number(row.std_rmse);
      if (row.diverged) out << " diverged=" << row.diverged;
      out << '\n';
    }
  }
  return diverged ? 2 : 0;
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"EnKF-SQ twin experiments for observations with detection limits"};
  app.require_subcommand(1);
  app.footer(
      "Setting precedence, lowest first: built-in defaults, --preset, --config file, "
      "--set key=value, --seed.");

  Common run_opts, n_opts, lim_opts, alpha_opts, clim_opts;
  std::string n_values, lim_values, alpha_values;

  auto* run = app.add_subcommand("run", "Twin experiment for the configured filter and seeds");
  add_common(run, run_opts);

  auto* sweep_n = app.add_subcommand("sweep-n", "Ensemble-size sweep (EnKF-ALL, EnKF-SQ, EnKF-IG)");
  add_common(sweep_n, n_opts);
  sweep_n->add_option("--values", n_values, "Comma-separated ensemble sizes (default 25,35,...,145,150)");

  auto* sweep_lim = app.add_subcommand("sweep-limit", "Detection-limit sweep over OR fractions");
  add_common(sweep_lim, lim_opts);
  sweep_lim->add_option("--values", lim_values, "Comma-separated OR fractions (default 0,0.1,...,0.9)");

  auto* sweep_alpha = app.add_subcommand("sweep-alpha", "sigma_or multiplier sweep, with PDEnKF reference");
  add_common(sweep_alpha, alpha_opts);
  sweep_alpha->add_option("--values", alpha_values, "Comma-separated alphas (default 0.05,0.20,...,1.85)");

  auto* clim = app.add_subcommand("climatology", "Write the climatology samples and the derived limit");
  add_common(clim, clim_opts);

  double prior_mean = 0.0, prior_std = 1.0, mu = 1.0, sigma_obs = 0.3, sigma_or = 1.5;
  std::size_t samples = 10000;
  std::uint64_t demo_seed = 1;
  std::string demo_out;
  bool demo_quiet = false;
  auto* demo = app.add_subcommand("posterior-demo", "Scalar Bayes vs EnKF-SQ posterior for one OR reading");
  demo->add_option("--prior-mean", prior_mean)->default_val(0.0);
  demo->add_option("--prior-std", prior_std)->default_val(1.0);
  demo->add_option("--mu", mu, "Detection limit")->default_val(1.0);
  demo->add_option("--sigma-obs", sigma_obs)->default_val(0.3);
  demo->add_option("--sigma-or", sigma_or)->default_val(1.5);
  demo->add_option("--samples", samples, "Ensemble / posterior sample count")->default_val(10000);
  demo->add_option("--seed", demo_seed)->default_val(1);
  demo->add_option("--out", demo_out, "Output directory (default: $ENKFSQ_OUT_DIR, else ./enkfsq_out)");
  demo->add_flag("--quiet", demo_quiet);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*run) {
      const ExperimentConfig cfg = build_config(run_opts);
      const auto recs = harness::run_twin_experiment(cfg, run_opts.threads);
      const fs::path dir = out_dir(run_opts.out);
      write_config(dir, cfg);
      return write_runs(dir, recs, cfg.moving_average_window, run_opts.quiet, out) ? 2 : 0;
    }
    if (*sweep_n) {
      const ExperimentConfig cfg = build_config(n_opts);
      std::vector<Index> sizes;
      if (n_values.empty()) {
        sizes = harness::default_ensemble_sizes();
      } else {
        for (double v : parse_values(n_values)) {
          if (v < 3 || v != std::floor(v)) throw ConfigError("ensemble sizes must be integers >= 3");
          sizes.push_back(static_cast<Index>(v));
        }
      }
      const auto res = harness::sweep_ensemble_size(cfg, sizes, n_opts.threads);
      return finish_sweep(out_dir(n_opts.out), cfg, res, n_opts.quiet, out);
    }
    if (*sweep_lim) {
      const ExperimentConfig cfg = build_config(lim_opts);
      const auto fr = lim_values.empty() ? harness::default_or_fractions() : parse_values(lim_values);
      for (double f : fr) {
        if (!(f >= 0.0 && f < 1.0)) throw ConfigError("OR fractions must lie in [0, 1)");
      }
      const auto res = harness::sweep_detection_limit(cfg, fr, lim_opts.threads);
      return finish_sweep(out_dir(lim_opts.out), cfg, res, lim_opts.quiet, out);
    }
    if (*sweep_alpha) {
      const ExperimentConfig cfg = build_config(alpha_opts);
      const auto al = alpha_values.empty() ? harness::default_alphas() : parse_values(alpha_values);
      for (double a : al) {
        if (!(a > 0.0)) throw ConfigError("alpha values must be positive");
      }
      const auto res = harness::sweep_alpha(cfg, al, alpha_opts.threads);
      return finish_sweep(out_dir(alpha_opts.out), cfg, res, alpha_opts.quiet, out);
    }
    if (*clim) {
      const ExperimentConfig cfg = build_config(clim_opts);
      const std::uint64_t seed = cfg.seeds.front();
      const auto c = harness::build_climatology(cfg, seed);
      const auto cens = harness::censoring_for(cfg, c);
      const fs::path dir = out_dir(clim_opts.out);
      fs::create_directories(dir);
      auto f = open_out(dir / "climatology.csv");
      obs::write_climatology_csv(f, c);
      if (!clim_opts.quiet) {
        out << "climatology seed=" << seed << " samples=" << c.size()
            << " mu=" << csv::number(cens.limit.mu) << " sigma_or=" << csv::number(cens.sigma_or) << '\n';
      }
      return 0;
    }
    if (*demo) {
      if (!(sigma_obs > 0.0 && sigma_or > 0.0 && prior_std > 0.0)) {
        throw ConfigError("standard deviations must be positive");
      }
      const obs::TwoPieceGaussian d(mu, sigma_obs, sigma_or);
      const auto rep = harness::posterior_demo(prior_mean, prior_std, d, samples, demo_seed);
      const fs::path dir = out_dir(demo_out);
      fs::create_directories(dir);
      auto h = open_out(dir / "posterior_histogram.csv");
      harness::write_posterior_histogram_csv(h, rep);
      auto s = open_out(dir / "posterior_summary.csv");
      harness::write_posterior_summary_csv(s, rep);
      if (!demo_quiet) {
        out << "posterior-demo bayes_mode=" << csv::number(rep.bayes_summary.mode)
            << " sq_mode=" << csv::number(rep.sq_summary.mode)
            << " bayes_std=" << csv::number(rep.bayes_summary.std)
            << " sq_std=" << csv::number(rep.sq_summary.std)
            << " acceptance=" << csv::number(rep.acceptance_rate) << '\n';
      }
      return 0;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace enkfsq::cli
