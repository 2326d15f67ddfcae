#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "enkfsq/climatology.hpp"
#include "enkfsq/ensemble.hpp"
#include "enkfsq/filters.hpp"
#include "enkfsq/models.hpp"
#include "enkfsq/observation.hpp"

namespace enkfsq::harness {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ModelKind { L40, LSST };

std::string_view to_string(ModelKind kind);

/// Declarative twin experiment. Defaults are the L40 setup; `model = LSST`
/// (or a preset) switches every model-dependent default at once.
struct ExperimentConfig {
  ModelKind model = ModelKind::L40;
  filters::FilterKind filter = filters::FilterKind::EnKFSQ;
  Index ensemble_size = 75;
  Index obs_every = 4;
  /// Empty: every variable (L40) or the 80-site network (LSST).
  std::vector<Index> observed_sites;
  /// Target share of out-of-range observations; `mu` overrides it.
  double or_fraction_target = 0.8;
  std::optional<double> mu;
  obs::LimitSide limit_side = obs::LimitSide::Upper;
  double alpha = 1.0;
  double years = 5.0;
  /// Overrides `years` when set.
  std::optional<Index> steps;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  double sigma_obs = 1.0;

  obs::SigmaOrMode sigma_or_mode = obs::SigmaOrMode::ConditionalMean;
  filters::PdenkfMode pdenkf_mode = filters::PdenkfMode::Joint;

  /// Initial-ensemble perturbation size; a variance unless
  /// init_perturbation_is_std.
  double init_perturbation = 3.0;
  bool init_perturbation_is_std = false;

  double truth_forcing = 8.0;
  double forecast_forcing = 8.1;

  models::GridCoordinate lsst_coordinate = models::GridCoordinate::CellIndex;
  double lsst_source_noise_std = 0.01;
  double lsst_velocity_noise_rel = 0.01;

  /// Length of the truth-parameter free run used as climatology; 0 means
  /// the full nominal period of the model.
  Index climatology_steps = 0;
  /// Optional cached climatology (CSV, header `value`).
  std::string climatology_file;

  double divergence_factor = 10.0;
  std::size_t moving_average_window = 50;

  // Derived quantities.
  Index total_steps() const;
  Index effective_climatology_steps() const;
  Index state_size() const;
  std::vector<Index> sites() const;
  models::ModelParams truth_params() const;
  models::ModelParams forecast_params() const;
  double init_perturbation_std() const;

  /// Throws ConfigError on inconsistent settings.
  void validate() const;

  /// Canonical key=value text, one key per line in a fixed order.
  std::string canonical() const;
  /// FNV-1a of canonical(), as 16 hex digits.
  std::string hash() const;

  static ExperimentConfig l40();
  static ExperimentConfig l40_desk();
  static ExperimentConfig lsst();
  static ExperimentConfig lsst_desk();
};

inline constexpr Index kL40StepsPerYear = 4 * 365;
inline constexpr Index kLsstStepsPerYear = 365 * 24 / 10;

/// Applies one key=value setting. Throws ConfigError for unknown keys or
/// unparsable values.
void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value);

/// Flat key=value text with `#` comments. `preset` and `model` keys are
/// applied before all others; the rest in file order.
ExperimentConfig parse_config(std::istream& in, ExperimentConfig base = {});
ExperimentConfig load_config(const std::string& path, ExperimentConfig base = {});

/// Every key accepted by apply_setting, for --help output.
const std::vector<std::string_view>& config_keys();

}  // namespace enkfsq::harness
