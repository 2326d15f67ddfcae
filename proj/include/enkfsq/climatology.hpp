#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

namespace enkfsq::obs {

/// Empirical climatology of an observed quantity (a long free run with
/// observation noise). Only tail statistics of the samples are used.
class ClimatologyEstimate {
 public:
  explicit ClimatologyEstimate(std::vector<double> samples);

  const std::vector<double>& samples() const noexcept { return samples_; }
  std::size_t size() const noexcept { return samples_.size(); }

 private:
  std::vector<double> samples_;
};

enum class SigmaOrMode {
  /// Mean exceedance over mu among samples above mu.
  ConditionalMean,
  /// -mu + (1/K) sum_{y > mu} y over all K samples; the tail integral taken
  /// literally, without normalizing by the tail mass.
  Unnormalized,
};

inline constexpr std::size_t kMinExceedances = 100;

/// sigma_or from the climatological tail above mu. Throws
/// std::invalid_argument if fewer than kMinExceedances samples exceed mu.
double sigma_or_from_climatology(const ClimatologyEstimate& clim, double mu,
                                 SigmaOrMode mode = SigmaOrMode::ConditionalMean);

/// Empirical (1 - target_fraction) quantile (linear interpolation between
/// order statistics), so that censoring above it flags about target_fraction
/// of the samples. 0 returns +inf (no censoring); 1 returns -inf.
double detection_limit_for_or_fraction(const ClimatologyEstimate& clim, double target_fraction);

/// Cache format: header `value`, one sample per line.
void write_climatology_csv(std::ostream& out, const ClimatologyEstimate& clim);
ClimatologyEstimate read_climatology_csv(std::istream& in);

}  // namespace enkfsq::obs
