#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <optional>
#include <vector>

#include "enkfsq/ensemble.hpp"
#include "enkfsq/rng.hpp"

namespace enkfsq::obs {

enum class LimitSide { Upper, Lower };

/// Gauge detection limit. Lower limits are handled by mirroring: with
/// s = sign(), s*value > s*mu means out of range on either side.
struct DetectionLimit {
  double mu = 0.0;
  LimitSide side = LimitSide::Upper;

  double sign() const noexcept { return side == LimitSide::Upper ? 1.0 : -1.0; }
  bool exceeds(double value) const noexcept { return sign() * value > sign() * mu; }
  DetectionLimit mirrored() const noexcept {
    return {-mu, side == LimitSide::Upper ? LimitSide::Lower : LimitSide::Upper};
  }
};

struct Observation {
  Index site = 0;
  std::optional<double> value;  // empty: out of range (soft datum)
  double sigma_obs = 1.0;
  std::optional<double> sigma_or;
  DetectionLimit limit;

  bool out_of_range() const noexcept { return !value.has_value(); }
};

struct ObservationBatch {
  std::vector<Observation> rows;

  std::size_t size() const noexcept { return rows.size(); }
  bool empty() const noexcept { return rows.empty(); }
  std::size_t or_count() const noexcept;

  /// Only the in-range rows.
  ObservationBatch hard_only() const;
  ObservationOperator operator_for(Index state_size) const;
  /// Sets sigma_or on every out-of-range row.
  void set_sigma_or(double sigma_or);
};

/// Noisy measurement of the truth at every site of `network`, censored at
/// `limit`: v = H x + N(0, sigma_obs^2), emitted out-of-range when it
/// exceeds the limit. Site k draws from rng::stream(seed, ObservationNoise,
/// step, site). Throws std::invalid_argument unless sigma_obs > 0.
ObservationBatch observe_truth(const VectorXd& truth, const ObservationOperator& network,
                               double sigma_obs, const DetectionLimit& limit,
                               std::uint64_t seed, std::uint64_t step);

}  // namespace enkfsq::obs
