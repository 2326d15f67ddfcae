#include "enkfsq/observation.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>

#include "enkfsq/climatology.hpp"
#include "enkfsq/csv.hpp"
#include "enkfsq/two_piece.hpp"

namespace enkfsq::obs {

// ---- TwoPieceGaussian --------------------------------------------------------

TwoPieceGaussian::TwoPieceGaussian(double mu, double sigma1, double sigma2)
    : mu_(mu), sigma1_(sigma1), sigma2_(sigma2) {
  if (!std::isfinite(mu)) throw std::invalid_argument("two-piece mode must be finite");
  if (!(sigma1 > 0.0) || !(sigma2 > 0.0) || !std::isfinite(sigma1) || !std::isfinite(sigma2)) {
    throw std::invalid_argument("two-piece standard deviations must be positive and finite");
  }
  w_ = std::sqrt(2.0 / std::numbers::pi) / (sigma1_ + sigma2_);
}

double TwoPieceGaussian::log_pdf(double x) const noexcept {
  const double s = x <= mu_ ? sigma1_ : sigma2_;
  const double z = (x - mu_) / s;
  return std::log(w_) - 0.5 * z * z;
}

double TwoPieceGaussian::pdf(double x) const noexcept { return std::exp(log_pdf(x)); }

double TwoPieceGaussian::cdf(double x) const noexcept {
  const double total = sigma1_ + sigma2_;
  if (x <= mu_) {
    return sigma1_ / total * std::erfc(-(x - mu_) / (sigma1_ * std::numbers::sqrt2));
  }
  return sigma1_ / total + sigma2_ / total * std::erf((x - mu_) / (sigma2_ * std::numbers::sqrt2));
}

double TwoPieceGaussian::variance() const noexcept {
  const double d = sigma2_ - sigma1_;
  return (1.0 - 2.0 / std::numbers::pi) * d * d + sigma1_ * sigma2_;
}

TwoPieceArSampler::TwoPieceArSampler(TwoPieceGaussian d, double proposal_std)
    : d_(d), proposal_std_(proposal_std) {
  if (!(proposal_std >= std::max(d.sigma1(), d.sigma2()))) {
    throw std::invalid_argument("proposal std " + std::to_string(proposal_std) +
                                " does not dominate the two-piece target (needs >= " +
                                std::to_string(std::max(d.sigma1(), d.sigma2())) + ")");
  }
}

// ---- batches -----------------------------------------------------------------

std::size_t ObservationBatch::or_count() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(rows.begin(), rows.end(), [](const Observation& o) { return o.out_of_range(); }));
}

ObservationBatch ObservationBatch::hard_only() const {
  ObservationBatch out;
  std::copy_if(rows.begin(), rows.end(), std::back_inserter(out.rows),
               [](const Observation& o) { return !o.out_of_range(); });
  return out;
}

ObservationOperator ObservationBatch::operator_for(Index state_size) const {
  std::vector<Index> sites;
  sites.reserve(rows.size());
  for (const auto& o : rows) sites.push_back(o.site);
  return ObservationOperator(std::move(sites), state_size);
}

void ObservationBatch::set_sigma_or(double sigma_or) {
  for (auto& o : rows) {
    if (o.out_of_range()) o.sigma_or = sigma_or;
  }
}

ObservationBatch observe_truth(const VectorXd& truth, const ObservationOperator& network,
                               double sigma_obs, const DetectionLimit& limit,
                               std::uint64_t seed, std::uint64_t step) {
  if (!(sigma_obs > 0.0)) throw std::invalid_argument("sigma_obs must be positive");
  if (truth.size() != network.state_size()) {
    throw std::invalid_argument("truth state does not match the observation network");
  }
  const double s = limit.sign();
  ObservationBatch batch;
  batch.rows.reserve(network.rows().size());
  for (Index site : network.rows()) {
    auto gen = rng::stream(seed, rng::Stream::ObservationNoise, step,
                           static_cast<std::uint64_t>(site));
    std::normal_distribution<double> gauss(0.0, 1.0);
    // Work in the upper-limit frame; mirrored back for lower limits.
    const double v = s * truth(site) + sigma_obs * gauss(gen);
    Observation o;
    o.site = site;
    o.sigma_obs = sigma_obs;
    o.limit = limit;
    if (!(v > s * limit.mu)) o.value = s * v;
    batch.rows.push_back(o);
  }
  return batch;
}

// ---- climatology -------------------------------------------------------------

ClimatologyEstimate::ClimatologyEstimate(std::vector<double> samples)
    : samples_(std::move(samples)) {
  if (samples_.empty()) throw std::invalid_argument("climatology is empty");
  for (double v : samples_) {
    if (!std::isfinite(v)) throw std::invalid_argument("climatology contains non-finite samples");
  }
}

double sigma_or_from_climatology(const ClimatologyEstimate& clim, double mu, SigmaOrMode mode) {
  std::size_t count = 0;
  double sum = 0.0;
  for (double y : clim.samples()) {
    if (y > mu) {
      ++count;
      sum += y;
    }
  }
  if (count < kMinExceedances) {
    throw std::invalid_argument("only " + std::to_string(count) +
                                " climatology samples exceed the detection limit (need " +
                                std::to_string(kMinExceedances) + ")");
  }
  if (mode == SigmaOrMode::ConditionalMean) return sum / static_cast<double>(count) - mu;
  return sum / static_cast<double>(clim.size()) - mu;
}

double detection_limit_for_or_fraction(const ClimatologyEstimate& clim, double target_fraction) {
  if (!(target_fraction >= 0.0 && target_fraction <= 1.0)) {
    throw std::invalid_argument("OR fraction must lie in [0, 1]");
  }
  if (target_fraction == 0.0) return std::numeric_limits<double>::infinity();
  if (target_fraction == 1.0) return -std::numeric_limits<double>::infinity();
  std::vector<double> sorted = clim.samples();
  std::sort(sorted.begin(), sorted.end());
  const double pos = (1.0 - target_fraction) * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

void write_climatology_csv(std::ostream& out, const ClimatologyEstimate& clim) {
  out << "value\n";
  for (double v : clim.samples()) out << csv::number(v) << '\n';
}

ClimatologyEstimate read_climatology_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "value") {
    throw std::runtime_error("climatology file must start with a `value` header");
  }
  std::vector<double> samples;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(line, &used);
    } catch (const std::exception&) {
      throw std::runtime_error("bad climatology value: " + line);
    }
    if (used != line.size()) throw std::runtime_error("bad climatology value: " + line);
    samples.push_back(v);
  }
  return ClimatologyEstimate(std::move(samples));
}

}  // namespace enkfsq::obs
