#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <random>
#include <stdexcept>

namespace enkfsq::obs {

/// Two Gaussian halves joined at their common mode mu: std sigma1 on the
/// left (x <= mu), sigma2 on the right. Used as the likelihood of an
/// out-of-range reading at an upper detection limit, with sigma1 = sigma_obs
/// and sigma2 = sigma_or.
class TwoPieceGaussian {
 public:
  TwoPieceGaussian(double mu, double sigma1, double sigma2);

  double mu() const noexcept { return mu_; }
  double sigma1() const noexcept { return sigma1_; }
  double sigma2() const noexcept { return sigma2_; }

  /// Normalizer W = sqrt(2/pi) / (sigma1 + sigma2).
  double w() const noexcept { return w_; }

  double pdf(double x) const noexcept;
  double cdf(double x) const noexcept;
  double log_pdf(double x) const noexcept;

  /// Probability mass on x <= mu, sigma1 / (sigma1 + sigma2).
  double left_mass() const noexcept { return sigma1_ / (sigma1_ + sigma2_); }
  double mean() const noexcept {
    return mu_ + std::sqrt(2.0 / std::numbers::pi) * (sigma2_ - sigma1_);
  }
  double variance() const noexcept;

 private:
  double mu_;
  double sigma1_;
  double sigma2_;
  double w_;
};

/// Exact draw by composition: choose a half by its mass, then reflect a
/// half-normal draw onto it.
template <class URBG>
double sample_two_piece_exact(const TwoPieceGaussian& d, URBG& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const bool left = unit(rng) < d.left_mass();
  const double z = std::abs(gauss(rng));
  return left ? d.mu() - z * d.sigma1() : d.mu() + z * d.sigma2();
}

/// Acceptance-rejection sampler with proposal N(mu, s^2), s >= max(sigma1,
/// sigma2). The envelope constant is M = 2 s / (sigma1 + sigma2), attained at
/// x = mu, so the long-run acceptance rate is (sigma1 + sigma2) / (2 s).
class TwoPieceArSampler {
 public:
  TwoPieceArSampler(TwoPieceGaussian d, double proposal_std);

  template <class URBG>
  double operator()(URBG& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> proposal(d_.mu(), proposal_std_);
    for (;;) {
      const double x = proposal(rng);
      ++proposed_;
      const double sigma = x <= d_.mu() ? d_.sigma1() : d_.sigma2();
      const double dx = x - d_.mu();
      // f(x) / (M q(x))
      const double ratio =
          std::exp(-0.5 * dx * dx * (1.0 / (sigma * sigma) - 1.0 / (proposal_std_ * proposal_std_)));
      if (unit(rng) < ratio) {
        ++accepted_;
        return x;
      }
    }
  }

  double envelope_constant() const noexcept {
    return 2.0 * proposal_std_ / (d_.sigma1() + d_.sigma2());
  }
  double expected_acceptance() const noexcept { return 1.0 / envelope_constant(); }

  std::size_t proposed() const noexcept { return proposed_; }
  std::size_t accepted() const noexcept { return accepted_; }

 private:
  TwoPieceGaussian d_;
  double proposal_std_;
  std::size_t proposed_ = 0;
  std::size_t accepted_ = 0;
};

template <class URBG>
double sample_two_piece_ar(const TwoPieceGaussian& d, double proposal_std, URBG& rng) {
  TwoPieceArSampler sampler(d, proposal_std);
  return sampler(rng);
}

}  // namespace enkfsq::obs
