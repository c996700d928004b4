#pragma once

#include "rdlt/binary_io.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace rdlt {

/// Per-position Gaussian parameters, in unquantized coefficient units.
/// sigma_i = exp(log_sigma_i) keeps every scale strictly positive.
struct EntropyModelParams {
  std::vector<double> mu;
  std::vector<double> log_sigma;

  /// mu = 0, sigma = 1 for `positions` coefficients.
  static EntropyModelParams initial(int positions);

  int size() const { return static_cast<int>(mu.size()); }
  double sigma(int i) const;

  void serialize(ByteWriter& out) const;
  static EntropyModelParams deserialize(ByteReader& in);
};

/// Lower clamp on the per-coefficient probability mass (caps cost at ~39.86 bits).
inline constexpr double kLikelihoodFloor = 1e-12;

/// Standard normal CDF and density.
double normal_cdf(double u);
double normal_pdf(double u);

/// Mass of N(mu, sigma^2) convolved with U(-1/2, 1/2) at v, clamped below at kLikelihoodFloor.
double likelihood(double mu, double sigma, double v);
double likelihood(const EntropyModelParams& params, int i, double v);

/// Likelihood with its partial derivatives. Partials are zero where the floor is active.
struct LikelihoodPartials {
  double p = 0.0;
  double d_v = 0.0;
  double d_mu = 0.0;
  double d_sigma = 0.0;
  bool clamped = false;
};
LikelihoodPartials likelihood_partials(double mu, double sigma, double v);

/// Sum over positions of -log2 likelihood.
double rate_bits(const EntropyModelParams& params, std::span<const double> coeffs);
double rate_bits(const EntropyModelParams& params, std::span<const std::int32_t> coeffs);

/// Parameters for coefficients divided by step q: mu / q and sigma / q.
EntropyModelParams scale_for_step(const EntropyModelParams& params, double q);

} // namespace rdlt
