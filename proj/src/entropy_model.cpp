#include "rdlt/entropy_model.hpp"

#include "rdlt/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace rdlt {

EntropyModelParams EntropyModelParams::initial(int positions) {
  RDLT_CHECK_ARG(positions > 0, "entropy model needs at least one position");
  EntropyModelParams p;
  p.mu.assign(static_cast<std::size_t>(positions), 0.0);
  p.log_sigma.assign(static_cast<std::size_t>(positions), 0.0);
  return p;
}

double EntropyModelParams::sigma(int i) const { return std::exp(log_sigma[static_cast<std::size_t>(i)]); }

void EntropyModelParams::serialize(ByteWriter& out) const {
  out.u32(static_cast<std::uint32_t>(mu.size()));
  for (double v : mu) out.f64(v);
  for (double v : log_sigma) out.f64(v);
}

EntropyModelParams EntropyModelParams::deserialize(ByteReader& in) {
  const auto count = in.u32();
  if (count == 0 || count > (1u << 20)) throw IoError(in.context() + ": bad entropy model size");
  EntropyModelParams p;
  p.mu.resize(count);
  p.log_sigma.resize(count);
  for (auto& v : p.mu) v = in.f64();
  for (auto& v : p.log_sigma) v = in.f64();
  for (std::uint32_t i = 0; i < count; ++i)
    if (!std::isfinite(p.mu[i]) || !std::isfinite(p.log_sigma[i]))
      throw IoError(in.context() + ": non-finite entropy parameter");
  return p;
}

double normal_cdf(double u) { return 0.5 * std::erfc(-u / std::numbers::sqrt2); }

double normal_pdf(double u) {
  static const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return inv_sqrt_2pi * std::exp(-0.5 * u * u);
}

namespace {

// Mass of [c - 1/2, c + 1/2] under N(0, sigma^2). Reflecting to c <= 0 makes both CDF
// values lower tails, so far from the mean the difference is taken between two small
// erfc values instead of two numbers close to one.
double centered_mass(double c, double sigma) {
  const double a = -std::abs(c);
  const double k = 1.0 / (sigma * std::numbers::sqrt2);
  const double upper = std::erfc(-(a + 0.5) * k);
  const double lower = std::erfc(-(a - 0.5) * k);
  return 0.5 * (upper - lower);
}

} // namespace

double likelihood(double mu, double sigma, double v) {
  if (!std::isfinite(v)) throw InvalidArgument("likelihood: non-finite coefficient value");
  RDLT_CHECK_ARG(sigma > 0 && std::isfinite(sigma) && std::isfinite(mu), "likelihood: invalid Gaussian parameters");
  return std::max(centered_mass(v - mu, sigma), kLikelihoodFloor);
}

double likelihood(const EntropyModelParams& params, int i, double v) {
  RDLT_CHECK_ARG(i >= 0 && i < params.size(), "likelihood: position out of range");
  return likelihood(params.mu[static_cast<std::size_t>(i)], params.sigma(i), v);
}

LikelihoodPartials likelihood_partials(double mu, double sigma, double v) {
  LikelihoodPartials out;
  const double mass = centered_mass(v - mu, sigma);
  if (mass <= kLikelihoodFloor) {
    out.p = kLikelihoodFloor;
    out.clamped = true;
    return out;
  }
  out.p = mass;
  const double hi = (v + 0.5 - mu) / sigma;
  const double lo = (v - 0.5 - mu) / sigma;
  const double phi_hi = normal_pdf(hi);
  const double phi_lo = normal_pdf(lo);
  out.d_v = (phi_hi - phi_lo) / sigma;
  out.d_mu = -out.d_v;
  out.d_sigma = -(phi_hi * hi - phi_lo * lo) / sigma;
  return out;
}

namespace {

template <class T> double rate_bits_impl(const EntropyModelParams& params, std::span<const T> coeffs) {
  RDLT_CHECK_ARG(coeffs.size() == params.mu.size(), "rate_bits: coefficient count " + std::to_string(coeffs.size()) +
                                                         " != model size " + std::to_string(params.mu.size()));
  double bits = 0.0;
  for (std::size_t i = 0; i < coeffs.size(); ++i)
    bits -= std::log2(likelihood(params, static_cast<int>(i), static_cast<double>(coeffs[i])));
  return bits;
}

} // namespace

double rate_bits(const EntropyModelParams& params, std::span<const double> coeffs) {
  return rate_bits_impl(params, coeffs);
}

double rate_bits(const EntropyModelParams& params, std::span<const std::int32_t> coeffs) {
  return rate_bits_impl(params, coeffs);
}

EntropyModelParams scale_for_step(const EntropyModelParams& params, double q) {
  RDLT_CHECK_ARG(q > 0 && std::isfinite(q), "scale_for_step: step must be > 0");
  EntropyModelParams out = params;
  const double log_q = std::log(q);
  for (auto& m : out.mu) m /= q;
  for (auto& s : out.log_sigma) s -= log_q;
  return out;
}

} // namespace rdlt
