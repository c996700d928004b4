#pragma once

#include "rdlt/codec.hpp"
#include "rdlt/random.hpp"
#include "rdlt/transforms.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

namespace rdlt::testing {

/// Separable AR(1) blocks: X = L Z L^T with L the Cholesky factor of rho^|i-j| and Z
/// i.i.d. normal with standard deviation `sigma`, rounded and clamped to [-255, 255].
inline BlockSet ar1_blocks(std::size_t count, int n, double rho, double sigma, std::uint64_t seed) {
  Eigen::MatrixXd cov(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) cov(i, j) = std::pow(rho, std::abs(i - j));
  const Eigen::MatrixXd l = cov.llt().matrixL();
  Rng rng(seed);
  BlockSet out(n);
  std::vector<std::int16_t> block(static_cast<std::size_t>(n * n));
  Eigen::MatrixXd z(n, n);
  for (std::size_t b = 0; b < count; ++b) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) z(i, j) = sigma * rng.normal();
    const Eigen::MatrixXd x = l * z * l.transpose();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        block[static_cast<std::size_t>(i * n + j)] =
            static_cast<std::int16_t>(std::clamp(std::round(x(i, j)), -255.0, 255.0));
    out.push_back(block);
  }
  return out;
}

/// Integer blocks uniform in [lo, hi].
inline BlockSet uniform_blocks(std::size_t count, int n, int lo, int hi, std::uint64_t seed) {
  Rng rng(seed);
  BlockSet out(n);
  std::vector<std::int16_t> block(static_cast<std::size_t>(n * n));
  for (std::size_t b = 0; b < count; ++b) {
    for (auto& s : block) s = static_cast<std::int16_t>(lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))));
    out.push_back(block);
  }
  return out;
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

/// Sum over positions of count * H(empirical symbol distribution at that position).
inline double positional_entropy_bits(const std::vector<std::int32_t>& symbols, int dim) {
  std::vector<std::map<std::int32_t, std::size_t>> hist(static_cast<std::size_t>(dim));
  for (std::size_t i = 0; i < symbols.size(); ++i) ++hist[i % static_cast<std::size_t>(dim)][symbols[i]];
  double bits = 0.0;
  for (const auto& h : hist) {
    std::size_t total = 0;
    for (const auto& [s, c] : h) total += c;
    for (const auto& [s, c] : h) bits -= static_cast<double>(c) * std::log2(static_cast<double>(c) / static_cast<double>(total));
  }
  return bits;
}

/// Rounded Laplacian draw clamped to the coder's symbol range.
inline std::int32_t laplacian(Rng& rng, double scale) {
  const double u = rng.uniform() - 0.5;
  const double mag = -scale * std::log(1.0 - 2.0 * std::abs(u));
  return static_cast<std::int32_t>(std::clamp(std::round(u < 0 ? -mag : mag), double(kMinSymbol), double(kMaxSymbol)));
}

} // namespace rdlt::testing
