#pragma once

#include "rdlt/transforms.hpp"

#include <vector>

namespace rdlt {

struct KltResult {
  TransformMatrix transform;
  /// Non-increasing; eigenvalue k belongs to column k.
  std::vector<double> eigenvalues;
  /// Mean-removed sample covariance (1/N normalization).
  Matrix covariance;
};

/// Eigenbasis of the sample covariance, columns sorted by descending eigenvalue and signed so
/// each column's largest-magnitude entry is positive. Needs at least n^2 blocks.
KltResult klt_from_blocks(const BlockSet& blocks);

/// Per-position mean-removed covariance with 1/N normalization.
Matrix sample_covariance(const BlockSet& blocks);

struct SotConfig {
  /// Weight on the l0 count, in squared sample units; coefficients below sqrt(weight) are zeroed.
  double threshold_lambda = 0.35 * 40.0 * 40.0;
  int max_iters = 50;
  double tol = 1e-6;

  void validate() const;
};

struct SotResult {
  TransformMatrix transform;
  /// Objective after every half-step: [coeff_1, transform_1, coeff_2, transform_2, ...].
  std::vector<double> objective_history;
  int iterations = 0;
};

/// J(G, C) = ||X - C G^T||_F^2 + lambda ||C||_0 for coefficients C and orthonormal G.
double sot_objective(const Matrix& blocks, const Matrix& coeffs, const Matrix& basis, double threshold_lambda);

/// Zeroes entries with |c| < threshold.
Matrix hard_threshold(const Matrix& coeffs, double threshold);

/// Orthonormal G minimizing ||X - C G^T||_F: G = V U^T for C^T X = U S V^T.
Matrix procrustes_basis(const Matrix& blocks, const Matrix& coeffs);

/// Alternating hard-thresholding / Procrustes minimization of J starting from `init`.
SotResult sot_train(const BlockSet& blocks, const TransformMatrix& init, const SotConfig& config);

} // namespace rdlt
