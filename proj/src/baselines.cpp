#include "rdlt/baselines.hpp"

#include "rdlt/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace rdlt {

Matrix sample_covariance(const BlockSet& blocks) {
  RDLT_CHECK_ARG(!blocks.empty(), "covariance: no blocks");
  const Matrix x = blocks.to_matrix();
  const RowVector mean = x.colwise().mean();
  const Matrix centered = x.rowwise() - mean;
  return (centered.transpose() * centered) / static_cast<double>(x.rows());
}

KltResult klt_from_blocks(const BlockSet& blocks) {
  const int dim = blocks.block_size();
  RDLT_CHECK_ARG(blocks.count() >= static_cast<std::size_t>(dim),
                 "klt: need at least n^2 = " + std::to_string(dim) + " blocks, got " + std::to_string(blocks.count()));
  KltResult out;
  out.covariance = sample_covariance(blocks);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(Eigen::MatrixXd(out.covariance));
  if (solver.info() != Eigen::Success) throw NumericError("klt: eigensolver did not converge");

  // Eigen returns ascending eigenvalues; reverse and fix each column's sign.
  Matrix basis(dim, dim);
  out.eigenvalues.resize(static_cast<std::size_t>(dim));
  for (int k = 0; k < dim; ++k) {
    const int src = dim - 1 - k;
    Eigen::VectorXd v = solver.eigenvectors().col(src);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    basis.col(k) = v;
    out.eigenvalues[static_cast<std::size_t>(k)] = solver.eigenvalues()(src);
  }
  out.transform = TransformMatrix::dense(blocks.n(), std::move(basis), "klt-" + std::to_string(blocks.n()), true);
  return out;
}

void SotConfig::validate() const {
  RDLT_CHECK_ARG(threshold_lambda >= 0, "sot: threshold_lambda must be >= 0");
  RDLT_CHECK_ARG(max_iters >= 1, "sot: max_iters must be >= 1");
  RDLT_CHECK_ARG(tol > 0, "sot: tol must be > 0");
}

Matrix hard_threshold(const Matrix& coeffs, double threshold) {
  return coeffs.unaryExpr([threshold](double c) { return std::abs(c) < threshold ? 0.0 : c; });
}

double sot_objective(const Matrix& blocks, const Matrix& coeffs, const Matrix& basis, double threshold_lambda) {
  const double fit = (blocks - coeffs * basis.transpose()).squaredNorm();
  const auto nonzero = static_cast<double>((coeffs.array() != 0.0).count());
  return fit + threshold_lambda * nonzero;
}

Matrix procrustes_basis(const Matrix& blocks, const Matrix& coeffs) {
  const Eigen::MatrixXd cross = coeffs.transpose() * blocks;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (svd.info() != Eigen::Success) throw NumericError("sot: SVD did not converge");
  return svd.matrixV() * svd.matrixU().transpose();
}

SotResult sot_train(const BlockSet& blocks, const TransformMatrix& init, const SotConfig& config) {
  config.validate();
  RDLT_CHECK_ARG(!blocks.empty(), "sot: no blocks");
  RDLT_CHECK_ARG(init.n() == blocks.n(), "sot: init transform size does not match blocks");
  RDLT_CHECK_ARG(orthonormality_defect(init) <= 1e-9, "sot: init transform is not orthonormal");

  const Matrix x = blocks.to_matrix();
  const double threshold = std::sqrt(config.threshold_lambda);
  Matrix g = init.to_dense();

  SotResult out;
  double previous = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < config.max_iters; ++iter) {
    const Matrix c = hard_threshold(x * g, threshold);
    out.objective_history.push_back(sot_objective(x, c, g, config.threshold_lambda));

    g = procrustes_basis(x, c);
    out.objective_history.push_back(sot_objective(x, c, g, config.threshold_lambda));
    out.iterations = iter + 1;

    const double current = out.objective_history.back();
    if (std::isfinite(previous) && std::abs(previous - current) <= config.tol * std::max(std::abs(previous), 1e-300))
      break;
    previous = current;
  }
  out.transform = TransformMatrix::dense(blocks.n(), orthonormalize(g), "sot-" + std::to_string(blocks.n()), true);
  return out;
}

} // namespace rdlt
