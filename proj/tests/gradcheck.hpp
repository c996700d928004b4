#pragma once

#include "support.hpp"

#include "rdlt/trainer.hpp"

#include <algorithm>
#include <cmath>

namespace rdlt::testing {

struct Problem {
  Matrix m;
  EntropyModelParams params;
  LambdaToQNet qnet;
  Matrix batch;
  Matrix noise;
  RdObjective obj;
};

inline Problem random_problem(std::uint64_t seed, int blocks) {
  Rng rng(seed);
  Problem p;
  p.m = orthonormalize(Matrix(dct2_matrix(8).to_dense() + 0.05 * random_matrix(64, 64, rng)));
  p.m += 0.01 * random_matrix(64, 64, rng); // slightly off the manifold so the penalty is active
  p.params = EntropyModelParams::initial(64);
  for (int i = 0; i < 64; ++i) {
    p.params.mu[static_cast<std::size_t>(i)] = rng.uniform(-3.0, 3.0);
    p.params.log_sigma[static_cast<std::size_t>(i)] = rng.uniform(1.0, 4.0);
  }
  p.qnet = LambdaToQNet::initial(16, 12.0, 0.01, 0.5, rng);
  for (std::size_t k = 0; k < p.qnet.parameter_count(); ++k) p.qnet.parameter(k) += 0.3 * rng.normal();
  p.batch = rdlt::testing::ar1_blocks(static_cast<std::size_t>(blocks), 8, 0.9, 15.0, seed + 1).to_matrix();
  p.noise.resize(blocks, 64);
  for (Eigen::Index i = 0; i < p.noise.size(); ++i) p.noise.data()[i] = rng.uniform() - 0.5;
  p.obj.lambda = 0.13;
  p.obj.lambda_scale = 650.0;
  p.obj.orth_penalty_weight = 3.0;
  return p;
}

inline double loss_of(const Problem& p) { return rd_loss(p.m, p.params, p.qnet, p.batch, p.noise, p.obj).loss; }

struct FdStats {
  int checked = 0;
  int failed = 0;
  double worst = 0.0;
};

// Relative error with an absolute allowance near zero.
inline void compare(FdStats& s, double analytic, double numeric) {
  ++s.checked;
  const double abs_err = std::abs(analytic - numeric);
  const double rel = abs_err / std::max(std::abs(analytic), std::abs(numeric));
  if (abs_err <= 1e-6) return;
  s.worst = std::max(s.worst, rel);
  if (rel > 1e-3) ++s.failed;
}

inline double central(Problem& p, double& param, double h) {
  const double saved = param;
  param = saved + h;
  const double up = loss_of(p);
  param = saved - h;
  const double down = loss_of(p);
  param = saved;
  return (up - down) / (2 * h);
}


/// Every partial of rd_loss against central differences: h = 1e-4 on M, 1e-5 elsewhere.
inline FdStats check_gradients(Problem& p) {
  const auto g = gradients(p.m, p.params, p.qnet, p.batch, p.noise, p.obj);
  FdStats s;
  for (Eigen::Index k = 0; k < p.m.size(); ++k) compare(s, g.d_transform.data()[k], central(p, p.m.data()[k], 1e-4));
  for (std::size_t i = 0; i < p.params.mu.size(); ++i) {
    compare(s, g.d_mu[i], central(p, p.params.mu[i], 1e-5));
    compare(s, g.d_log_sigma[i], central(p, p.params.log_sigma[i], 1e-5));
  }
  for (std::size_t k = 0; k < p.qnet.parameter_count(); ++k)
    compare(s, g.d_qnet.parameter(k), central(p, p.qnet.parameter(k), 1e-5));
  return s;
}

} // namespace rdlt::testing
