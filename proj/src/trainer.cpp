#include "rdlt/trainer.hpp"

#include "rdlt/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace rdlt {

// ---------------------------------------------------------------------------
// Configuration

void TrainConfig::validate() const {
  RDLT_CHECK_ARG(n >= 2, "train: n must be >= 2");
  RDLT_CHECK_ARG(lambda_lo > 0 && lambda_lo <= lambda_hi, "train: need 0 < lambda_lo <= lambda_hi");
  RDLT_CHECK_ARG(lambda_scale > 0, "train: lambda_scale must be > 0");
  RDLT_CHECK_ARG(phase1_steps >= 0 && phase2_steps >= 0, "train: step counts must be >= 0");
  RDLT_CHECK_ARG(batch_size >= 1, "train: batch_size must be >= 1");
  RDLT_CHECK_ARG(learning_rate > 0 && aux_learning_rate >= 0, "train: learning rates must be positive");
  RDLT_CHECK_ARG(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && epsilon > 0, "train: bad optimizer moments");
  RDLT_CHECK_ARG(orthonormalize_every >= 0, "train: orthonormalize_every must be >= 0");
  RDLT_CHECK_ARG(orth_penalty_weight >= 0, "train: orth_penalty_weight must be >= 0");
  RDLT_CHECK_ARG(qnet_hidden >= 1, "train: qnet_hidden must be >= 1");
  RDLT_CHECK_ARG(initial_step > 1, "train: initial_step must be > 1");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"n", n},
          {"lambda_lo", lambda_lo},
          {"lambda_hi", lambda_hi},
          {"lambda_scale", lambda_scale},
          {"phase1_steps", phase1_steps},
          {"phase2_steps", phase2_steps},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"aux_learning_rate", aux_learning_rate},
          {"beta1", beta1},
          {"beta2", beta2},
          {"epsilon", epsilon},
          {"seed", seed},
          {"orthonormalize_every", orthonormalize_every},
          {"orth_penalty_weight", orth_penalty_weight},
          {"tangent_gradient", tangent_gradient},
          {"qnet_hidden", qnet_hidden},
          {"initial_step", initial_step}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.n = j.value("n", c.n);
  c.lambda_lo = j.value("lambda_lo", c.lambda_lo);
  c.lambda_hi = j.value("lambda_hi", c.lambda_hi);
  c.lambda_scale = j.value("lambda_scale", c.lambda_scale);
  c.phase1_steps = j.value("phase1_steps", c.phase1_steps);
  c.phase2_steps = j.value("phase2_steps", c.phase2_steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.aux_learning_rate = j.value("aux_learning_rate", c.aux_learning_rate);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.seed = j.value("seed", c.seed);
  c.orthonormalize_every = j.value("orthonormalize_every", c.orthonormalize_every);
  c.orth_penalty_weight = j.value("orth_penalty_weight", c.orth_penalty_weight);
  c.tangent_gradient = j.value("tangent_gradient", c.tangent_gradient);
  c.qnet_hidden = j.value("qnet_hidden", c.qnet_hidden);
  c.initial_step = j.value("initial_step", c.initial_step);
  return c;
}

// ---------------------------------------------------------------------------
// Lambda -> step network

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

struct QnetTrace {
  double input = 0.0;
  std::vector<double> hidden;
  double output = 0.0;
  double step = 0.0;
};

QnetTrace run_qnet(const LambdaToQNet& net, double lambda) {
  RDLT_CHECK_ARG(lambda > 0 && std::isfinite(lambda), "qnet: lambda must be > 0");
  QnetTrace t;
  t.input = std::log(lambda);
  t.hidden.resize(net.w1.size());
  t.output = net.b2;
  for (std::size_t j = 0; j < net.w1.size(); ++j) {
    t.hidden[j] = std::tanh(net.w1[j] * t.input + net.b1[j]);
    t.output += net.w2[j] * t.hidden[j];
  }
  t.step = softplus(t.output) + 1.0;
  return t;
}

} // namespace

LambdaToQNet LambdaToQNet::zeros(int hidden) {
  RDLT_CHECK_ARG(hidden >= 1, "qnet: hidden width must be >= 1");
  LambdaToQNet net;
  const auto h = static_cast<std::size_t>(hidden);
  net.w1.assign(h, 0.0);
  net.b1.assign(h, 0.0);
  net.w2.assign(h, 0.0);
  return net;
}

LambdaToQNet LambdaToQNet::initial(int hidden, double step, double lambda_lo, double lambda_hi, Rng& rng) {
  RDLT_CHECK_ARG(step > 1, "qnet: initial step must be > 1");
  RDLT_CHECK_ARG(lambda_lo > 0 && lambda_lo <= lambda_hi, "qnet: need 0 < lambda_lo <= lambda_hi");
  auto net = zeros(hidden);
  const double center = 0.5 * (std::log(lambda_lo) + std::log(lambda_hi));
  const double half_width = std::max(0.5 * (std::log(lambda_hi) - std::log(lambda_lo)), 0.5);
  const double scale = 1.0 / std::sqrt(static_cast<double>(hidden));
  // Pre-activations stay within about [-1.5, 1.5] over the lambda range, clear of tanh saturation.
  for (int j = 0; j < hidden; ++j) {
    const double w = rng.uniform(-1.0, 1.0) / half_width;
    net.w1[static_cast<std::size_t>(j)] = w;
    net.b1[static_cast<std::size_t>(j)] = -w * center + rng.uniform(-0.5, 0.5);
    net.w2[static_cast<std::size_t>(j)] = 0.1 * scale * rng.uniform(-1.0, 1.0);
  }
  // Inverse softplus of (step - 1), ignoring the small hidden contribution.
  net.b2 = std::log(std::expm1(step - 1.0));
  return net;
}

double& LambdaToQNet::parameter(std::size_t k) {
  const std::size_t h = w1.size();
  if (k < h) return w1[k];
  if (k < 2 * h) return b1[k - h];
  if (k < 3 * h) return w2[k - 2 * h];
  RDLT_CHECK_ARG(k == 3 * h, "qnet: parameter index out of range");
  return b2;
}

double LambdaToQNet::parameter(std::size_t k) const { return const_cast<LambdaToQNet*>(this)->parameter(k); }

void LambdaToQNet::serialize(ByteWriter& out) const {
  out.u32(static_cast<std::uint32_t>(w1.size()));
  for (double v : w1) out.f64(v);
  for (double v : b1) out.f64(v);
  for (double v : w2) out.f64(v);
  out.f64(b2);
}

LambdaToQNet LambdaToQNet::deserialize(ByteReader& in) {
  const auto h = in.u32();
  if (h == 0 || h > 4096) throw IoError(in.context() + ": bad qnet width " + std::to_string(h));
  auto net = zeros(static_cast<int>(h));
  for (auto& v : net.w1) v = in.f64();
  for (auto& v : net.b1) v = in.f64();
  for (auto& v : net.w2) v = in.f64();
  net.b2 = in.f64();
  return net;
}

double qnet_forward(const LambdaToQNet& net, double lambda) { return run_qnet(net, lambda).step; }

// ---------------------------------------------------------------------------
// Loss and gradients

namespace {

RdTerms evaluate(const Matrix& m, const EntropyModelParams& params, const LambdaToQNet& qnet, const Matrix& x,
                 const Matrix& noise, const RdObjective& obj, RdGradients* grads) {
  RDLT_CHECK_ARG(x.rows() >= 1, "rd_loss: empty batch");
  RDLT_CHECK_ARG(m.rows() == m.cols() && m.cols() == x.cols(), "rd_loss: transform/batch shape mismatch");
  RDLT_CHECK_ARG(noise.rows() == x.rows() && noise.cols() == x.cols(), "rd_loss: noise shape mismatch");
  RDLT_CHECK_ARG(params.size() == x.cols(), "rd_loss: entropy model size mismatch");
  RDLT_CHECK_ARG(obj.lambda >= 0 && obj.lambda_scale > 0 && obj.orth_penalty_weight >= 0,
                 "rd_loss: invalid objective weights");

  const Eigen::Index batch = x.rows();
  const Eigen::Index dim = x.cols();
  const double count = static_cast<double>(batch * dim);

  QnetTrace trace;
  if (obj.fixed_step) {
    RDLT_CHECK_ARG(*obj.fixed_step > 0, "rd_loss: fixed step must be > 0");
    trace.step = *obj.fixed_step;
  } else {
    // qnet takes log(lambda); lambda = 0 is only meaningful with a fixed step.
    trace = run_qnet(qnet, obj.lambda);
  }
  const double q = trace.step;

  const Matrix y = x * m;
  const Matrix y_noisy = y / q + noise;
  const Matrix x_hat = q * (y_noisy * m.transpose());
  const Matrix diff = x - x_hat;

  RdTerms terms;
  terms.step = q;
  terms.distortion = diff.squaredNorm() / count;

  std::vector<double> mu_q(static_cast<std::size_t>(dim));
  std::vector<double> sigma_q(static_cast<std::size_t>(dim));
  for (Eigen::Index i = 0; i < dim; ++i) {
    mu_q[static_cast<std::size_t>(i)] = params.mu[static_cast<std::size_t>(i)] / q;
    sigma_q[static_cast<std::size_t>(i)] = params.sigma(static_cast<int>(i)) / q;
  }

  const double rate_weight = obj.lambda * obj.lambda_scale;
  Matrix d_y_noisy;
  std::vector<double> d_mu_q;
  std::vector<double> d_sigma_q;
  if (grads) {
    d_y_noisy.setZero(batch, dim);
    d_mu_q.assign(static_cast<std::size_t>(dim), 0.0);
    d_sigma_q.assign(static_cast<std::size_t>(dim), 0.0);
  }
  const double d_bits = rate_weight / count / std::numbers::ln2;
  double nats = 0.0;
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (Eigen::Index i = 0; i < dim; ++i) {
      const auto k = static_cast<std::size_t>(i);
      const auto lp = likelihood_partials(mu_q[k], sigma_q[k], y_noisy(b, i));
      nats -= std::log(lp.p);
      if (grads && !lp.clamped) {
        const double g = -d_bits / lp.p;
        d_y_noisy(b, i) += g * lp.d_v;
        d_mu_q[k] += g * lp.d_mu;
        d_sigma_q[k] += g * lp.d_sigma;
      }
    }
  }
  terms.rate = nats / std::numbers::ln2 / count;

  Matrix gram_defect;
  double penalty = 0.0;
  if (obj.orth_penalty_weight > 0) {
    gram_defect = m.transpose() * m;
    gram_defect.diagonal().array() -= 1.0;
    penalty = obj.orth_penalty_weight * gram_defect.squaredNorm();
  }
  terms.loss = terms.distortion + rate_weight * terms.rate + penalty;
  if (!std::isfinite(terms.loss)) throw NumericError("rd_loss: non-finite loss");
  if (!grads) return terms;

  // Distortion path through x_hat = q * y_noisy * m^T.
  const Matrix g_xhat = (-2.0 / count) * diff;
  d_y_noisy.noalias() += q * (g_xhat * m);
  Matrix d_m = q * (g_xhat.transpose() * y_noisy);
  double d_q = g_xhat.cwiseProduct(x_hat).sum() / q;

  // Entropy parameters enter as mu / q and exp(log_sigma) / q.
  grads->d_mu.assign(static_cast<std::size_t>(dim), 0.0);
  grads->d_log_sigma.assign(static_cast<std::size_t>(dim), 0.0);
  for (std::size_t i = 0; i < static_cast<std::size_t>(dim); ++i) {
    grads->d_mu[i] = d_mu_q[i] / q;
    d_q -= d_mu_q[i] * mu_q[i] / q;
    grads->d_log_sigma[i] = d_sigma_q[i] * sigma_q[i];
    d_q -= d_sigma_q[i] * sigma_q[i] / q;
  }

  // y_noisy = y / q + noise, y = x m.
  const Matrix d_y = d_y_noisy / q;
  d_q -= d_y.cwiseProduct(y).sum() / q;
  d_m.noalias() += x.transpose() * d_y;

  if (obj.orth_penalty_weight > 0) d_m.noalias() += (4.0 * obj.orth_penalty_weight) * (m * gram_defect);

  grads->d_transform = std::move(d_m);
  grads->d_qnet = LambdaToQNet::zeros(qnet.hidden());
  if (!obj.fixed_step) {
    const double d_out = d_q * sigmoid(trace.output);
    grads->d_qnet.b2 = d_out;
    for (std::size_t j = 0; j < qnet.w1.size(); ++j) {
      const double h = trace.hidden[j];
      grads->d_qnet.w2[j] = d_out * h;
      const double d_pre = d_out * qnet.w2[j] * (1.0 - h * h);
      grads->d_qnet.w1[j] = d_pre * trace.input;
      grads->d_qnet.b1[j] = d_pre;
    }
  }
  grads->terms = terms;
  return terms;
}

} // namespace

RdTerms rd_loss(const Matrix& transform, const EntropyModelParams& params, const LambdaToQNet& qnet,
                const Matrix& batch, const Matrix& noise, const RdObjective& objective) {
  return evaluate(transform, params, qnet, batch, noise, objective, nullptr);
}

RdGradients gradients(const Matrix& transform, const EntropyModelParams& params, const LambdaToQNet& qnet,
                      const Matrix& batch, const Matrix& noise, const RdObjective& objective) {
  RdGradients g;
  evaluate(transform, params, qnet, batch, noise, objective, &g);
  return g;
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

class Adam {
public:
  Adam(std::size_t size, double lr, const TrainConfig& c)
      : m_(size, 0.0), v_(size, 0.0), lr_(lr), beta1_(c.beta1), beta2_(c.beta2), eps_(c.epsilon) {}

  void begin_step() {
    ++t_;
    corr1_ = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    corr2_ = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  }

  /// Records `grad` and returns the step to add to the parameter.
  double step(std::size_t k, double grad) {
    m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * grad;
    v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * grad * grad;
    return -lr_ * (m_[k] / corr1_) / (std::sqrt(v_[k] / corr2_) + eps_);
  }

  void update(std::size_t k, double& param, double grad) { param += step(k, grad); }

private:
  std::vector<double> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  double corr1_ = 1.0, corr2_ = 1.0;
};

/// Component of `d` tangent to the orthogonal group at `m`: d - m sym(m^T d).
Matrix tangent_part(const Matrix& m, const Matrix& d) {
  const Matrix mtd = m.transpose() * d;
  return d - m * (0.5 * (mtd + mtd.transpose()));
}

std::string hash_blocks(const BlockSet& blocks) {
  ByteWriter w;
  w.u16(static_cast<std::uint16_t>(blocks.n()));
  for (auto s : blocks.samples()) w.i16(s);
  return sha256_hex(w.data());
}

} // namespace

TrainedModel train(const BlockSet& blocks, const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  RDLT_CHECK_ARG(!blocks.empty(), "train: empty dataset");
  RDLT_CHECK_ARG(blocks.n() == config.n, "train: dataset block size " + std::to_string(blocks.n()) +
                                             " != configured n " + std::to_string(config.n));
  const int n = config.n;
  const int dim = n * n;

  Rng rng(config.seed);
  Matrix m = dct2_matrix(n).to_dense();
  auto entropy = EntropyModelParams::initial(dim);
  auto qnet = LambdaToQNet::initial(config.qnet_hidden, config.initial_step, config.lambda_lo, config.lambda_hi, rng);

  Adam adam_m(static_cast<std::size_t>(m.size()), config.learning_rate, config);
  Adam adam_entropy(2 * static_cast<std::size_t>(dim), config.aux_learning_rate, config);
  Adam adam_qnet(qnet.parameter_count(), config.aux_learning_rate, config);

  std::vector<std::size_t> order(blocks.count());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span(order));
  std::size_t cursor = 0;
  std::vector<std::size_t> rows(static_cast<std::size_t>(config.batch_size));

  TrainedModel model;
  model.config = config;
  model.data_hash = options.data_hash.empty() ? hash_blocks(blocks) : options.data_hash;

  Matrix noise(config.batch_size, dim);
  Matrix delta(dim, dim);
  double average = 0.0;
  const std::int64_t total = config.total_steps();
  for (std::int64_t step = 0; step < total; ++step) {
    for (auto& r : rows) {
      if (cursor == order.size()) {
        rng.shuffle(std::span(order));
        cursor = 0;
      }
      r = order[cursor++];
    }
    const Matrix batch = blocks.gather(rows);

    RdObjective obj;
    obj.lambda = step < config.phase1_steps ? config.lambda_lo : rng.uniform(config.lambda_lo, config.lambda_hi);
    obj.lambda_scale = config.lambda_scale;
    obj.orth_penalty_weight = config.orth_penalty_weight;
    for (Eigen::Index k = 0; k < noise.size(); ++k) noise.data()[k] = rng.uniform() - 0.5;

    auto g = gradients(m, entropy, qnet, batch, noise, obj);
    if (step == 0) {
      model.initial_loss = g.terms.loss;
      average = g.terms.loss;
    } else {
      average = 0.99 * average + 0.01 * g.terms.loss;
    }

    // Per-entry Adam scaling turns a tangent gradient into a non-tangent step, so both the
    // gradient and the step are projected.
    if (config.tangent_gradient) g.d_transform = tangent_part(m, g.d_transform);
    adam_m.begin_step();
    for (Eigen::Index k = 0; k < m.size(); ++k)
      delta.data()[k] = adam_m.step(static_cast<std::size_t>(k), g.d_transform.data()[k]);
    m += config.tangent_gradient ? tangent_part(m, delta) : delta;
    adam_entropy.begin_step();
    for (std::size_t i = 0; i < static_cast<std::size_t>(dim); ++i) {
      adam_entropy.update(i, entropy.mu[i], g.d_mu[i]);
      adam_entropy.update(dim + i, entropy.log_sigma[i], g.d_log_sigma[i]);
    }
    adam_qnet.begin_step();
    for (std::size_t k = 0; k < qnet.parameter_count(); ++k) adam_qnet.update(k, qnet.parameter(k), g.d_qnet.parameter(k));

    if (config.orthonormalize_every > 0 && (step + 1) % config.orthonormalize_every == 0) {
      model.defect_history.push_back(orthonormality_defect(m));
      m = orthonormalize(m);
    }
    if (options.log_every > 0 && (step + 1) % options.log_every == 0 && options.on_log)
      options.on_log(TrainLogRow{step + 1, g.terms, orthonormality_defect(m)});
  }

  model.defect_history.push_back(orthonormality_defect(m));
  model.transform = TransformMatrix::dense(n, orthonormalize(m), "rdlt-" + std::to_string(n), true);
  model.entropy = std::move(entropy);
  model.qnet = std::move(qnet);
  model.final_loss = total > 0 ? average : 0.0;
  return model;
}

nlohmann::json TrainedModel::metadata() const {
  return {{"config", config.to_json()},
          {"data_hash", data_hash},
          {"initial_loss", initial_loss},
          {"final_loss", final_loss},
          {"defect_history", defect_history}};
}

// ---------------------------------------------------------------------------
// Model file

std::vector<std::uint8_t> encode_model_file(const TrainedModel& model) {
  ByteWriter w;
  w.bytes(std::string_view(kModelMagic, 4));
  w.u16(kModelVersion);
  model.transform.serialize(w);
  model.entropy.serialize(w);
  model.qnet.serialize(w);
  w.str32(model.metadata().dump());
  return w.take();
}

TrainedModel decode_model_file(std::span<const std::uint8_t> bytes, const std::string& context) {
  ByteReader r(bytes, context);
  r.expect_magic(std::string_view(kModelMagic, 4));
  const auto version = r.u16();
  if (version != kModelVersion) throw VersionMismatch(context + ": model file", version, kModelVersion);
  TrainedModel model;
  model.transform = TransformMatrix::deserialize(r);
  model.entropy = EntropyModelParams::deserialize(r);
  model.qnet = LambdaToQNet::deserialize(r);
  if (model.entropy.size() != model.transform.size())
    throw IoError(context + ": entropy model size does not match transform");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(r.str32());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(context + ": bad metadata: " + e.what());
  }
  if (r.remaining() != 0) throw IoError(context + ": trailing bytes after model");
  model.config = TrainConfig::from_json(meta.value("config", nlohmann::json::object()));
  model.data_hash = meta.value("data_hash", "");
  model.initial_loss = meta.value("initial_loss", 0.0);
  model.final_loss = meta.value("final_loss", 0.0);
  model.defect_history = meta.value("defect_history", std::vector<double>{});
  return model;
}

void write_model(const std::filesystem::path& path, const TrainedModel& model) {
  write_file_atomic(path, encode_model_file(model));
}

TrainedModel read_model(const std::filesystem::path& path) { return decode_model_file(read_file(path), path.string()); }

} // namespace rdlt
