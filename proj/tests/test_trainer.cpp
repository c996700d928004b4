#include "gradcheck.hpp"
#include "support.hpp"

#include "rdlt/error.hpp"
#include "rdlt/trainer.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <functional>

using namespace rdlt;
using rdlt::testing::random_matrix;
using namespace rdlt::testing;


TEST_CASE("analytic gradients match central finite differences") {
  for (std::uint64_t seed : {7u, 8u, 9u}) {
    Problem p = random_problem(seed, 4);
    const auto g = gradients(p.m, p.params, p.qnet, p.batch, p.noise, p.obj);
    CHECK(g.terms.loss == doctest::Approx(loss_of(p)).epsilon(1e-14));
    const auto s = check_gradients(p);
    INFO("seed " << seed << ", worst relative error " << s.worst);
    CHECK(s.checked == 4096 + 128 + 49);
    CHECK(s.failed == 0);
  }
}

TEST_CASE("rd_loss examples") {
  const Matrix m = dct2_matrix(8).to_dense();
  const auto params = EntropyModelParams::initial(64);
  const auto qnet = LambdaToQNet::zeros(16);
  const Matrix zeros = Matrix::Zero(3, 64);
  const Matrix quarter = Matrix::Constant(3, 64, 0.25);

  RdObjective obj;
  obj.fixed_step = 6.0;
  const auto t = rd_loss(m, params, qnet, zeros, quarter, obj);
  CHECK(t.distortion == doctest::Approx(36.0 * 0.0625).epsilon(1e-12));
  CHECK(t.step == 6.0);

  obj.lambda = 0.0;
  Rng rng(2);
  const Matrix batch = rdlt::testing::uniform_blocks(5, 8, -50, 50, 3).to_matrix();
  Matrix noise(5, 64);
  for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = rng.uniform() - 0.5;
  const auto t0 = rd_loss(m, params, qnet, batch, noise, obj);
  CHECK(t0.loss == t0.distortion);
  obj.lambda = 1e-9;
  CHECK(rd_loss(m, params, qnet, batch, noise, obj).loss == doctest::Approx(t0.distortion).epsilon(1e-6));

  // Duplicating the batch leaves the per-sample means unchanged.
  Matrix twice(10, 64), noise2(10, 64);
  twice << batch, batch;
  noise2 << noise, noise;
  obj.lambda = 0.2;
  obj.lambda_scale = 100.0;
  CHECK(rd_loss(m, params, qnet, twice, noise2, obj).loss ==
        doctest::Approx(rd_loss(m, params, qnet, batch, noise, obj).loss).epsilon(1e-13));

  // lambda = 0, Q = 1, no noise: perfect reconstruction and a zero transform gradient.
  RdObjective exact;
  exact.lambda = 0.0;
  exact.fixed_step = 1.0;
  const auto g = gradients(m, params, qnet, batch, Matrix::Zero(5, 64), exact);
  CHECK(g.terms.loss <= 1e-9);
  CHECK(g.d_transform.cwiseAbs().maxCoeff() <= 1e-9);

  CHECK_THROWS_AS(rd_loss(m, params, qnet, Matrix(0, 64), Matrix(0, 64), obj), InvalidArgument);
}

TEST_CASE("mean gradient flips sign with the noise") {
  const Matrix m = dct2_matrix(8).to_dense();
  const auto params = EntropyModelParams::initial(64);
  const auto qnet = LambdaToQNet::zeros(4);
  Rng rng(4);
  Matrix noise(6, 64);
  for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = rng.uniform() - 0.5;
  noise = noise.cwiseMax(-0.49); // keep -noise inside [-1/2, 1/2)
  RdObjective obj;
  obj.lambda = 0.3;
  obj.lambda_scale = 10.0;
  obj.fixed_step = 3.0;
  const auto pos = gradients(m, params, qnet, Matrix::Zero(6, 64), noise, obj);
  const auto neg = gradients(m, params, qnet, Matrix::Zero(6, 64), Matrix(-noise), obj);
  for (std::size_t i = 0; i < 64; ++i) CHECK(pos.d_mu[i] == doctest::Approx(-neg.d_mu[i]).epsilon(1e-12));
}

TEST_CASE("rate falls as scales approach the coefficient spread") {
  const Matrix m = dct2_matrix(8).to_dense();
  const Matrix batch = rdlt::testing::ar1_blocks(200, 8, 0.9, 10.0, 5).to_matrix();
  const Matrix y = batch * m;
  auto params = EntropyModelParams::initial(64);
  RdObjective obj;
  obj.fixed_step = 1.0;
  const auto qnet = LambdaToQNet::zeros(4);
  const Matrix noise = Matrix::Zero(200, 64);
  std::vector<double> spread(64);
  for (int i = 0; i < 64; ++i) spread[static_cast<std::size_t>(i)] = std::sqrt(y.col(i).squaredNorm() / 200.0);
  double prev = std::numeric_limits<double>::infinity();
  for (double factor : {64.0, 16.0, 4.0, 1.0}) {
    for (int i = 0; i < 64; ++i) params.log_sigma[static_cast<std::size_t>(i)] = std::log(factor * spread[static_cast<std::size_t>(i)] + 0.5);
    const double rate = rd_loss(m, params, qnet, batch, noise, obj).rate;
    CHECK(rate < prev);
    prev = rate;
  }
}

TEST_CASE("qnet forward") {
  CHECK(qnet_forward(LambdaToQNet::zeros(16), 0.2) == doctest::Approx(1.0 + std::log(2.0)).epsilon(1e-15));
  Rng rng(1);
  auto net = LambdaToQNet::initial(16, 20.0, 0.01, 0.5, rng);
  CHECK(qnet_forward(net, 0.1) == doctest::Approx(20.0).epsilon(0.02));
  for (std::size_t k = 0; k < net.parameter_count(); ++k) net.parameter(k) += rng.normal();
  for (double l = 0.01; l <= 0.5; l += 0.01) {
    CHECK(std::abs(qnet_forward(net, l) - qnet_forward(net, l + 1e-9)) <= 1e-6);
    CHECK(qnet_forward(net, l) > 1.0);
  }
  CHECK_THROWS_AS(qnet_forward(net, 0.0), InvalidArgument);
  CHECK_THROWS_AS(qnet_forward(net, -0.1), InvalidArgument);
}

TEST_CASE("config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  auto bad = c;
  bad.lambda_lo = 0.6;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = c;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = c;
  bad.phase2_steps = -1;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  const auto round = TrainConfig::from_json(c.to_json());
  CHECK(round.to_json() == c.to_json());
}

TEST_CASE("zero steps export the Kronecker DCT-II") {
  const auto blocks = rdlt::testing::ar1_blocks(300, 8, 0.95, 10.0, 1);
  TrainConfig c;
  c.phase1_steps = 0;
  c.phase2_steps = 0;
  const auto model = train(blocks, c);
  CHECK(model.transform.label() == "rdlt-8");
  CHECK(model.transform.is_dense());
  CHECK((model.transform.matrix() - kronecker(dct2_basis(8).transpose(), dct2_basis(8).transpose())).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(orthonormality_defect(model.transform) <= 1e-9);
}

TEST_CASE("training lowers the loss and is deterministic") {
  const auto blocks = rdlt::testing::ar1_blocks(5000, 8, 0.95, 12.0, 2);
  // Fixed lambda keeps the first and last losses comparable.
  TrainConfig c;
  c.phase1_steps = 2000;
  c.phase2_steps = 0;
  const auto model = train(blocks, c);
  INFO("initial " << model.initial_loss << " final " << model.final_loss);
  CHECK(model.final_loss <= model.initial_loss);
  CHECK(orthonormality_defect(model.transform) <= 1e-9);
  CHECK(model.defect_history.size() == 3);

  TrainConfig small = c;
  small.phase1_steps = 30;
  small.phase2_steps = 70;
  small.orthonormalize_every = 25;
  const auto a = encode_model_file(train(blocks, small));
  const auto b = encode_model_file(train(blocks, small));
  CHECK(a == b);
  small.seed = 2;
  CHECK(encode_model_file(train(blocks, small)) != a);
}

TEST_CASE("projection every step keeps the defect at rounding level") {
  const auto blocks = rdlt::testing::ar1_blocks(500, 8, 0.95, 12.0, 3);
  TrainConfig c;
  c.phase1_steps = 10;
  c.phase2_steps = 30;
  c.orthonormalize_every = 1;
  c.learning_rate = 1e-2;
  TrainOptions o;
  o.log_every = 1;
  int rows = 0;
  double worst = 0.0;
  o.on_log = [&](const TrainLogRow& r) {
    ++rows;
    worst = std::max(worst, r.defect);
  };
  train(blocks, c, o);
  CHECK(rows == 40);
  CHECK(worst <= 1e-10);
}

TEST_CASE("log cadence") {
  const auto blocks = rdlt::testing::ar1_blocks(300, 8, 0.95, 12.0, 3);
  TrainConfig c;
  c.phase1_steps = 20;
  c.phase2_steps = 53;
  TrainOptions o;
  o.log_every = 10;
  std::vector<std::int64_t> steps;
  o.on_log = [&](const TrainLogRow& r) { steps.push_back(r.step); };
  train(blocks, c, o);
  CHECK(steps == std::vector<std::int64_t>{10, 20, 30, 40, 50, 60, 70});
}

TEST_CASE("training input validation") {
  TrainConfig c;
  CHECK_THROWS_AS(train(BlockSet(8), c), InvalidArgument);
  CHECK_THROWS_AS(train(rdlt::testing::ar1_blocks(10, 4, 0.9, 5.0, 1), c), InvalidArgument);
}

TEST_CASE("model files round trip") {
  const auto blocks = rdlt::testing::ar1_blocks(300, 8, 0.95, 12.0, 4);
  TrainConfig c;
  c.phase1_steps = 5;
  c.phase2_steps = 5;
  const auto model = train(blocks, c);
  const auto path = std::filesystem::temp_directory_path() / "rdlt_test_model.rdlm";
  write_model(path, model);
  const auto back = read_model(path);
  CHECK(encode_model_file(back) == encode_model_file(model));
  CHECK(back.data_hash == model.data_hash);
  CHECK(back.metadata()["config"] == c.to_json());

  auto bytes = encode_model_file(model);
  bytes[4] = 2;
  try {
    decode_model_file(bytes, "m");
    FAIL("expected a version mismatch");
  } catch (const VersionMismatch& e) {
    CHECK(e.found() == 2);
    CHECK(e.expected() == 1);
    CHECK(std::string(e.what()).find("found version 2, expected version 1") != std::string::npos);
  }
  bytes = encode_model_file(model);
  bytes.resize(bytes.size() / 2);
  CHECK_THROWS_AS(decode_model_file(bytes, "m"), IoError);
}
