#include "rdlt/transforms.hpp"

#include "rdlt/error.hpp"

#include <cmath>
#include <numbers>

namespace rdlt {

// ---------------------------------------------------------------------------
// Blocks

ResidualBlock::ResidualBlock(int side, std::vector<std::int16_t> values) : n(side), samples(std::move(values)) {
  RDLT_CHECK_ARG(side >= 1, "block side must be positive");
  RDLT_CHECK_ARG(samples.size() == static_cast<std::size_t>(side) * side,
                 "residual block needs n*n samples, got " + std::to_string(samples.size()));
}

RowVector ResidualBlock::as_row() const {
  RowVector r(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) r[static_cast<Eigen::Index>(i)] = samples[i];
  return r;
}

BlockSet::BlockSet(int n, std::vector<std::int16_t> samples) : n_(n), samples_(std::move(samples)) {
  RDLT_CHECK_ARG(n >= 1, "block side must be positive");
  RDLT_CHECK_ARG(samples_.size() % static_cast<std::size_t>(block_size()) == 0,
                 "sample count is not a multiple of n*n");
}

void BlockSet::push_back(std::span<const std::int16_t> block) {
  RDLT_CHECK_ARG(block.size() == static_cast<std::size_t>(block_size()), "block length != n*n");
  samples_.insert(samples_.end(), block.begin(), block.end());
}

std::span<const std::int16_t> BlockSet::block(std::size_t i) const {
  const auto len = static_cast<std::size_t>(block_size());
  return std::span(samples_).subspan(i * len, len);
}

ResidualBlock BlockSet::residual(std::size_t i) const {
  const auto b = block(i);
  return ResidualBlock(n_, std::vector<std::int16_t>(b.begin(), b.end()));
}

Matrix BlockSet::to_matrix() const {
  Matrix m(static_cast<Eigen::Index>(count()), block_size());
  for (std::size_t i = 0; i < samples_.size(); ++i) m.data()[i] = samples_[i];
  return m;
}

Matrix BlockSet::gather(std::span<const std::size_t> rows) const {
  const int len = block_size();
  Matrix m(static_cast<Eigen::Index>(rows.size()), len);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto src = block(rows[r]);
    for (int j = 0; j < len; ++j) m(static_cast<Eigen::Index>(r), j) = src[static_cast<std::size_t>(j)];
  }
  return m;
}

// ---------------------------------------------------------------------------
// TransformMatrix

TransformMatrix TransformMatrix::dense(int n, Matrix m, std::string label, bool orthonormal) {
  RDLT_CHECK_ARG(n >= 2, "transform side length must be >= 2");
  RDLT_CHECK_ARG(m.rows() == n * n && m.cols() == n * n, "dense transform must be n^2 x n^2");
  TransformMatrix t;
  t.kind_ = TransformKind::DenseNonSeparable;
  t.n_ = n;
  t.dense_ = std::move(m);
  t.label_ = std::move(label);
  t.orthonormal_ = orthonormal;
  return t;
}

TransformMatrix TransformMatrix::separable(int n, Matrix horizontal, Matrix vertical, std::string label,
                                           bool orthonormal) {
  RDLT_CHECK_ARG(n >= 2, "transform side length must be >= 2");
  RDLT_CHECK_ARG(horizontal.rows() == n && horizontal.cols() == n, "horizontal factor must be n x n");
  RDLT_CHECK_ARG(vertical.rows() == n && vertical.cols() == n, "vertical factor must be n x n");
  TransformMatrix t;
  t.kind_ = TransformKind::SeparableHV;
  t.n_ = n;
  t.horizontal_ = std::move(horizontal);
  t.vertical_ = std::move(vertical);
  t.label_ = std::move(label);
  t.orthonormal_ = orthonormal;
  return t;
}

const Matrix& TransformMatrix::matrix() const {
  RDLT_CHECK_ARG(is_dense(), "transform '" + label_ + "' is separable; use to_dense()");
  return dense_;
}

const Matrix& TransformMatrix::horizontal() const {
  RDLT_CHECK_ARG(!is_dense(), "transform '" + label_ + "' is dense");
  return horizontal_;
}

const Matrix& TransformMatrix::vertical() const {
  RDLT_CHECK_ARG(!is_dense(), "transform '" + label_ + "' is dense");
  return vertical_;
}

Matrix TransformMatrix::to_dense() const {
  if (is_dense()) return dense_;
  return kronecker(vertical_.transpose(), horizontal_.transpose());
}

void TransformMatrix::serialize(ByteWriter& out) const {
  out.bytes(std::string_view(kTransformMagic, 4));
  out.u16(kTransformVersion);
  out.u8(static_cast<std::uint8_t>(kind_));
  out.u16(static_cast<std::uint16_t>(n_));
  out.str16(label_);
  auto put = [&](const Matrix& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) out.f64(m.data()[i]);
  };
  if (is_dense()) {
    put(dense_);
  } else {
    put(horizontal_);
    put(vertical_);
  }
}

TransformMatrix TransformMatrix::deserialize(ByteReader& in) {
  in.expect_magic(std::string_view(kTransformMagic, 4));
  const auto version = in.u16();
  if (version != kTransformVersion) throw VersionMismatch(in.context() + ": transform record", version, kTransformVersion);
  const auto kind = in.u8();
  if (kind > 1) throw IoError(in.context() + ": unknown transform kind " + std::to_string(kind));
  const int n = in.u16();
  if (n < 2) throw IoError(in.context() + ": invalid block size " + std::to_string(n));
  auto label = in.str16();
  auto get = [&](Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = in.f64();
    if (!m.allFinite()) throw IoError(in.context() + ": non-finite coefficient");
    return m;
  };
  TransformMatrix t;
  if (kind == 0) {
    t = dense(n, get(n * n, n * n), std::move(label));
  } else {
    auto h = get(n, n);
    auto v = get(n, n);
    t = separable(n, std::move(h), std::move(v), std::move(label));
  }
  t.orthonormal_ = orthonormality_defect(t) <= 1e-9;
  return t;
}

nlohmann::json TransformMatrix::to_json() const {
  auto rows = [](const Matrix& m) {
    nlohmann::json out = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
      out.push_back(std::move(row));
    }
    return out;
  };
  nlohmann::json j;
  j["magic"] = "RDLT";
  j["version"] = kTransformVersion;
  j["kind"] = is_dense() ? "dense" : "separable";
  j["n"] = n_;
  j["label"] = label_;
  j["orthonormality_defect"] = orthonormality_defect(*this);
  if (is_dense()) {
    j["coefficients"] = rows(dense_);
  } else {
    j["horizontal"] = rows(horizontal_);
    j["vertical"] = rows(vertical_);
  }
  return j;
}

// ---------------------------------------------------------------------------
// Sinusoidal bases

Matrix dct2_basis(int n) {
  RDLT_CHECK_ARG(n >= 2, "DCT-II needs n >= 2");
  Matrix m(n, n);
  const double scale = std::sqrt(2.0 / n);
  for (int k = 0; k < n; ++k) {
    const double ck = k == 0 ? 1.0 / std::numbers::sqrt2 : 1.0;
    for (int x = 0; x < n; ++x) m(k, x) = scale * ck * std::cos(std::numbers::pi * (2 * x + 1) * k / (2.0 * n));
  }
  return m;
}

Matrix dst7_basis(int n) {
  RDLT_CHECK_ARG(n >= 2, "DST-VII needs n >= 2");
  Matrix m(n, n);
  const double scale = 2.0 / std::sqrt(2.0 * n + 1);
  for (int k = 0; k < n; ++k)
    for (int x = 0; x < n; ++x) m(k, x) = scale * std::sin(std::numbers::pi * (2 * k + 1) * (x + 1) / (2.0 * n + 1));
  return m;
}

Matrix dct8_basis(int n) {
  RDLT_CHECK_ARG(n >= 2, "DCT-VIII needs n >= 2");
  Matrix m(n, n);
  const double scale = 2.0 / std::sqrt(2.0 * n + 1);
  for (int k = 0; k < n; ++k)
    for (int x = 0; x < n; ++x)
      m(k, x) = scale * std::cos(std::numbers::pi * (2 * k + 1) * (2 * x + 1) / (4.0 * n + 2));
  return m;
}

TransformMatrix separable_from(int n, const Matrix& horizontal, const Matrix& vertical, std::string label) {
  return TransformMatrix::separable(n, horizontal, vertical, std::move(label), true);
}

TransformMatrix dct2_matrix(int n) {
  const auto b = dct2_basis(n);
  return separable_from(n, b, b, "dct2-" + std::to_string(n));
}

TransformMatrix dst7_matrix(int n) {
  const auto b = dst7_basis(n);
  return separable_from(n, b, b, "dst7-" + std::to_string(n));
}

TransformMatrix dct8_matrix(int n) {
  const auto b = dct8_basis(n);
  return separable_from(n, b, b, "dct8-" + std::to_string(n));
}

Matrix kronecker(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

// ---------------------------------------------------------------------------
// Application

namespace {

using BlockMap = Eigen::Map<const Matrix>;
using MutBlockMap = Eigen::Map<Matrix>;

void check_width(const TransformMatrix& t, Eigen::Index cols) {
  RDLT_CHECK_ARG(cols == t.size(), "block length " + std::to_string(cols) + " does not match transform '" +
                                       t.label() + "' (n^2 = " + std::to_string(t.size()) + ")");
}

} // namespace

CoefficientVector forward(const TransformMatrix& t, const ResidualBlock& x) {
  RDLT_CHECK_ARG(x.n == t.n(), "block size " + std::to_string(x.n) + " != transform size " + std::to_string(t.n()));
  return forward(t, Matrix(x.as_row())).row(0);
}

Matrix forward(const TransformMatrix& t, const Matrix& blocks) {
  check_width(t, blocks.cols());
  if (t.is_dense()) return blocks * t.matrix();
  const int n = t.n();
  Matrix out(blocks.rows(), blocks.cols());
  Matrix tmp(n, n);
  for (Eigen::Index r = 0; r < blocks.rows(); ++r) {
    BlockMap x(blocks.row(r).data(), n, n);
    MutBlockMap y(out.row(r).data(), n, n);
    tmp.noalias() = t.vertical() * x;
    y.noalias() = tmp * t.horizontal().transpose();
  }
  return out;
}

RowVector inverse(const TransformMatrix& t, const RowVector& yhat, double q) {
  return inverse(t, Matrix(yhat), q).row(0);
}

Matrix inverse(const TransformMatrix& t, const Matrix& yhat, double q) {
  RDLT_CHECK_ARG(q > 0 && std::isfinite(q), "quantization step must be > 0");
  check_width(t, yhat.cols());
  if (t.is_dense()) return q * (yhat * t.matrix().transpose());
  const int n = t.n();
  Matrix out(yhat.rows(), yhat.cols());
  Matrix tmp(n, n);
  for (Eigen::Index r = 0; r < yhat.rows(); ++r) {
    BlockMap y(yhat.row(r).data(), n, n);
    MutBlockMap x(out.row(r).data(), n, n);
    tmp.noalias() = t.vertical().transpose() * y;
    x.noalias() = q * (tmp * t.horizontal());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Orthonormality

double orthonormality_defect(const Matrix& m) {
  Matrix g = m.transpose() * m;
  g.diagonal().array() -= 1.0;
  return g.norm();
}

double orthonormality_defect(const TransformMatrix& t) {
  if (t.is_dense()) return orthonormality_defect(t.matrix());
  // M^T M = (V V^T) (x) (H H^T) for M = V^T (x) H^T.
  const Matrix pv = t.vertical() * t.vertical().transpose();
  const Matrix ph = t.horizontal() * t.horizontal().transpose();
  double sum = 0.0;
  const auto n = pv.rows();
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b)
      for (Eigen::Index c = 0; c < n; ++c)
        for (Eigen::Index d = 0; d < n; ++d) {
          double e = pv(a, b) * ph(c, d);
          if (a == b && c == d) e -= 1.0;
          sum += e * e;
        }
  return std::sqrt(sum);
}

Matrix orthonormalize(const Matrix& m) {
  RDLT_CHECK_ARG(m.rows() == m.cols() && m.rows() > 0, "orthonormalize needs a square matrix");
  if (!m.allFinite()) throw NumericError("orthonormalize: non-finite matrix entries");
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (svd.info() != Eigen::Success) throw NumericError("orthonormalize: SVD did not converge");
  const auto& s = svd.singularValues();
  const double tol = s(0) * static_cast<double>(m.rows()) * 1e-13;
  if (s(0) == 0.0 || s(s.size() - 1) <= tol)
    throw SingularMatrixError("orthonormalize: matrix is rank deficient (smallest singular value " +
                              std::to_string(s(s.size() - 1)) + ")");
  return svd.matrixU() * svd.matrixV().transpose();
}

TransformMatrix orthonormalize(const TransformMatrix& t) {
  if (t.is_dense()) return TransformMatrix::dense(t.n(), orthonormalize(t.matrix()), t.label(), true);
  return TransformMatrix::separable(t.n(), orthonormalize(t.horizontal()), orthonormalize(t.vertical()), t.label(),
                                    true);
}

TransformMatrix as_dense(const TransformMatrix& t) {
  if (t.is_dense()) return t;
  return TransformMatrix::dense(t.n(), t.to_dense(), t.label(), t.orthonormal());
}

// ---------------------------------------------------------------------------
// Files

std::vector<std::uint8_t> encode_transform_file(const TransformMatrix& t) {
  ByteWriter w;
  t.serialize(w);
  return w.take();
}

TransformMatrix decode_transform_file(std::span<const std::uint8_t> bytes, const std::string& context) {
  ByteReader r(bytes, context);
  auto t = TransformMatrix::deserialize(r);
  if (r.remaining() != 0) throw IoError(context + ": trailing bytes after transform record");
  return t;
}

void write_transform(const std::filesystem::path& path, const TransformMatrix& t) {
  write_file_atomic(path, encode_transform_file(t));
}

TransformMatrix read_transform(const std::filesystem::path& path) {
  return decode_transform_file(read_file(path), path.string());
}

} // namespace rdlt
