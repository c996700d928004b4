#pragma once

#include "rdlt/binary_io.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace rdlt {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;

/// Real coefficients y = xM (or their noisy / dequantized variants), row-major over the block.
using CoefficientVector = RowVector;

/// One n x n integer residual block, row-major.
struct ResidualBlock {
  int n = 0;
  std::vector<std::int16_t> samples;

  ResidualBlock() = default;
  ResidualBlock(int side, std::vector<std::int16_t> values);

  RowVector as_row() const;
};

/// Contiguous collection of equally sized residual blocks; row b holds block b.
class BlockSet {
public:
  BlockSet() = default;
  explicit BlockSet(int n) : n_(n) {}
  BlockSet(int n, std::vector<std::int16_t> samples);

  int n() const { return n_; }
  int block_size() const { return n_ * n_; }
  std::size_t count() const { return n_ == 0 ? 0 : samples_.size() / static_cast<std::size_t>(block_size()); }
  bool empty() const { return samples_.empty(); }

  void push_back(std::span<const std::int16_t> block);
  std::span<const std::int16_t> block(std::size_t i) const;
  ResidualBlock residual(std::size_t i) const;
  const std::vector<std::int16_t>& samples() const { return samples_; }

  /// All blocks as real rows.
  Matrix to_matrix() const;
  /// Selected rows, in the order given.
  Matrix gather(std::span<const std::size_t> rows) const;

private:
  int n_ = 0;
  std::vector<std::int16_t> samples_;
};

enum class TransformKind : std::uint8_t { DenseNonSeparable = 0, SeparableHV = 1 };

/// Block transform acting on row-major vectorized blocks by right multiplication (y = xM).
///
/// Dense transforms hold the n^2 x n^2 matrix M, whose columns are the basis vectors.
/// Separable transforms hold a horizontal factor H and a vertical factor V (rows are basis
/// functions) and act as Y = V X H^T on the n x n block, equivalent to M = V^T (x) H^T.
class TransformMatrix {
public:
  TransformMatrix() = default;

  static TransformMatrix dense(int n, Matrix m, std::string label, bool orthonormal = false);
  static TransformMatrix separable(int n, Matrix horizontal, Matrix vertical, std::string label,
                                   bool orthonormal = false);

  TransformKind kind() const { return kind_; }
  bool is_dense() const { return kind_ == TransformKind::DenseNonSeparable; }
  int n() const { return n_; }
  int size() const { return n_ * n_; }
  const std::string& label() const { return label_; }
  void set_label(std::string label) { label_ = std::move(label); }
  bool orthonormal() const { return orthonormal_; }

  /// Dense n^2 x n^2 matrix; throws for separable transforms.
  const Matrix& matrix() const;
  const Matrix& horizontal() const;
  const Matrix& vertical() const;

  /// Dense equivalent (Kronecker product for separable transforms).
  Matrix to_dense() const;

  void serialize(ByteWriter& out) const;
  static TransformMatrix deserialize(ByteReader& in);
  nlohmann::json to_json() const;

private:
  TransformKind kind_ = TransformKind::DenseNonSeparable;
  int n_ = 0;
  Matrix dense_;
  Matrix horizontal_;
  Matrix vertical_;
  std::string label_;
  bool orthonormal_ = false;
};

inline constexpr char kTransformMagic[] = "RDLT";
inline constexpr std::uint16_t kTransformVersion = 1;

/// Orthonormal DCT-II, row k = basis k: sqrt(2/n) c_k cos(pi (2m+1) k / 2n).
Matrix dct2_basis(int n);
/// Orthonormal DST-VII, row k: 2/sqrt(2n+1) sin(pi (2k+1)(m+1) / (2n+1)).
Matrix dst7_basis(int n);
/// Orthonormal DCT-VIII, row k: 2/sqrt(2n+1) cos(pi (2k+1)(2m+1) / (4n+2)).
Matrix dct8_basis(int n);

TransformMatrix dct2_matrix(int n);
TransformMatrix dst7_matrix(int n);
TransformMatrix dct8_matrix(int n);
/// Separable transform from two 1-D bases (rows are basis functions).
TransformMatrix separable_from(int n, const Matrix& horizontal, const Matrix& vertical, std::string label);

/// Kronecker product a (x) b.
Matrix kronecker(const Matrix& a, const Matrix& b);

CoefficientVector forward(const TransformMatrix& t, const ResidualBlock& x);
/// Batched forward on real rows (one block per row).
Matrix forward(const TransformMatrix& t, const Matrix& blocks);

/// Reconstruction Q * yhat * M^T (or the separable analogue).
RowVector inverse(const TransformMatrix& t, const RowVector& yhat, double q);
Matrix inverse(const TransformMatrix& t, const Matrix& yhat, double q);

/// ||M^T M - I||_F.
double orthonormality_defect(const TransformMatrix& t);
double orthonormality_defect(const Matrix& m);

/// Polar factor U V^T of M = U S V^T. Throws SingularMatrixError on rank deficiency.
TransformMatrix orthonormalize(const TransformMatrix& t);
Matrix orthonormalize(const Matrix& m);

/// Dense copy of any transform, preserving label and flag.
TransformMatrix as_dense(const TransformMatrix& t);

std::vector<std::uint8_t> encode_transform_file(const TransformMatrix& t);
TransformMatrix decode_transform_file(std::span<const std::uint8_t> bytes, const std::string& context);
void write_transform(const std::filesystem::path& path, const TransformMatrix& t);
TransformMatrix read_transform(const std::filesystem::path& path);

} // namespace rdlt
