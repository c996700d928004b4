#pragma once

#include "rdlt/transforms.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace rdlt {

inline constexpr double kPsnrPeak = 255.0;
inline constexpr double kMseFloor = 1e-4;

/// Step sizes of the reference evaluation.
inline const std::vector<double> kEvaluationSteps{20.0, 30.0, 40.0, 50.0, 60.0};

/// 10 log10(255^2 / max(mse, 1e-4)).
double psnr_from_mse(double mse);

struct RDPoint {
  double q = 0.0;
  /// Coded bits / (blocks * n^2).
  double rate_bpp = 0.0;
  double psnr_db = 0.0;
  double mse = 0.0;
  std::uint64_t bits = 0;
};

struct RDCurve {
  std::string label;
  std::vector<RDPoint> points;
};

/// Forward, quantize, range-code, decode, dequantize and invert at one step size.
RDPoint evaluate_point(const TransformMatrix& t, const BlockSet& blocks, double q);

/// One point per step. Steps run on up to `threads` workers; results do not depend on it.
RDCurve evaluate(const TransformMatrix& t, const BlockSet& blocks, std::span<const double> steps, int threads = 1);

struct BDResult {
  double bd_psnr_db = 0.0;
  double bd_rate_percent = 0.0;
};

/// Bjontegaard deltas of `test` against `anchor` from least-squares cubic fits.
/// Throws InvalidArgument with fewer than 4 points and NoOverlapError on disjoint ranges.
BDResult bd_metrics(const RDCurve& test, const RDCurve& anchor);

/// Least-squares polynomial fit evaluated and integrated in a centered, scaled variable.
class PolynomialFit {
public:
  PolynomialFit(std::span<const double> x, std::span<const double> y, int degree);
  double operator()(double x) const;
  /// Integral over [a, b].
  double integral(double a, double b) const;

private:
  double antiderivative(double x) const;

  double center_ = 0.0;
  double scale_ = 1.0;
  std::vector<double> coeffs_;
};

struct MtsPoint {
  double q = 0.0;
  double rate_bpp = 0.0;
  double rate_bpp_no_signaling = 0.0;
  double psnr_db = 0.0;
  /// (SSE + alpha Q^2 total bits) / (blocks * n^2).
  double rd_cost = 0.0;
  std::uint64_t payload_bits = 0;
  std::uint64_t signaling_bits = 0;
  /// Blocks assigned to each candidate.
  std::vector<std::uint64_t> selection_counts;
  /// Selected per-block cost SSE + alpha Q^2 (model bits + index bits) under frozen contexts.
  std::vector<double> block_costs;
};

struct MtsResult {
  std::string label;
  std::vector<std::string> candidate_labels;
  std::vector<MtsPoint> points;

  RDCurve curve() const;
};

inline constexpr double kDefaultMtsAlpha = 0.12;

/// The primary followed by DST7xDST7, DST7xDCT8, DCT8xDST7 and DCT8xDCT8 (horizontal x vertical).
std::vector<TransformMatrix> mts_candidates(const TransformMatrix& primary);

/// Five-candidate MTS built around `primary`.
MtsResult mts_evaluate(const TransformMatrix& primary, const BlockSet& blocks, std::span<const double> steps,
                       double alpha = kDefaultMtsAlpha, int threads = 1);

/// MTS over an arbitrary ordered candidate list (ties go to the lowest index).
MtsResult mts_evaluate_candidates(std::span<const TransformMatrix> candidates, const BlockSet& blocks,
                                  std::span<const double> steps, double alpha, const std::string& label,
                                  int threads = 1);

/// Shortest round-trip decimal text.
std::string format_double(double v);

inline constexpr char kCurveCsvHeader[] = "label,Q,rate_bpp,psnr_db";
inline constexpr char kMtsCsvHeader[] = "label,Q,rate_bpp,psnr_db,rate_bpp_no_signaling,rd_cost";

std::string curves_to_csv(std::span<const RDCurve> curves);
std::string mts_to_csv(std::span<const MtsResult> results);
/// Groups rows by label in order of first appearance. Extra trailing columns are ignored.
/// Throws IoError naming `context` and the line number on malformed input.
std::vector<RDCurve> parse_curves_csv(const std::string& text, const std::string& context);
std::vector<RDCurve> read_curves_csv(const std::filesystem::path& path);

} // namespace rdlt
