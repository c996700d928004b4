#include "rdlt/evaluation.hpp"

#include "rdlt/binary_io.hpp"
#include "rdlt/codec.hpp"
#include "rdlt/error.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

namespace rdlt {

namespace {

constexpr double kOrthonormalTolerance = 1e-8;
constexpr double kParsevalTolerance = 1e-6;

void check_inputs(const TransformMatrix& t, const BlockSet& blocks, std::span<const double> steps) {
  RDLT_CHECK_ARG(!blocks.empty(), "evaluation needs at least one block");
  RDLT_CHECK_ARG(t.n() == blocks.n(), "transform size " + std::to_string(t.n()) + " does not match block size " +
                                          std::to_string(blocks.n()));
  RDLT_CHECK_ARG(orthonormality_defect(t) <= kOrthonormalTolerance,
                 "transform '" + t.label() + "' is not orthonormal");
  for (double q : steps) RDLT_CHECK_ARG(q > 0 && std::isfinite(q), "step sizes must be > 0");
}

// Runs job(i) for i in [0, count) on up to `threads` workers; rethrows the first failure.
template <class Job> void parallel_for(std::size_t count, int threads, Job&& job) {
  const auto workers = static_cast<std::size_t>(std::clamp<long>(threads, 1, static_cast<long>(std::max<std::size_t>(count, 1))));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

std::vector<std::int32_t> quantize_matrix(const Matrix& y, double q) {
  return quantize(std::span<const double>(y.data(), static_cast<std::size_t>(y.size())), q);
}

Matrix symbols_to_matrix(std::span<const std::int32_t> symbols, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = symbols[static_cast<std::size_t>(i)];
  return m;
}

} // namespace

double psnr_from_mse(double mse) {
  RDLT_CHECK_ARG(mse >= 0 && std::isfinite(mse), "mse must be finite and >= 0");
  return 10.0 * std::log10(kPsnrPeak * kPsnrPeak / std::max(mse, kMseFloor));
}

RDPoint evaluate_point(const TransformMatrix& t, const BlockSet& blocks, double q) {
  const double steps[] = {q};
  check_inputs(t, blocks, steps);
  const Matrix x = blocks.to_matrix();
  const Matrix y = forward(t, x);
  const auto symbols = quantize_matrix(y, q);
  const EncodedStream stream = encode_blocks(symbols, blocks.n());
  const SymbolBlocks decoded = decode_blocks(stream.bytes);
  if (decoded.symbols != symbols) throw NumericError("range coder round trip mismatch");
  const Matrix recon = inverse(t, symbols_to_matrix(decoded.symbols, y.rows(), y.cols()), q);
  const double samples = static_cast<double>(x.size());

  RDPoint p;
  p.q = q;
  p.bits = stream.total_bits();
  p.rate_bpp = static_cast<double>(p.bits) / samples;
  p.mse = (x - recon).squaredNorm() / samples;
  p.psnr_db = psnr_from_mse(p.mse);
  return p;
}

RDCurve evaluate(const TransformMatrix& t, const BlockSet& blocks, std::span<const double> steps, int threads) {
  check_inputs(t, blocks, steps);
  RDCurve curve;
  curve.label = t.label();
  curve.points.resize(steps.size());
  parallel_for(steps.size(), threads, [&](std::size_t i) { curve.points[i] = evaluate_point(t, blocks, steps[i]); });
  return curve;
}

// ---------------------------------------------------------------------------
// Bjontegaard metrics

PolynomialFit::PolynomialFit(std::span<const double> x, std::span<const double> y, int degree) {
  RDLT_CHECK_ARG(x.size() == y.size(), "polynomial fit: x and y lengths differ");
  RDLT_CHECK_ARG(degree >= 0 && x.size() > static_cast<std::size_t>(degree), "polynomial fit: too few points");
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  center_ = 0.5 * (*lo + *hi);
  scale_ = 0.5 * (*hi - *lo);
  if (!(scale_ > 0)) throw InvalidArgument("polynomial fit: abscissae are all equal");

  const auto rows = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd a(rows, degree + 1);
  Eigen::VectorXd b(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double t = (x[static_cast<std::size_t>(i)] - center_) / scale_;
    double power = 1.0;
    for (int k = 0; k <= degree; ++k, power *= t) a(i, k) = power;
    b(i) = y[static_cast<std::size_t>(i)];
  }
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  if (qr.rank() < degree + 1) throw NumericError("polynomial fit: rank-deficient design");
  const Eigen::VectorXd c = qr.solve(b);
  coeffs_.assign(c.data(), c.data() + c.size());
}

double PolynomialFit::operator()(double x) const {
  const double t = (x - center_) / scale_;
  double acc = 0.0;
  for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it) acc = acc * t + *it;
  return acc;
}

double PolynomialFit::antiderivative(double x) const {
  const double t = (x - center_) / scale_;
  double acc = 0.0;
  for (std::size_t k = coeffs_.size(); k-- > 0;) acc = acc * t + coeffs_[k] / static_cast<double>(k + 1);
  return scale_ * acc * t;
}

double PolynomialFit::integral(double a, double b) const { return antiderivative(b) - antiderivative(a); }

namespace {

struct CurveAxes {
  std::vector<double> log_rate;
  std::vector<double> psnr;
};

CurveAxes axes_of(const RDCurve& c) {
  if (c.points.size() < 4) throw InvalidArgument("insufficient points for BD fit (curve '" + c.label + "')");
  CurveAxes a;
  for (const auto& p : c.points) {
    if (!(p.rate_bpp > 0) || !std::isfinite(p.rate_bpp) || !std::isfinite(p.psnr_db))
      throw InvalidArgument("BD fit needs positive finite rates and finite PSNR (curve '" + c.label + "')");
    a.log_rate.push_back(std::log10(p.rate_bpp));
    a.psnr.push_back(p.psnr_db);
  }
  return a;
}

std::pair<double, double> overlap(std::span<const double> a, std::span<const double> b, const char* what) {
  const double lo = std::max(*std::min_element(a.begin(), a.end()), *std::min_element(b.begin(), b.end()));
  const double hi = std::min(*std::max_element(a.begin(), a.end()), *std::max_element(b.begin(), b.end()));
  if (!(hi > lo)) throw NoOverlapError(std::string("RD curves do not overlap in ") + what);
  return {lo, hi};
}

} // namespace

BDResult bd_metrics(const RDCurve& test, const RDCurve& anchor) {
  const CurveAxes t = axes_of(test);
  const CurveAxes a = axes_of(anchor);
  const auto [rate_lo, rate_hi] = overlap(t.log_rate, a.log_rate, "rate");
  const auto [psnr_lo, psnr_hi] = overlap(t.psnr, a.psnr, "PSNR");

  const PolynomialFit psnr_t(t.log_rate, t.psnr, 3);
  const PolynomialFit psnr_a(a.log_rate, a.psnr, 3);
  const PolynomialFit rate_t(t.psnr, t.log_rate, 3);
  const PolynomialFit rate_a(a.psnr, a.log_rate, 3);

  BDResult r;
  r.bd_psnr_db = (psnr_t.integral(rate_lo, rate_hi) - psnr_a.integral(rate_lo, rate_hi)) / (rate_hi - rate_lo);
  const double log_delta =
      (rate_t.integral(psnr_lo, psnr_hi) - rate_a.integral(psnr_lo, psnr_hi)) / (psnr_hi - psnr_lo);
  r.bd_rate_percent = (std::pow(10.0, log_delta) - 1.0) * 100.0;
  return r;
}

// ---------------------------------------------------------------------------
// Multiple transform selection

RDCurve MtsResult::curve() const {
  RDCurve c;
  c.label = label;
  for (const auto& p : points) {
    RDPoint r;
    r.q = p.q;
    r.rate_bpp = p.rate_bpp;
    r.psnr_db = p.psnr_db;
    r.bits = p.payload_bits + p.signaling_bits;
    c.points.push_back(r);
  }
  return c;
}

std::vector<TransformMatrix> mts_candidates(const TransformMatrix& primary) {
  const int n = primary.n();
  const Matrix dst7 = dst7_basis(n);
  const Matrix dct8 = dct8_basis(n);
  const std::string suffix = "-" + std::to_string(n);
  std::vector<TransformMatrix> out;
  out.push_back(primary);
  out.push_back(separable_from(n, dst7, dst7, "dst7.dst7" + suffix));
  out.push_back(separable_from(n, dst7, dct8, "dst7.dct8" + suffix));
  out.push_back(separable_from(n, dct8, dst7, "dct8.dst7" + suffix));
  out.push_back(separable_from(n, dct8, dct8, "dct8.dct8" + suffix));
  return out;
}

namespace {

struct CandidateCoding {
  std::vector<std::int32_t> symbols;
  std::vector<double> coeff_sse;
};

MtsPoint mts_point(std::span<const TransformMatrix> candidates, const BlockSet& blocks, const Matrix& x, double q,
                   double alpha) {
  const int dim = blocks.block_size();
  const auto count = blocks.count();
  const auto k = static_cast<int>(candidates.size());
  const int index_bits = selection_bits(k);
  const double lambda = alpha * q * q;

  std::vector<CandidateCoding> coded(candidates.size());
  std::vector<CoefficientCoder> frozen;
  frozen.reserve(candidates.size());
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const Matrix y = forward(candidates[c], x);
    auto& cc = coded[c];
    cc.symbols = quantize_matrix(y, q);
    cc.coeff_sse.resize(count);
    for (std::size_t b = 0; b < count; ++b) {
      double sse = 0.0;
      for (int i = 0; i < dim; ++i) {
        const double e = y(static_cast<Eigen::Index>(b), i) - q * cc.symbols[b * static_cast<std::size_t>(dim) + static_cast<std::size_t>(i)];
        sse += e * e;
      }
      cc.coeff_sse[b] = sse;
    }
    // Pass 1: each candidate's contexts see every block, then stay frozen for selection.
    CoefficientCoder coder(dim);
    for (std::size_t b = 0; b < count; ++b)
      coder.observe(std::span(cc.symbols).subspan(b * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)));
    frozen.push_back(std::move(coder));
  }

  MtsPoint p;
  p.q = q;
  p.selection_counts.assign(candidates.size(), 0);
  p.block_costs.resize(count);
  SymbolBlocks chosen;
  chosen.n = blocks.n();
  chosen.candidates = k;
  chosen.symbols.resize(count * static_cast<std::size_t>(dim));
  chosen.selection.resize(count);
  double coeff_sse = 0.0;
  for (std::size_t b = 0; b < count; ++b) {
    int best = 0;
    double best_cost = 0.0;
    for (int c = 0; c < k; ++c) {
      const auto& cc = coded[static_cast<std::size_t>(c)];
      const auto block = std::span(cc.symbols).subspan(b * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim));
      const double cost = cc.coeff_sse[b] + lambda * (frozen[static_cast<std::size_t>(c)].cost(block) + index_bits);
      if (c == 0 || cost < best_cost) {
        best = c;
        best_cost = cost;
      }
    }
    const auto& win = coded[static_cast<std::size_t>(best)];
    std::copy_n(win.symbols.begin() + static_cast<std::ptrdiff_t>(b * static_cast<std::size_t>(dim)), dim,
                chosen.symbols.begin() + static_cast<std::ptrdiff_t>(b * static_cast<std::size_t>(dim)));
    chosen.selection[b] = static_cast<std::uint8_t>(best);
    p.selection_counts[static_cast<std::size_t>(best)] += 1;
    p.block_costs[b] = best_cost;
    coeff_sse += win.coeff_sse[b];
  }

  // Pass 2: adaptive coding of the chosen blocks, one fresh context set per candidate.
  const EncodedStream stream = encode_blocks(chosen);
  const SymbolBlocks decoded = decode_blocks(stream.bytes);
  if (decoded.symbols != chosen.symbols || decoded.selection != chosen.selection)
    throw NumericError("MTS stream round trip mismatch");

  double pixel_sse = 0.0;
  for (int c = 0; c < k; ++c) {
    std::vector<std::size_t> rows;
    for (std::size_t b = 0; b < count; ++b)
      if (decoded.selection[b] == c) rows.push_back(b);
    if (rows.empty()) continue;
    Matrix yhat(static_cast<Eigen::Index>(rows.size()), dim);
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (int i = 0; i < dim; ++i)
        yhat(static_cast<Eigen::Index>(r), i) = decoded.symbols[rows[r] * static_cast<std::size_t>(dim) + static_cast<std::size_t>(i)];
    const Matrix recon = inverse(candidates[static_cast<std::size_t>(c)], yhat, q);
    pixel_sse += (blocks.gather(rows) - recon).squaredNorm();
  }
  if (std::abs(pixel_sse - coeff_sse) > kParsevalTolerance * std::max({pixel_sse, coeff_sse, 1.0}))
    throw NumericError("coefficient-domain and pixel-domain SSE disagree");

  const double samples = static_cast<double>(count) * dim;
  p.payload_bits = stream.payload_bits;
  p.signaling_bits = stream.signaling_bits;
  p.rate_bpp = static_cast<double>(stream.total_bits()) / samples;
  p.rate_bpp_no_signaling = static_cast<double>(stream.payload_bits) / samples;
  p.psnr_db = psnr_from_mse(pixel_sse / samples);
  p.rd_cost = (pixel_sse + lambda * static_cast<double>(stream.total_bits())) / samples;
  return p;
}

} // namespace

MtsResult mts_evaluate_candidates(std::span<const TransformMatrix> candidates, const BlockSet& blocks,
                                  std::span<const double> steps, double alpha, const std::string& label,
                                  int threads) {
  RDLT_CHECK_ARG(!candidates.empty() && candidates.size() <= 255, "MTS needs 1..255 candidates");
  RDLT_CHECK_ARG(alpha > 0 && std::isfinite(alpha), "MTS alpha must be > 0");
  for (const auto& c : candidates) check_inputs(c, blocks, steps);
  MtsResult result;
  result.label = label;
  for (const auto& c : candidates) result.candidate_labels.push_back(c.label());
  result.points.resize(steps.size());
  const Matrix x = blocks.to_matrix();
  parallel_for(steps.size(), threads,
               [&](std::size_t i) { result.points[i] = mts_point(candidates, blocks, x, steps[i], alpha); });
  return result;
}

MtsResult mts_evaluate(const TransformMatrix& primary, const BlockSet& blocks, std::span<const double> steps,
                       double alpha, int threads) {
  const auto candidates = mts_candidates(primary);
  return mts_evaluate_candidates(candidates, blocks, steps, alpha, "mts-" + primary.label(), threads);
}

// ---------------------------------------------------------------------------
// CSV

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

void check_label(const std::string& label) {
  RDLT_CHECK_ARG(!label.empty() && label.find_first_of(",\"\n\r") == std::string::npos,
                 "curve label must be non-empty without commas, quotes or newlines: '" + label + "'");
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_number(const std::string& field, const std::string& where) {
  double v = 0.0;
  const auto* first = field.data();
  const auto* last = field.data() + field.size();
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last || !std::isfinite(v))
    throw IoError(where + ": not a finite number: '" + field + "'");
  return v;
}

} // namespace

std::string curves_to_csv(std::span<const RDCurve> curves) {
  std::string out = std::string(kCurveCsvHeader) + "\n";
  for (const auto& c : curves) {
    check_label(c.label);
    for (const auto& p : c.points)
      out += c.label + "," + format_double(p.q) + "," + format_double(p.rate_bpp) + "," + format_double(p.psnr_db) + "\n";
  }
  return out;
}

std::string mts_to_csv(std::span<const MtsResult> results) {
  std::string out = std::string(kMtsCsvHeader) + "\n";
  for (const auto& r : results) {
    check_label(r.label);
    for (const auto& p : r.points)
      out += r.label + "," + format_double(p.q) + "," + format_double(p.rate_bpp) + "," + format_double(p.psnr_db) +
             "," + format_double(p.rate_bpp_no_signaling) + "," + format_double(p.rd_cost) + "\n";
  }
  return out;
}

std::vector<RDCurve> parse_curves_csv(const std::string& text, const std::string& context) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::vector<RDCurve> curves;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = context + ":" + std::to_string(line_no);
    const auto fields = split_fields(line);
    if (!header_seen) {
      if (fields.size() < 4 || fields[0] != "label" || fields[1] != "Q" || fields[2] != "rate_bpp" ||
          fields[3] != "psnr_db")
        throw IoError(where + ": expected header starting with '" + std::string(kCurveCsvHeader) + "'");
      header_seen = true;
      continue;
    }
    if (fields.size() < 4) throw IoError(where + ": expected at least 4 fields, got " + std::to_string(fields.size()));
    if (fields[0].empty()) throw IoError(where + ": empty label");
    RDPoint p;
    p.q = parse_number(fields[1], where);
    p.rate_bpp = parse_number(fields[2], where);
    p.psnr_db = parse_number(fields[3], where);
    auto it = std::find_if(curves.begin(), curves.end(), [&](const RDCurve& c) { return c.label == fields[0]; });
    if (it == curves.end()) {
      curves.push_back(RDCurve{fields[0], {}});
      it = std::prev(curves.end());
    }
    it->points.push_back(p);
  }
  if (!header_seen) throw IoError(context + ":1: empty curve file");
  return curves;
}

std::vector<RDCurve> read_curves_csv(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return parse_curves_csv(std::string(bytes.begin(), bytes.end()), path.string());
}

} // namespace rdlt
