#include "rdlt/report.hpp"

#include "rdlt/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>

namespace rdlt {

namespace {

constexpr double kWidth = 720.0;
constexpr double kHeight = 480.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 190.0;
constexpr double kTop = 30.0;
constexpr double kBottom = 60.0;
constexpr int kTicks = 5;

constexpr std::array<const char*, 8> kPalette{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                              "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

struct Range {
  double lo;
  double hi;
  void pad() {
    const double span = hi - lo;
    const double margin = span > 0 ? 0.05 * span : std::max(1.0, std::abs(lo) * 0.05);
    lo -= margin;
    hi += margin;
  }
  double map(double v, double out_lo, double out_hi) const { return out_lo + (v - lo) / (hi - lo) * (out_hi - out_lo); }
};

} // namespace

std::string render_rd_svg(std::span<const RDCurve> curves, const std::string& metadata) {
  RDLT_CHECK_ARG(!curves.empty(), "plot needs at least one curve");
  Range rx{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  Range ry = rx;
  for (const auto& c : curves) {
    RDLT_CHECK_ARG(!c.points.empty(), "curve '" + c.label + "' has no points");
    for (const auto& p : c.points) {
      rx.lo = std::min(rx.lo, p.rate_bpp);
      rx.hi = std::max(rx.hi, p.rate_bpp);
      ry.lo = std::min(ry.lo, p.psnr_db);
      ry.hi = std::max(ry.hi, p.psnr_db);
    }
  }
  rx.pad();
  ry.pad();
  const double x0 = kLeft;
  const double x1 = kWidth - kRight;
  const double y0 = kHeight - kBottom;
  const double y1 = kTop;

  std::string s;
  s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fixed(kWidth, 0) + "\" height=\"" + fixed(kHeight, 0) +
       "\" viewBox=\"0 0 " + fixed(kWidth, 0) + " " + fixed(kHeight, 0) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  if (!metadata.empty()) s += "<metadata>" + xml_escape(metadata) + "</metadata>\n";
  s += "<rect x=\"0\" y=\"0\" width=\"" + fixed(kWidth, 0) + "\" height=\"" + fixed(kHeight, 0) + "\" fill=\"white\"/>\n";
  s += "<rect x=\"" + fixed(x0, 1) + "\" y=\"" + fixed(y1, 1) + "\" width=\"" + fixed(x1 - x0, 1) + "\" height=\"" +
       fixed(y0 - y1, 1) + "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= kTicks; ++i) {
    const double vx = rx.lo + (rx.hi - rx.lo) * i / kTicks;
    const double vy = ry.lo + (ry.hi - ry.lo) * i / kTicks;
    const double px = rx.map(vx, x0, x1);
    const double py = ry.map(vy, y0, y1);
    s += "<line x1=\"" + fixed(px, 1) + "\" y1=\"" + fixed(y0, 1) + "\" x2=\"" + fixed(px, 1) + "\" y2=\"" +
         fixed(y0 + 5, 1) + "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + fixed(px, 1) + "\" y=\"" + fixed(y0 + 18, 1) + "\" text-anchor=\"middle\">" + fixed(vx, 3) +
         "</text>\n";
    s += "<line x1=\"" + fixed(x0 - 5, 1) + "\" y1=\"" + fixed(py, 1) + "\" x2=\"" + fixed(x0, 1) + "\" y2=\"" +
         fixed(py, 1) + "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + fixed(x0 - 8, 1) + "\" y=\"" + fixed(py + 4, 1) + "\" text-anchor=\"end\">" + fixed(vy, 2) +
         "</text>\n";
  }
  s += "<text x=\"" + fixed((x0 + x1) / 2, 1) + "\" y=\"" + fixed(kHeight - 15, 1) +
       "\" text-anchor=\"middle\">rate (bpp)</text>\n";
  s += "<text x=\"18\" y=\"" + fixed((y0 + y1) / 2, 1) + "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
       fixed((y0 + y1) / 2, 1) + ")\">PSNR (dB)</text>\n";

  for (std::size_t i = 0; i < curves.size(); ++i) {
    const auto& c = curves[i];
    const char* color = kPalette[i % kPalette.size()];
    std::string pts;
    for (const auto& p : c.points) {
      if (!pts.empty()) pts += ' ';
      pts += fixed(rx.map(p.rate_bpp, x0, x1), 2) + "," + fixed(ry.map(p.psnr_db, y0, y1), 2);
    }
    s += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
    for (const auto& p : c.points)
      s += "<circle cx=\"" + fixed(rx.map(p.rate_bpp, x0, x1), 2) + "\" cy=\"" + fixed(ry.map(p.psnr_db, y0, y1), 2) +
           "\" r=\"3\" fill=\"" + color + "\"/>\n";
    const double ly = kTop + 10 + 20.0 * static_cast<double>(i);
    s += "<line x1=\"" + fixed(x1 + 15, 1) + "\" y1=\"" + fixed(ly, 1) + "\" x2=\"" + fixed(x1 + 40, 1) + "\" y2=\"" +
         fixed(ly, 1) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    s += "<text x=\"" + fixed(x1 + 46, 1) + "\" y=\"" + fixed(ly + 4, 1) + "\">" + xml_escape(c.label) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

LumaPlane basis_mosaic(const TransformMatrix& t) {
  const int n = t.n();
  RDLT_CHECK_ARG(n >= 1, "basis mosaic needs a non-empty transform");
  const Matrix m = t.to_dense();
  const int side = n * n + (n - 1);
  LumaPlane plane;
  plane.width = side;
  plane.height = side;
  plane.pixels.assign(static_cast<std::size_t>(side) * static_cast<std::size_t>(side), 255);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const auto col = m.col(r * n + c);
      const double lo = col.minCoeff();
      const double hi = col.maxCoeff();
      const bool flat = hi - lo <= 1e-9 * std::max(1.0, std::abs(hi));
      for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
          const double v = col(y * n + x);
          const double level = flat ? 128.0 : std::round((v - lo) / (hi - lo) * 255.0);
          const int px = c * (n + 1) + x;
          const int py = r * (n + 1) + y;
          plane.pixels[static_cast<std::size_t>(py) * static_cast<std::size_t>(side) + static_cast<std::size_t>(px)] =
              static_cast<std::uint8_t>(std::clamp(level, 0.0, 255.0));
        }
      }
    }
  }
  return plane;
}

} // namespace rdlt
