#include "support.hpp"

#include "rdlt/report.hpp"

#include <doctest.h>

#include <regex>
#include <sstream>

using namespace rdlt;

namespace {

int count_of(const std::string& text, const std::string& needle) {
  int n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

RDCurve curve(const std::string& label, double offset) {
  RDCurve c{label, {}};
  for (double q : kEvaluationSteps) {
    RDPoint p;
    p.q = q;
    p.rate_bpp = 16.0 / q;
    p.psnr_db = 45.0 - q / 5.0 + offset;
    c.points.push_back(p);
  }
  return c;
}

std::uint8_t tile_pixel(const LumaPlane& m, int n, int r, int c, int y, int x) {
  return m.at(c * (n + 1) + x, r * (n + 1) + y);
}

} // namespace

TEST_CASE("RD plot has one polyline and legend entry per curve") {
  const std::vector<RDCurve> curves{curve("dct2-8", 0.0), curve("rdlt-8", 0.4)};
  const auto svg = render_rd_svg(curves, "seed=1 & <hash>");
  CHECK(svg.rfind("<?xml", 0) == 0);
  CHECK(count_of(svg, "<polyline") == 2);
  CHECK(count_of(svg, ">dct2-8</text>") == 1);
  CHECK(count_of(svg, ">rdlt-8</text>") == 1);
  CHECK(svg.find("seed=1 &amp; &lt;hash&gt;") != std::string::npos);
  CHECK(svg.find("rate (bpp)") != std::string::npos);
  CHECK(svg.find("PSNR (dB)") != std::string::npos);
  CHECK(svg == render_rd_svg(curves, "seed=1 & <hash>"));

  // Every polyline vertex lies inside the canvas.
  const std::regex pts("points=\"([^\"]*)\"");
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), pts); it != std::sregex_iterator(); ++it) {
    std::istringstream in((*it)[1].str());
    double x = 0, y = 0;
    char comma = 0;
    int vertices = 0;
    while (in >> x >> comma >> y) {
      CHECK(x >= 0.0);
      CHECK(x <= 720.0);
      CHECK(y >= 0.0);
      CHECK(y <= 480.0);
      ++vertices;
    }
    CHECK(vertices == 5);
  }
  CHECK_THROWS(render_rd_svg(std::vector<RDCurve>{}));
}

TEST_CASE("DCT basis mosaic layout") {
  const int n = 8;
  const auto m = basis_mosaic(dct2_matrix(n));
  CHECK(m.width == n * n + n - 1);
  CHECK(m.height == m.width);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) CHECK(tile_pixel(m, n, 0, 0, y, x) == 128);
  // Separator lines are white.
  for (int i = 0; i < m.width; ++i) {
    CHECK(m.at(n, i) == 255);
    CHECK(m.at(i, n) == 255);
  }
  // Tile (0, 1) is the first horizontal frequency: constant down columns, spanning 0..255.
  int lo = 255, hi = 0;
  for (int x = 0; x < n; ++x) {
    for (int y = 1; y < n; ++y) CHECK(tile_pixel(m, n, 0, 1, y, x) == tile_pixel(m, n, 0, 1, 0, x));
    lo = std::min<int>(lo, tile_pixel(m, n, 0, 1, 0, x));
    hi = std::max<int>(hi, tile_pixel(m, n, 0, 1, 0, x));
  }
  CHECK(lo == 0);
  CHECK(hi == 255);
  // Tile (1, 0) is the first vertical frequency: constant along rows.
  for (int y = 0; y < n; ++y)
    for (int x = 1; x < n; ++x) CHECK(tile_pixel(m, n, 1, 0, y, x) == tile_pixel(m, n, 1, 0, y, 0));
  CHECK(basis_mosaic(dct2_matrix(n)).pixels == m.pixels);
  CHECK(basis_mosaic(as_dense(dct2_matrix(n))).pixels == m.pixels);
}
