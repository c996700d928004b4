#include "support.hpp"

#include "rdlt/binary_io.hpp"
#include "rdlt/dataset.hpp"
#include "rdlt/error.hpp"

#include <doctest.h>
#include <png.h>

#include <filesystem>
#include <numeric>

using namespace rdlt;

namespace {

LumaPlane random_plane(int w, int h, std::uint64_t seed) {
  Rng rng(seed);
  LumaPlane p{w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w * h))};
  // Smooth ramp plus noise so several modes win.
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      p.pixels[static_cast<std::size_t>(y * w + x)] =
          static_cast<std::uint8_t>(std::clamp(2 * x + y + static_cast<int>(rng.below(40)), 0, 255));
  return p;
}

SourceImage source(LumaPlane plane, std::string name) {
  SourceImage s;
  s.name = std::move(name);
  s.sha256 = sha256_hex(std::span<const std::uint8_t>(plane.pixels));
  s.plane = std::move(plane);
  return s;
}

IntraPredictionContext random_context(int n, Rng& rng) {
  auto ctx = IntraPredictionContext::constant(n, 0);
  const int corner = static_cast<int>(rng.below(256));
  ctx.left[0] = ctx.top[0] = corner;
  for (int i = 1; i <= 2 * n; ++i) {
    ctx.left[static_cast<std::size_t>(i)] = static_cast<int>(rng.below(256));
    ctx.top[static_cast<std::size_t>(i)] = static_cast<int>(rng.below(256));
  }
  return ctx;
}

// p(x, -1) and p(-1, y) with x, y >= -1.
int top_ref(const IntraPredictionContext& c, int x) { return c.top[static_cast<std::size_t>(x + 1)]; }
int left_ref(const IntraPredictionContext& c, int y) { return c.left[static_cast<std::size_t>(y + 1)]; }

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("rdlt_test_dataset_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

} // namespace

TEST_CASE("2x2 P5 PGM decodes to its samples") {
  const std::string header = "P5\n# comment\n2 2\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  for (std::uint8_t v : {0, 64, 128, 255}) bytes.push_back(v);
  const auto p = decode_pgm(bytes, "mem.pgm");
  CHECK(p.width == 2);
  CHECK(p.height == 2);
  CHECK(p.pixels == std::vector<std::uint8_t>{0, 64, 128, 255});
  CHECK(decode_pgm(encode_pgm(p), "again").pixels == p.pixels);
}

TEST_CASE("truncated or malformed PGM raises an I/O error naming the source") {
  const std::string header = "P5\n4 4\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.resize(bytes.size() + 10, 7);
  CHECK_THROWS_WITH_AS(decode_pgm(bytes, "short.pgm"), doctest::Contains("short.pgm"), IoError);
  const std::string p2 = "P2\n1 1\n255\n0\n";
  CHECK_THROWS_AS(decode_pgm(std::vector<std::uint8_t>(p2.begin(), p2.end()), "ascii.pgm"), IoError);
}

TEST_CASE("pure red PNG converts to BT.601 luma 76") {
  CHECK(bt601_luma(255, 0, 0) == 76);
  CHECK(bt601_luma(0, 255, 0) == 150);
  CHECK(bt601_luma(0, 0, 255) == 29);
  CHECK(bt601_luma(255, 255, 255) == 255);

  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = 3;
  image.height = 2;
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> rgb(3 * 2 * 3, 0);
  for (std::size_t i = 0; i < rgb.size(); i += 3) rgb[i] = 255;
  png_alloc_size_t size = 0;
  REQUIRE(png_image_write_to_memory(&image, nullptr, &size, 0, rgb.data(), 0, nullptr));
  std::vector<std::uint8_t> png(size);
  REQUIRE(png_image_write_to_memory(&image, png.data(), &size, 0, rgb.data(), 0, nullptr));
  png.resize(size);

  const auto p = decode_png(png, "red.png");
  CHECK(p.width == 3);
  CHECK(p.height == 2);
  for (auto v : p.pixels) CHECK(v == 76);

  png.resize(png.size() / 2);
  CHECK_THROWS_AS(decode_png(png, "half.png"), IoError);
}

TEST_CASE("all reference samples 128 predict a constant 128 block in every mode") {
  for (int n : {4, 6, 8, 16, 32}) {
    const auto ctx = IntraPredictionContext::constant(n, 128);
    for (int mode = 0; mode < kIntraModeCount; ++mode) {
      const auto pred = intra_predict(ctx, mode);
      REQUIRE(pred.size() == static_cast<std::size_t>(n * n));
      for (int v : pred) CHECK(v == 128);
    }
  }
}

TEST_CASE("pure horizontal and vertical modes copy the left column and top row") {
  Rng rng(5);
  for (int n : {4, 8, 16}) {
    const auto ctx = random_context(n, rng);
    const auto hor = intra_predict(ctx, 10);
    const auto ver = intra_predict(ctx, 26);
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        CHECK(hor[static_cast<std::size_t>(y * n + x)] == left_ref(ctx, y));
        CHECK(ver[static_cast<std::size_t>(y * n + x)] == top_ref(ctx, x));
      }
  }
}

TEST_CASE("diagonal modes follow whole-sample reference offsets") {
  Rng rng(9);
  const int n = 8;
  const auto ctx = random_context(n, rng);
  const auto m2 = intra_predict(ctx, 2);
  const auto m18 = intra_predict(ctx, 18);
  const auto m34 = intra_predict(ctx, 34);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const auto i = static_cast<std::size_t>(y * n + x);
      CHECK(m2[i] == left_ref(ctx, x + y + 1));
      CHECK(m34[i] == top_ref(ctx, x + y + 1));
      const int expect18 = x > y ? top_ref(ctx, x - y - 1) : x < y ? left_ref(ctx, y - x - 1) : top_ref(ctx, -1);
      CHECK(m18[i] == expect18);
    }
}

TEST_CASE("planar and DC match their integer formulas") {
  Rng rng(13);
  for (int n : {4, 8, 32}) {
    const auto ctx = random_context(n, rng);
    const int log2n = std::bit_width(static_cast<unsigned>(n)) - 1;
    const auto planar = intra_predict(ctx, 0);
    const auto dc = intra_predict(ctx, 1);
    int sum = 0;
    for (int i = 0; i < n; ++i) sum += top_ref(ctx, i) + left_ref(ctx, i);
    const int dc_value = (sum + n) >> (log2n + 1);
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const int expect = ((n - 1 - x) * left_ref(ctx, y) + (x + 1) * top_ref(ctx, n) +
                            (n - 1 - y) * top_ref(ctx, x) + (y + 1) * left_ref(ctx, n) + n) >>
                           (log2n + 1);
        CHECK(planar[static_cast<std::size_t>(y * n + x)] == expect);
        CHECK(dc[static_cast<std::size_t>(y * n + x)] == dc_value);
      }
  }
}

TEST_CASE("references outside the plane are 128") {
  const auto plane = random_plane(16, 16, 2);
  const auto ctx = IntraPredictionContext::from_plane(plane, 0, 0, 8);
  for (int v : ctx.left) CHECK(v == 128);
  for (int v : ctx.top) CHECK(v == 128);
  const auto inner = IntraPredictionContext::from_plane(plane, 8, 8, 8);
  CHECK(inner.top[0] == plane.at(7, 7));
  CHECK(inner.top[1] == plane.at(8, 7));
  CHECK(inner.left[1] == plane.at(7, 8));
  CHECK(inner.top[9] == 128); // p(8, -1) lies at x = 16, past the right edge
  CHECK(inner.left[9] == 128);
  CHECK(inner.references().size() == 33u);
}

TEST_CASE("invalid prediction arguments are rejected") {
  const auto ctx = IntraPredictionContext::constant(8, 128);
  CHECK_THROWS_AS(intra_predict(ctx, 35), InvalidArgument);
  CHECK_THROWS_AS(intra_predict(ctx, -1), InvalidArgument);
}

TEST_CASE("64x64 image at n = 8 yields 64 blocks split 54 / 10") {
  const std::vector<SourceImage> images{source(random_plane(64, 64, 3), "a.pgm")};
  DatasetConfig cfg;
  cfg.n = 8;
  cfg.split = 0.85;
  const auto ds = build_dataset(images, cfg);
  CHECK(ds.train.count() == 54);
  CHECK(ds.eval.count() == 10);
  CHECK(std::accumulate(ds.mode_histogram.begin(), ds.mode_histogram.end(), std::uint64_t{0}) == 64);
  CHECK(ds.manifest["sources"][0]["blocks"] == 64);
}

TEST_CASE("partial edge blocks are dropped") {
  const std::vector<SourceImage> images{source(random_plane(70, 45, 4), "b.pgm")};
  DatasetConfig cfg;
  cfg.n = 8;
  const auto ds = build_dataset(images, cfg);
  CHECK(ds.train.count() + ds.eval.count() == 8u * 5u);
}

TEST_CASE("constant 128 image produces all-zero residuals") {
  LumaPlane flat{32, 32, std::vector<std::uint8_t>(32 * 32, 128)};
  const std::vector<SourceImage> images{source(flat, "flat.pgm")};
  DatasetConfig cfg;
  cfg.n = 4;
  const auto ds = build_dataset(images, cfg);
  for (auto s : ds.train.samples()) CHECK(s == 0);
  for (auto s : ds.eval.samples()) CHECK(s == 0);
  CHECK(ds.mode_histogram[0] == 64); // ties keep the lowest mode
}

TEST_CASE("each residual is the original minus its SSE-minimizing prediction") {
  const int n = 8;
  const auto plane = random_plane(32, 32, 6);
  const std::vector<SourceImage> images{source(plane, "c.pgm")};
  DatasetConfig cfg;
  cfg.n = n;
  const auto ds = build_dataset(images, cfg);

  // Independent search: best residual per block position.
  std::vector<std::vector<std::int16_t>> expected;
  for (int y0 = 0; y0 < 32; y0 += n)
    for (int x0 = 0; x0 < 32; x0 += n) {
      const auto ctx = IntraPredictionContext::from_plane(plane, x0, y0, n);
      long best = -1;
      std::vector<std::int16_t> res;
      for (int mode = 0; mode < kIntraModeCount; ++mode) {
        const auto pred = intra_predict(ctx, mode);
        long sse = 0;
        std::vector<std::int16_t> r(static_cast<std::size_t>(n * n));
        for (int y = 0; y < n; ++y)
          for (int x = 0; x < n; ++x) {
            const int d = plane.at(x0 + x, y0 + y) - pred[static_cast<std::size_t>(y * n + x)];
            r[static_cast<std::size_t>(y * n + x)] = static_cast<std::int16_t>(d);
            sse += static_cast<long>(d) * d;
          }
        if (best < 0 || sse < best) {
          best = sse;
          res = r;
        }
      }
      expected.push_back(res);
    }

  std::vector<std::vector<std::int16_t>> got;
  for (const auto* set : {&ds.train, &ds.eval})
    for (std::size_t b = 0; b < set->count(); ++b) {
      const auto blk = set->block(b);
      got.emplace_back(blk.begin(), blk.end());
      for (auto s : blk) CHECK(std::abs(s) <= 255);
    }
  std::sort(expected.begin(), expected.end());
  std::sort(got.begin(), got.end());
  CHECK(got == expected);
}

TEST_CASE("rebuilding with the same seed is byte-identical; a new seed reshuffles") {
  const std::vector<SourceImage> images{source(random_plane(64, 48, 7), "a.pgm"),
                                        source(random_plane(48, 64, 8), "b.pgm")};
  DatasetConfig cfg;
  cfg.n = 8;
  cfg.seed = 42;
  const auto a = build_dataset(images, cfg);
  const auto b = build_dataset(images, cfg);
  CHECK(a.content_hash() == b.content_hash());
  CHECK(encode_block_store(a.train) == encode_block_store(b.train));
  CHECK(a.manifest.dump() == b.manifest.dump());
  cfg.seed = 43;
  CHECK(build_dataset(images, cfg).content_hash() != a.content_hash());
}

TEST_CASE("split ratio holds for a large block count") {
  std::vector<SourceImage> images;
  for (int i = 0; i < 4; ++i) images.push_back(source(random_plane(256, 256, 20 + i), "img" + std::to_string(i)));
  DatasetConfig cfg;
  cfg.n = 8;
  const auto ds = build_dataset(images, cfg);
  const double total = static_cast<double>(ds.train.count() + ds.eval.count());
  CHECK(total == 4096.0);
  CHECK(std::abs(static_cast<double>(ds.train.count()) / total - 0.85) <= 0.005);
}

TEST_CASE("dataset build rejects empty input and bad config") {
  DatasetConfig cfg;
  cfg.n = 8;
  const std::vector<SourceImage> tiny{source(random_plane(4, 4, 1), "t.pgm")};
  CHECK_THROWS_AS(build_dataset(tiny, cfg), InvalidArgument);
  cfg.split = 1.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg.split = 0.5;
  cfg.n = 1;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg.n = 65;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}

TEST_CASE("dataset directory round trip and block store errors") {
  const auto dir = scratch_dir("roundtrip");
  const std::vector<SourceImage> images{source(random_plane(64, 64, 11), "a.pgm")};
  DatasetConfig cfg;
  cfg.n = 8;
  const auto ds = build_dataset(images, cfg);
  write_dataset(dir / "ds", ds);
  const auto back = read_dataset(dir / "ds");
  CHECK(back.n == 8);
  CHECK(back.train.samples() == ds.train.samples());
  CHECK(back.eval.samples() == ds.eval.samples());
  CHECK(back.content_hash() == ds.content_hash());

  auto bytes = encode_block_store(ds.train);
  CHECK(decode_block_store(bytes, "x").samples() == ds.train.samples());
  auto truncated = bytes;
  truncated.resize(truncated.size() - 3);
  CHECK_THROWS_AS(decode_block_store(truncated, "x"), IoError);
  auto bumped = bytes;
  bumped[4] = 2; // little-endian version field follows the magic
  CHECK_THROWS_AS(decode_block_store(bumped, "x"), VersionMismatch);
  bytes[0] = 'X';
  CHECK_THROWS_AS(decode_block_store(bytes, "x"), IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("image directory loading sorts names and skips other extensions") {
  const auto dir = scratch_dir("images");
  const auto p = random_plane(16, 8, 3);
  write_file_atomic(dir / "b.pgm", std::span<const std::uint8_t>(encode_pgm(p)));
  write_file_atomic(dir / "a.PGM", std::span<const std::uint8_t>(encode_pgm(p)));
  write_file_atomic(dir / "notes.txt", std::string_view("x"));
  const auto images = load_image_dir(dir);
  REQUIRE(images.size() == 2);
  CHECK(images[0].name == "a.PGM");
  CHECK(images[1].name == "b.pgm");
  CHECK(images[0].sha256 == images[1].sha256);
  CHECK(images[0].plane.pixels == p.pixels);
  CHECK_THROWS_AS(load_image_dir(dir / "missing"), IoError);
  std::filesystem::remove_all(dir);
}
