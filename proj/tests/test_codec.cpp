#include "support.hpp"

#include "rdlt/codec.hpp"
#include "rdlt/error.hpp"

#include <doctest.h>

#include <cmath>

using namespace rdlt;
using rdlt::testing::laplacian;
using rdlt::testing::positional_entropy_bits;

namespace {

std::vector<std::int32_t> random_symbols(std::size_t count, Rng& rng) {
  std::vector<std::int32_t> s(count);
  for (auto& v : s) {
    switch (rng.below(5)) {
    case 0: v = 0; break;
    case 1: v = laplacian(rng, 1.0); break;
    case 2: v = laplacian(rng, 40.0); break;
    case 3: v = laplacian(rng, 3000.0); break;
    default: v = rng.below(2) ? kMinSymbol + static_cast<std::int32_t>(rng.below(3)) : kMaxSymbol - static_cast<std::int32_t>(rng.below(3));
    }
  }
  return s;
}

} // namespace

TEST_CASE("quantization rounds half away from zero") {
  const std::vector<double> y{12.6, -3.2, 12.5, -12.5, 2.4999, 0.0, -0.0};
  CHECK(quantize(y, 5.0) == std::vector<std::int32_t>{3, -1, 3, -3, 0, 0, 0});
  CHECK(round_half_away(0.5) == 1);
  CHECK(round_half_away(-0.5) == -1);
  CHECK(round_half_away(-1.5) == -2);
  CHECK(dequantize(std::vector<std::int32_t>{3, -1}, 5.0) == std::vector<double>{15.0, -5.0});
  CHECK_THROWS_AS(quantize(y, 0.0), InvalidArgument);
  CHECK_THROWS_AS(dequantize(std::vector<std::int32_t>{1}, -1.0), InvalidArgument);
  CHECK_THROWS_AS(quantize(std::vector<double>{1e300}, 1.0), InvalidArgument);
}

TEST_CASE("adaptive bit probability follows counts") {
  AdaptiveBit b;
  CHECK(b.p0() == 16384u);
  CHECK(b.cost(0) == doctest::Approx(1.0));
  b.update(0);
  CHECK(b.p0() == 21845u); // round(2/3 * 2^15)
  for (int i = 0; i < 40000; ++i) b.update(0);
  CHECK(b.p0() <= AdaptiveBit::kProbOne - 1);
  CHECK(b.p0() >= AdaptiveBit::kProbOne - 2);
  CHECK(b.cost(1) <= 15.0 + 1e-12);
}

TEST_CASE("selection bits are ceil(log2 k)") {
  CHECK(selection_bits(1) == 0);
  CHECK(selection_bits(2) == 1);
  CHECK(selection_bits(3) == 2);
  CHECK(selection_bits(5) == 3);
  CHECK(selection_bits(6) == 3);
  CHECK(selection_bits(8) == 3);
  CHECK(selection_bits(9) == 4);
  CHECK_THROWS_AS(selection_bits(0), InvalidArgument);
}

TEST_CASE("1000 all-zero 8x8 blocks cost under 0.02 bpp") {
  const std::vector<std::int32_t> zeros(1000 * 64, 0);
  const auto s = encode_blocks(zeros, 8);
  CHECK(static_cast<double>(s.total_bits()) / zeros.size() < 0.02);
  CHECK(s.signaling_bits == 0);
  CHECK(decode_blocks(s.bytes).symbols == zeros);
}

TEST_CASE("round trip on 10^4 randomized blocks") {
  Rng rng(77);
  for (int n : {4, 8}) {
    const auto symbols = random_symbols(static_cast<std::size_t>(10000 / (n == 4 ? 1 : 4)) * n * n, rng);
    const auto s = encode_blocks(symbols, n);
    const auto back = decode_blocks(s.bytes);
    CHECK(back.n == n);
    CHECK(back.candidates == 1);
    CHECK(back.symbols == symbols);
    CHECK(s.payload_bits % 8 == 0);
  }
}

TEST_CASE("coded size stays within the positional empirical entropy bounds") {
  Rng rng(3);
  struct Source {
    std::string name;
    std::function<std::int32_t()> draw;
  };
  const std::vector<Source> sources{
      {"uniform 0..255", [&] { return static_cast<std::int32_t>(rng.below(256)); }},
      {"laplacian 2", [&] { return laplacian(rng, 2.0); }},
      {"sparse", [&] { return rng.below(10) == 0 ? laplacian(rng, 8.0) : 0; }},
      {"laplacian 12", [&] { return laplacian(rng, 12.0); }},
  };
  for (const auto& src : sources) {
    // 1600 blocks of 64 positions: 102400 symbols.
    std::vector<std::int32_t> symbols(1600 * 64);
    for (auto& v : symbols) v = src.draw();
    const auto s = encode_blocks(symbols, 8);
    const double h = positional_entropy_bits(symbols, 64);
    const double bits = static_cast<double>(s.payload_bits);
    INFO(src.name << ": bits " << bits << " entropy " << h);
    CHECK(bits <= 1.02 * h + 8192.0);
    // Add-one estimators are Bayes mixtures: never shorter than the best static model.
    CHECK(bits >= h - 64.0);
    CHECK(decode_blocks(s.bytes).symbols == symbols);
  }
}

TEST_CASE("model cost tracks the coded payload") {
  Rng rng(8);
  std::vector<std::int32_t> symbols(500 * 16);
  for (auto& v : symbols) v = laplacian(rng, 3.0);
  CoefficientCoder model(16);
  double predicted = 0.0;
  for (std::size_t b = 0; b < 500; ++b) {
    const auto blk = std::span<const std::int32_t>(symbols).subspan(b * 16, 16);
    predicted += model.cost(blk);
    model.observe(blk);
  }
  const auto s = encode_blocks(symbols, 4);
  CHECK(std::abs(static_cast<double>(s.payload_bits) - predicted) <= 48.0);
}

TEST_CASE("multi-candidate streams carry the selection") {
  Rng rng(21);
  SymbolBlocks blocks;
  blocks.n = 4;
  blocks.candidates = 5;
  blocks.symbols = random_symbols(300 * 16, rng);
  for (int b = 0; b < 300; ++b) blocks.selection.push_back(static_cast<std::uint8_t>(rng.below(5)));
  const auto s = encode_blocks(blocks);
  CHECK(s.signaling_bits == 300u * 3u);
  const auto back = decode_blocks(s.bytes);
  CHECK(back.candidates == 5);
  CHECK(back.selection == blocks.selection);
  CHECK(back.symbols == blocks.symbols);

  auto bad = blocks;
  bad.selection[7] = 5;
  CHECK_THROWS_AS(encode_blocks(bad), InvalidArgument);
  bad.selection.pop_back();
  CHECK_THROWS_AS(encode_blocks(bad), InvalidArgument);
}

TEST_CASE("invalid symbols and shapes are rejected") {
  CHECK_THROWS_AS(encode_blocks(std::vector<std::int32_t>(15, 0), 4), InvalidArgument);
  CHECK_THROWS_AS(encode_blocks(std::vector<std::int32_t>(16, kMaxSymbol + 1), 4), InvalidArgument);
  CHECK_THROWS_AS(encode_blocks(std::vector<std::int32_t>(16, kMinSymbol - 1), 4), InvalidArgument);
}

TEST_CASE("corrupt or truncated streams raise a decode error") {
  Rng rng(5);
  const auto symbols = random_symbols(200 * 64, rng);
  const auto good = encode_blocks(symbols, 8).bytes;

  for (std::size_t pos : {std::size_t{0}, std::size_t{4}, std::size_t{8}, std::size_t{20}, good.size() / 2, good.size() - 1}) {
    auto bytes = good;
    bytes[pos] ^= 0x5A;
    CHECK_THROWS_AS(decode_blocks(bytes), DecodeError);
  }
  for (std::size_t len : {std::size_t{0}, std::size_t{3}, std::size_t{10}, good.size() - 1}) {
    auto bytes = good;
    bytes.resize(len);
    CHECK_THROWS_AS(decode_blocks(bytes), DecodeError);
  }
  auto extended = good;
  extended.push_back(0);
  CHECK_THROWS_AS(decode_blocks(extended), DecodeError);
}

TEST_CASE("near-half ratios quantize as exact ties") {
  CHECK(quantize(std::vector<double>{49.9999999999, -49.9999999999, 49.99}, 20.0) ==
        std::vector<std::int32_t>{3, -3, 2});
  CHECK(quantize(std::vector<double>{30.0 + 1e-7}, 20.0) == std::vector<std::int32_t>{2});
}

TEST_CASE("uniform 8-bit symbols cost about 8 bits each") {
  Rng rng(31);
  std::vector<std::int32_t> symbols(1563 * 64);
  for (auto& v : symbols) v = static_cast<std::int32_t>(rng.below(256));
  const double bits = static_cast<double>(encode_blocks(symbols, 8).payload_bits);
  const double ideal = 8.0 * static_cast<double>(symbols.size());
  CHECK(bits >= 0.99 * ideal);
  CHECK(bits <= 1.01 * ideal + 8192.0);
}
