#include "rdlt/codec.hpp"

#include "rdlt/binary_io.hpp"
#include "rdlt/error.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <string>
#include <cmath>

namespace rdlt {

std::int32_t round_half_away(double v) {
  const double r = std::round(v); // std::round already rounds halves away from zero
  if (!(r >= static_cast<double>(INT32_MIN) && r <= static_cast<double>(INT32_MAX)))
    throw InvalidArgument("quantize: coefficient out of integer range");
  return static_cast<std::int32_t>(r);
}

std::vector<std::int32_t> quantize(std::span<const double> y, double q) {
  RDLT_CHECK_ARG(q > 0 && std::isfinite(q), "quantize: step must be > 0");
  std::vector<std::int32_t> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    double v = y[i] / q;
    // Ratios within kTieSnap of a half are ties, so equivalent transform factorizations agree.
    const double mag = std::abs(v);
    const double whole = std::floor(mag);
    if (std::abs(mag - whole - 0.5) <= kTieSnap) v = std::copysign(whole + 0.5, v);
    out[i] = round_half_away(v);
  }
  return out;
}

std::vector<double> dequantize(std::span<const std::int32_t> symbols, double q) {
  RDLT_CHECK_ARG(q > 0 && std::isfinite(q), "dequantize: step must be > 0");
  std::vector<double> out(symbols.size());
  for (std::size_t i = 0; i < symbols.size(); ++i) out[i] = q * symbols[i];
  return out;
}

// ---------------------------------------------------------------------------
// Binary models and range coder

std::uint32_t AdaptiveBit::p0() const {
  const std::uint32_t total = c0_ + c1_;
  const auto p = static_cast<std::uint32_t>((static_cast<std::uint64_t>(c0_) * kProbOne + total / 2) / total);
  return std::clamp<std::uint32_t>(p, 1, kProbOne - 1);
}

void AdaptiveBit::update(int bit) {
  (bit ? c1_ : c0_) += 1;
  if (c0_ + c1_ >= kCountLimit) {
    c0_ = (c0_ + 1) / 2;
    c1_ = (c1_ + 1) / 2;
  }
}

double AdaptiveBit::cost(int bit) const {
  const std::uint32_t p = bit ? kProbOne - p0() : p0();
  return kProbBits - std::log2(static_cast<double>(p));
}

void RangeEncoder::encode_with(std::uint32_t p0, int bit) {
  const std::uint32_t bound = (range_ >> AdaptiveBit::kProbBits) * p0;
  if (bit == 0) {
    range_ = bound;
  } else {
    low_ += bound;
    range_ -= bound;
  }
  while (range_ < (1u << 24)) {
    range_ <<= 8;
    shift_low();
  }
}

void RangeEncoder::encode(AdaptiveBit& ctx, int bit) {
  encode_with(ctx.p0(), bit);
  ctx.update(bit);
}

void RangeEncoder::shift_low() {
  if (static_cast<std::uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
    const auto carry = static_cast<std::uint8_t>(low_ >> 32);
    std::uint8_t pending = cache_;
    do {
      out_.push_back(static_cast<std::uint8_t>(pending + carry));
      pending = 0xFF;
    } while (--cache_size_ != 0);
    cache_ = static_cast<std::uint8_t>(low_ >> 24);
  }
  ++cache_size_;
  low_ = (low_ & 0x00FFFFFFu) << 8;
}

std::vector<std::uint8_t> RangeEncoder::finish() {
  for (int i = 0; i < 5; ++i) shift_low();
  return std::move(out_);
}

RangeDecoder::RangeDecoder(std::span<const std::uint8_t> payload) : in_(payload) {
  for (int i = 0; i < 5; ++i) code_ = (code_ << 8) | next();
}

std::uint8_t RangeDecoder::next() {
  if (pos_ < in_.size()) return in_[pos_++];
  ++overrun_;
  return 0;
}

int RangeDecoder::decode(AdaptiveBit& ctx) {
  const std::uint32_t bound = (range_ >> AdaptiveBit::kProbBits) * ctx.p0();
  int bit;
  if (code_ < bound) {
    range_ = bound;
    bit = 0;
  } else {
    code_ -= bound;
    range_ -= bound;
    bit = 1;
  }
  while (range_ < (1u << 24)) {
    range_ <<= 8;
    code_ = (code_ << 8) | next();
  }
  ctx.update(bit);
  return bit;
}

// ---------------------------------------------------------------------------
// Coefficient binarization

namespace {

template <class Contexts, class Fn> void for_each_bin(Contexts& pc, std::int32_t v, Fn&& fn) {
  if (v == 0) {
    fn(pc.nonzero, 0);
    return;
  }
  fn(pc.nonzero, 1);
  fn(pc.sign, v < 0 ? 1 : 0);
  const auto mag = static_cast<std::uint32_t>(v < 0 ? -static_cast<std::int64_t>(v) : v);
  const int k = std::bit_width(mag) - 1;
  for (int i = 0; i < k; ++i) fn(pc.prefix[static_cast<std::size_t>(i)], 1);
  if (k < PositionContexts::kMaxExponent) fn(pc.prefix[static_cast<std::size_t>(k)], 0);
  const std::uint32_t rem = mag - (1u << k);
  for (int j = 0; j < k; ++j) fn(pc.suffix[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)], (rem >> (k - 1 - j)) & 1u);
}

void check_symbol(std::int32_t v) {
  if (v < kMinSymbol || v > kMaxSymbol)
    throw InvalidArgument("symbol " + std::to_string(v) + " outside [-32768, 32767]");
}

} // namespace

CoefficientCoder::CoefficientCoder(int positions) : contexts_(static_cast<std::size_t>(positions)) {
  RDLT_CHECK_ARG(positions > 0, "coefficient coder needs at least one position");
}

template <class Visit> void CoefficientCoder::walk(std::span<const std::int32_t> block, Visit&& visit) {
  RDLT_CHECK_ARG(block.size() == contexts_.size(), "coefficient block length mismatch");
  for (std::size_t i = 0; i < block.size(); ++i) {
    check_symbol(block[i]);
    for_each_bin(contexts_[i], block[i], visit);
  }
}

void CoefficientCoder::encode(RangeEncoder& enc, std::span<const std::int32_t> block) {
  walk(block, [&](AdaptiveBit& ctx, int bit) { enc.encode(ctx, bit); });
}

void CoefficientCoder::observe(std::span<const std::int32_t> block) {
  walk(block, [](AdaptiveBit& ctx, int bit) { ctx.update(bit); });
}

double CoefficientCoder::cost(std::span<const std::int32_t> block) const {
  RDLT_CHECK_ARG(block.size() == contexts_.size(), "coefficient block length mismatch");
  double bits = 0.0;
  for (std::size_t i = 0; i < block.size(); ++i) {
    check_symbol(block[i]);
    for_each_bin(contexts_[i], block[i], [&](const AdaptiveBit& ctx, int bit) { bits += ctx.cost(bit); });
  }
  return bits;
}

void CoefficientCoder::decode(RangeDecoder& dec, std::span<std::int32_t> block) {
  RDLT_CHECK_ARG(block.size() == contexts_.size(), "coefficient block length mismatch");
  for (std::size_t i = 0; i < block.size(); ++i) {
    auto& pc = contexts_[i];
    if (!dec.decode(pc.nonzero)) {
      block[i] = 0;
      continue;
    }
    const bool negative = dec.decode(pc.sign) != 0;
    int k = 0;
    while (k < PositionContexts::kMaxExponent && dec.decode(pc.prefix[static_cast<std::size_t>(k)])) ++k;
    std::uint32_t rem = 0;
    for (int j = 0; j < k; ++j)
      rem = (rem << 1) | static_cast<std::uint32_t>(dec.decode(pc.suffix[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)]));
    const auto mag = static_cast<std::int64_t>((1u << k) + rem);
    const std::int64_t v = negative ? -mag : mag;
    if (v < kMinSymbol || v > kMaxSymbol) throw DecodeError("decoded symbol out of range");
    block[i] = static_cast<std::int32_t>(v);
  }
}

// ---------------------------------------------------------------------------
// Stream container

int selection_bits(int candidates) {
  RDLT_CHECK_ARG(candidates >= 1, "candidate count must be >= 1");
  return candidates == 1 ? 0 : std::bit_width(static_cast<unsigned>(candidates - 1));
}

namespace {

// Header bytes before the checksum field: magic, version, n, count, candidates, payload length.
constexpr std::size_t kHeaderBytes = 17;

std::uint32_t crc_of(std::span<const std::uint8_t> header, std::span<const std::uint8_t> sel,
                     std::span<const std::uint8_t> payload) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // crc32 treats a null buffer as a reset request, so empty parts are skipped.
  for (auto part : {header, sel, payload})
    if (!part.empty()) crc = crc32(crc, part.data(), static_cast<uInt>(part.size()));
  return static_cast<std::uint32_t>(crc);
}

} // namespace

EncodedStream encode_blocks(const SymbolBlocks& blocks) {
  RDLT_CHECK_ARG(blocks.n >= 1 && blocks.n <= 64, "encode_blocks: invalid block size");
  RDLT_CHECK_ARG(blocks.candidates >= 1 && blocks.candidates <= 255, "encode_blocks: candidate count out of range");
  const int dim = blocks.n * blocks.n;
  RDLT_CHECK_ARG(blocks.symbols.size() % static_cast<std::size_t>(dim) == 0, "encode_blocks: ragged symbol array");
  const std::size_t count = blocks.count();
  const int sel_bits = selection_bits(blocks.candidates);
  if (blocks.candidates > 1)
    RDLT_CHECK_ARG(blocks.selection.size() == count, "encode_blocks: selection length != block count");

  std::vector<CoefficientCoder> coders(static_cast<std::size_t>(blocks.candidates), CoefficientCoder(dim));
  RangeEncoder enc;
  std::vector<std::uint8_t> selection_bytes((count * static_cast<std::size_t>(sel_bits) + 7) / 8, 0);
  std::size_t bitpos = 0;
  for (std::size_t b = 0; b < count; ++b) {
    const int c = blocks.candidates > 1 ? blocks.selection[b] : 0;
    RDLT_CHECK_ARG(c < blocks.candidates, "encode_blocks: selection index out of range");
    for (int j = sel_bits - 1; j >= 0; --j, ++bitpos)
      if ((c >> j) & 1) selection_bytes[bitpos / 8] |= static_cast<std::uint8_t>(0x80u >> (bitpos % 8));
    coders[static_cast<std::size_t>(c)].encode(enc, blocks.block(b));
  }
  const auto payload = enc.finish();

  ByteWriter w;
  w.bytes(std::string_view(kStreamMagic, 4));
  w.u16(kStreamVersion);
  w.u16(static_cast<std::uint16_t>(blocks.n));
  w.u32(static_cast<std::uint32_t>(count));
  w.u8(static_cast<std::uint8_t>(blocks.candidates));
  w.u32(static_cast<std::uint32_t>(payload.size()));
  w.u32(crc_of(w.view(), selection_bytes, payload));
  w.bytes(std::span<const std::uint8_t>(selection_bytes));
  w.bytes(std::span<const std::uint8_t>(payload));

  EncodedStream out;
  out.bytes = w.take();
  out.payload_bits = 8ull * payload.size();
  out.signaling_bits = static_cast<std::uint64_t>(count) * static_cast<std::uint64_t>(sel_bits);
  return out;
}

EncodedStream encode_blocks(std::span<const std::int32_t> symbols, int n) {
  SymbolBlocks blocks;
  blocks.n = n;
  blocks.symbols.assign(symbols.begin(), symbols.end());
  return encode_blocks(blocks);
}

SymbolBlocks decode_blocks(std::span<const std::uint8_t> bytes) {
  try {
    ByteReader r(bytes, "bitstream");
    r.expect_magic(std::string_view(kStreamMagic, 4));
    const auto version = r.u16();
    if (version != kStreamVersion) throw DecodeError("bitstream: unsupported version " + std::to_string(version));
    SymbolBlocks out;
    out.n = r.u16();
    const auto count = r.u32();
    out.candidates = r.u8();
    const auto payload_len = r.u32();
    const auto crc = r.u32();
    if (out.n < 1 || out.n > 64 || out.candidates < 1) throw DecodeError("bitstream: bad header");
    const int sel_bits = selection_bits(out.candidates);
    const auto sel_len = (static_cast<std::size_t>(count) * static_cast<std::size_t>(sel_bits) + 7) / 8;
    if (r.remaining() != sel_len + payload_len) throw DecodeError("bitstream: length mismatch");
    const auto sel_str = r.fixed(sel_len);
    const auto payload_str = r.fixed(payload_len);
    const std::span<const std::uint8_t> sel(reinterpret_cast<const std::uint8_t*>(sel_str.data()), sel_str.size());
    const std::span<const std::uint8_t> payload(reinterpret_cast<const std::uint8_t*>(payload_str.data()),
                                                payload_str.size());
    if (crc_of(bytes.first(kHeaderBytes), sel, payload) != crc) throw DecodeError("bitstream: checksum mismatch");

    const int dim = out.n * out.n;
    out.symbols.resize(static_cast<std::size_t>(count) * static_cast<std::size_t>(dim));
    if (out.candidates > 1) out.selection.resize(count);
    std::vector<CoefficientCoder> coders(static_cast<std::size_t>(out.candidates), CoefficientCoder(dim));
    RangeDecoder dec(payload);
    std::size_t bitpos = 0;
    for (std::size_t b = 0; b < count; ++b) {
      int c = 0;
      for (int j = 0; j < sel_bits; ++j, ++bitpos) c = (c << 1) | ((sel[bitpos / 8] >> (7 - bitpos % 8)) & 1);
      if (c >= out.candidates) throw DecodeError("bitstream: selection index out of range");
      if (out.candidates > 1) out.selection[b] = static_cast<std::uint8_t>(c);
      coders[static_cast<std::size_t>(c)].decode(
          dec, std::span(out.symbols).subspan(b * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)));
      if (dec.overrun()) throw DecodeError("bitstream: payload exhausted");
    }
    return out;
  } catch (const IoError& e) {
    throw DecodeError(e.what());
  }
}

} // namespace rdlt
