#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace rdlt {

/// round(v) with halves rounded away from zero.
std::int32_t round_half_away(double v);

/// Distance from a half below which y/Q counts as an exact tie.
inline constexpr double kTieSnap = 1e-9;

/// round_half_away(y/Q) per entry, with near-ties snapped to exact ties.
std::vector<std::int32_t> quantize(std::span<const double> y, double q);
std::vector<double> dequantize(std::span<const std::int32_t> symbols, double q);

inline constexpr std::int32_t kMinSymbol = -(1 << 15);
inline constexpr std::int32_t kMaxSymbol = (1 << 15) - 1;

/// Adaptive binary probability from occurrence counts (start 1/1, halved once the total
/// reaches 2^15).
class AdaptiveBit {
public:
  static constexpr int kProbBits = 15;
  static constexpr std::uint32_t kProbOne = 1u << kProbBits;
  static constexpr std::uint32_t kCountLimit = 1u << 15;

  /// Probability of a zero bit in units of 2^-15, clamped to [1, 2^15 - 1].
  std::uint32_t p0() const;
  void update(int bit);
  /// -log2 of the coder probability for `bit`.
  double cost(int bit) const;

private:
  std::uint32_t c0_ = 1;
  std::uint32_t c1_ = 1;
};

/// 32-bit binary range encoder (carry-propagating, byte oriented).
class RangeEncoder {
public:
  void encode(AdaptiveBit& ctx, int bit);
  /// Flushes and returns the payload; the encoder must not be used afterwards.
  std::vector<std::uint8_t> finish();

private:
  void encode_with(std::uint32_t p0, int bit);
  void shift_low();

  std::uint64_t low_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint8_t cache_ = 0;
  std::uint64_t cache_size_ = 1;
  std::vector<std::uint8_t> out_;
};

class RangeDecoder {
public:
  explicit RangeDecoder(std::span<const std::uint8_t> payload);
  int decode(AdaptiveBit& ctx);
  /// True if decoding read more than the flush padding past the payload end.
  bool overrun() const { return overrun_ > 4; }

private:
  std::uint8_t next();

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
  std::size_t overrun_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint32_t code_ = 0;
};

/// Contexts for one coefficient position: zero flag, sign and order-0 Exp-Golomb bins of
/// |v| - 1 (prefix bin i, suffix bin j of a k-bit suffix).
struct PositionContexts {
  static constexpr int kMaxExponent = 15;

  AdaptiveBit nonzero;
  AdaptiveBit sign;
  std::array<AdaptiveBit, kMaxExponent> prefix;
  std::array<std::array<AdaptiveBit, kMaxExponent>, kMaxExponent + 1> suffix;
};

/// One adaptive context set per coefficient position.
class CoefficientCoder {
public:
  explicit CoefficientCoder(int positions);

  int positions() const { return static_cast<int>(contexts_.size()); }

  void encode(RangeEncoder& enc, std::span<const std::int32_t> block);
  void decode(RangeDecoder& dec, std::span<std::int32_t> block);
  /// Adapts the contexts as if `block` had been coded.
  void observe(std::span<const std::int32_t> block);
  /// Model cost in bits of `block` without adapting.
  double cost(std::span<const std::int32_t> block) const;

private:
  template <class Visit> void walk(std::span<const std::int32_t> block, Visit&& visit);

  std::vector<PositionContexts> contexts_;
};

/// Quantized blocks plus, for multi-transform streams, the per-block candidate index.
struct SymbolBlocks {
  int n = 0;
  std::vector<std::int32_t> symbols;
  /// Number of transform candidates (1 = single transform, no selection stored).
  int candidates = 1;
  std::vector<std::uint8_t> selection;

  std::size_t count() const { return n == 0 ? 0 : symbols.size() / static_cast<std::size_t>(n * n); }
  std::span<const std::int32_t> block(std::size_t b) const {
    const auto len = static_cast<std::size_t>(n * n);
    return std::span(symbols).subspan(b * len, len);
  }
};

struct EncodedStream {
  std::vector<std::uint8_t> bytes;
  /// Range-coded coefficient bits.
  std::uint64_t payload_bits = 0;
  /// Raw candidate-index bits, count * ceil(log2 candidates).
  std::uint64_t signaling_bits = 0;

  std::uint64_t total_bits() const { return payload_bits + signaling_bits; }
};

inline constexpr char kStreamMagic[] = "RDLS";
inline constexpr std::uint16_t kStreamVersion = 1;

/// ceil(log2 k) for k >= 1.
int selection_bits(int candidates);

/// Codes every block with its own candidate's context set (one set per candidate).
EncodedStream encode_blocks(const SymbolBlocks& blocks);
EncodedStream encode_blocks(std::span<const std::int32_t> symbols, int n);
/// Throws DecodeError on any corruption.
SymbolBlocks decode_blocks(std::span<const std::uint8_t> bytes);

} // namespace rdlt
