#pragma once

#include "rdlt/transforms.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace rdlt {

/// 8-bit luma plane, row-major.
struct LumaPlane {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

/// P5 PGM (maxval <= 255) or PNG (converted with BT.601 luma weights, rounded).
LumaPlane load_image(const std::filesystem::path& path);
LumaPlane decode_pgm(std::span<const std::uint8_t> bytes, const std::string& context);
LumaPlane decode_png(std::span<const std::uint8_t> bytes, const std::string& context);
std::vector<std::uint8_t> encode_pgm(const LumaPlane& plane);

/// round(0.299 R + 0.587 G + 0.114 B).
std::uint8_t bt601_luma(std::uint8_t r, std::uint8_t g, std::uint8_t b);

inline constexpr int kIntraModeCount = 35;
inline constexpr int kPlanarMode = 0;
inline constexpr int kDcMode = 1;
inline constexpr std::uint8_t kUnavailableSample = 128;

/// Reference samples around an n x n block. left[0] and top[0] both hold the corner sample;
/// left[1 + y] is p(-1, y) and top[1 + x] is p(x, -1) for 0 <= x, y < 2n.
struct IntraPredictionContext {
  int n = 0;
  std::vector<int> left;
  std::vector<int> top;

  /// Open-loop references from original pixels; samples outside the plane become 128.
  static IntraPredictionContext from_plane(const LumaPlane& plane, int x0, int y0, int n);
  /// Every reference sample set to `value`.
  static IntraPredictionContext constant(int n, int value);

  /// Bottom-left to top-right, 4n + 1 samples.
  std::vector<int> references() const;
};

/// HEVC planar (0), DC (1) and angular (2..34) prediction without reference smoothing or
/// boundary post-filters. Returns n*n samples, row-major. Planar and DC divide by 2n, which
/// equals the HEVC shift for powers of two.
std::vector<int> intra_predict(const IntraPredictionContext& ctx, int mode);

struct DatasetConfig {
  int n = 8;
  double split = 0.85;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SourceImage {
  std::string name;
  std::string sha256;
  LumaPlane plane;
};

struct BlockDataset {
  int n = 0;
  BlockSet train;
  BlockSet eval;
  std::array<std::uint64_t, kIntraModeCount> mode_histogram{};
  nlohmann::json manifest;

  std::string content_hash() const { return manifest.value("content_hash", ""); }
};

/// Images with .pgm/.png extensions in `dir`, sorted by file name.
std::vector<SourceImage> load_image_dir(const std::filesystem::path& dir);

/// Tiles each image into non-overlapping n x n blocks (raster order, partial edges dropped),
/// predicts each with the SSE-minimizing intra mode, shuffles and splits floor(count * split).
BlockDataset build_dataset(std::span<const SourceImage> images, const DatasetConfig& config);

inline constexpr char kBlockStoreMagic[] = "RDLB";
inline constexpr std::uint16_t kBlockStoreVersion = 1;

std::vector<std::uint8_t> encode_block_store(const BlockSet& blocks);
BlockSet decode_block_store(std::span<const std::uint8_t> bytes, const std::string& context);
BlockSet read_block_store(const std::filesystem::path& path);

/// Writes train.rdlb, eval.rdlb and manifest.json into `dir` (created if missing).
void write_dataset(const std::filesystem::path& dir, const BlockDataset& dataset);
BlockDataset read_dataset(const std::filesystem::path& dir);

} // namespace rdlt
