#include "rdlt/dataset.hpp"

#include "rdlt/binary_io.hpp"
#include "rdlt/error.hpp"
#include "rdlt/random.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>

namespace rdlt {

// ---------------------------------------------------------------------------
// Images

std::uint8_t bt601_luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  return static_cast<std::uint8_t>((299 * r + 587 * g + 114 * b + 500) / 1000);
}

LumaPlane decode_pgm(std::span<const std::uint8_t> bytes, const std::string& context) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&](const char* what) {
    skip_space();
    long value = 0;
    const std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(bytes[pos]) && value < (1L << 24)) value = value * 10 + (bytes[pos++] - '0');
    if (pos == start) throw IoError(context + ": malformed PGM header (" + what + ")");
    return value;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw IoError(context + ": not a binary PGM (P5)");
  pos = 2;
  const long width = number("width");
  const long height = number("height");
  const long maxval = number("maxval");
  if (width <= 0 || height <= 0) throw IoError(context + ": empty PGM");
  if (maxval <= 0 || maxval > 255) throw IoError(context + ": only 8-bit PGM is supported (maxval " + std::to_string(maxval) + ")");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw IoError(context + ": malformed PGM header");
  ++pos;
  const auto count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (bytes.size() - pos < count)
    throw IoError(context + ": truncated PGM (" + std::to_string(bytes.size() - pos) + " of " + std::to_string(count) +
                  " pixel bytes)");
  LumaPlane plane;
  plane.width = static_cast<int>(width);
  plane.height = static_cast<int>(height);
  plane.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                      bytes.begin() + static_cast<std::ptrdiff_t>(pos + count));
  return plane;
}

LumaPlane decode_png(std::span<const std::uint8_t> bytes, const std::string& context) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
    throw IoError(context + ": cannot decode PNG: " + image.message);
  image.format = PNG_FORMAT_RGBA;
  std::vector<std::uint8_t> rgba(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, rgba.data(), 0, nullptr)) {
    std::string message = image.message;
    png_image_free(&image);
    throw IoError(context + ": cannot decode PNG: " + message);
  }
  LumaPlane plane;
  plane.width = static_cast<int>(image.width);
  plane.height = static_cast<int>(image.height);
  plane.pixels.resize(static_cast<std::size_t>(plane.width) * plane.height);
  for (std::size_t i = 0; i < plane.pixels.size(); ++i)
    plane.pixels[i] = bt601_luma(rgba[4 * i], rgba[4 * i + 1], rgba[4 * i + 2]);
  return plane;
}

LumaPlane load_image(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file(path);
  } catch (const IoError&) {
    throw IoError("cannot read image " + path.string());
  }
  static constexpr std::uint8_t png_sig[] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::equal(std::begin(png_sig), std::end(png_sig), bytes.begin()))
    return decode_png(bytes, path.string());
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') return decode_pgm(bytes, path.string());
  throw IoError(path.string() + ": unsupported image format (expected P5 PGM or PNG)");
}

std::vector<std::uint8_t> encode_pgm(const LumaPlane& plane) {
  ByteWriter w;
  w.bytes("P5\n" + std::to_string(plane.width) + " " + std::to_string(plane.height) + "\n255\n");
  w.bytes(std::span(plane.pixels));
  return w.take();
}

// ---------------------------------------------------------------------------
// Intra prediction

IntraPredictionContext IntraPredictionContext::from_plane(const LumaPlane& plane, int x0, int y0, int n) {
  IntraPredictionContext ctx;
  ctx.n = n;
  auto sample = [&](int x, int y) -> int {
    if (x < 0 || y < 0 || x >= plane.width || y >= plane.height) return kUnavailableSample;
    return plane.at(x, y);
  };
  ctx.left.resize(static_cast<std::size_t>(2 * n + 1));
  ctx.top.resize(static_cast<std::size_t>(2 * n + 1));
  ctx.left[0] = ctx.top[0] = sample(x0 - 1, y0 - 1);
  for (int k = 0; k < 2 * n; ++k) {
    ctx.left[static_cast<std::size_t>(k + 1)] = sample(x0 - 1, y0 + k);
    ctx.top[static_cast<std::size_t>(k + 1)] = sample(x0 + k, y0 - 1);
  }
  return ctx;
}

IntraPredictionContext IntraPredictionContext::constant(int n, int value) {
  IntraPredictionContext ctx;
  ctx.n = n;
  ctx.left.assign(static_cast<std::size_t>(2 * n + 1), value);
  ctx.top.assign(static_cast<std::size_t>(2 * n + 1), value);
  return ctx;
}

std::vector<int> IntraPredictionContext::references() const {
  std::vector<int> refs;
  refs.reserve(left.size() + top.size() - 1);
  refs.insert(refs.end(), left.rbegin(), left.rend());
  refs.insert(refs.end(), top.begin() + 1, top.end());
  return refs;
}

namespace {

constexpr int kAngleTable[9] = {0, 2, 5, 9, 13, 17, 21, 26, 32};
constexpr int kInvAngleTable[9] = {0, 4096, 1638, 910, 630, 482, 390, 315, 256};

void predict_planar(const IntraPredictionContext& c, std::vector<int>& out) {
  const int n = c.n;
  const int top_right = c.top[static_cast<std::size_t>(n + 1)];
  const int bottom_left = c.left[static_cast<std::size_t>(n + 1)];
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      out[static_cast<std::size_t>(y * n + x)] =
          ((n - 1 - x) * c.left[static_cast<std::size_t>(y + 1)] + (x + 1) * top_right +
           (n - 1 - y) * c.top[static_cast<std::size_t>(x + 1)] + (y + 1) * bottom_left + n) /
          (2 * n);
}

void predict_dc(const IntraPredictionContext& c, std::vector<int>& out) {
  const int n = c.n;
  int sum = n;
  for (int k = 1; k <= n; ++k) sum += c.top[static_cast<std::size_t>(k)] + c.left[static_cast<std::size_t>(k)];
  const int dc = sum / (2 * n);
  std::fill(out.begin(), out.end(), dc);
}

void predict_angular(const IntraPredictionContext& c, int mode, std::vector<int>& out) {
  const int n = c.n;
  const bool vertical = mode >= 18;
  const int offset = vertical ? mode - 26 : 10 - mode;
  const int abs_idx = std::abs(offset);
  const int angle = (offset < 0 ? -1 : 1) * kAngleTable[abs_idx];
  const auto& main_src = vertical ? c.top : c.left;
  const auto& side_src = vertical ? c.left : c.top;

  // ref[k + n] holds reference position k, for k in [-n, 2n].
  std::vector<int> ref(static_cast<std::size_t>(3 * n + 1), 0);
  auto at = [&](int k) -> int& { return ref[static_cast<std::size_t>(k + n)]; };
  for (int k = 0; k <= 2 * n; ++k) at(k) = main_src[static_cast<std::size_t>(k)];
  if (angle < 0) {
    const int inv_angle = kInvAngleTable[abs_idx];
    int sum = 128;
    for (int k = -1; k > (n * angle) >> 5; --k) {
      sum += inv_angle;
      at(k) = side_src[static_cast<std::size_t>(sum >> 8)];
    }
  }

  for (int y = 0; y < n; ++y) {
    const int pos = (y + 1) * angle;
    const int whole = pos >> 5;
    const int frac = pos & 31;
    for (int x = 0; x < n; ++x) {
      const int v = frac ? ((32 - frac) * at(x + whole + 1) + frac * at(x + whole + 2) + 16) >> 5 : at(x + whole + 1);
      if (vertical)
        out[static_cast<std::size_t>(y * n + x)] = v;
      else
        out[static_cast<std::size_t>(x * n + y)] = v;
    }
  }
}

} // namespace

std::vector<int> intra_predict(const IntraPredictionContext& ctx, int mode) {
  RDLT_CHECK_ARG(mode >= 0 && mode < kIntraModeCount, "intra_predict: mode " + std::to_string(mode) + " not in [0, 34]");
  RDLT_CHECK_ARG(ctx.n >= 2 && ctx.n <= 64, "intra_predict: block size must be in [2, 64]");
  RDLT_CHECK_ARG(ctx.left.size() == static_cast<std::size_t>(2 * ctx.n + 1) && ctx.top.size() == ctx.left.size(),
                 "intra_predict: reference arrays must hold 2n + 1 samples");
  std::vector<int> out(static_cast<std::size_t>(ctx.n * ctx.n));
  if (mode == kPlanarMode)
    predict_planar(ctx, out);
  else if (mode == kDcMode)
    predict_dc(ctx, out);
  else
    predict_angular(ctx, mode, out);
  return out;
}

// ---------------------------------------------------------------------------
// Dataset construction

void DatasetConfig::validate() const {
  RDLT_CHECK_ARG(n >= 2 && n <= 64, "dataset: n must be in [2, 64]");
  RDLT_CHECK_ARG(split > 0 && split < 1, "dataset: split must be in (0, 1)");
}

std::vector<SourceImage> load_image_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw IoError("image directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".pgm" || ext == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });
  std::vector<SourceImage> images;
  images.reserve(files.size());
  for (const auto& f : files) {
    const auto bytes = read_file(f);
    SourceImage img;
    img.name = f.filename().string();
    img.sha256 = sha256_hex(bytes);
    img.plane = load_image(f);
    images.push_back(std::move(img));
  }
  return images;
}

BlockDataset build_dataset(std::span<const SourceImage> images, const DatasetConfig& config) {
  config.validate();
  const int n = config.n;
  const int dim = n * n;

  BlockDataset ds;
  ds.n = n;
  BlockSet all(n);
  nlohmann::json sources = nlohmann::json::array();
  std::vector<std::int16_t> residual(static_cast<std::size_t>(dim));
  for (const auto& img : images) {
    const auto& plane = img.plane;
    std::size_t produced = 0;
    for (int y0 = 0; y0 + n <= plane.height; y0 += n) {
      for (int x0 = 0; x0 + n <= plane.width; x0 += n) {
        const auto ctx = IntraPredictionContext::from_plane(plane, x0, y0, n);
        long best_sse = std::numeric_limits<long>::max();
        int best_mode = 0;
        std::vector<int> best;
        for (int mode = 0; mode < kIntraModeCount; ++mode) {
          auto pred = intra_predict(ctx, mode);
          long sse = 0;
          for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
              const long d = plane.at(x0 + x, y0 + y) - pred[static_cast<std::size_t>(y * n + x)];
              sse += d * d;
            }
          if (sse < best_sse) {
            best_sse = sse;
            best_mode = mode;
            best = std::move(pred);
          }
        }
        for (int y = 0; y < n; ++y)
          for (int x = 0; x < n; ++x)
            residual[static_cast<std::size_t>(y * n + x)] =
                static_cast<std::int16_t>(plane.at(x0 + x, y0 + y) - best[static_cast<std::size_t>(y * n + x)]);
        all.push_back(residual);
        ++ds.mode_histogram[static_cast<std::size_t>(best_mode)];
        ++produced;
      }
    }
    sources.push_back({{"path", img.name},
                       {"sha256", img.sha256},
                       {"width", plane.width},
                       {"height", plane.height},
                       {"blocks", produced}});
  }
  RDLT_CHECK_ARG(!all.empty(), "dataset: no usable " + std::to_string(n) + "x" + std::to_string(n) + " blocks in input");

  std::vector<std::size_t> order(all.count());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(config.seed);
  rng.shuffle(std::span(order));
  const auto train_count = static_cast<std::size_t>(std::floor(static_cast<double>(order.size()) * config.split));
  ds.train = BlockSet(n);
  ds.eval = BlockSet(n);
  for (std::size_t i = 0; i < order.size(); ++i) (i < train_count ? ds.train : ds.eval).push_back(all.block(order[i]));

  const auto train_hash = sha256_hex(encode_block_store(ds.train));
  const auto eval_hash = sha256_hex(encode_block_store(ds.eval));
  ds.manifest = {{"format", "rdlt-dataset"},
                 {"version", kBlockStoreVersion},
                 {"n", n},
                 {"split", config.split},
                 {"seed", config.seed},
                 {"sources", sources},
                 {"mode_histogram", ds.mode_histogram},
                 {"train", {{"file", "train.rdlb"}, {"count", ds.train.count()}, {"sha256", train_hash}}},
                 {"eval", {{"file", "eval.rdlb"}, {"count", ds.eval.count()}, {"sha256", eval_hash}}},
                 {"content_hash", sha256_hex(train_hash + eval_hash)}};
  return ds;
}

// ---------------------------------------------------------------------------
// Persistence

std::vector<std::uint8_t> encode_block_store(const BlockSet& blocks) {
  ByteWriter w;
  w.bytes(std::string_view(kBlockStoreMagic, 4));
  w.u16(kBlockStoreVersion);
  w.u16(static_cast<std::uint16_t>(blocks.n()));
  w.u32(static_cast<std::uint32_t>(blocks.count()));
  for (auto s : blocks.samples()) w.i16(s);
  return w.take();
}

BlockSet decode_block_store(std::span<const std::uint8_t> bytes, const std::string& context) {
  ByteReader r(bytes, context);
  r.expect_magic(std::string_view(kBlockStoreMagic, 4));
  const auto version = r.u16();
  if (version != kBlockStoreVersion) throw VersionMismatch(context + ": block store", version, kBlockStoreVersion);
  const int n = r.u16();
  const auto count = r.u32();
  if (n < 1) throw IoError(context + ": invalid block size");
  const auto total = static_cast<std::size_t>(count) * static_cast<std::size_t>(n) * n;
  if (r.remaining() != 2 * total)
    throw IoError(context + ": expected " + std::to_string(2 * total) + " sample bytes, found " +
                  std::to_string(r.remaining()));
  std::vector<std::int16_t> samples(total);
  for (auto& s : samples) s = r.i16();
  return BlockSet(n, std::move(samples));
}

BlockSet read_block_store(const std::filesystem::path& path) { return decode_block_store(read_file(path), path.string()); }

void write_dataset(const std::filesystem::path& dir, const BlockDataset& dataset) {
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / "train.rdlb", encode_block_store(dataset.train));
  write_file_atomic(dir / "eval.rdlb", encode_block_store(dataset.eval));
  write_file_atomic(dir / "manifest.json", dataset.manifest.dump(2) + "\n");
}

BlockDataset read_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  const auto bytes = read_file(manifest_path);
  BlockDataset ds;
  try {
    ds.manifest = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(manifest_path.string() + ": " + e.what());
  }
  const unsigned version = ds.manifest.value("version", 0u);
  if (version != kBlockStoreVersion) throw VersionMismatch(manifest_path.string(), version, kBlockStoreVersion);
  ds.n = ds.manifest.value("n", 0);
  ds.train = read_block_store(dir / "train.rdlb");
  ds.eval = read_block_store(dir / "eval.rdlb");
  if (ds.train.n() != ds.n || ds.eval.n() != ds.n) throw IoError(dir.string() + ": block stores disagree with manifest n");
  if (ds.manifest.contains("mode_histogram")) ds.mode_histogram = ds.manifest["mode_histogram"].get<std::array<std::uint64_t, kIntraModeCount>>();
  return ds;
}

} // namespace rdlt
