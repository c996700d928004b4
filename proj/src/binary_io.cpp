#include "rdlt/binary_io.hpp"

#include "rdlt/error.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <iterator>

namespace rdlt {

void ByteWriter::str16(std::string_view s) {
  RDLT_CHECK_ARG(s.size() <= 0xFFFF, "string too long for u16 length prefix");
  u16(static_cast<std::uint16_t>(s.size()));
  bytes(s);
}

void ByteWriter::str32(std::string_view s) {
  RDLT_CHECK_ARG(s.size() <= 0xFFFFFFFFu, "string too long for u32 length prefix");
  u32(static_cast<std::uint32_t>(s.size()));
  bytes(s);
}

void ByteReader::need(std::size_t n) const {
  if (data_.size() - pos_ < n)
    throw IoError(context_ + ": truncated (need " + std::to_string(n) + " bytes at offset " +
                  std::to_string(pos_) + ", " + std::to_string(data_.size() - pos_) + " left)");
}

std::uint8_t ByteReader::u8() {
  need(1);
  return data_[pos_++];
}

double ByteReader::f64() {
  const auto bits = get_le<std::uint64_t>();
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

std::string ByteReader::fixed(std::size_t n) {
  need(n);
  std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
  pos_ += n;
  return s;
}

std::string ByteReader::str16() { return fixed(u16()); }
std::string ByteReader::str32() { return fixed(u32()); }

void ByteReader::expect_magic(std::string_view magic) {
  if (remaining() < magic.size() || fixed(magic.size()) != magic)
    throw IoError(context_ + ": bad magic, expected \"" + std::string(magic) + "\"");
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return bytes;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw IoError("write failed: " + path.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw IoError("cannot rename into " + path.string() + ": " + ec.message());
  }
}

void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw NumericError("SHA-256 digest failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 15]);
  }
  return out;
}

std::string sha256_hex(std::string_view text) {
  return sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

} // namespace rdlt
