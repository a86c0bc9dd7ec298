#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>

#include "ccreid/tensor.hpp"

namespace ccreid {

// CTNS tensor block: "CTNS", version 0x01, rank byte, rank x u32 LE dims,
// then the row-major values as f32 LE.
inline constexpr std::string_view kTensorMagic = "CTNS";
inline constexpr std::uint8_t kTensorVersion = 1;

/// Little-endian writer over an ostream.
class ByteWriter {
 public:
  explicit ByteWriter(std::ostream& os) : os_(os) {}
  void u8(std::uint8_t v);
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void f32(float v);
  void bytes(std::string_view s);

 private:
  std::ostream& os_;
};

/// Little-endian reader that tracks its byte offset and reports truncation
/// as FormatError::Kind::Truncated naming that offset.
class ByteReader {
 public:
  explicit ByteReader(std::istream& is, std::uint64_t offset = 0) : is_(is), offset_(offset) {}
  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  float f32();
  std::string bytes(std::size_t n);
  /// Reads `magic.size()` bytes and throws BadMagic on mismatch.
  void expect_magic(std::string_view magic, const char* what);
  bool at_end();
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  void fill(char* dst, std::size_t n);
  std::istream& is_;
  std::uint64_t offset_;
};

/// Values are narrowed to f32 on disk.
template <class Real>
void write_tensor(ByteWriter& out, const Tensor<Real>& t);

Tensor<float> read_tensor(ByteReader& in);

template <class Real>
void save_tensor(const std::string& path, const Tensor<Real>& t);
Tensor<float> load_tensor(const std::string& path);

}  // namespace ccreid
