#include "ccreid/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace ccreid {

std::string shape_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

const char* to_string(FormatError::Kind kind) {
  switch (kind) {
    case FormatError::Kind::BadMagic: return "bad magic";
    case FormatError::Kind::UnknownVersion: return "unknown version";
    case FormatError::Kind::MalformedHeader: return "malformed header";
    case FormatError::Kind::Truncated: return "truncated payload";
    case FormatError::Kind::MissingTensor: return "missing tensor";
  }
  return "format error";
}

void ByteWriter::u8(std::uint8_t v) { os_.put(static_cast<char>(v)); }

void ByteWriter::u16(std::uint16_t v) {
  u8(static_cast<std::uint8_t>(v));
  u8(static_cast<std::uint8_t>(v >> 8));
}

void ByteWriter::u32(std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) u8(static_cast<std::uint8_t>(v >> s));
}

void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

void ByteWriter::bytes(std::string_view s) { os_.write(s.data(), static_cast<std::streamsize>(s.size())); }

void ByteReader::fill(char* dst, std::size_t n) {
  is_.read(dst, static_cast<std::streamsize>(n));
  const auto got = static_cast<std::size_t>(is_.gcount());
  if (got != n) {
    throw FormatError(FormatError::Kind::Truncated, offset_ + got,
                      "truncated payload at byte offset " + std::to_string(offset_ + got));
  }
  offset_ += n;
}

std::uint8_t ByteReader::u8() {
  char c;
  fill(&c, 1);
  return static_cast<std::uint8_t>(c);
}

std::uint16_t ByteReader::u16() {
  unsigned char b[2];
  fill(reinterpret_cast<char*>(b), 2);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t ByteReader::u32() {
  unsigned char b[4];
  fill(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }

std::string ByteReader::bytes(std::size_t n) {
  std::string s(n, '\0');
  if (n) fill(s.data(), n);
  return s;
}

void ByteReader::expect_magic(std::string_view magic, const char* what) {
  const std::uint64_t at = offset_;
  const std::string got = bytes(magic.size());
  if (got != magic) {
    throw FormatError(FormatError::Kind::BadMagic, at,
                      std::string("bad magic for ") + what + " at byte offset " +
                          std::to_string(at));
  }
}

bool ByteReader::at_end() { return is_.peek() == std::char_traits<char>::eof(); }

template <class Real>
void write_tensor(ByteWriter& out, const Tensor<Real>& t) {
  out.bytes(kTensorMagic);
  out.u8(kTensorVersion);
  out.u8(static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.shape()) out.u32(static_cast<std::uint32_t>(d));
  for (auto v : t.data()) out.f32(static_cast<float>(v));
}

Tensor<float> read_tensor(ByteReader& in) {
  in.expect_magic(kTensorMagic, "tensor block");
  const std::uint64_t version_at = in.offset();
  const auto version = in.u8();
  if (version != kTensorVersion) {
    throw FormatError(FormatError::Kind::UnknownVersion, version_at,
                      "unknown tensor block version " + std::to_string(version));
  }
  const auto rank = in.u8();
  Shape shape(rank);
  for (auto& d : shape) {
    const std::uint64_t at = in.offset();
    d = in.u32();
    if (d == 0) {
      throw FormatError(FormatError::Kind::MalformedHeader, at,
                        "zero tensor dimension at byte offset " + std::to_string(at));
    }
  }
  std::vector<float> data(shape_size(shape));
  for (auto& v : data) v = in.f32();
  return Tensor<float>(std::move(shape), std::move(data));
}

template <class Real>
void save_tensor(const std::string& path, const Tensor<Real>& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  ByteWriter w(os);
  write_tensor(w, t);
}

Tensor<float> load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  ByteReader r(is);
  return read_tensor(r);
}

template void write_tensor<float>(ByteWriter&, const Tensor<float>&);
template void write_tensor<double>(ByteWriter&, const Tensor<double>&);
template void save_tensor<float>(const std::string&, const Tensor<float>&);
template void save_tensor<double>(const std::string&, const Tensor<double>&);

}  // namespace ccreid
