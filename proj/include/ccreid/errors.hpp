#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ccreid {

/// Raised when operand shapes do not satisfy an operation's contract.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Binary file decoding failures (tensors, checkpoints, datasets).
class FormatError : public std::runtime_error {
 public:
  enum class Kind { BadMagic, UnknownVersion, MalformedHeader, Truncated, MissingTensor };

  FormatError(Kind kind, std::uint64_t offset, const std::string& what)
      : std::runtime_error(what), kind_(kind), offset_(offset) {}

  Kind kind() const noexcept { return kind_; }
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  Kind kind_;
  std::uint64_t offset_;
};

const char* to_string(FormatError::Kind kind);

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, int line, const std::string& what)
      : std::runtime_error(what), key_(std::move(key)), line_(line) {}

  const std::string& key() const noexcept { return key_; }
  int line() const noexcept { return line_; }

 private:
  std::string key_;
  int line_;
};

/// Dataset content problems: too few identities, missing modalities, bad labels.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values where finite ones are required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ccreid
