// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace discover {

/// Input failed a documented precondition (empty task name, bad threshold...).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A file or wire payload could not be parsed.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes or arguments violate an internal contract between components.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Network provider could not be reached or answered with an error.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File missing, unreadable or unwritable.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Entropy-coded payload is truncated or corrupt.
class DecodeError : public std::runtime_error {
 public:
  DecodeError(const std::string& what, std::size_t byte_position)
      : std::runtime_error(what + " (at byte " + std::to_string(byte_position) + ")"),
        byte_position_(byte_position) {}
  std::size_t byte_position() const { return byte_position_; }

 private:
  std::size_t byte_position_;
};

}  // namespace discover
