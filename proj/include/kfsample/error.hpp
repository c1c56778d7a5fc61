#pragma once

#include <stdexcept>
#include <string>

namespace kfs {

/// Invalid argument or violated precondition (bad window size, mismatched dims, ...).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input data that parsed but fails validation (non-finite values, count mismatch, ...).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File system failure: missing file, unreadable or unwritable path, malformed file.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace kfs
