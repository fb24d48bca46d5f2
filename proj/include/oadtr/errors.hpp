// Copyright 2026 The oadtr Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace oadtr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents that do not fit the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Class label outside 0..C.
class LabelError : public Error {
 public:
  using Error::Error;
};

/// Caller violated an operation precondition (non-scalar backward root, empty pool, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Attention over zero keys.
class EmptySequenceError : public Error {
 public:
  using Error::Error;
};

/// Window extraction asked for the wrong number of history rows.
class WindowError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value or unparsable config file.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Invalid synthetic data specification.
class SpecError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// NaN/Inf encountered during training.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure (unwritable path, missing file).
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed binary file. Carries the byte offset where decoding failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

namespace detail {

inline std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

}  // namespace detail
}  // namespace oadtr
