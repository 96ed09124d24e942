// Copyright (c) 2026 The autorecon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace autorecon {

/// Error categories. The CLI maps these onto process exit codes.
enum class ErrorKind {
  config,      // invalid configuration or arguments
  parse,       // malformed input file
  structural,  // shape or topology mismatch between components
  input,       // invalid data handed to an operation
  numeric,     // NaN / divergence during optimization
  upstream,    // required artifact from an earlier stage is missing
  calibration, // degenerate quantization range
  unsupported, // model lacks a required feature
  io,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

struct ImageShape {
  std::int64_t channels = 1;
  std::int64_t height = 32;
  std::int64_t width = 32;

  bool operator==(const ImageShape&) const = default;
};

}  // namespace autorecon
