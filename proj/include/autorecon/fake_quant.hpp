// Copyright (c) 2026 The autorecon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <torch/torch.h>

#include "autorecon/common.hpp"

namespace autorecon {

enum class QuantMode { symmetric, asymmetric };

/// Bit widths for weights and activations, written "wXaY".
struct QuantScheme {
  int weight_bits = 8;
  int act_bits = 8;

  std::string notation() const;
  static QuantScheme parse(std::string_view text);
  bool operator==(const QuantScheme&) const = default;
};

/// Uniform grid: value(q) = (q - zero_point) * scale for integer q in [qmin, qmax].
struct QuantGrid {
  double scale = 1.0;
  std::int64_t zero_point = 0;
  std::int64_t qmin = 0;
  std::int64_t qmax = 0;

  double level(std::int64_t q) const { return static_cast<double>(q - zero_point) * scale; }
  double lower() const { return level(qmin); }
  double upper() const { return level(qmax); }
};

/// Symmetric: range (-a, a) with a = max(|lo|, |hi|), signed levels
/// [-2^(b-1), 2^(b-1)-1] and a at level 2^(b-1)-1. Asymmetric: range widened
/// to include 0, 2^b levels, integer zero point.
QuantGrid make_grid(int bits, QuantMode mode, double lo, double hi);

/// Fake quantization: nearest grid level of every element (clamped to the
/// grid ends). Gradients pass straight through inside [lower, upper] and are
/// zero outside.
torch::Tensor quantize_tensor(const torch::Tensor& x, int bits, QuantMode mode, double lo, double hi);
torch::Tensor quantize_on_grid(const torch::Tensor& x, const QuantGrid& grid);

/// Exponential moving average of per-batch min/max.
class RangeTracker {
 public:
  explicit RangeTracker(double momentum = 0.9) : momentum_(momentum) {}

  void observe(const torch::Tensor& x);
  bool initialized() const { return initialized_; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }
  void set(double lo, double hi) {
    lo_ = lo;
    hi_ = hi;
    initialized_ = true;
  }

 private:
  double momentum_;
  bool initialized_ = false;
  double lo_ = 0.0;
  double hi_ = 0.0;
};

}  // namespace autorecon
