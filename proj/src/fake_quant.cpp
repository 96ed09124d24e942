// Copyright (c) 2026 The autorecon Authors
// SPDX-License-Identifier: Apache-2.0

#include "autorecon/fake_quant.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>

#include <fmt/format.h>

namespace autorecon {

namespace {

void check_bits(int bits) {
  if (bits < 2 || bits > 16) fail(ErrorKind::config, fmt::format("bit width {} outside [2, 16]", bits));
}

std::optional<int> parse_int(std::string_view s) {
  int v = 0;
  if (s.empty()) return std::nullopt;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace

std::string QuantScheme::notation() const { return fmt::format("w{}a{}", weight_bits, act_bits); }

QuantScheme QuantScheme::parse(std::string_view text) {
  const auto bad = [&](std::string_view why) {
    fail(ErrorKind::config, fmt::format("invalid quantization scheme '{}': {} (expected wXaY, 2 <= X,Y <= 16)", text, why));
  };
  if (text.size() < 4 || text.front() != 'w') bad("must start with 'w'");
  const auto a = text.find('a');
  if (a == std::string_view::npos) bad("missing 'a'");
  const auto w = parse_int(text.substr(1, a - 1));
  const auto act = parse_int(text.substr(a + 1));
  if (!w || !act) bad("bit widths must be integers");
  if (*w < 2 || *w > 16 || *act < 2 || *act > 16) bad("bit width out of range");
  return {*w, *act};
}

QuantGrid make_grid(int bits, QuantMode mode, double lo, double hi) {
  check_bits(bits);
  if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi))
    fail(ErrorKind::calibration, fmt::format("quantization range [{}, {}] is empty", lo, hi));
  QuantGrid g;
  if (mode == QuantMode::symmetric) {
    const double a = std::max(std::abs(lo), std::abs(hi));
    const std::int64_t half = std::int64_t{1} << (bits - 1);
    g.scale = a / static_cast<double>(half - 1);
    g.zero_point = 0;
    g.qmin = -half;
    g.qmax = half - 1;
  } else {
    lo = std::min(lo, 0.0);
    hi = std::max(hi, 0.0);
    g.qmin = 0;
    g.qmax = (std::int64_t{1} << bits) - 1;
    g.scale = (hi - lo) / static_cast<double>(g.qmax);
    g.zero_point = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::nearbyint(-lo / g.scale)), 0, g.qmax);
  }
  return g;
}

torch::Tensor quantize_on_grid(const torch::Tensor& x, const QuantGrid& grid) {
  const auto xd = x.detach();
  const auto zp = static_cast<double>(grid.zero_point);
  auto q = torch::clamp(torch::round(xd / grid.scale) + zp, static_cast<double>(grid.qmin),
                        static_cast<double>(grid.qmax));
  auto values = (q - zp) * grid.scale;
  if (!x.requires_grad()) return values;
  // value is exactly `values`; gradient is the inside-range mask
  auto inside = ((xd >= grid.lower()) & (xd <= grid.upper())).to(x.scalar_type());
  return values + (x - xd) * inside;
}

torch::Tensor quantize_tensor(const torch::Tensor& x, int bits, QuantMode mode, double lo, double hi) {
  return quantize_on_grid(x, make_grid(bits, mode, lo, hi));
}

void RangeTracker::observe(const torch::Tensor& x) {
  const auto d = x.detach();
  const double lo = d.min().item<double>();
  const double hi = d.max().item<double>();
  if (!initialized_) {
    lo_ = lo;
    hi_ = hi;
    initialized_ = true;
    return;
  }
  lo_ = momentum_ * lo_ + (1.0 - momentum_) * lo;
  hi_ = momentum_ * hi_ + (1.0 - momentum_) * hi;
}

}  // namespace autorecon
