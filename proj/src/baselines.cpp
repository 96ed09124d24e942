// Copyright (c) 2026 The autorecon Authors
// SPDX-License-Identifier: Apache-2.0

#include "autorecon/baselines.hpp"

#include <random>

#include <fmt/format.h>

namespace autorecon {

namespace F = torch::nn::functional;

HumanGeneratorImpl::HumanGeneratorImpl(const ImageShape& image, std::int64_t base_channels, std::int64_t latent_dim,
                                       std::int64_t num_classes, double channel_scale)
    : image_(image), latent_dim_(latent_dim), num_classes_(num_classes) {
  if (image.height % 4 != 0 || image.width % 4 != 0 || image.height <= 0 || image.width <= 0)
    fail(ErrorKind::config,
         fmt::format("human generator needs image sides divisible by 4, got {}x{}", image.height, image.width));
  if (latent_dim < 1 || num_classes < 1) fail(ErrorKind::config, "latent_dim and num_classes must be >= 1");
  const auto c = scaled_channels(base_channels, channel_scale);
  const auto half = std::max<std::int64_t>(8, c / 2);
  stem_ = register_module("stem", Stem(latent_dim, num_classes, num_classes, c, image.height / 4, image.width / 4));
  conv1_ = register_module("conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(c, c, 3).padding(1).bias(false)));
  norm1_ = register_module("norm1", torch::nn::BatchNorm2d(torch::nn::BatchNorm2dOptions(c).track_running_stats(false)));
  conv2_ = register_module("conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(c, half, 3).padding(1).bias(false)));
  norm2_ = register_module("norm2",
                           torch::nn::BatchNorm2d(torch::nn::BatchNorm2dOptions(half).track_running_stats(false)));
  head_ = register_module("head", Head(half, image.channels));
}

torch::Tensor HumanGeneratorImpl::forward(const torch::Tensor& z, const torch::Tensor& y) {
  const auto lrelu = F::LeakyReLUFuncOptions().negative_slope(0.2);
  const auto up = F::InterpolateFuncOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest);
  auto h = stem_->forward(z, y);
  h = F::leaky_relu(norm1_->forward(conv1_->forward(F::interpolate(h, up))), lrelu);
  h = F::leaky_relu(norm2_->forward(conv2_->forward(F::interpolate(h, up))), lrelu);
  return head_->forward(h);
}

std::shared_ptr<HumanGeneratorImpl> build_human_generator(const ImageShape& image, std::int64_t base_channels,
                                                          std::int64_t latent_dim, std::int64_t num_classes,
                                                          double channel_scale) {
  return std::make_shared<HumanGeneratorImpl>(image, base_channels, latent_dim, num_classes, channel_scale);
}

DerivedArch sample_random_arch(const MacroArchitecture& macro, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  DerivedArch d;
  d.macro = macro;
  std::vector<torch::Tensor> probs;
  for (const auto& e : macro.edges) {
    const auto f = static_cast<int>(e.candidates.size());
    d.choices.push_back(std::uniform_int_distribution<int>(0, f - 1)(rng));
    probs.push_back(torch::full({f}, 1.0 / f, torch::kFloat64));
  }
  repair_connectivity(d, probs);
  return d;
}

}  // namespace autorecon
