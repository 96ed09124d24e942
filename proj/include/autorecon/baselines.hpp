// Copyright (c) 2026 The autorecon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>

#include "autorecon/generator.hpp"

namespace autorecon {

/// Hand-designed conditional generator in the ACGAN style:
///
///   [z ; embed(y)] -> linear -> (C, H/4, W/4) -> BN
///   -> upsample x2 -> conv3x3 C->C    -> BN -> leaky ReLU(0.2)
///   -> upsample x2 -> conv3x3 C->C/2  -> BN -> leaky ReLU(0.2)
///   -> conv3x3 C/2->image channels -> tanh
///
/// C is the (scaled) base channel count; C/2 is floored at 8. The layer sizes
/// are pinned here as the baseline contract.
class HumanGeneratorImpl : public GeneratorImpl {
 public:
  HumanGeneratorImpl(const ImageShape& image, std::int64_t base_channels, std::int64_t latent_dim,
                     std::int64_t num_classes, double channel_scale = 1.0);

  torch::Tensor forward(const torch::Tensor& z, const torch::Tensor& y) override;
  std::int64_t latent_dim() const override { return latent_dim_; }
  std::int64_t num_classes() const override { return num_classes_; }
  ImageShape image_shape() const override { return image_; }

 private:
  ImageShape image_;
  std::int64_t latent_dim_, num_classes_;
  Stem stem_{nullptr};
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
  torch::nn::BatchNorm2d norm1_{nullptr}, norm2_{nullptr};
  Head head_{nullptr};
};
TORCH_MODULE(HumanGenerator);

std::shared_ptr<HumanGeneratorImpl> build_human_generator(const ImageShape& image, std::int64_t base_channels,
                                                          std::int64_t latent_dim, std::int64_t num_classes,
                                                          double channel_scale = 1.0);

/// Uniform op per edge, then the same connectivity repair as derive().
DerivedArch sample_random_arch(const MacroArchitecture& macro, std::uint64_t seed);

}  // namespace autorecon
