// Copyright (c) 2026 The autorecon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include <torch/torch.h>

#include "autorecon/search_space.hpp"

namespace autorecon {

/// Conditional generator (z, y) -> image in [-1, 1]. All generators share this
/// signature so the training engines do not care which one they drive.
///
/// Generator batch norms always normalize with batch statistics and keep no
/// running buffers, so a generator behaves the same in train and eval mode
/// and the only mutable state is its parameters.
class GeneratorImpl : public torch::nn::Module {
 public:
  virtual torch::Tensor forward(const torch::Tensor& z, const torch::Tensor& y) = 0;
  virtual std::int64_t latent_dim() const = 0;
  virtual std::int64_t num_classes() const = 0;
  virtual ImageShape image_shape() const = 0;
  ~GeneratorImpl() override = default;
};
using GeneratorPtr = std::shared_ptr<GeneratorImpl>;

/// Label embedding concatenated to z, projected by a linear layer to the
/// initial feature map.
class StemImpl : public torch::nn::Module {
 public:
  StemImpl(std::int64_t latent_dim, std::int64_t num_classes, std::int64_t embed_dim, std::int64_t channels,
           std::int64_t height, std::int64_t width);
  torch::Tensor forward(const torch::Tensor& z, const torch::Tensor& y);

 private:
  std::int64_t channels_, height_, width_;
  torch::nn::Embedding embed_{nullptr};
  torch::nn::Linear project_{nullptr};
  torch::nn::BatchNorm2d norm_{nullptr};
};
TORCH_MODULE(Stem);

/// conv (same padding) -> batch norm -> leaky ReLU(0.2)
class ConvOpImpl : public torch::nn::Module {
 public:
  ConvOpImpl(std::int64_t channels, int kernel, int dilation);
  torch::Tensor forward(const torch::Tensor& x);
  const torch::nn::Conv2d& conv() const { return conv_; }

 private:
  torch::nn::Conv2d conv_{nullptr};
  torch::nn::BatchNorm2d norm_{nullptr};
};
TORCH_MODULE(ConvOp);

/// 3x3 conv to image channels followed by tanh.
class HeadImpl : public torch::nn::Module {
 public:
  HeadImpl(std::int64_t channels, std::int64_t image_channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv_{nullptr};
};
TORCH_MODULE(Head);

/// Applies a parameter-free op or `module` to x, producing a map of dst's size.
torch::Tensor apply_operation(const OperationSpec& op, ConvOp module, const torch::Tensor& x,
                              std::int64_t dst_height, std::int64_t dst_width);

enum class MixMode { sampled, expected };

/// Over-parameterized generator: every edge evaluates all its candidates and
/// returns their mixture weighted by m. Architecture logits live beside the
/// module parameters and are not part of parameters().
class SupernetImpl : public GeneratorImpl {
 public:
  explicit SupernetImpl(MacroArchitecture macro);

  /// Expected-mode forward (m = softmax(alpha)).
  torch::Tensor forward(const torch::Tensor& z, const torch::Tensor& y) override;
  /// Forward with explicit per-edge mixing weights.
  torch::Tensor forward_mixed(const torch::Tensor& z, const torch::Tensor& y, const std::vector<torch::Tensor>& mix);

  /// Per-edge mixing weights. `sampled` draws Gumbel noise from `generator`.
  std::vector<torch::Tensor> mix_weights(MixMode mode, at::Generator* generator = nullptr) const;
  /// One-hot weights selecting the given choices.
  std::vector<torch::Tensor> one_hot_mix(const std::vector<int>& choices) const;

  ArchParams& arch() { return arch_; }
  const ArchParams& arch() const { return arch_; }
  void set_arch(ArchParams arch);
  bool gumbel_on_log_probs = false;

  const MacroArchitecture& macro() const { return macro_; }
  std::int64_t latent_dim() const override { return macro_.latent_dim; }
  std::int64_t num_classes() const override { return macro_.num_classes; }
  ImageShape image_shape() const override { return macro_.image; }

 private:
  MacroArchitecture macro_;
  ArchParams arch_;
  Stem stem_{nullptr};
  Head head_{nullptr};
  std::vector<std::vector<ConvOp>> ops_;  // [edge][candidate], null for parameter-free ops
};
TORCH_MODULE(Supernet);

/// Discrete generator instantiated from a derived architecture.
class DerivedGeneratorImpl : public GeneratorImpl {
 public:
  explicit DerivedGeneratorImpl(DerivedArch arch);

  torch::Tensor forward(const torch::Tensor& z, const torch::Tensor& y) override;
  /// Copies the stem, head and chosen-op weights out of a supernet with the
  /// same macro.
  void copy_weights_from(SupernetImpl& supernet);

  const DerivedArch& arch() const { return arch_; }
  std::int64_t latent_dim() const override { return arch_.macro.latent_dim; }
  std::int64_t num_classes() const override { return arch_.macro.num_classes; }
  ImageShape image_shape() const override { return arch_.macro.image; }

 private:
  DerivedArch arch_;
  Stem stem_{nullptr};
  Head head_{nullptr};
  std::vector<ConvOp> ops_;  // [edge], null for parameter-free ops
};
TORCH_MODULE(DerivedGenerator);

std::shared_ptr<DerivedGeneratorImpl> instantiate_derived(const DerivedArch& arch);

/// Number of scalar weights in conv kernels (biases and norm affine terms excluded).
std::int64_t count_conv_weights(torch::nn::Module& module);
std::int64_t count_parameters(torch::nn::Module& module);

/// Sample a latent batch and uniform labels.
struct NoiseBatch {
  torch::Tensor z;
  torch::Tensor y;
};
NoiseBatch sample_noise(std::int64_t batch, std::int64_t latent_dim, std::int64_t num_classes,
                        at::Generator& generator, torch::Dtype dtype = torch::kFloat32);

}  // namespace autorecon
