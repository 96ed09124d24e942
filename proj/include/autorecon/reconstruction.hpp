// Copyright (c) 2026 The autorecon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "autorecon/classifier.hpp"
#include "autorecon/generator.hpp"

namespace autorecon {

struct BNLayerStats {
  int layer = 0;
  torch::Tensor mean;      // per channel
  torch::Tensor variance;  // per channel, biased
};

/// Per-BN-layer statistics in traversal order.
struct BNStatsSnapshot {
  std::vector<BNLayerStats> layers;

  std::size_t size() const { return layers.size(); }
};

/// Stored running statistics of every BN layer (detached copies).
BNStatsSnapshot capture_original_stats(ClassifierImpl& model);

/// Batch mean / biased variance at each BN input for `x`. The model runs in
/// eval mode, so running buffers are untouched; the result stays attached to
/// the autograd graph of `x`.
BNStatsSnapshot batch_stats(ClassifierImpl& model, const torch::Tensor& x);

/// Mean over layers of mean_c (mu_r - mu_o)^2 + mean_c (var_r - var_o)^2.
torch::Tensor bns_loss(const BNStatsSnapshot& reconstructed, const BNStatsSnapshot& original);

struct ReconLossTerms {
  torch::Tensor l_class;
  torch::Tensor l_bns;
  torch::Tensor total;  // l_class + beta * l_bns
  double beta = 0.0;
};

/// Cross-entropy of the frozen model on x_r plus beta times the BN-statistics
/// distance, from a single forward pass.
ReconLossTerms reconstruction_loss(ClassifierImpl& model, const torch::Tensor& x_r, const torch::Tensor& y,
                                   const BNStatsSnapshot& original, double beta);

/// One reconstructed batch {x_r, y_r}.
struct ReconBatch {
  torch::Tensor x;
  torch::Tensor y;
};

/// Draws z ~ N(0, 1) and uniform labels, runs the generator.
ReconBatch generate_batch(GeneratorImpl& generator, std::int64_t batch, at::Generator& rng);

}  // namespace autorecon
