// Copyright (c) 2026 The autorecon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "autorecon/classifier.hpp"
#include "autorecon/generator.hpp"
#include "autorecon/reconstruction.hpp"
#include "autorecon/search_space.hpp"

namespace autorecon {

struct AdamSettings {
  double lr = 1e-3;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double weight_decay = 0.0;
};

struct SearchConfig {
  int epochs = 10;        // L1
  int weight_steps = 10;  // T1, per epoch
  int arch_steps = 5;     // V1, per epoch; 0 freezes the architecture
  std::int64_t batch_size = 32;
  AdamSettings weight_optimizer{1e-3, 0.5, 0.999, 0.0};
  AdamSettings arch_optimizer{3e-4, 0.5, 0.999, 1e-3};
  double tau_start = 5.0;
  double tau_end = 0.5;
  double beta = 0.1;
  bool gumbel_on_log_probs = false;
  std::uint64_t seed = 0;

  int checkpoint_every = 0;  // epochs; 0 disables
  int epoch_limit = 0;       // stop after this many epochs in one call (0: run to completion)
  std::filesystem::path checkpoint_path;
  std::filesystem::path resume_from;
  std::filesystem::path telemetry_path;  // line-delimited JSON; empty disables

  void validate() const;
};

/// Exponential interpolation from tau_start (epoch 0) to tau_end (epoch L1-1).
double anneal_tau(int epoch, const SearchConfig& cfg);

struct TelemetryRecord {
  std::int64_t step = 0;
  std::string phase;  // "weight" | "arch"
  double l_class = 0.0;
  double l_bns = 0.0;
  double total = 0.0;
  double tau = 0.0;

  std::string to_json() const;
};

struct SearchState {
  int epoch = 0;  // epochs completed
  double tau = 0.0;
  Supernet supernet{nullptr};
  std::vector<TelemetryRecord> telemetry;
};

struct SearchResult {
  DerivedArch derived;
  SearchState state;
};

/// One supernet-weight update on a fresh sampled batch; alpha receives no
/// gradient. Returns the loss terms of the batch.
ReconLossTerms weight_step(SupernetImpl& net, ClassifierImpl& model, const BNStatsSnapshot& original,
                           torch::optim::Optimizer& optimizer, at::Generator& rng, std::int64_t batch_size,
                           double beta);

/// One architecture update on a fresh sampled batch with the supernet
/// weights frozen for the duration of the step.
ReconLossTerms arch_step(SupernetImpl& net, ClassifierImpl& model, const BNStatsSnapshot& original,
                         torch::optim::Optimizer& optimizer, at::Generator& rng, std::int64_t batch_size, double beta);

/// Alternates, per epoch, T1 supernet-weight steps on fresh reconstructed
/// training batches (alpha fixed) and V1 architecture steps on fresh
/// reconstructed validation batches (weights fixed), then derives the
/// discrete architecture. Weight and architecture phases draw noise from
/// separate streams so that a V1 = 0 run is the paired frozen-alpha control.
SearchResult search(ClassifierImpl& model, const MacroArchitecture& macro, const SearchConfig& cfg);

/// Mean reconstruction loss of `generator` over `batches` fixed-seed batches.
struct LossEstimate {
  double l_class = 0.0;
  double l_bns = 0.0;
  double total = 0.0;
};
LossEstimate estimate_recon_loss(GeneratorImpl& generator, ClassifierImpl& model, const BNStatsSnapshot& original,
                                 double beta, int batches, std::int64_t batch_size, std::uint64_t seed);

/// FNV-1a over the raw bytes of each tensor, in order.
std::uint64_t hash_tensors(const std::vector<torch::Tensor>& tensors);

}  // namespace autorecon
