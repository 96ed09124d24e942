// Copyright (c) 2026 The autorecon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "autorecon/classifier.hpp"
#include "autorecon/datasets.hpp"
#include "autorecon/fake_quant.hpp"
#include "autorecon/generator.hpp"
#include "autorecon/search_engine.hpp"

namespace autorecon {

struct GeneratorTrainConfig {
  int epochs = 10;
  int steps = 20;  // per epoch
  std::int64_t batch_size = 32;
  AdamSettings optimizer{1e-3, 0.5, 0.999, 0.0};
  double beta = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Minimizes the reconstruction loss over the generator weights for a fixed
/// budget. The classifier is only read. Returns the per-step total loss.
std::vector<double> train_generator(ClassifierImpl& model, GeneratorImpl& generator, const GeneratorTrainConfig& cfg);

/// Instantiates the derived architecture (weights seeded from cfg.seed) and
/// trains it from scratch.
std::shared_ptr<DerivedGeneratorImpl> train_generator(ClassifierImpl& model, const DerivedArch& arch,
                                                      const GeneratorTrainConfig& cfg);

enum class CompressMode { quantize, distill };

struct CompressConfig {
  int epochs = 5;  // L2
  int steps = 50;  // T2, per epoch
  std::int64_t batch_size = 64;
  CompressMode mode = CompressMode::quantize;
  std::optional<QuantScheme> scheme;   // quantize mode
  std::optional<std::string> student;  // distill mode: zoo model name
  double kd_temperature = 1.0;
  double kd_weight = 1.0;  // gamma
  AdamSettings optimizer{1e-4, 0.9, 0.999, 0.0};
  int calib_batches = 4;
  bool joint = false;  // also update the generator (off for the strict two-stage flow)
  double generator_lr = 1e-3;
  double beta = 0.1;  // reconstruction weight for joint generator updates
  std::uint64_t seed = 0;

  void validate() const;
};

struct CompressResult {
  ClassifierPtr model;
  std::vector<double> trajectory;  // held-out top-1 after each epoch
  double final_accuracy = 0.0;
  std::optional<double> ptq_accuracy;  // quantize mode: calibrated, not fine-tuned (A0)
  double wall_clock_s = 0.0;
  CompressConfig config;
};

/// T^2 * KL(softmax(teacher/T) || softmax(student/T)), averaged over the batch.
torch::Tensor kd_loss(const torch::Tensor& student_logits, const torch::Tensor& teacher_logits, double temperature);

/// L_c for one batch: CE + gamma * KD in quantize mode, gamma * KD alone in
/// distill mode.
torch::Tensor compression_loss(const torch::Tensor& student_logits, const torch::Tensor& teacher_logits,
                               const torch::Tensor& labels, const CompressConfig& cfg);

/// Trains the compressed model on generator data only. `eval_set` is read
/// solely for per-epoch accuracy reporting. The generator is not modified
/// unless cfg.joint is set.
CompressResult compress(ClassifierImpl& model, GeneratorImpl& generator, const CompressConfig& cfg,
                        const LabeledDataset& eval_set);

}  // namespace autorecon
