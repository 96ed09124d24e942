// Copyright (c) 2026 The autorecon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "autorecon/classifier.hpp"
#include "autorecon/datasets.hpp"

namespace autorecon {

struct PretrainOptions {
  int epochs = 0;  // 0: ZooModelSpec::max_epochs
  std::int64_t batch_size = 128;
  double lr = 1e-3;
  LoadOptions load;
};

struct PretrainResult {
  ClassifierPtr model;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  int epochs = 0;
  std::vector<double> trajectory;  // held-out top-1 after each epoch
};

/// Trains a zoo model on the train split and checks held-out accuracy
/// against spec.accuracy_floor. Throws ErrorKind::numeric with the
/// trajectory when the floor is missed.
PretrainResult pretrain(const ZooModelSpec& spec, const std::filesystem::path& data_dir, std::uint64_t seed,
                        const PretrainOptions& options = {});

/// Top-1 accuracy in [0, 1]. Runs in eval mode; the model's mode is restored.
double evaluate(ClassifierImpl& model, const LabeledDataset& eval_set, std::int64_t batch_size = 500);

/// Checkpoint = module archive + embedded JSON metadata
/// {spec, dataset, seed, accuracy, epoch[, scheme]}.
void save_model(ClassifierImpl& model, const nlohmann::json& metadata, const std::filesystem::path& path);
void save_pretrained(const PretrainResult& result, const std::filesystem::path& path);

struct LoadedModel {
  ClassifierPtr model;
  nlohmann::json metadata;
};
LoadedModel load_model(const std::filesystem::path& path);

}  // namespace autorecon
