// Copyright (c) 2026 The autorecon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "autorecon/common.hpp"

namespace autorecon {

enum class DataPurpose { training, evaluation };

/// Process-wide counters of real-data batch reads. Stage 1 and stage 2 must
/// leave the training counter untouched.
class DataAudit {
 public:
  static void record(DataPurpose purpose, std::int64_t samples);
  static std::int64_t training_reads();
  static std::int64_t evaluation_reads();
  static void reset();
};

enum class Split { train, test };

/// Images normalized to [-1, 1], NCHW float32; labels int64.
class LabeledDataset {
 public:
  LabeledDataset() = default;
  LabeledDataset(torch::Tensor images, torch::Tensor labels);

  std::int64_t size() const { return labels_.defined() ? labels_.size(0) : 0; }
  bool empty() const { return size() == 0; }
  ImageShape image_shape() const;

  /// Rows [begin, end) and their labels; every call is counted by DataAudit.
  std::pair<torch::Tensor, torch::Tensor> batch(std::int64_t begin, std::int64_t end, DataPurpose purpose) const;
  /// Rows at the given indices.
  std::pair<torch::Tensor, torch::Tensor> gather(const torch::Tensor& indices, DataPurpose purpose) const;

 private:
  torch::Tensor images_;
  torch::Tensor labels_;
};

/// Dataset root: AUTORECON_DATA_DIR if set, otherwise `configured`.
std::filesystem::path resolve_data_dir(const std::filesystem::path& configured);

/// IDX readers (plain or gzip-compressed files).
torch::Tensor read_idx_images(const std::filesystem::path& path);  // uint8 (N, H, W)
torch::Tensor read_idx_labels(const std::filesystem::path& path);  // int64 (N)

/// CIFAR-10 binary batch: records of 1 label byte + 3072 CHW pixel bytes.
std::pair<torch::Tensor, torch::Tensor> read_cifar_batch(const std::filesystem::path& path);

struct LoadOptions {
  bool allow_download = false;
};

/// mnist_like: IDX archives under <root>/mnist_like, zero-padded to 32x32.
LabeledDataset load_mnist_like(const std::filesystem::path& root, Split split, const LoadOptions& options = {});
/// cifar_like: CIFAR-10 binary batches under <root>/cifar_like.
LabeledDataset load_cifar_like(const std::filesystem::path& root, Split split, const LoadOptions& options = {});
LabeledDataset load_dataset(const std::string& name, const std::filesystem::path& root, Split split,
                            const LoadOptions& options = {});

/// Downloads `url` to `dest` and verifies its MD5 digest.
void download_verified(const std::string& url, const std::filesystem::path& dest, const std::string& md5_hex);
std::string md5_file(const std::filesystem::path& path);

}  // namespace autorecon
