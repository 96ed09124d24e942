// Copyright (c) 2026 The autorecon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include <torch/torch.h>

#include "autorecon/classifier.hpp"
#include "autorecon/fake_quant.hpp"

namespace autorecon {

/// Fake-quantized copy of a frozen pre-trained classifier.
struct QuantizedModel {
  ClassifierPtr model;
  QuantScheme scheme;

  torch::Tensor forward(const torch::Tensor& x) { return model->forward(x); }
  std::vector<torch::Tensor> trainable_parameters() const { return model->quantized_parameters(); }
};

/// Folds BN into the preceding layers of a copy of `model`, calibrates
/// activation ranges (EMA of batch min/max, momentum 0.9) on `calib_batches`
/// and freezes them. The source model is not modified.
QuantizedModel build_quantized(ClassifierImpl& model, const QuantScheme& scheme,
                               const std::vector<torch::Tensor>& calib_batches);

}  // namespace autorecon
