// Copyright (c) 2026 The autorecon Authors
// SPDX-License-Identifier: Apache-2.0

#include "autorecon/quantizer.hpp"

namespace autorecon {

QuantizedModel build_quantized(ClassifierImpl& model, const QuantScheme& scheme,
                               const std::vector<torch::Tensor>& calib_batches) {
  if (calib_batches.empty()) fail(ErrorKind::config, "quantization needs at least one calibration batch");
  QuantizedModel q{clone_classifier(model), scheme};
  q.model->eval();
  for (auto& p : q.model->parameters(true)) p.requires_grad_(false);
  for (auto unit : q.model->units()) {
    unit->enable_quantization(scheme);
    unit->set_calibrating(true);
  }
  {
    torch::NoGradGuard no_grad;
    for (const auto& batch : calib_batches) q.model->forward(batch.detach());
  }
  for (auto unit : q.model->units()) unit->freeze_activation_range();
  for (auto& p : q.trainable_parameters()) p.requires_grad_(true);
  return q;
}

}  // namespace autorecon
