// Copyright (c) 2026 The autorecon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "autorecon/common.hpp"
#include "autorecon/fake_quant.hpp"

namespace autorecon {

/// Collects per-channel batch mean and biased variance at each BN input.
/// Owned by the caller, so concurrent forwards never share buffers.
struct BnRecorder {
  std::vector<torch::Tensor> means;
  std::vector<torch::Tensor> variances;

  void record(int layer, const torch::Tensor& bn_input);
};

enum class UnitKind { conv, linear };

struct UnitOptions {
  UnitKind kind = UnitKind::conv;
  std::int64_t in = 0;
  std::int64_t out = 0;
  int kernel = 3;
  int stride = 1;
  int padding = 0;
  bool batch_norm = true;
};

/// conv/linear (+ BN). After enable_quantization() the BN is folded into a
/// separate trainable weight/bias pair, the input is fake-quantized with a
/// frozen range and the folded weight with its current min/max.
class LayerUnitImpl : public torch::nn::Module {
 public:
  LayerUnitImpl(std::string name, const UnitOptions& options);

  torch::Tensor forward(const torch::Tensor& x, BnRecorder* recorder = nullptr);

  const std::string& unit_name() const { return name_; }
  bool has_batch_norm() const { return options_.batch_norm; }
  int bn_index() const { return bn_index_; }
  void set_bn_index(int index) { bn_index_ = index; }
  /// Running mean / variance of this unit's BN.
  torch::Tensor running_mean() const;
  torch::Tensor running_var() const;

  void enable_quantization(const QuantScheme& scheme);
  bool quantized() const { return quantized_; }
  void set_calibrating(bool on) { calibrating_ = on; }
  /// Freezes the observed activation range; throws on a zero-width range.
  void freeze_activation_range();
  const RangeTracker& activation_range() const { return act_range_; }
  torch::Tensor folded_weight() const { return folded_weight_; }
  torch::Tensor folded_bias() const { return folded_bias_; }
  std::vector<torch::Tensor> quantized_parameters() const { return {folded_weight_, folded_bias_}; }
  /// Folded weight after fake quantization.
  torch::Tensor quantized_weight() const;

 private:
  torch::Tensor affine(const torch::Tensor& x, const torch::Tensor& weight, const torch::Tensor& bias) const;

  std::string name_;
  UnitOptions options_;
  int bn_index_ = -1;
  torch::nn::Conv2d conv_{nullptr};
  torch::nn::Linear linear_{nullptr};
  torch::nn::BatchNorm2d bn2d_{nullptr};
  torch::nn::BatchNorm1d bn1d_{nullptr};

  bool quantized_ = false;
  bool calibrating_ = false;
  QuantScheme scheme_;
  torch::Tensor folded_weight_, folded_bias_;
  torch::Tensor act_range_buffer_;  // [lo, hi, frozen]
  RangeTracker act_range_{0.9};
};
TORCH_MODULE(LayerUnit);

struct ZooModelSpec {
  std::string name;       // lenet_bn | resnet8_bn
  std::string dataset;    // mnist_like | cifar_like
  ImageShape input;
  std::int64_t num_classes = 10;
  double accuracy_floor = 0.0;  // minimum held-out top-1 for a successful pretrain
  int max_epochs = 10;

  bool operator==(const ZooModelSpec&) const = default;
};

ZooModelSpec zoo_spec(const std::string& name);

class ClassifierImpl : public torch::nn::Module {
 public:
  explicit ClassifierImpl(ZooModelSpec spec) : spec_(std::move(spec)) {}
  ~ClassifierImpl() override = default;

  virtual torch::Tensor forward(const torch::Tensor& x, BnRecorder* recorder = nullptr) = 0;

  const ZooModelSpec& spec() const { return spec_; }
  /// Layer units in traversal order.
  const std::vector<LayerUnit>& units() const { return units_; }
  std::vector<LayerUnit> bn_units() const;
  std::size_t num_bn_layers() const { return bn_units().size(); }
  bool quantized() const { return !units_.empty() && units_.front()->quantized(); }
  /// Trainable tensors of the quantized model (folded weights and biases).
  std::vector<torch::Tensor> quantized_parameters() const;

 protected:
  LayerUnit add_unit(const std::string& name, const UnitOptions& options);

 private:
  ZooModelSpec spec_;
  std::vector<LayerUnit> units_;
  int next_bn_ = 0;
};
using ClassifierPtr = std::shared_ptr<ClassifierImpl>;

/// conv5(8) -> pool -> conv5(16) -> pool -> fc120 -> fc84 -> fc10, BN after
/// every hidden layer.
class LeNetBNImpl : public ClassifierImpl {
 public:
  explicit LeNetBNImpl(ZooModelSpec spec);
  torch::Tensor forward(const torch::Tensor& x, BnRecorder* recorder = nullptr) override;

 private:
  LayerUnit conv1_{nullptr}, conv2_{nullptr}, fc1_{nullptr}, fc2_{nullptr}, fc3_{nullptr};
};

/// Eight weight layers: stem conv, three basic residual blocks (16, 32, 64
/// channels) and a linear classifier.
class ResNet8BNImpl : public ClassifierImpl {
 public:
  explicit ResNet8BNImpl(ZooModelSpec spec);
  torch::Tensor forward(const torch::Tensor& x, BnRecorder* recorder = nullptr) override;

 private:
  struct Block {
    LayerUnit conv1{nullptr}, conv2{nullptr}, shortcut{nullptr};
  };
  LayerUnit stem_{nullptr};
  std::vector<Block> blocks_;
  LayerUnit fc_{nullptr};
};

ClassifierPtr make_classifier(const ZooModelSpec& spec);
/// Independent copy with identical parameters and buffers.
ClassifierPtr clone_classifier(ClassifierImpl& model);
/// Disables gradients on every parameter and switches to eval mode.
void freeze(ClassifierImpl& model);

}  // namespace autorecon
