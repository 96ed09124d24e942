// Copyright (c) 2026 The autorecon Authors
// SPDX-License-Identifier: Apache-2.0

#include "autorecon/classifier.hpp"

#include <fmt/format.h>

namespace autorecon {

namespace F = torch::nn::functional;

void BnRecorder::record(int layer, const torch::Tensor& bn_input) {
  if (layer < 0) return;
  const auto index = static_cast<std::size_t>(layer);
  if (means.size() <= index) {
    means.resize(index + 1);
    variances.resize(index + 1);
  }
  std::vector<std::int64_t> dims = {0};
  if (bn_input.dim() == 4) dims = {0, 2, 3};
  means[index] = bn_input.mean(dims);
  variances[index] = bn_input.var(dims, /*unbiased=*/false);
}

LayerUnitImpl::LayerUnitImpl(std::string name, const UnitOptions& options)
    : name_(std::move(name)), options_(options) {
  if (options.kind == UnitKind::conv) {
    conv_ = register_module("conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(options.in, options.out, options.kernel)
                                                          .stride(options.stride)
                                                          .padding(options.padding)
                                                          .bias(!options.batch_norm)));
    if (options.batch_norm) bn2d_ = register_module("bn", torch::nn::BatchNorm2d(options.out));
  } else {
    linear_ = register_module(
        "linear", torch::nn::Linear(torch::nn::LinearOptions(options.in, options.out).bias(!options.batch_norm)));
    if (options.batch_norm) bn1d_ = register_module("bn", torch::nn::BatchNorm1d(options.out));
  }
}

torch::Tensor LayerUnitImpl::affine(const torch::Tensor& x, const torch::Tensor& weight,
                                    const torch::Tensor& bias) const {
  if (options_.kind == UnitKind::conv) {
    return F::conv2d(x, weight, F::Conv2dFuncOptions().bias(bias).stride(options_.stride).padding(options_.padding));
  }
  return F::linear(x, weight, bias);
}

torch::Tensor LayerUnitImpl::running_mean() const {
  if (bn2d_) return bn2d_->running_mean;
  if (bn1d_) return bn1d_->running_mean;
  fail(ErrorKind::unsupported, fmt::format("layer {} has no batch norm", name_));
}

torch::Tensor LayerUnitImpl::running_var() const {
  if (bn2d_) return bn2d_->running_var;
  if (bn1d_) return bn1d_->running_var;
  fail(ErrorKind::unsupported, fmt::format("layer {} has no batch norm", name_));
}

torch::Tensor LayerUnitImpl::forward(const torch::Tensor& x, BnRecorder* recorder) {
  if (!quantized_) {
    const auto& weight = conv_ ? conv_->weight : linear_->weight;
    const auto& bias = conv_ ? conv_->bias : linear_->bias;
    auto h = affine(x, weight, bias);
    if (!options_.batch_norm) return h;
    if (recorder != nullptr) recorder->record(bn_index_, h);
    return bn2d_ ? bn2d_->forward(h) : bn1d_->forward(h);
  }
  if (calibrating_) {
    act_range_.observe(x);
    return affine(x, folded_weight_, folded_bias_);
  }
  auto range = act_range_buffer_.accessor<float, 1>();
  if (range[2] == 0.0f) fail(ErrorKind::calibration, fmt::format("layer {} has not been calibrated", name_));
  const auto grid = make_grid(scheme_.act_bits, QuantMode::asymmetric, range[0], range[1]);
  return affine(quantize_on_grid(x, grid), quantized_weight(), folded_bias_);
}

torch::Tensor LayerUnitImpl::quantized_weight() const {
  const double a = folded_weight_.detach().abs().max().item<double>();
  if (a == 0.0) return folded_weight_;
  return quantize_on_grid(folded_weight_, make_grid(scheme_.weight_bits, QuantMode::symmetric, -a, a));
}

void LayerUnitImpl::enable_quantization(const QuantScheme& scheme) {
  if (quantized_) fail(ErrorKind::config, fmt::format("layer {} is already quantized", name_));
  scheme_ = scheme;
  torch::NoGradGuard no_grad;
  const auto& weight = conv_ ? conv_->weight : linear_->weight;
  const auto& bias = conv_ ? conv_->bias : linear_->bias;
  torch::Tensor w = weight.detach().clone();
  torch::Tensor b = bias.defined() ? bias.detach().clone() : torch::zeros({options_.out}, w.options());
  if (options_.batch_norm) {
    const auto& bn_opts = bn2d_ ? bn2d_->options.eps() : bn1d_->options.eps();
    const auto gamma = bn2d_ ? bn2d_->weight : bn1d_->weight;
    const auto beta = bn2d_ ? bn2d_->bias : bn1d_->bias;
    const auto factor = gamma.detach() / torch::sqrt(running_var() + bn_opts);
    std::vector<std::int64_t> shape(w.dim(), 1);
    shape[0] = -1;
    w = w * factor.view(shape);
    b = beta.detach() + (b - running_mean()) * factor;
  }
  folded_weight_ = register_parameter("folded_weight", w);
  folded_bias_ = register_parameter("folded_bias", b);
  act_range_buffer_ = register_buffer("act_range", torch::zeros({3}, torch::kFloat32));
  quantized_ = true;
}

void LayerUnitImpl::freeze_activation_range() {
  if (!quantized_) fail(ErrorKind::config, fmt::format("layer {} is not quantized", name_));
  if (!act_range_.initialized()) fail(ErrorKind::calibration, fmt::format("layer {} saw no calibration data", name_));
  const double lo = std::min(act_range_.lo(), 0.0);
  const double hi = std::max(act_range_.hi(), 0.0);
  if (!(hi - lo > 0.0))
    fail(ErrorKind::calibration,
         fmt::format("degenerate activation range [{}, {}] at layer {}", act_range_.lo(), act_range_.hi(), name_));
  torch::NoGradGuard no_grad;
  act_range_buffer_[0] = act_range_.lo();
  act_range_buffer_[1] = act_range_.hi();
  act_range_buffer_[2] = 1.0;
  calibrating_ = false;
}

ZooModelSpec zoo_spec(const std::string& name) {
  if (name == "lenet_bn") return {"lenet_bn", "mnist_like", {1, 32, 32}, 10, 0.985, 10};
  if (name == "resnet8_bn") return {"resnet8_bn", "cifar_like", {3, 32, 32}, 10, 0.75, 30};
  fail(ErrorKind::config, fmt::format("unknown zoo model '{}' (expected lenet_bn or resnet8_bn)", name));
}

std::vector<LayerUnit> ClassifierImpl::bn_units() const {
  std::vector<LayerUnit> out;
  for (const auto& u : units_) {
    if (u->has_batch_norm()) out.push_back(u);
  }
  return out;
}

std::vector<torch::Tensor> ClassifierImpl::quantized_parameters() const {
  std::vector<torch::Tensor> out;
  for (const auto& u : units_) {
    if (!u->quantized()) fail(ErrorKind::config, "model is not quantized");
    for (auto& t : u->quantized_parameters()) out.push_back(t);
  }
  return out;
}

LayerUnit ClassifierImpl::add_unit(const std::string& name, const UnitOptions& options) {
  auto unit = register_module(name, LayerUnit(name, options));
  if (options.batch_norm) unit->set_bn_index(next_bn_++);
  units_.push_back(unit);
  return unit;
}

LeNetBNImpl::LeNetBNImpl(ZooModelSpec spec) : ClassifierImpl(std::move(spec)) {
  const auto& in = this->spec().input;
  const auto side = ((in.height - 4) / 2 - 4) / 2;
  conv1_ = add_unit("conv1", {UnitKind::conv, in.channels, 8, 5});
  conv2_ = add_unit("conv2", {UnitKind::conv, 8, 16, 5});
  fc1_ = add_unit("fc1", {UnitKind::linear, 16 * side * side, 120});
  fc2_ = add_unit("fc2", {UnitKind::linear, 120, 84});
  fc3_ = add_unit("fc3", {UnitKind::linear, 84, this->spec().num_classes, 0, 1, 0, false});
}

torch::Tensor LeNetBNImpl::forward(const torch::Tensor& x, BnRecorder* recorder) {
  auto h = F::max_pool2d(torch::relu(conv1_->forward(x, recorder)), F::MaxPool2dFuncOptions(2));
  h = F::max_pool2d(torch::relu(conv2_->forward(h, recorder)), F::MaxPool2dFuncOptions(2));
  h = h.flatten(1);
  h = torch::relu(fc1_->forward(h, recorder));
  h = torch::relu(fc2_->forward(h, recorder));
  return fc3_->forward(h, recorder);
}

ResNet8BNImpl::ResNet8BNImpl(ZooModelSpec spec) : ClassifierImpl(std::move(spec)) {
  const auto& in = this->spec().input;
  stem_ = add_unit("stem", {UnitKind::conv, in.channels, 16, 3, 1, 1});
  std::int64_t channels = 16;
  const std::int64_t widths[] = {16, 32, 64};
  for (int b = 0; b < 3; ++b) {
    const auto out = widths[b];
    const int stride = b == 0 ? 1 : 2;
    Block block;
    block.conv1 = add_unit(fmt::format("block{}_conv1", b), {UnitKind::conv, channels, out, 3, stride, 1});
    block.conv2 = add_unit(fmt::format("block{}_conv2", b), {UnitKind::conv, out, out, 3, 1, 1});
    if (stride != 1 || channels != out)
      block.shortcut = add_unit(fmt::format("block{}_shortcut", b), {UnitKind::conv, channels, out, 1, stride, 0});
    blocks_.push_back(block);
    channels = out;
  }
  fc_ = add_unit("fc", {UnitKind::linear, channels, this->spec().num_classes, 0, 1, 0, false});
}

torch::Tensor ResNet8BNImpl::forward(const torch::Tensor& x, BnRecorder* recorder) {
  auto h = torch::relu(stem_->forward(x, recorder));
  for (auto& block : blocks_) {
    auto r = torch::relu(block.conv1->forward(h, recorder));
    r = block.conv2->forward(r, recorder);
    auto skip = block.shortcut ? block.shortcut->forward(h, recorder) : h;
    h = torch::relu(r + skip);
  }
  h = F::adaptive_avg_pool2d(h, F::AdaptiveAvgPool2dFuncOptions(1)).flatten(1);
  return fc_->forward(h, recorder);
}

ClassifierPtr make_classifier(const ZooModelSpec& spec) {
  if (spec.name == "lenet_bn") return std::make_shared<LeNetBNImpl>(spec);
  if (spec.name == "resnet8_bn") return std::make_shared<ResNet8BNImpl>(spec);
  fail(ErrorKind::config, fmt::format("unknown zoo model '{}'", spec.name));
}

ClassifierPtr clone_classifier(ClassifierImpl& model) {
  if (model.quantized()) fail(ErrorKind::config, "cloning a quantized model is not supported");
  auto copy = make_classifier(model.spec());
  torch::NoGradGuard no_grad;
  auto src_params = model.named_parameters(true);
  for (auto& p : copy->named_parameters(true)) p.value().copy_(src_params[p.key()]);
  auto src_buffers = model.named_buffers(true);
  for (auto& b : copy->named_buffers(true)) b.value().copy_(src_buffers[b.key()]);
  copy->train(model.is_training());
  return copy;
}

void freeze(ClassifierImpl& model) {
  for (auto& p : model.parameters(true)) p.requires_grad_(false);
  model.eval();
}

}  // namespace autorecon
