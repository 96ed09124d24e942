// Copyright (c) 2026 The autorecon Authors
// SPDX-License-Identifier: Apache-2.0

#include "autorecon/generator.hpp"

#include <fmt/format.h>

namespace autorecon {

namespace F = torch::nn::functional;

namespace {

std::string module_name(int edge, const OperationSpec& op) {
  std::string name = fmt::format("edge{}_{}", edge, op_name(op.kind));
  for (auto& c : name) {
    if (c == '-') c = '_';
  }
  return name;
}

torch::nn::BatchNorm2dOptions batch_only_norm(std::int64_t channels) {
  return torch::nn::BatchNorm2dOptions(channels).track_running_stats(false);
}

}  // namespace

StemImpl::StemImpl(std::int64_t latent_dim, std::int64_t num_classes, std::int64_t embed_dim, std::int64_t channels,
                   std::int64_t height, std::int64_t width)
    : channels_(channels), height_(height), width_(width) {
  embed_ = register_module("embed", torch::nn::Embedding(num_classes, embed_dim));
  project_ = register_module("project", torch::nn::Linear(latent_dim + embed_dim, channels * height * width));
  norm_ = register_module("norm", torch::nn::BatchNorm2d(batch_only_norm(channels)));
}

torch::Tensor StemImpl::forward(const torch::Tensor& z, const torch::Tensor& y) {
  auto h = project_->forward(torch::cat({z, embed_->forward(y)}, 1));
  return norm_->forward(h.view({z.size(0), channels_, height_, width_}));
}

ConvOpImpl::ConvOpImpl(std::int64_t channels, int kernel, int dilation) {
  const int pad = dilation * (kernel - 1) / 2;
  conv_ = register_module(
      "conv", torch::nn::Conv2d(
                  torch::nn::Conv2dOptions(channels, channels, kernel).padding(pad).dilation(dilation).bias(false)));
  norm_ = register_module("norm", torch::nn::BatchNorm2d(batch_only_norm(channels)));
}

torch::Tensor ConvOpImpl::forward(const torch::Tensor& x) {
  return F::leaky_relu(norm_->forward(conv_->forward(x)), F::LeakyReLUFuncOptions().negative_slope(0.2));
}

HeadImpl::HeadImpl(std::int64_t channels, std::int64_t image_channels) {
  conv_ = register_module("conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, image_channels, 3).padding(1)));
}

torch::Tensor HeadImpl::forward(const torch::Tensor& x) { return torch::tanh(conv_->forward(x)); }

torch::Tensor apply_operation(const OperationSpec& op, ConvOp module, const torch::Tensor& x,
                              std::int64_t dst_height, std::int64_t dst_width) {
  switch (op.kind) {
    case OpKind::identity:
      if (x.size(2) != dst_height || x.size(3) != dst_width)
        fail(ErrorKind::structural, "identity edge between nodes of different resolution");
      return x;
    case OpKind::none:
      return torch::zeros({x.size(0), x.size(1), dst_height, dst_width}, x.options());
    case OpKind::nn_interp:
      return F::interpolate(x, F::InterpolateFuncOptions()
                                   .size(std::vector<std::int64_t>{dst_height, dst_width})
                                   .mode(torch::kNearest));
    case OpKind::bilinear_interp:
      return F::interpolate(x, F::InterpolateFuncOptions()
                                   .size(std::vector<std::int64_t>{dst_height, dst_width})
                                   .mode(torch::kBilinear)
                                   .align_corners(false));
    default:
      if (!module) fail(ErrorKind::structural, "convolution op without weights");
      return module->forward(x);
  }
}

SupernetImpl::SupernetImpl(MacroArchitecture macro) : macro_(std::move(macro)) {
  const auto c = macro_.base_channels;
  stem_ = register_module("stem", Stem(macro_.latent_dim, macro_.num_classes, macro_.label_embed_dim, c,
                                       macro_.stem_height, macro_.stem_width));
  head_ = register_module("head", Head(c, macro_.image.channels));
  ops_.resize(macro_.edges.size());
  for (const auto& e : macro_.edges) {
    for (const auto& op : e.candidates) {
      ConvOp m{nullptr};
      if (op.is_conv()) m = register_module(module_name(e.id, op), ConvOp(c, op.kernel, op.dilation));
      ops_[e.id].push_back(m);
    }
  }
  arch_ = ArchParams::uniform(macro_);
  for (auto& a : arch_.alpha) a.requires_grad_(true);
}

void SupernetImpl::set_arch(ArchParams arch) {
  arch.check(macro_);
  arch_ = std::move(arch);
  for (auto& a : arch_.alpha) a.requires_grad_(true);
}

std::vector<torch::Tensor> SupernetImpl::mix_weights(MixMode mode, at::Generator* generator) const {
  std::vector<torch::Tensor> mix;
  mix.reserve(arch_.alpha.size());
  for (const auto& alpha : arch_.alpha) {
    auto p = edge_probabilities(alpha);
    if (mode == MixMode::expected) {
      mix.push_back(p);
    } else {
      if (generator == nullptr) fail(ErrorKind::config, "sampled mixing needs a random generator");
      mix.push_back(gumbel_mix_weights(p, sample_gumbel(p, *generator), arch_.tau, gumbel_on_log_probs));
    }
  }
  return mix;
}

std::vector<torch::Tensor> SupernetImpl::one_hot_mix(const std::vector<int>& choices) const {
  if (choices.size() != macro_.edges.size()) fail(ErrorKind::structural, "choice count does not match edges");
  std::vector<torch::Tensor> mix;
  for (std::size_t i = 0; i < choices.size(); ++i) {
    auto m = torch::zeros({static_cast<std::int64_t>(macro_.edges[i].candidates.size())},
                          arch_.alpha[i].options().requires_grad(false));
    m[choices[i]] = 1.0;
    mix.push_back(m);
  }
  return mix;
}

torch::Tensor SupernetImpl::forward(const torch::Tensor& z, const torch::Tensor& y) {
  return forward_mixed(z, y, mix_weights(MixMode::expected));
}

torch::Tensor SupernetImpl::forward_mixed(const torch::Tensor& z, const torch::Tensor& y,
                                          const std::vector<torch::Tensor>& mix) {
  if (mix.size() != macro_.edges.size())
    fail(ErrorKind::structural, fmt::format("got {} mixing vectors for {} edges", mix.size(), macro_.edges.size()));
  if (z.dim() != 2 || z.size(1) != macro_.latent_dim)
    fail(ErrorKind::structural, fmt::format("latent batch must be (B, {})", macro_.latent_dim));

  std::vector<torch::Tensor> nodes(macro_.nodes.size());
  nodes[0] = stem_->forward(z, y);
  for (std::size_t n = 1; n < macro_.nodes.size(); ++n) {
    const auto& node = macro_.nodes[n];
    torch::Tensor acc;
    for (int eid : macro_.incoming_edges(static_cast<int>(n))) {
      const auto& edge = macro_.edges[eid];
      const auto& m = mix[eid];
      if (m.numel() != static_cast<std::int64_t>(edge.candidates.size()))
        fail(ErrorKind::structural, fmt::format("edge {}: mixing vector has wrong length", eid));
      const bool constant_mix = !m.requires_grad();
      const auto host = m.detach().to(torch::kFloat64).contiguous();
      const double* w = host.data_ptr<double>();
      for (std::size_t j = 0; j < edge.candidates.size(); ++j) {
        const auto& op = edge.candidates[j];
        // `none` contributes exactly zero to both value and gradient.
        if (op.kind == OpKind::none) continue;
        if (constant_mix && w[j] == 0.0) continue;
        auto out = apply_operation(op, ops_[eid][j], nodes[edge.src], node.height, node.width) * m[j];
        acc = acc.defined() ? acc + out : out;
      }
    }
    if (!acc.defined()) {
      acc = torch::zeros({z.size(0), node.channels, node.height, node.width}, nodes[0].options());
    }
    nodes[n] = acc;
  }
  return head_->forward(nodes.back());
}

DerivedGeneratorImpl::DerivedGeneratorImpl(DerivedArch arch) : arch_(std::move(arch)) {
  const auto& macro = arch_.macro;
  if (arch_.choices.size() != macro.edges.size()) fail(ErrorKind::structural, "derived arch has wrong edge count");
  const auto c = arch_.channels();
  stem_ = register_module("stem", Stem(macro.latent_dim, macro.num_classes, macro.label_embed_dim, c,
                                       macro.stem_height, macro.stem_width));
  head_ = register_module("head", Head(c, macro.image.channels));
  for (const auto& e : macro.edges) {
    const auto& op = arch_.op(e.id);
    ConvOp m{nullptr};
    if (op.is_conv()) m = register_module(module_name(e.id, op), ConvOp(c, op.kernel, op.dilation));
    ops_.push_back(m);
  }
}

torch::Tensor DerivedGeneratorImpl::forward(const torch::Tensor& z, const torch::Tensor& y) {
  const auto& macro = arch_.macro;
  if (z.dim() != 2 || z.size(1) != macro.latent_dim)
    fail(ErrorKind::structural, fmt::format("latent batch must be (B, {})", macro.latent_dim));
  const auto c = arch_.channels();
  std::vector<torch::Tensor> nodes(macro.nodes.size());
  nodes[0] = stem_->forward(z, y);
  for (std::size_t n = 1; n < macro.nodes.size(); ++n) {
    const auto& node = macro.nodes[n];
    torch::Tensor acc;
    for (int eid : macro.incoming_edges(static_cast<int>(n))) {
      const auto& op = arch_.op(eid);
      if (op.kind == OpKind::none) continue;
      auto out = apply_operation(op, ops_[eid], nodes[macro.edges[eid].src], node.height, node.width);
      acc = acc.defined() ? acc + out : out;
    }
    if (!acc.defined()) acc = torch::zeros({z.size(0), c, node.height, node.width}, nodes[0].options());
    nodes[n] = acc;
  }
  return head_->forward(nodes.back());
}

void DerivedGeneratorImpl::copy_weights_from(SupernetImpl& supernet) {
  if (arch_.channels() != supernet.macro().base_channels)
    fail(ErrorKind::structural, "cannot share weights across different channel counts");
  torch::NoGradGuard no_grad;
  auto source = supernet.named_parameters(/*recurse=*/true);
  for (auto& p : named_parameters(/*recurse=*/true)) {
    const auto* src = source.find(p.key());
    if (src == nullptr) fail(ErrorKind::structural, fmt::format("supernet has no parameter '{}'", p.key()));
    p.value().copy_(*src);
  }
}

std::shared_ptr<DerivedGeneratorImpl> instantiate_derived(const DerivedArch& arch) {
  return std::make_shared<DerivedGeneratorImpl>(arch);
}

std::int64_t count_conv_weights(torch::nn::Module& module) {
  std::int64_t total = 0;
  for (const auto& p : module.named_parameters(/*recurse=*/true)) {
    if (p.value().dim() == 4) total += p.value().numel();
  }
  return total;
}

std::int64_t count_parameters(torch::nn::Module& module) {
  std::int64_t total = 0;
  for (const auto& p : module.parameters(/*recurse=*/true)) total += p.numel();
  return total;
}

NoiseBatch sample_noise(std::int64_t batch, std::int64_t latent_dim, std::int64_t num_classes,
                        at::Generator& generator, torch::Dtype dtype) {
  NoiseBatch b;
  b.z = torch::randn({batch, latent_dim}, generator, torch::dtype(dtype));
  b.y = torch::randint(0, num_classes, {batch}, generator, torch::dtype(torch::kLong));
  return b;
}

}  // namespace autorecon
