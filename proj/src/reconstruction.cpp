// Copyright (c) 2026 The autorecon Authors
// SPDX-License-Identifier: Apache-2.0

#include "autorecon/reconstruction.hpp"

#include <fmt/format.h>

namespace autorecon {

namespace {

class EvalModeScope {
 public:
  explicit EvalModeScope(torch::nn::Module& m) : module_(m), was_training_(m.is_training()) { m.eval(); }
  ~EvalModeScope() { module_.train(was_training_); }
  EvalModeScope(const EvalModeScope&) = delete;
  EvalModeScope& operator=(const EvalModeScope&) = delete;

 private:
  torch::nn::Module& module_;
  bool was_training_;
};

BNStatsSnapshot to_snapshot(const BnRecorder& rec) {
  BNStatsSnapshot s;
  for (std::size_t i = 0; i < rec.means.size(); ++i) {
    s.layers.push_back({static_cast<int>(i), rec.means[i], rec.variances[i]});
  }
  return s;
}

}  // namespace

BNStatsSnapshot capture_original_stats(ClassifierImpl& model) {
  const auto units = model.bn_units();
  if (units.empty()) fail(ErrorKind::unsupported, fmt::format("model {} has no batch-norm layers", model.spec().name));
  BNStatsSnapshot s;
  for (const auto& u : units) {
    s.layers.push_back({u->bn_index(), u->running_mean().detach().clone(), u->running_var().detach().clone()});
  }
  return s;
}

BNStatsSnapshot batch_stats(ClassifierImpl& model, const torch::Tensor& x) {
  if (x.size(0) < 2) fail(ErrorKind::input, "batch statistics need at least 2 samples");
  EvalModeScope scope(model);
  BnRecorder rec;
  model.forward(x, &rec);
  return to_snapshot(rec);
}

torch::Tensor bns_loss(const BNStatsSnapshot& r, const BNStatsSnapshot& o) {
  if (r.size() != o.size() || r.size() == 0)
    fail(ErrorKind::structural, fmt::format("BN snapshots are not aligned ({} vs {} layers)", r.size(), o.size()));
  torch::Tensor total;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const auto& a = r.layers[i];
    const auto& b = o.layers[i];
    if (a.layer != b.layer || a.mean.sizes() != b.mean.sizes() || a.variance.sizes() != b.variance.sizes())
      fail(ErrorKind::structural, fmt::format("BN snapshots are not aligned at layer {}", i));
    auto term = (a.mean - b.mean).pow(2).mean() + (a.variance - b.variance).pow(2).mean();
    total = total.defined() ? total + term : term;
  }
  return total / static_cast<double>(r.size());
}

ReconLossTerms reconstruction_loss(ClassifierImpl& model, const torch::Tensor& x_r, const torch::Tensor& y,
                                   const BNStatsSnapshot& original, double beta) {
  if (x_r.size(0) < 2) fail(ErrorKind::input, "reconstruction loss needs at least 2 samples");
  EvalModeScope scope(model);
  BnRecorder rec;
  const auto logits = model.forward(x_r, &rec);
  ReconLossTerms t;
  t.beta = beta;
  t.l_class = torch::nn::functional::cross_entropy(logits, y);
  t.l_bns = bns_loss(to_snapshot(rec), original);
  t.total = beta == 0.0 ? t.l_class : t.l_class + beta * t.l_bns;
  return t;
}

ReconBatch generate_batch(GeneratorImpl& generator, std::int64_t batch, at::Generator& rng) {
  const auto dtype = generator.parameters().empty() ? torch::kFloat32 : generator.parameters().front().scalar_type();
  auto noise = sample_noise(batch, generator.latent_dim(), generator.num_classes(), rng, dtype);
  return {generator.forward(noise.z, noise.y), noise.y};
}

}  // namespace autorecon
