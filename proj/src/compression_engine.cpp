// Copyright (c) 2026 The autorecon Authors
// SPDX-License-Identifier: Apache-2.0

#include "autorecon/compression_engine.hpp"

#include <chrono>
#include <cmath>

#include <ATen/CPUGeneratorImpl.h>
#include <fmt/format.h>

#include "autorecon/model_zoo.hpp"
#include "autorecon/quantizer.hpp"
#include "autorecon/reconstruction.hpp"

namespace autorecon {

namespace {

torch::optim::Adam make_adam(std::vector<torch::Tensor> params, const AdamSettings& s) {
  return torch::optim::Adam(std::move(params), torch::optim::AdamOptions(s.lr)
                                                   .betas({s.beta1, s.beta2})
                                                   .weight_decay(s.weight_decay));
}

/// Disables parameter gradients for the lifetime of the scope.
class FrozenScope {
 public:
  explicit FrozenScope(torch::nn::Module& m) : params_(m.parameters()) {
    for (auto& p : params_) {
      flags_.push_back(p.requires_grad());
      p.requires_grad_(false);
    }
  }
  ~FrozenScope() {
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i].requires_grad_(flags_[i]);
  }
  FrozenScope(const FrozenScope&) = delete;
  FrozenScope& operator=(const FrozenScope&) = delete;

 private:
  std::vector<torch::Tensor> params_;
  std::vector<bool> flags_;
};

}  // namespace

void GeneratorTrainConfig::validate() const {
  if (epochs < 0 || steps < 1 || batch_size < 2)
    fail(ErrorKind::config, "generator training needs epochs >= 0, steps >= 1, batch_size >= 2");
  if (optimizer.lr <= 0.0) fail(ErrorKind::config, "generator learning rate must be positive");
}

std::vector<double> train_generator(ClassifierImpl& model, GeneratorImpl& generator, const GeneratorTrainConfig& cfg) {
  cfg.validate();
  const auto original = capture_original_stats(model);
  auto rng = at::make_generator<at::CPUGeneratorImpl>(cfg.seed);
  auto opt = make_adam(generator.parameters(), cfg.optimizer);
  generator.train();
  std::vector<double> history;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int s = 0; s < cfg.steps; ++s) {
      auto batch = generate_batch(generator, cfg.batch_size, rng);
      opt.zero_grad();
      auto terms = reconstruction_loss(model, batch.x, batch.y, original, cfg.beta);
      const double total = terms.total.item<double>();
      if (!std::isfinite(total))
        fail(ErrorKind::numeric, fmt::format("generator training diverged at epoch {} step {} (l_class={}, l_bns={})",
                                             epoch, s, terms.l_class.item<double>(), terms.l_bns.item<double>()));
      terms.total.backward();
      opt.step();
      history.push_back(total);
    }
  }
  return history;
}

std::shared_ptr<DerivedGeneratorImpl> train_generator(ClassifierImpl& model, const DerivedArch& arch,
                                                      const GeneratorTrainConfig& cfg) {
  if (!satisfies_connectivity(arch)) fail(ErrorKind::config, "derived architecture violates connectivity");
  torch::manual_seed(cfg.seed);
  auto gen = instantiate_derived(arch);
  train_generator(model, *gen, cfg);
  return gen;
}

void CompressConfig::validate() const {
  if (epochs < 1 || steps < 1 || batch_size < 2)
    fail(ErrorKind::config, "compression needs epochs >= 1, steps >= 1, batch_size >= 2");
  if (!(kd_temperature > 0.0)) fail(ErrorKind::config, "KD temperature must be positive");
  if (kd_weight < 0.0) fail(ErrorKind::config, "KD weight must be non-negative");
  if (optimizer.lr <= 0.0) fail(ErrorKind::config, "learning rate must be positive");
  if (mode == CompressMode::quantize) {
    if (!scheme) fail(ErrorKind::config, "quantize mode needs a quantization scheme");
    if (student) fail(ErrorKind::config, "quantize mode does not take a student model");
    if (calib_batches < 1) fail(ErrorKind::config, "quantize mode needs at least one calibration batch");
  } else {
    if (!student) fail(ErrorKind::config, "distill mode needs a student model");
    if (scheme) fail(ErrorKind::config, "distill mode does not take a quantization scheme");
  }
}

torch::Tensor kd_loss(const torch::Tensor& student_logits, const torch::Tensor& teacher_logits, double temperature) {
  const auto log_q = torch::log_softmax(student_logits / temperature, 1);
  const auto log_p = torch::log_softmax(teacher_logits / temperature, 1);
  const auto kl = (log_p.exp() * (log_p - log_q)).sum(1).mean();
  return temperature * temperature * kl;
}

torch::Tensor compression_loss(const torch::Tensor& student_logits, const torch::Tensor& teacher_logits,
                               const torch::Tensor& labels, const CompressConfig& cfg) {
  auto kd = cfg.kd_weight * kd_loss(student_logits, teacher_logits, cfg.kd_temperature);
  if (cfg.mode == CompressMode::distill) return kd;
  return torch::nn::functional::cross_entropy(student_logits, labels) + kd;
}

CompressResult compress(ClassifierImpl& model, GeneratorImpl& generator, const CompressConfig& cfg,
                        const LabeledDataset& eval_set) {
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();
  CompressResult result;
  result.config = cfg;
  model.eval();
  auto rng = at::make_generator<at::CPUGeneratorImpl>(cfg.seed);
  std::optional<FrozenScope> frozen_generator;
  if (!cfg.joint) frozen_generator.emplace(generator);

  auto sample = [&](std::int64_t n) {
    torch::NoGradGuard no_grad;
    return generate_batch(generator, n, rng);
  };

  ClassifierPtr student;
  std::vector<torch::Tensor> trainable;
  if (cfg.mode == CompressMode::quantize) {
    std::vector<torch::Tensor> calib;
    for (int i = 0; i < cfg.calib_batches; ++i) calib.push_back(sample(cfg.batch_size).x);
    auto q = build_quantized(model, *cfg.scheme, calib);
    student = q.model;
    trainable = q.trainable_parameters();
    result.ptq_accuracy = evaluate(*student, eval_set);
    student->eval();
  } else {
    torch::manual_seed(cfg.seed);
    student = make_classifier(zoo_spec(*cfg.student));
    if (student->spec().input != model.spec().input || student->spec().num_classes != model.spec().num_classes)
      fail(ErrorKind::config, "student and teacher disagree on input shape or class count");
    trainable = student->parameters();
    student->train();
  }

  auto opt = make_adam(trainable, cfg.optimizer);
  std::optional<torch::optim::Adam> gen_opt;
  std::optional<BNStatsSnapshot> original;
  if (cfg.joint) {
    gen_opt.emplace(generator.parameters(), torch::optim::AdamOptions(cfg.generator_lr).betas({0.5, 0.999}));
    original = capture_original_stats(model);
  }

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int s = 0; s < cfg.steps; ++s) {
      if (cfg.joint) {
        auto batch = generate_batch(generator, cfg.batch_size, rng);
        gen_opt->zero_grad();
        reconstruction_loss(model, batch.x, batch.y, *original, cfg.beta).total.backward();
        gen_opt->step();
      }
      auto batch = sample(cfg.batch_size);
      torch::Tensor teacher;
      {
        torch::NoGradGuard no_grad;
        teacher = model.forward(batch.x);
      }
      opt.zero_grad();
      auto loss = compression_loss(student->forward(batch.x), teacher, batch.y, cfg);
      if (!std::isfinite(loss.item<double>()))
        fail(ErrorKind::numeric, fmt::format("compression loss diverged at epoch {} step {}", epoch, s));
      loss.backward();
      opt.step();
    }
    result.trajectory.push_back(evaluate(*student, eval_set));
  }
  student->eval();
  result.model = student;
  result.final_accuracy = result.trajectory.back();
  result.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

}  // namespace autorecon
