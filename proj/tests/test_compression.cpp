// Copyright (c) 2026 The autorecon Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include <gtest/gtest.h>

#include "autorecon/baselines.hpp"
#include "autorecon/compression_engine.hpp"
#include "autorecon/model_zoo.hpp"
#include "test_util.hpp"

using namespace autorecon;

namespace {

LabeledDataset random_eval_set(std::int64_t n = 40) {
  torch::manual_seed(11);
  return LabeledDataset(torch::rand({n, 1, 32, 32}) * 2 - 1, torch::randint(0, 10, {n}, torch::kLong));
}

std::shared_ptr<HumanGeneratorImpl> small_generator() {
  torch::manual_seed(12);
  return build_human_generator({1, 32, 32}, 16, 16, 10);
}

CompressConfig small_compress() {
  CompressConfig c;
  c.epochs = 2;
  c.steps = 2;
  c.batch_size = 8;
  c.scheme = QuantScheme{4, 4};
  c.calib_batches = 1;
  return c;
}

/// KL(p || q) summed term by term.
double kl_oracle(const std::vector<double>& s, const std::vector<double>& t, double temp) {
  auto softmax = [&](const std::vector<double>& v) {
    std::vector<double> out(v.size());
    double z = 0;
    for (std::size_t i = 0; i < v.size(); ++i) z += std::exp(v[i] / temp);
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::exp(v[i] / temp) / z;
    return out;
  };
  const auto p = softmax(t), q = softmax(s);
  double kl = 0;
  for (std::size_t i = 0; i < p.size(); ++i) kl += p[i] * std::log(p[i] / q[i]);
  return temp * temp * kl;
}

}  // namespace

TEST(KdLoss, ZeroForIdenticalLogits) {
  torch::manual_seed(0);
  const auto logits = torch::randn({16, 10});
  EXPECT_NEAR(kd_loss(logits, logits, 1.0).item<double>(), 0.0, 1e-6);
  EXPECT_NEAR(kd_loss(logits, logits, 4.0).item<double>(), 0.0, 1e-6);
}

TEST(KdLoss, MatchesTermByTermOracle) {
  const std::vector<double> s{0.3, -1.2, 2.0}, t{1.0, 0.5, -0.4};
  const auto st = torch::tensor(s, torch::kFloat64).view({1, 3});
  const auto tt = torch::tensor(t, torch::kFloat64).view({1, 3});
  for (double temp : {1.0, 2.0, 4.0}) EXPECT_NEAR(kd_loss(st, tt, temp).item<double>(), kl_oracle(s, t, temp), 1e-12);
}

TEST(KdLoss, GradientMatchesFiniteDifferences) {
  torch::manual_seed(1);
  auto s = torch::randn({4, 2}, torch::kFloat64).requires_grad_(true);
  const auto t = torch::randn({4, 2}, torch::kFloat64);
  kd_loss(s, t, 2.0).backward();
  const double eps = 1e-6;
  auto flat = s.detach().view({-1});
  for (std::int64_t j = 0; j < flat.numel(); ++j) {
    const double keep = flat[j].item<double>();
    flat[j] = keep + eps;
    const double plus = kd_loss(s.detach(), t, 2.0).item<double>();
    flat[j] = keep - eps;
    const double minus = kd_loss(s.detach(), t, 2.0).item<double>();
    flat[j] = keep;
    const double numeric = (plus - minus) / (2 * eps);
    EXPECT_LE(std::abs(s.grad().view({-1})[j].item<double>() - numeric), 1e-3 * std::max(std::abs(numeric), 1e-6));
  }
}

TEST(CompressionLoss, CombinesCrossEntropyAndWeightedKd) {
  torch::manual_seed(2);
  const auto s = torch::randn({6, 10}, torch::kFloat64);
  const auto t = torch::randn({6, 10}, torch::kFloat64);
  const auto y = torch::randint(0, 10, {6}, torch::kLong);
  auto cfg = small_compress();
  cfg.kd_weight = 0.5;
  cfg.kd_temperature = 3.0;
  const double ce = torch::nn::functional::cross_entropy(s, y).item<double>();
  const double kd = kd_loss(s, t, 3.0).item<double>();
  EXPECT_NEAR(compression_loss(s, t, y, cfg).item<double>(), ce + 0.5 * kd, 1e-12);

  cfg.mode = CompressMode::distill;
  cfg.scheme.reset();
  cfg.student = "lenet_bn";
  EXPECT_NEAR(compression_loss(s, t, y, cfg).item<double>(), 0.5 * kd, 1e-12);
}

TEST(CompressionLoss, VanishesForConfidentCorrectStudentWithoutKd) {
  auto cfg = small_compress();
  cfg.kd_weight = 0.0;
  const auto y = torch::tensor({0, 3, 7}, torch::kLong);
  const auto logits = torch::one_hot(y, 10).to(torch::kFloat64) * 50.0;
  EXPECT_NEAR(compression_loss(logits, torch::zeros_like(logits), y, cfg).item<double>(), 0.0, 1e-12);
}

TEST(CompressConfig, ModeAndSchemeMustAgree) {
  auto c = small_compress();
  EXPECT_NO_THROW(c.validate());
  c.scheme.reset();
  EXPECT_THROW(c.validate(), Error);
  c = small_compress();
  c.student = "lenet_bn";
  EXPECT_THROW(c.validate(), Error);
  c = small_compress();
  c.mode = CompressMode::distill;
  EXPECT_THROW(c.validate(), Error);  // scheme given, no student
  c.scheme.reset();
  c.student = "lenet_bn";
  EXPECT_NO_THROW(c.validate());
  c.kd_temperature = 0.0;
  try {
    c.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
  }
}

TEST(TrainGenerator, ZeroBudgetIsANoOp) {
  auto model = fixtures::frozen_lenet(1);
  auto gen = small_generator();
  const auto g0 = fixtures::module_hash(*gen), m0 = fixtures::module_hash(*model);
  GeneratorTrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_TRUE(train_generator(*model, *gen, cfg).empty());
  EXPECT_EQ(fixtures::module_hash(*gen), g0);
  EXPECT_EQ(fixtures::module_hash(*model), m0);
}

TEST(TrainGenerator, UpdatesOnlyTheGeneratorAndReadsNoRealData) {
  auto model = fixtures::frozen_lenet(2);
  auto gen = small_generator();
  const auto g0 = fixtures::module_hash(*gen), m0 = fixtures::module_hash(*model);
  DataAudit::reset();
  GeneratorTrainConfig cfg;
  cfg.epochs = 2;
  cfg.steps = 3;
  cfg.batch_size = 8;
  const auto history = train_generator(*model, *gen, cfg);
  EXPECT_EQ(history.size(), 6u);
  EXPECT_NE(fixtures::module_hash(*gen), g0);
  EXPECT_EQ(fixtures::module_hash(*model), m0);
  EXPECT_EQ(DataAudit::training_reads(), 0);
  EXPECT_EQ(DataAudit::evaluation_reads(), 0);
}

TEST(TrainGenerator, DerivedArchitectureIsSeeded) {
  auto model = fixtures::frozen_lenet(3);
  const auto macro = build_macro({1, 32, 32}, 8, 16, 10);
  const auto arch = sample_random_arch(macro, 4);
  GeneratorTrainConfig cfg;
  cfg.epochs = 1;
  cfg.steps = 2;
  cfg.batch_size = 4;
  cfg.seed = 7;
  auto a = train_generator(*model, arch, cfg);
  auto b = train_generator(*model, arch, cfg);
  EXPECT_EQ(fixtures::module_hash(*a), fixtures::module_hash(*b));
}

TEST(Compress, QuantizeModeLeavesGeneratorAndTeacherUntouched) {
  auto model = fixtures::frozen_lenet(4);
  auto gen = small_generator();
  const auto eval = random_eval_set();
  const auto g0 = fixtures::module_hash(*gen), m0 = fixtures::module_hash(*model);
  DataAudit::reset();
  const auto r = compress(*model, *gen, small_compress(), eval);
  EXPECT_EQ(fixtures::module_hash(*gen), g0);
  EXPECT_EQ(fixtures::module_hash(*model), m0);
  for (auto& p : gen->parameters()) EXPECT_TRUE(p.requires_grad());
  EXPECT_EQ(r.trajectory.size(), 2u);
  EXPECT_EQ(r.final_accuracy, r.trajectory.back());
  ASSERT_TRUE(r.ptq_accuracy.has_value());
  EXPECT_TRUE(r.model->quantized());
  EXPECT_FALSE(r.model->is_training());
  EXPECT_EQ(DataAudit::training_reads(), 0);
  EXPECT_GT(DataAudit::evaluation_reads(), 0);
}

TEST(Compress, ReproducibleForFixedSeed) {
  auto model = fixtures::frozen_lenet(5);
  auto gen = small_generator();
  const auto eval = random_eval_set();
  const auto a = compress(*model, *gen, small_compress(), eval);
  const auto b = compress(*model, *gen, small_compress(), eval);
  EXPECT_EQ(a.trajectory, b.trajectory);
  EXPECT_EQ(fixtures::module_hash(*a.model), fixtures::module_hash(*b.model));
}

TEST(Compress, JointModeAlsoTrainsTheGenerator) {
  auto model = fixtures::frozen_lenet(6);
  auto gen = small_generator();
  const auto g0 = fixtures::module_hash(*gen);
  auto cfg = small_compress();
  cfg.joint = true;
  compress(*model, *gen, cfg, random_eval_set());
  EXPECT_NE(fixtures::module_hash(*gen), g0);
}

TEST(Compress, DistillModeTrainsAFreshStudent) {
  auto model = fixtures::frozen_lenet(7);
  auto gen = small_generator();
  auto cfg = small_compress();
  cfg.mode = CompressMode::distill;
  cfg.scheme.reset();
  cfg.student = "lenet_bn";
  DataAudit::reset();
  const auto r = compress(*model, *gen, cfg, random_eval_set());
  EXPECT_FALSE(r.ptq_accuracy.has_value());
  EXPECT_FALSE(r.model->quantized());
  EXPECT_EQ(r.trajectory.size(), 2u);
  EXPECT_EQ(DataAudit::training_reads(), 0);

  cfg.student = "resnet8_bn";  // expects 3-channel input
  EXPECT_THROW(compress(*model, *gen, cfg, random_eval_set()), Error);
}
