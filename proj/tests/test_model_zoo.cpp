// Copyright (c) 2026 The autorecon Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <fstream>

#include <gtest/gtest.h>

#include "autorecon/model_zoo.hpp"
#include "autorecon/quantizer.hpp"
#include "test_util.hpp"

using namespace autorecon;
namespace fs = std::filesystem;

namespace {

/// Predicts class 0 for every input.
class ConstantNet : public ClassifierImpl {
 public:
  ConstantNet() : ClassifierImpl({"constant", "none", {1, 4, 4}, 10, 0.0, 1}) {}
  torch::Tensor forward(const torch::Tensor& x, BnRecorder* = nullptr) override {
    auto out = torch::zeros({x.size(0), 10});
    out.select(1, 0).fill_(1.0);
    return out;
  }
};

/// Reads the label back from pixel (0, 0), which the test set encodes.
class OracleNet : public ClassifierImpl {
 public:
  OracleNet() : ClassifierImpl({"oracle", "none", {1, 4, 4}, 10, 0.0, 1}) {}
  torch::Tensor forward(const torch::Tensor& x, BnRecorder* = nullptr) override {
    const auto label = x.select(1, 0).select(1, 0).select(1, 0).round().to(torch::kLong);
    return torch::one_hot(label, 10).to(torch::kFloat32);
  }
};

/// Ten samples per class, label k stored at pixel (0, 0).
LabeledDataset encoded_set() {
  const auto labels = torch::arange(10, torch::kLong).repeat({10});
  auto images = torch::zeros({100, 1, 4, 4});
  images.select(1, 0).select(1, 0).select(1, 0).copy_(labels.to(torch::kFloat32));
  return {images, labels};
}

class ScopedEnv {
 public:
  ScopedEnv(const char* name, const std::string& value) : name_(name) { ::setenv(name, value.c_str(), 1); }
  ~ScopedEnv() { ::unsetenv(name_); }

 private:
  const char* name_;
};

}  // namespace

TEST(Evaluate, ConstantAndOracleModels) {
  ConstantNet constant;
  OracleNet oracle;
  const auto set = encoded_set();
  EXPECT_DOUBLE_EQ(evaluate(constant, set), 0.1);
  EXPECT_DOUBLE_EQ(evaluate(oracle, set), 1.0);
}

TEST(Evaluate, InvariantToBatchSizeAndRestoresMode) {
  auto model = fixtures::frozen_lenet(1);
  torch::manual_seed(2);
  const LabeledDataset set(torch::rand({37, 1, 32, 32}) * 2 - 1, torch::randint(0, 10, {37}, torch::kLong));
  model->train();
  const double a = evaluate(*model, set, 500);
  EXPECT_TRUE(model->is_training());
  EXPECT_DOUBLE_EQ(evaluate(*model, set, 5), a);
  EXPECT_DOUBLE_EQ(evaluate(*model, set, 1), a);
}

TEST(Evaluate, EmptySetIsAnInputError) {
  ConstantNet constant;
  try {
    evaluate(constant, LabeledDataset{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::input);
  }
}

TEST(Checkpoint, FloatModelRoundTrip) {
  fixtures::TempDir tmp("ckpt");
  auto model = fixtures::frozen_lenet(3);
  save_model(*model, {{"spec", "lenet_bn"}, {"seed", 3}}, tmp.path() / "m.pt");
  const auto loaded = load_model(tmp.path() / "m.pt");
  EXPECT_EQ(loaded.metadata.at("seed"), 3);
  EXPECT_EQ(fixtures::module_hash(*loaded.model), fixtures::module_hash(*model));
  const auto x = torch::rand({4, 1, 32, 32});
  torch::NoGradGuard g;
  loaded.model->eval();
  EXPECT_TRUE(torch::equal(loaded.model->forward(x), model->forward(x)));
}

TEST(Checkpoint, QuantizedModelRoundTrip) {
  fixtures::TempDir tmp("qckpt");
  auto model = fixtures::frozen_lenet(4);
  auto q = build_quantized(*model, {4, 4}, {torch::rand({16, 1, 32, 32}) * 2 - 1});
  save_model(*q.model, {{"spec", "lenet_bn"}, {"scheme", "w4a4"}}, tmp.path() / "q.pt");
  const auto loaded = load_model(tmp.path() / "q.pt");
  EXPECT_TRUE(loaded.model->quantized());
  const auto x = torch::rand({4, 1, 32, 32}) * 2 - 1;
  torch::NoGradGuard g;
  q.model->eval();
  loaded.model->eval();
  EXPECT_TRUE(torch::equal(loaded.model->forward(x), q.model->forward(x)));
}

TEST(Checkpoint, MissingFileIsUpstreamAndGarbageIsParse) {
  fixtures::TempDir tmp("badckpt");
  try {
    load_model(tmp.path() / "absent.pt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::upstream);
  }
  std::ofstream(tmp.path() / "junk.pt") << "not an archive";
  try {
    load_model(tmp.path() / "junk.pt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::parse);
  }
}

TEST(Datasets, IdxReadersAndMnistPadding) {
  fixtures::TempDir tmp("idx");
  fixtures::write_synthetic_mnist_root(tmp.path(), 3, 2);
  const auto raw = read_idx_images(tmp.path() / "mnist_like" / "train-images-idx3-ubyte.gz");
  EXPECT_EQ(raw.sizes(), (std::vector<std::int64_t>{30, 28, 28}));
  const auto labels = read_idx_labels(tmp.path() / "mnist_like" / "train-labels-idx1-ubyte.gz");
  EXPECT_EQ(labels[13].item<std::int64_t>(), 3);

  const auto test = load_mnist_like(tmp.path(), Split::test);
  EXPECT_EQ(test.size(), 20);
  EXPECT_EQ(test.image_shape(), (ImageShape{1, 32, 32}));
  auto [x, y] = test.batch(0, 20, DataPurpose::evaluation);
  EXPECT_EQ(x.slice(2, 0, 2).max().item<float>(), -1.0f);  // padding rows
  EXPECT_EQ(x.slice(3, 30, 32).max().item<float>(), -1.0f);
  EXPECT_LE(x.max().item<float>(), 1.0f);
  EXPECT_GT(x.max().item<float>(), 0.5f);
}

TEST(Datasets, CifarBinaryRecords) {
  fixtures::TempDir tmp("cifar");
  std::string bytes;
  for (int i = 0; i < 3; ++i) {
    bytes.push_back(static_cast<char>(i + 4));
    for (int p = 0; p < 3072; ++p) bytes.push_back(static_cast<char>((p / 1024) * 100 + i));
  }
  std::ofstream(tmp.path() / "b.bin", std::ios::binary) << bytes;
  const auto [images, labels] = read_cifar_batch(tmp.path() / "b.bin");
  EXPECT_EQ(images.sizes(), (std::vector<std::int64_t>{3, 3, 32, 32}));
  EXPECT_EQ(labels[2].item<std::int64_t>(), 6);
  EXPECT_EQ(images[1][2][5][7].item<std::uint8_t>(), 201);

  std::ofstream(tmp.path() / "short.bin", std::ios::binary) << bytes.substr(0, 100);
  try {
    read_cifar_batch(tmp.path() / "short.bin");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::parse);
  }
}

TEST(Datasets, MissingDirectoryIsAnIoErrorWhenDownloadsAreOff) {
  fixtures::TempDir tmp("nodata");
  for (const char* name : {"mnist_like", "cifar_like"}) {
    try {
      load_dataset(name, tmp.path(), Split::train);
      ADD_FAILURE() << name;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::io) << name;
    }
  }
  EXPECT_THROW(load_dataset("svhn", tmp.path(), Split::train), Error);
}

TEST(Datasets, EnvironmentOverridesDataRoot) {
  EXPECT_EQ(resolve_data_dir("data"), fs::path("data"));
  ScopedEnv env("AUTORECON_DATA_DIR", "/elsewhere");
  EXPECT_EQ(resolve_data_dir("data"), fs::path("/elsewhere"));
}

TEST(Datasets, Md5Digest) {
  fixtures::TempDir tmp("md5");
  std::ofstream(tmp.path() / "abc") << "abc";
  EXPECT_EQ(md5_file(tmp.path() / "abc"), "900150983cd24fb0d6963f7d28e17f72");
}

TEST(DataAudit, CountsReadsByPurpose) {
  DataAudit::reset();
  const LabeledDataset set(torch::zeros({6, 1, 2, 2}), torch::zeros({6}, torch::kLong));
  set.batch(0, 4, DataPurpose::training);
  set.gather(torch::tensor({1, 2}, torch::kLong), DataPurpose::evaluation);
  set.batch(4, 6, DataPurpose::evaluation);
  EXPECT_EQ(DataAudit::training_reads(), 4);
  EXPECT_EQ(DataAudit::evaluation_reads(), 4);
  DataAudit::reset();
  EXPECT_EQ(DataAudit::training_reads(), 0);
}

TEST(Pretrain, DeterministicOnSyntheticDigits) {
  fixtures::TempDir tmp("pretrain");
  fixtures::write_synthetic_mnist_root(tmp.path(), 20, 10);
  PretrainOptions opts;
  opts.epochs = 4;
  opts.batch_size = 20;
  auto spec = zoo_spec("lenet_bn");
  const auto a = pretrain(spec, tmp.path(), 5, opts);
  const auto b = pretrain(spec, tmp.path(), 5, opts);
  EXPECT_EQ(a.trajectory, b.trajectory);
  EXPECT_EQ(fixtures::module_hash(*a.model), fixtures::module_hash(*b.model));
  EXPECT_GE(a.accuracy, spec.accuracy_floor);
  EXPECT_FALSE(a.model->is_training());

  fixtures::TempDir out("pretrain_out");
  save_pretrained(a, out.path() / "m.pt");
  const auto loaded = load_model(out.path() / "m.pt");
  EXPECT_DOUBLE_EQ(evaluate(*loaded.model, load_mnist_like(tmp.path(), Split::test)),
                   loaded.metadata.at("accuracy").get<double>());
}

TEST(Pretrain, MissingTheFloorIsANumericError) {
  fixtures::TempDir tmp("floor");
  fixtures::write_synthetic_mnist_root(tmp.path(), 20, 10);
  auto spec = zoo_spec("lenet_bn");
  spec.accuracy_floor = 1.01;
  PretrainOptions opts;
  opts.epochs = 1;
  opts.batch_size = 50;
  try {
    pretrain(spec, tmp.path(), 0, opts);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::numeric);
    EXPECT_NE(std::string(e.what()).find("floor"), std::string::npos);
  }
}

TEST(ZooSpec, KnownModels) {
  EXPECT_EQ(zoo_spec("lenet_bn").input, (ImageShape{1, 32, 32}));
  EXPECT_EQ(zoo_spec("resnet8_bn").input, (ImageShape{3, 32, 32}));
  EXPECT_THROW(zoo_spec("vgg"), Error);
  auto r = make_classifier(zoo_spec("resnet8_bn"));
  torch::NoGradGuard g;
  r->eval();
  EXPECT_EQ(r->forward(torch::zeros({2, 3, 32, 32})).sizes(), (std::vector<std::int64_t>{2, 10}));
}
