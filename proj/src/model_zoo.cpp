// Copyright (c) 2026 The autorecon Authors
// SPDX-License-Identifier: Apache-2.0

#include "autorecon/model_zoo.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace autorecon {

PretrainResult pretrain(const ZooModelSpec& spec, const std::filesystem::path& data_dir, std::uint64_t seed,
                        const PretrainOptions& options) {
  const auto train = load_dataset(spec.dataset, data_dir, Split::train, options.load);
  const auto test = load_dataset(spec.dataset, data_dir, Split::test, options.load);
  if (train.image_shape() != spec.input)
    fail(ErrorKind::structural, fmt::format("{} images do not match {} input shape", spec.dataset, spec.name));

  torch::manual_seed(seed);
  auto rng = at::make_generator<at::CPUGeneratorImpl>(seed);
  PretrainResult result;
  result.seed = seed;
  result.model = make_classifier(spec);
  auto& model = *result.model;
  torch::optim::Adam optimizer(model.parameters(), torch::optim::AdamOptions(options.lr));

  const int epochs = options.epochs > 0 ? options.epochs : spec.max_epochs;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    model.train();
    const auto order = torch::randperm(train.size(), rng, torch::kLong);
    for (std::int64_t begin = 0; begin < train.size(); begin += options.batch_size) {
      const auto end = std::min(train.size(), begin + options.batch_size);
      if (end - begin < 2) break;  // BN needs two samples
      auto [x, y] = train.gather(order.slice(0, begin, end), DataPurpose::training);
      optimizer.zero_grad();
      auto loss = torch::nn::functional::cross_entropy(model.forward(x), y);
      loss.backward();
      optimizer.step();
    }
    result.trajectory.push_back(evaluate(model, test));
  }
  result.epochs = epochs;
  result.accuracy = result.trajectory.empty() ? 0.0 : result.trajectory.back();
  model.eval();
  if (result.accuracy < spec.accuracy_floor)
    fail(ErrorKind::numeric, fmt::format("{} reached {:.4f} < floor {:.4f} after {} epochs; trajectory {}", spec.name,
                                         result.accuracy, spec.accuracy_floor, epochs, result.trajectory));
  return result;
}

double evaluate(ClassifierImpl& model, const LabeledDataset& eval_set, std::int64_t batch_size) {
  if (eval_set.empty()) fail(ErrorKind::input, "evaluation set is empty");
  const bool was_training = model.is_training();
  model.eval();
  torch::NoGradGuard no_grad;
  std::int64_t correct = 0;
  for (std::int64_t begin = 0; begin < eval_set.size(); begin += batch_size) {
    auto [x, y] = eval_set.batch(begin, begin + batch_size, DataPurpose::evaluation);
    correct += model.forward(x).argmax(1).eq(y).sum().item<std::int64_t>();
  }
  model.train(was_training);
  return static_cast<double>(correct) / static_cast<double>(eval_set.size());
}

void save_model(ClassifierImpl& model, const nlohmann::json& metadata, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  torch::serialize::OutputArchive archive;
  model.save(archive);
  archive.write("metadata", c10::IValue(metadata.dump()));
  archive.save_to(path.string());
}

void save_pretrained(const PretrainResult& result, const std::filesystem::path& path) {
  const auto& spec = result.model->spec();
  save_model(*result.model,
             {{"spec", spec.name},
              {"dataset", spec.dataset},
              {"seed", result.seed},
              {"accuracy", result.accuracy},
              {"epoch", result.epochs},
              {"trajectory", result.trajectory}},
             path);
}

LoadedModel load_model(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::upstream, fmt::format("model checkpoint {} not found", path.string()));
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(path.string());
  } catch (const c10::Error& e) {
    fail(ErrorKind::parse, fmt::format("cannot read checkpoint {}: {}", path.string(), e.what_without_backtrace()));
  }
  c10::IValue meta;
  if (!archive.try_read("metadata", meta) || !meta.isString())
    fail(ErrorKind::parse, fmt::format("checkpoint {} has no metadata", path.string()));
  LoadedModel out;
  out.metadata = nlohmann::json::parse(meta.toStringRef());
  out.model = make_classifier(zoo_spec(out.metadata.at("spec").get<std::string>()));
  if (out.metadata.contains("scheme")) {
    const auto scheme = QuantScheme::parse(out.metadata.at("scheme").get<std::string>());
    for (auto unit : out.model->units()) unit->enable_quantization(scheme);
  }
  out.model->load(archive);
  out.model->eval();
  return out;
}

}  // namespace autorecon
