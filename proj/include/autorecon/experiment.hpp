// Copyright (c) 2026 The autorecon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "autorecon/compression_engine.hpp"
#include "autorecon/model_zoo.hpp"
#include "autorecon/search_engine.hpp"

namespace autorecon {

enum class GeneratorKind { searched, human, random };
std::string_view generator_kind_name(GeneratorKind kind);
GeneratorKind generator_kind_from_name(std::string_view name);

struct MacroSettings {
  std::int64_t base_channels = 16;
  std::int64_t latent_dim = 64;
  int blocks = 3;
  std::int64_t label_embed_dim = 0;  // 0: num_classes
};

struct ExperimentConfig {
  std::string model = "lenet_bn";
  std::filesystem::path data_dir = "data";
  std::filesystem::path output_dir = "runs";
  PretrainOptions pretrain;
  std::uint64_t pretrain_seed = 0;
  MacroSettings macro;
  SearchConfig search;
  GeneratorTrainConfig generator_training;
  CompressConfig compress;
  GeneratorKind generator = GeneratorKind::searched;
  std::vector<double> scales{0.5, 1.0, 2.0};
  std::vector<std::uint64_t> seeds{0};
  std::int64_t loss_estimate_batches = 8;

  /// Semantic checks beyond the schema (bit widths, mode/scheme pairing, ...).
  void validate() const;
  MacroArchitecture build_macro() const;
  ZooModelSpec zoo() const { return zoo_spec(model); }
};

/// Strict parse: unknown keys and wrong types raise ErrorKind::config.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

/// Artifact layout under cfg.output_dir.
struct Layout {
  std::filesystem::path root;

  std::filesystem::path pretrained_model() const { return root / "pretrain" / "model.pt"; }
  std::filesystem::path search_dir(std::uint64_t seed) const;
  std::filesystem::path arch_file(std::uint64_t seed) const { return search_dir(seed) / "arch.json"; }
  std::filesystem::path compress_dir(const std::string& variant, GeneratorKind kind, double scale,
                                     std::uint64_t seed) const;
  std::filesystem::path ablation_dir() const { return root / "ablate_scale"; }
};

/// "w4a4" in quantize mode, "distill-<student>" otherwise.
std::string compress_variant(const CompressConfig& cfg);

struct PretrainOutcome {
  double accuracy = 0.0;
  bool reused = false;
};
PretrainOutcome run_pretrain(const ExperimentConfig& cfg, bool overwrite);

/// Loads the frozen pre-trained model; ErrorKind::upstream names `pretrain`.
ClassifierPtr load_pretrained(const ExperimentConfig& cfg);

struct SearchOutcome {
  DerivedArch derived;
  double validation_loss = 0.0;  // expected-mode L_r on fixed-seed batches
  bool reused = false;
};
SearchOutcome run_search(const ExperimentConfig& cfg, std::uint64_t seed, bool overwrite);

struct CompressOutcome {
  std::filesystem::path dir;
  nlohmann::json record;  // final metric record
  double float_accuracy = 0.0;
  std::optional<double> ptq_accuracy;
  double final_accuracy = 0.0;
  std::vector<double> trajectory;
  bool reused = false;
};
CompressOutcome run_compress(const ExperimentConfig& cfg, std::uint64_t seed, GeneratorKind kind, double scale,
                             bool overwrite);

struct AblationRow {
  std::string method;
  double scale = 1.0;
  double top1 = 0.0;  // median over seeds
  std::uint64_t seed_median = 0;
};
/// Runs (or reuses) compress for searched and human generators at every
/// scale and seed; writes table.csv and accuracy_vs_scale.svg.
std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg, bool overwrite);
std::string ablation_csv(const std::vector<AblationRow>& rows);
std::string ablation_svg(const std::vector<AblationRow>& rows);

struct EvalOutcome {
  double accuracy = 0.0;
  nlohmann::json metadata;
};
/// Evaluates a checkpoint (the pre-trained model by default) on the held-out split.
EvalOutcome run_eval(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& checkpoint);

struct SummaryReport {
  std::string markdown;
  std::string csv;
  std::vector<std::string> skipped;  // corrupt or unreadable records
  std::size_t groups = 0;
};
/// Collects the final metric records under `runs_dir` and reports, per
/// (model, scheme), float / PTQ / human / searched accuracy at scale 1.
SummaryReport summarize(const std::filesystem::path& runs_dir);

/// Median of a non-empty list; even counts average the middle pair.
double median(std::vector<double> values);
/// Formats a signed percentage-point delta as "(+1.23%)".
std::string format_delta(double delta_fraction);

/// Writes `text` to `path` via a temporary file and rename.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace autorecon
