// Copyright (c) 2026 The autorecon Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line driver: pretrain, search, compress, eval, ablate-scale, summarize.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include "autorecon/experiment.hpp"

namespace fs = std::filesystem;
using namespace autorecon;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitUpstream = 3;
constexpr int kExitNumeric = 4;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
    case ErrorKind::parse:
      return kExitConfig;
    case ErrorKind::upstream:
      return kExitUpstream;
    case ErrorKind::numeric:
    case ErrorKind::calibration:
      return kExitNumeric;
    default:
      return kExitFailure;
  }
}

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool overwrite = false;
  std::string output;
  std::string generator;
  std::string scheme;
  std::optional<double> scale;
  std::string checkpoint;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "experiment config (JSON)");
  cmd->add_option("--seed", o.seed, "run a single seed instead of the config's seed list");
  cmd->add_flag("--overwrite", o.overwrite, "recompute outputs that already exist");
  cmd->add_option("--output", o.output, "output directory (overrides output_dir)");
}

// Summaries only read output_dir, so they skip the semantic checks.
ExperimentConfig resolve(const Options& o, bool validate = true) {
  ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  if (o.seed) cfg.seeds = {*o.seed};
  if (!o.output.empty()) cfg.output_dir = o.output;
  if (!o.generator.empty()) cfg.generator = generator_kind_from_name(o.generator);
  if (!o.scheme.empty()) {
    cfg.compress.mode = CompressMode::quantize;
    cfg.compress.scheme = QuantScheme::parse(o.scheme);
    cfg.compress.student.reset();
  }
  if (o.scale) cfg.scales = {*o.scale};
  if (validate) cfg.validate();
  return cfg;
}

void note(bool reused, const std::string& what) {
  fmt::print("{}{}\n", reused ? "[exists] " : "", what);
}

int cmd_pretrain(const Options& o) {
  const auto cfg = resolve(o);
  const auto out = run_pretrain(cfg, o.overwrite);
  note(out.reused, fmt::format("pretrain {}: held-out top-1 {:.4f}", cfg.model, out.accuracy));
  return kExitOk;
}

int cmd_search(const Options& o) {
  const auto cfg = resolve(o);
  for (auto seed : cfg.seeds) {
    const auto out = run_search(cfg, seed, o.overwrite);
    note(out.reused, fmt::format("search seed {}: validation L_r {:.4f} -> {}", seed, out.validation_loss,
                                 Layout{cfg.output_dir}.arch_file(seed).string()));
  }
  return kExitOk;
}

int cmd_compress(const Options& o) {
  const auto cfg = resolve(o);
  for (double scale : cfg.scales) {
    for (auto seed : cfg.seeds) {
      const auto out = run_compress(cfg, seed, cfg.generator, scale, o.overwrite);
      const auto a0 = out.ptq_accuracy ? fmt::format("{:.4f}", *out.ptq_accuracy) : std::string("n/a");
      note(out.reused, fmt::format("compress {} {} scale {} seed {}: float {:.4f}, PTQ {}, final {:.4f}",
                                   compress_variant(cfg.compress), generator_kind_name(cfg.generator), scale, seed,
                                   out.float_accuracy, a0, out.final_accuracy));
    }
  }
  return kExitOk;
}

int cmd_eval(const Options& o) {
  const auto cfg = resolve(o);
  std::optional<fs::path> checkpoint;
  if (!o.checkpoint.empty()) checkpoint = o.checkpoint;
  const auto out = run_eval(cfg, checkpoint);
  fmt::print("{}\n", nlohmann::json{{"accuracy", out.accuracy}, {"metadata", out.metadata}}.dump());
  return kExitOk;
}

int cmd_ablate(const Options& o) {
  const auto cfg = resolve(o);
  const auto rows = run_ablation(cfg, o.overwrite);
  fmt::print("{}", ablation_csv(rows));
  fmt::print("wrote {}\n", Layout{cfg.output_dir}.ablation_dir().string());
  return kExitOk;
}

int cmd_summarize(const Options& o) {
  const auto cfg = resolve(o, false);
  const auto report = summarize(cfg.output_dir);
  if (report.groups == 0)
    fail(ErrorKind::upstream, fmt::format("no completed run records under {}; run `autorecon compress` first",
                                          cfg.output_dir.string()));
  write_text_atomic(cfg.output_dir / "summary.md", report.markdown);
  write_text_atomic(cfg.output_dir / "summary.csv", report.csv);
  fmt::print("{}", report.markdown);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Data-free model compression with searched generators"};
  app.require_subcommand(1);
  Options o;

  auto* pretrain = app.add_subcommand("pretrain", "train the zoo classifier on real data");
  auto* search = app.add_subcommand("search", "search a generator architecture (stage 1)");
  auto* compress = app.add_subcommand("compress", "train a generator and compress with its data (stage 2)");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the held-out split");
  auto* ablate = app.add_subcommand("ablate-scale", "channel-scale ablation for searched and human generators");
  auto* summarize_cmd = app.add_subcommand("summarize", "aggregate run records into a comparison report");
  for (auto* cmd : {pretrain, search, compress, eval, ablate, summarize_cmd}) add_common(cmd, o);
  for (auto* cmd : {compress, ablate}) cmd->add_option("--scheme", o.scheme, "quantization scheme, e.g. w4a4");
  compress->add_option("--generator", o.generator, "searched | human | random");
  compress->add_option("--scale", o.scale, "channel scale factor");
  eval->add_option("--checkpoint", o.checkpoint, "model checkpoint (default: the pre-trained model)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*pretrain) return cmd_pretrain(o);
    if (*search) return cmd_search(o);
    if (*compress) return cmd_compress(o);
    if (*eval) return cmd_eval(o);
    if (*ablate) return cmd_ablate(o);
    if (*summarize_cmd) return cmd_summarize(o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
