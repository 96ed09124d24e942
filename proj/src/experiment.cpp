// Copyright (c) 2026 The autorecon Authors
// SPDX-License-Identifier: Apache-2.0

#include "autorecon/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "autorecon/baselines.hpp"

namespace autorecon {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Offset for the fixed batches used to score generators, so they never
// coincide with training noise of the same seed.
constexpr std::uint64_t kScoreStreamOffset = 0x5851f42d4c957f2dULL;

/// Reads one JSON object, remembering which keys were consumed so leftovers
/// can be rejected.
class StrictObject {
 public:
  StrictObject(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) fail(ErrorKind::config, fmt::format("'{}' must be an object", where_));
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      fail(ErrorKind::config, fmt::format("'{}' has the wrong type: {}", path(key), e.what()));
    }
  }

  template <typename T>
  std::optional<T> optional(const char* key) {
    if (!j_.contains(key)) {
      seen_.insert(key);
      return std::nullopt;
    }
    T out{};
    get(key, out);
    return out;
  }

  StrictObject child(const char* key) {
    seen_.insert(key);
    static const json empty = json::object();
    return StrictObject(j_.contains(key) ? j_.at(key) : empty, path(key));
  }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.count(key)) fail(ErrorKind::config, fmt::format("unknown key '{}'", path(key.c_str())));
    }
  }

 private:
  std::string path(const char* key) const { return where_.empty() ? key : where_ + "." + key; }

  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

void read_adam(StrictObject obj, AdamSettings& s) {
  obj.get("lr", s.lr);
  obj.get("beta1", s.beta1);
  obj.get("beta2", s.beta2);
  obj.get("weight_decay", s.weight_decay);
  obj.finish();
}

json adam_json(const AdamSettings& s) {
  return {{"lr", s.lr}, {"beta1", s.beta1}, {"beta2", s.beta2}, {"weight_decay", s.weight_decay}};
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, fmt::format("cannot read {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string scale_tag(double scale) { return fmt::format("scale{}", scale); }

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

LabeledDataset load_eval_set(const ExperimentConfig& cfg) {
  const auto spec = cfg.zoo();
  LoadOptions load = cfg.pretrain.load;
  return load_dataset(spec.dataset, resolve_data_dir(cfg.data_dir), Split::test, load);
}

/// Final record of a metrics.jsonl file; throws ErrorKind::parse when absent.
json read_final_record(const fs::path& metrics) {
  std::ifstream in(metrics);
  if (!in) fail(ErrorKind::io, fmt::format("cannot read {}", metrics.string()));
  std::string line;
  json last;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = json::parse(line, nullptr, false);
    if (j.is_discarded()) fail(ErrorKind::parse, "malformed JSON line");
    if (j.is_object() && j.value("record", "") == "final") last = std::move(j);
  }
  if (last.is_null()) fail(ErrorKind::parse, "no final record");
  return last;
}

}  // namespace

std::string_view generator_kind_name(GeneratorKind kind) {
  switch (kind) {
    case GeneratorKind::searched: return "searched";
    case GeneratorKind::human: return "human";
    case GeneratorKind::random: return "random";
  }
  return "?";
}

GeneratorKind generator_kind_from_name(std::string_view name) {
  if (name == "searched") return GeneratorKind::searched;
  if (name == "human") return GeneratorKind::human;
  if (name == "random") return GeneratorKind::random;
  fail(ErrorKind::config, fmt::format("unknown generator '{}' (expected searched, human or random)", name));
}

void ExperimentConfig::validate() const {
  const auto spec = zoo();
  if (seeds.empty()) fail(ErrorKind::config, "seeds must not be empty");
  if (scales.empty()) fail(ErrorKind::config, "scales must not be empty");
  for (double s : scales) {
    if (!(s > 0.0)) fail(ErrorKind::config, fmt::format("scale {} must be positive", s));
    scaled_channels(macro.base_channels, s);
  }
  if (loss_estimate_batches < 1) fail(ErrorKind::config, "loss_estimate_batches must be >= 1");
  if (pretrain.batch_size < 2 || pretrain.lr <= 0.0 || pretrain.epochs < 0)
    fail(ErrorKind::config, "pretrain needs batch_size >= 2, lr > 0, epochs >= 0");
  search.validate();
  generator_training.validate();
  compress.validate();
  if (compress.student) {
    const auto student = zoo_spec(*compress.student);
    if (student.input != spec.input || student.num_classes != spec.num_classes)
      fail(ErrorKind::config, fmt::format("student {} does not match {}", student.name, spec.name));
  }
  build_macro();
}

MacroArchitecture ExperimentConfig::build_macro() const {
  const auto spec = zoo();
  MacroOptions opts;
  opts.blocks = macro.blocks;
  opts.label_embed_dim = macro.label_embed_dim;
  return autorecon::build_macro(spec.input, macro.base_channels, macro.latent_dim, spec.num_classes, opts);
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg;
  StrictObject root(j, "");
  root.get("model", cfg.model);
  if (auto dir = root.optional<std::string>("data_dir")) cfg.data_dir = *dir;
  if (auto dir = root.optional<std::string>("output_dir")) cfg.output_dir = *dir;
  std::string generator = "searched";
  root.get("generator", generator);
  cfg.generator = generator_kind_from_name(generator);
  root.get("scales", cfg.scales);
  root.get("seeds", cfg.seeds);
  root.get("loss_estimate_batches", cfg.loss_estimate_batches);

  {
    auto p = root.child("pretrain");
    p.get("epochs", cfg.pretrain.epochs);
    p.get("batch_size", cfg.pretrain.batch_size);
    p.get("lr", cfg.pretrain.lr);
    p.get("seed", cfg.pretrain_seed);
    p.get("allow_download", cfg.pretrain.load.allow_download);
    p.finish();
  }
  {
    auto m = root.child("macro");
    m.get("base_channels", cfg.macro.base_channels);
    m.get("latent_dim", cfg.macro.latent_dim);
    m.get("blocks", cfg.macro.blocks);
    m.get("label_embed_dim", cfg.macro.label_embed_dim);
    m.finish();
  }
  {
    auto s = root.child("search");
    auto& c = cfg.search;
    s.get("epochs", c.epochs);
    s.get("weight_steps", c.weight_steps);
    s.get("arch_steps", c.arch_steps);
    s.get("batch_size", c.batch_size);
    read_adam(s.child("weight_optimizer"), c.weight_optimizer);
    read_adam(s.child("arch_optimizer"), c.arch_optimizer);
    s.get("tau_start", c.tau_start);
    s.get("tau_end", c.tau_end);
    s.get("beta", c.beta);
    s.get("gumbel_on_log_probs", c.gumbel_on_log_probs);
    s.get("checkpoint_every", c.checkpoint_every);
    s.finish();
  }
  {
    auto g = root.child("generator_training");
    auto& c = cfg.generator_training;
    g.get("epochs", c.epochs);
    g.get("steps", c.steps);
    g.get("batch_size", c.batch_size);
    read_adam(g.child("optimizer"), c.optimizer);
    g.get("beta", c.beta);
    g.finish();
  }
  {
    auto k = root.child("compress");
    auto& c = cfg.compress;
    std::string mode = "quantize";
    k.get("mode", mode);
    if (mode == "quantize") {
      c.mode = CompressMode::quantize;
    } else if (mode == "distill") {
      c.mode = CompressMode::distill;
    } else {
      fail(ErrorKind::config, fmt::format("compress.mode '{}' must be quantize or distill", mode));
    }
    if (auto scheme = k.optional<std::string>("scheme")) c.scheme = QuantScheme::parse(*scheme);
    c.student = k.optional<std::string>("student");
    k.get("epochs", c.epochs);
    k.get("steps", c.steps);
    k.get("batch_size", c.batch_size);
    read_adam(k.child("optimizer"), c.optimizer);
    k.get("kd_temperature", c.kd_temperature);
    k.get("kd_weight", c.kd_weight);
    k.get("calib_batches", c.calib_batches);
    k.get("joint", c.joint);
    k.get("generator_lr", c.generator_lr);
    k.get("beta", c.beta);
    k.finish();
  }
  root.finish();
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorKind::config, fmt::format("config file {} not found", path.string()));
  const auto parsed = json::parse(read_file(path), nullptr, false);
  if (parsed.is_discarded()) fail(ErrorKind::config, fmt::format("{} is not valid JSON", path.string()));
  return config_from_json(parsed);
}

json config_to_json(const ExperimentConfig& cfg) {
  const auto& s = cfg.search;
  const auto& g = cfg.generator_training;
  const auto& c = cfg.compress;
  json compress = {{"mode", c.mode == CompressMode::quantize ? "quantize" : "distill"},
                   {"epochs", c.epochs},
                   {"steps", c.steps},
                   {"batch_size", c.batch_size},
                   {"optimizer", adam_json(c.optimizer)},
                   {"kd_temperature", c.kd_temperature},
                   {"kd_weight", c.kd_weight},
                   {"calib_batches", c.calib_batches},
                   {"joint", c.joint},
                   {"generator_lr", c.generator_lr},
                   {"beta", c.beta}};
  if (c.scheme) compress["scheme"] = c.scheme->notation();
  if (c.student) compress["student"] = *c.student;
  return {
      {"model", cfg.model},
      {"data_dir", cfg.data_dir.string()},
      {"output_dir", cfg.output_dir.string()},
      {"generator", generator_kind_name(cfg.generator)},
      {"scales", cfg.scales},
      {"seeds", cfg.seeds},
      {"loss_estimate_batches", cfg.loss_estimate_batches},
      {"pretrain",
       {{"epochs", cfg.pretrain.epochs},
        {"batch_size", cfg.pretrain.batch_size},
        {"lr", cfg.pretrain.lr},
        {"seed", cfg.pretrain_seed},
        {"allow_download", cfg.pretrain.load.allow_download}}},
      {"macro",
       {{"base_channels", cfg.macro.base_channels},
        {"latent_dim", cfg.macro.latent_dim},
        {"blocks", cfg.macro.blocks},
        {"label_embed_dim", cfg.macro.label_embed_dim}}},
      {"search",
       {{"epochs", s.epochs},
        {"weight_steps", s.weight_steps},
        {"arch_steps", s.arch_steps},
        {"batch_size", s.batch_size},
        {"weight_optimizer", adam_json(s.weight_optimizer)},
        {"arch_optimizer", adam_json(s.arch_optimizer)},
        {"tau_start", s.tau_start},
        {"tau_end", s.tau_end},
        {"beta", s.beta},
        {"gumbel_on_log_probs", s.gumbel_on_log_probs},
        {"checkpoint_every", s.checkpoint_every}}},
      {"generator_training",
       {{"epochs", g.epochs},
        {"steps", g.steps},
        {"batch_size", g.batch_size},
        {"optimizer", adam_json(g.optimizer)},
        {"beta", g.beta}}},
      {"compress", compress},
  };
}

fs::path Layout::search_dir(std::uint64_t seed) const { return root / "search" / fmt::format("seed{}", seed); }

fs::path Layout::compress_dir(const std::string& variant, GeneratorKind kind, double scale,
                              std::uint64_t seed) const {
  return root / "compress" / variant / std::string(generator_kind_name(kind)) / scale_tag(scale) /
         fmt::format("seed{}", seed);
}

std::string compress_variant(const CompressConfig& cfg) {
  if (cfg.mode == CompressMode::quantize) return cfg.scheme ? cfg.scheme->notation() : "quantize";
  return "distill-" + cfg.student.value_or("none");
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, fmt::format("cannot write {}", tmp.string()));
    out << text;
    if (!out) fail(ErrorKind::io, fmt::format("short write to {}", tmp.string()));
  }
  fs::rename(tmp, path);
}

PretrainOutcome run_pretrain(const ExperimentConfig& cfg, bool overwrite) {
  const Layout layout{cfg.output_dir};
  const auto path = layout.pretrained_model();
  if (fs::exists(path) && !overwrite) {
    const auto loaded = load_model(path);
    return {loaded.metadata.value("accuracy", 0.0), true};
  }
  const auto started = std::chrono::steady_clock::now();
  auto result = pretrain(cfg.zoo(), resolve_data_dir(cfg.data_dir), cfg.pretrain_seed, cfg.pretrain);
  fs::create_directories(path.parent_path());
  save_pretrained(result, path);
  json record = {{"model", cfg.model},          {"seed", cfg.pretrain_seed}, {"accuracy", result.accuracy},
                 {"epochs", result.epochs},     {"trajectory", result.trajectory},
                 {"wall_clock_s", seconds_since(started)}};
  write_text_atomic(path.parent_path() / "result.json", record.dump(2) + "\n");
  return {result.accuracy, false};
}

ClassifierPtr load_pretrained(const ExperimentConfig& cfg) {
  const auto path = Layout{cfg.output_dir}.pretrained_model();
  if (!fs::exists(path))
    fail(ErrorKind::upstream,
         fmt::format("pre-trained model {} not found; run `autorecon pretrain` first", path.string()));
  auto loaded = load_model(path);
  if (loaded.model->spec().name != cfg.model)
    fail(ErrorKind::config, fmt::format("{} holds {}, config asks for {}", path.string(),
                                        loaded.model->spec().name, cfg.model));
  freeze(*loaded.model);
  return loaded.model;
}

SearchOutcome run_search(const ExperimentConfig& cfg, std::uint64_t seed, bool overwrite) {
  const Layout layout{cfg.output_dir};
  const auto dir = layout.search_dir(seed);
  const auto metrics_path = dir / "metrics.jsonl";
  if (fs::exists(layout.arch_file(seed)) && fs::exists(metrics_path) && !overwrite) {
    SearchOutcome out;
    out.derived = import_arch(layout.arch_file(seed));
    out.validation_loss = read_final_record(metrics_path).at("validation_loss").at("total").get<double>();
    out.reused = true;
    return out;
  }
  auto model = load_pretrained(cfg);
  const auto macro = cfg.build_macro();
  const auto started = std::chrono::steady_clock::now();

  SearchConfig sc = cfg.search;
  sc.seed = seed;
  sc.telemetry_path = dir / "telemetry.jsonl";
  if (sc.checkpoint_every > 0) {
    sc.checkpoint_path = dir / "checkpoint.pt";
    if (fs::exists(sc.checkpoint_path) && !overwrite) sc.resume_from = sc.checkpoint_path;
  }
  fs::create_directories(dir);
  auto result = search(*model, macro, sc);

  const auto original = capture_original_stats(*model);
  const auto est = estimate_recon_loss(*result.state.supernet, *model, original, sc.beta, cfg.loss_estimate_batches,
                                       sc.batch_size, seed ^ kScoreStreamOffset);
  export_arch(result.derived, layout.arch_file(seed));

  std::vector<std::string> ops;
  for (std::size_t e = 0; e < result.derived.choices.size(); ++e)
    ops.emplace_back(op_name(result.derived.op(static_cast<int>(e)).kind));
  json record = {{"record", "final"},
                 {"model", cfg.model},
                 {"seed", seed},
                 {"epochs", result.state.epoch},
                 {"final_tau", result.state.tau},
                 {"choices", result.derived.choices},
                 {"ops", ops},
                 {"validation_loss", {{"l_class", est.l_class}, {"l_bns", est.l_bns}, {"total", est.total}}}};
  write_text_atomic(metrics_path, record.dump() + "\n");
  json summary = record;
  summary["wall_clock_s"] = seconds_since(started);
  summary["config"] = config_to_json(cfg);
  write_text_atomic(dir / "result.json", summary.dump(2) + "\n");

  SearchOutcome out;
  out.derived = std::move(result.derived);
  out.validation_loss = est.total;
  return out;
}

CompressOutcome run_compress(const ExperimentConfig& cfg, std::uint64_t seed, GeneratorKind kind, double scale,
                             bool overwrite) {
  const Layout layout{cfg.output_dir};
  const auto variant = compress_variant(cfg.compress);
  CompressOutcome out;
  out.dir = layout.compress_dir(variant, kind, scale, seed);
  const auto metrics_path = out.dir / "metrics.jsonl";

  auto fill = [&out](const json& record) {
    out.record = record;
    out.float_accuracy = record.at("float_accuracy").get<double>();
    if (!record.at("ptq_accuracy").is_null()) out.ptq_accuracy = record.at("ptq_accuracy").get<double>();
    out.final_accuracy = record.at("final_accuracy").get<double>();
    out.trajectory = record.at("trajectory").get<std::vector<double>>();
  };
  if (fs::exists(metrics_path) && fs::exists(out.dir / "result.json") && !overwrite) {
    fill(read_final_record(metrics_path));
    out.reused = true;
    return out;
  }

  // Resolve upstream artifacts before any compute.
  auto model = load_pretrained(cfg);
  const auto macro = cfg.build_macro();
  std::optional<DerivedArch> arch;
  if (kind == GeneratorKind::searched) {
    const auto path = layout.arch_file(seed);
    if (!fs::exists(path))
      fail(ErrorKind::upstream, fmt::format("architecture {} not found; run `autorecon search --seed {}` first",
                                            path.string(), seed));
    arch = import_arch(path);
    if (arch->macro.image != macro.image || arch->macro.num_classes != macro.num_classes ||
        arch->macro.latent_dim != macro.latent_dim || arch->macro.base_channels != macro.base_channels)
      fail(ErrorKind::config, fmt::format("{} was searched for a different macro configuration", path.string()));
  } else if (kind == GeneratorKind::random) {
    arch = sample_random_arch(macro, seed);
  }
  const auto eval_set = load_eval_set(cfg);
  const auto started = std::chrono::steady_clock::now();
  const auto reads_before = DataAudit::training_reads();

  GeneratorPtr generator;
  torch::manual_seed(seed);
  if (arch) {
    generator = instantiate_derived(scale_channels(*arch, scale));
  } else {
    generator = build_human_generator(macro.image, macro.base_channels, macro.latent_dim, macro.num_classes, scale);
  }

  GeneratorTrainConfig gcfg = cfg.generator_training;
  gcfg.seed = seed;
  const auto original = capture_original_stats(*model);
  const auto score_seed = seed ^ kScoreStreamOffset;
  const auto before = estimate_recon_loss(*generator, *model, original, gcfg.beta, cfg.loss_estimate_batches,
                                          gcfg.batch_size, score_seed);
  train_generator(*model, *generator, gcfg);
  const auto after = estimate_recon_loss(*generator, *model, original, gcfg.beta, cfg.loss_estimate_batches,
                                         gcfg.batch_size, score_seed);

  CompressConfig ccfg = cfg.compress;
  ccfg.seed = seed;
  const double float_accuracy = evaluate(*model, eval_set);
  auto result = compress(*model, *generator, ccfg, eval_set);
  const auto training_reads = DataAudit::training_reads() - reads_before;

  json record = {{"record", "final"},
                 {"model", cfg.model},
                 {"variant", variant},
                 {"generator", generator_kind_name(kind)},
                 {"scale", scale},
                 {"seed", seed},
                 {"generator_parameters", count_parameters(*generator)},
                 {"generator_loss_init", {{"l_class", before.l_class}, {"l_bns", before.l_bns}, {"total", before.total}}},
                 {"generator_loss_trained", {{"l_class", after.l_class}, {"l_bns", after.l_bns}, {"total", after.total}}},
                 {"float_accuracy", float_accuracy},
                 {"ptq_accuracy", result.ptq_accuracy ? json(*result.ptq_accuracy) : json(nullptr)},
                 {"trajectory", result.trajectory},
                 {"final_accuracy", result.final_accuracy},
                 {"real_training_reads", training_reads}};
  if (arch) record["choices"] = arch->choices;

  std::string metrics;
  for (std::size_t e = 0; e < result.trajectory.size(); ++e)
    metrics += json{{"record", "epoch"}, {"epoch", e}, {"accuracy", result.trajectory[e]}}.dump() + "\n";
  metrics += record.dump() + "\n";

  json meta = {{"spec", result.model->spec().name},
               {"dataset", result.model->spec().dataset},
               {"seed", seed},
               {"accuracy", result.final_accuracy},
               {"epoch", ccfg.epochs}};
  if (ccfg.scheme) meta["scheme"] = ccfg.scheme->notation();
  fs::create_directories(out.dir);
  save_model(*result.model, meta, out.dir / "model.pt");
  write_text_atomic(metrics_path, metrics);
  json summary = record;
  summary["wall_clock_s"] = seconds_since(started);
  summary["compress_wall_clock_s"] = result.wall_clock_s;
  summary["config"] = config_to_json(cfg);
  write_text_atomic(out.dir / "result.json", summary.dump(2) + "\n");

  fill(record);
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) fail(ErrorKind::input, "median of an empty list");
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::string format_delta(double delta_fraction) {
  const double points = 100.0 * delta_fraction;
  return fmt::format("({}{:.2f}%)", points < 0.0 ? "" : "+", points);
}

std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg, bool overwrite) {
  std::vector<AblationRow> rows;
  for (auto kind : {GeneratorKind::searched, GeneratorKind::human}) {
    for (double scale : cfg.scales) {
      std::vector<std::pair<double, std::uint64_t>> runs;
      for (auto seed : cfg.seeds) runs.emplace_back(run_compress(cfg, seed, kind, scale, overwrite).final_accuracy, seed);
      std::sort(runs.begin(), runs.end());
      std::vector<double> accs;
      for (const auto& r : runs) accs.push_back(r.first);
      rows.push_back({std::string(generator_kind_name(kind)), scale, median(accs), runs[(runs.size() - 1) / 2].second});
    }
  }
  const auto dir = Layout{cfg.output_dir}.ablation_dir();
  write_text_atomic(dir / "table.csv", ablation_csv(rows));
  write_text_atomic(dir / "accuracy_vs_scale.svg", ablation_svg(rows));
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "method,scale,top1,seed_median\n";
  for (const auto& r : rows) out += fmt::format("{},{},{:.4f},{}\n", r.method, r.scale, r.top1, r.seed_median);
  return out;
}

std::string ablation_svg(const std::vector<AblationRow>& rows) {
  constexpr double width = 480, height = 320, left = 60, right = 110, top = 20, bottom = 50;
  std::set<double> scales;
  double lo = 1.0, hi = 0.0;
  for (const auto& r : rows) {
    scales.insert(r.scale);
    lo = std::min(lo, r.top1);
    hi = std::max(hi, r.top1);
  }
  if (rows.empty()) lo = 0.0, hi = 1.0;
  lo = std::max(0.0, lo - 0.02);
  hi = std::min(1.0, hi + 0.02);
  if (hi <= lo) hi = lo + 0.01;
  const double xmin = std::log2(scales.empty() ? 1.0 : *scales.begin());
  const double xmax = std::log2(scales.empty() ? 1.0 : *scales.rbegin());
  auto px = [&](double s) {
    const double span = xmax > xmin ? xmax - xmin : 1.0;
    return left + (std::log2(s) - xmin) / span * (width - left - right);
  };
  auto py = [&](double a) { return height - bottom - (a - lo) / (hi - lo) * (height - top - bottom); };

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" font-family=\"sans-serif\" "
      "font-size=\"11\">\n<rect width=\"{0}\" height=\"{1}\" fill=\"white\"/>\n",
      width, height);
  svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\"/>\n", left, height - bottom,
                     width - right);
  svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n", left, top,
                     height - bottom);
  for (double s : scales)
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", px(s), height - bottom + 16, s);
  for (int i = 0; i <= 4; ++i) {
    const double a = lo + (hi - lo) * i / 4.0;
    svg += fmt::format("<text x=\"{}\" y=\"{:.1f}\" text-anchor=\"end\">{:.1f}</text>\n", left - 6, py(a) + 4, 100 * a);
  }
  svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">channel scale</text>\n",
                     (left + width - right) / 2, height - 12);
  svg += fmt::format("<text x=\"14\" y=\"{}\" transform=\"rotate(-90 14 {})\" text-anchor=\"middle\">top-1 (%)</text>\n",
                     (top + height - bottom) / 2, (top + height - bottom) / 2);

  const std::map<std::string, std::string> colors = {{"searched", "#c0392b"}, {"human", "#2471a3"}};
  int legend = 0;
  for (const auto& [method, color] : colors) {
    std::string points;
    for (const auto& r : rows) {
      if (r.method != method) continue;
      points += fmt::format("{:.1f},{:.1f} ", px(r.scale), py(r.top1));
      svg += fmt::format("<circle cx=\"{:.1f}\" cy=\"{:.1f}\" r=\"3\" fill=\"{}\"/>\n", px(r.scale), py(r.top1), color);
    }
    if (points.empty()) continue;
    svg += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>\n", color, points);
    const double ly = top + 14 + 16 * legend++;
    svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"{3}\" stroke-width=\"2\"/>\n",
                       width - right + 10, ly, width - right + 30, color);
    svg += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", width - right + 34, ly + 4, method);
  }
  svg += "</svg>\n";
  return svg;
}

EvalOutcome run_eval(const ExperimentConfig& cfg, const std::optional<fs::path>& checkpoint) {
  const auto path = checkpoint.value_or(Layout{cfg.output_dir}.pretrained_model());
  if (!fs::exists(path)) {
    fail(ErrorKind::upstream,
         checkpoint ? fmt::format("checkpoint {} not found", path.string())
                    : fmt::format("pre-trained model {} not found; run `autorecon pretrain` first", path.string()));
  }
  auto loaded = load_model(path);
  const auto eval_set = load_eval_set(cfg);
  if (eval_set.image_shape() != loaded.model->spec().input)
    fail(ErrorKind::config, fmt::format("{} does not take {} images", loaded.model->spec().name, cfg.zoo().dataset));
  return {evaluate(*loaded.model, eval_set), loaded.metadata};
}

SummaryReport summarize(const fs::path& runs_dir) {
  if (!fs::exists(runs_dir)) fail(ErrorKind::upstream, fmt::format("runs directory {} not found", runs_dir.string()));
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(runs_dir)) {
    if (entry.is_regular_file() && entry.path().filename() == "metrics.jsonl" &&
        entry.path().string().find("compress") != std::string::npos)
      files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  struct Cell {
    std::vector<double> values;
    void add(double v) { values.push_back(v); }
  };
  struct Group {
    std::set<std::uint64_t> seeds;
    Cell fp, a0, a1, a2;
  };
  std::map<std::pair<std::string, std::string>, Group> groups;
  SummaryReport report;

  for (const auto& file : files) {
    try {
      const auto r = read_final_record(file);
      if (r.at("scale").get<double>() != 1.0) continue;
      auto& g = groups[{r.at("model").get<std::string>(), r.at("variant").get<std::string>()}];
      g.seeds.insert(r.at("seed").get<std::uint64_t>());
      g.fp.add(r.at("float_accuracy").get<double>());
      if (!r.at("ptq_accuracy").is_null()) g.a0.add(r.at("ptq_accuracy").get<double>());
      const auto kind = r.at("generator").get<std::string>();
      const double acc = r.at("final_accuracy").get<double>();
      if (kind == "human") g.a1.add(acc);
      if (kind == "searched") g.a2.add(acc);
    } catch (const std::exception& e) {
      const auto msg = fmt::format("{}: {}", file.string(), e.what());
      std::cerr << "warning: skipping corrupt record " << msg << "\n";
      report.skipped.push_back(msg);
    }
  }

  auto pct = [](double v) { return fmt::format("{:.2f}", 100.0 * v); };
  auto cell_md = [&](const Cell& c) -> std::string {
    if (c.values.empty()) return "-";
    if (c.values.size() == 1) return pct(c.values[0]);
    const auto [mn, mx] = std::minmax_element(c.values.begin(), c.values.end());
    return fmt::format("{} [{}, {}]", pct(median(c.values)), pct(*mn), pct(*mx));
  };
  auto cell_csv = [&](const Cell& c) -> std::string {
    if (c.values.empty()) return ",,";
    const auto [mn, mx] = std::minmax_element(c.values.begin(), c.values.end());
    return fmt::format("{:.4f},{:.4f},{:.4f}", median(c.values), *mn, *mx);
  };

  report.markdown =
      "| model | scheme | seeds | float | A0 (PTQ) | A1 (human) | A2 (searched) |\n"
      "|---|---|---|---|---|---|---|\n";
  report.csv =
      "model,scheme,seeds,float_median,float_min,float_max,a0_median,a0_min,a0_max,a1_median,a1_min,a1_max,"
      "a2_median,a2_min,a2_max,delta_a2_a1\n";
  for (const auto& [key, g] : groups) {
    std::string a2 = cell_md(g.a2);
    std::string delta;
    if (!g.a1.values.empty() && !g.a2.values.empty()) {
      const double d = median(g.a2.values) - median(g.a1.values);
      a2 += " " + format_delta(d);
      delta = fmt::format("{:.4f}", d);
    }
    report.markdown += fmt::format("| {} | {} | {} | {} | {} | {} | {} |\n", key.first, key.second, g.seeds.size(),
                                   cell_md(g.fp), cell_md(g.a0), cell_md(g.a1), a2);
    report.csv += fmt::format("{},{},{},{},{},{},{},{}\n", key.first, key.second, g.seeds.size(), cell_csv(g.fp),
                              cell_csv(g.a0), cell_csv(g.a1), cell_csv(g.a2), delta);
  }
  report.groups = groups.size();
  if (!report.skipped.empty()) {
    report.markdown += fmt::format("\nSkipped {} corrupt record(s):\n", report.skipped.size());
    for (const auto& s : report.skipped) report.markdown += "- " + s + "\n";
  }
  return report;
}

}  // namespace autorecon
