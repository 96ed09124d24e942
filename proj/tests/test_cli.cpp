// Copyright (c) 2026 The autorecon Authors
// SPDX-License-Identifier: Apache-2.0

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <gtest/gtest.h>

#include "autorecon/experiment.hpp"
#include "test_util.hpp"

using namespace autorecon;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string output;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Runs the CLI with `args`, capturing stdout and stderr together.
RunResult run_cli(const std::string& args, const fs::path& scratch, const fs::path& data_dir = {}) {
  const auto log = scratch / "cli.log";
  std::string cmd;
  if (!data_dir.empty()) cmd += "AUTORECON_DATA_DIR='" + data_dir.string() + "' ";
  cmd += std::string("'") + AUTORECON_BIN + "' " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
}

/// Seconds-scale settings over synthetic digits.
json tiny_config(const fs::path& out) {
  return {{"model", "lenet_bn"},
          {"data_dir", "unused"},
          {"output_dir", out.string()},
          {"seeds", {0}},
          {"scales", {0.5, 1, 2}},
          {"loss_estimate_batches", 1},
          {"pretrain", {{"epochs", 4}, {"batch_size", 20}, {"seed", 0}}},
          {"macro", {{"base_channels", 16}, {"latent_dim", 16}, {"blocks", 2}}},
          {"search", {{"epochs", 2}, {"weight_steps", 1}, {"arch_steps", 1}, {"batch_size", 4}}},
          {"generator_training", {{"epochs", 1}, {"steps", 2}, {"batch_size", 4}}},
          {"compress",
           {{"mode", "quantize"}, {"scheme", "w4a4"}, {"epochs", 1}, {"steps", 2}, {"batch_size", 8}, {"calib_batches", 1}}}};
}

fs::path write_config(const fs::path& dir, const json& j) {
  const auto p = dir / "config.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

/// Shared scratch tree: synthetic data and a pre-trained model, built once.
class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    tmp_ = new fixtures::TempDir("cli");
    data_ = tmp_->path() / "data";
    fixtures::write_synthetic_mnist_root(data_, 20, 10);
    runs_ = tmp_->path() / "runs";
    config_ = write_config(tmp_->path(), tiny_config(runs_));
    const auto r = run_cli("pretrain --config '" + config_.string() + "'", tmp_->path(), data_);
    ASSERT_EQ(r.exit_code, 0) << r.output;
  }
  static void TearDownTestSuite() { delete tmp_; }

  static RunResult cli(const std::string& args) { return run_cli(args, tmp_->path(), data_); }
  static std::string cfg_arg() { return "--config '" + config_.string() + "'"; }

  static fixtures::TempDir* tmp_;
  static fs::path data_, runs_, config_;
};
fixtures::TempDir* Pipeline::tmp_ = nullptr;
fs::path Pipeline::data_, Pipeline::runs_, Pipeline::config_;

std::vector<json> read_jsonl(const fs::path& p) {
  std::vector<json> out;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(json::parse(line));
  return out;
}

void collect_keys(const json& j, const std::string& prefix, std::set<std::string>& out) {
  for (const auto& [k, v] : j.items()) {
    out.insert(prefix + k);
    if (v.is_object()) collect_keys(v, prefix + k + ".", out);
  }
}

void collect_schema_keys(const json& schema, const std::string& prefix, std::set<std::string>& out) {
  for (const auto& [k, v] : schema.at("properties").items()) {
    out.insert(prefix + k);
    if (v.contains("properties")) collect_schema_keys(v, prefix + k + ".", out);
  }
}

json final_record(const std::string& model, const std::string& variant, const std::string& gen, std::uint64_t seed,
                  double flt, double a0, double final_acc, double scale = 1.0) {
  return {{"record", "final"}, {"model", model},           {"variant", variant},
          {"generator", gen},  {"scale", scale},           {"seed", seed},
          {"float_accuracy", flt}, {"ptq_accuracy", a0},    {"final_accuracy", final_acc},
          {"trajectory", {final_acc}}};
}

void write_record(const fs::path& runs, const json& rec) {
  const auto dir = runs / "compress" / rec.at("variant").get<std::string>() / rec.at("generator").get<std::string>() /
                   fmt::format("scale{}", rec.at("scale").get<double>()) /
                   fmt::format("seed{}", rec.at("seed").get<std::uint64_t>());
  fs::create_directories(dir);
  std::ofstream(dir / "metrics.jsonl") << json{{"record", "epoch"}, {"epoch", 0}}.dump() << "\n" << rec.dump() << "\n";
}

}  // namespace

TEST(CliErrors, InvalidSchemeExitsWithConfigErrorBeforeAnyWork) {
  fixtures::TempDir tmp("cli_scheme");
  const auto cfg = write_config(tmp.path(), tiny_config(tmp.path() / "runs"));
  const auto r = run_cli("compress --config '" + cfg.string() + "' --scheme w0a4", tmp.path());
  EXPECT_EQ(r.exit_code, 2) << r.output;
  EXPECT_FALSE(fs::exists(tmp.path() / "runs"));
}

TEST(CliErrors, UnknownConfigKeyIsRejected) {
  fixtures::TempDir tmp("cli_key");
  auto j = tiny_config(tmp.path() / "runs");
  j["search"]["temperature"] = 1.0;
  const auto r = run_cli("search --config '" + write_config(tmp.path(), j).string() + "'", tmp.path());
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.output.find("search.temperature"), std::string::npos) << r.output;
}

TEST(CliErrors, MissingConfigFileAndBadFlags) {
  fixtures::TempDir tmp("cli_flags");
  EXPECT_EQ(run_cli("search --config '" + (tmp.path() / "absent.json").string() + "'", tmp.path()).exit_code, 2);
  EXPECT_EQ(run_cli("frobnicate", tmp.path()).exit_code, 2);
  const auto cfg = write_config(tmp.path(), tiny_config(tmp.path() / "runs"));
  EXPECT_EQ(run_cli("compress --config '" + cfg.string() + "' --generator clever", tmp.path()).exit_code, 2);
  EXPECT_EQ(run_cli("compress --config '" + cfg.string() + "' --scale 0.25", tmp.path()).exit_code, 2);
}

TEST(CliErrors, MissingPretrainedModelIsUpstream) {
  fixtures::TempDir tmp("cli_nopre");
  const auto cfg = write_config(tmp.path(), tiny_config(tmp.path() / "runs"));
  const auto r = run_cli("search --config '" + cfg.string() + "'", tmp.path());
  EXPECT_EQ(r.exit_code, 3);
  EXPECT_NE(r.output.find("autorecon pretrain"), std::string::npos) << r.output;
}

TEST(CliErrors, MissingDatasetIsReportedWithoutNumericCode) {
  fixtures::TempDir tmp("cli_nodata");
  const auto cfg = write_config(tmp.path(), tiny_config(tmp.path() / "runs"));
  const auto r = run_cli("pretrain --config '" + cfg.string() + "'", tmp.path(), tmp.path() / "empty");
  EXPECT_EQ(r.exit_code, 1) << r.output;
  EXPECT_NE(r.output.find("mnist_like"), std::string::npos) << r.output;
}

TEST_F(Pipeline, PretrainIsIdempotent) {
  const auto before = slurp(runs_ / "pretrain" / "model.pt");
  const auto r = cli("pretrain " + cfg_arg());
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_NE(r.output.find("[exists]"), std::string::npos) << r.output;
  EXPECT_EQ(slurp(runs_ / "pretrain" / "model.pt"), before);
  const auto e = cli("eval " + cfg_arg());
  EXPECT_EQ(e.exit_code, 0) << e.output;
}

TEST_F(Pipeline, SearchedCompressWithoutSearchIsUpstream) {
  const auto r = cli("compress " + cfg_arg() + " --seed 7 --generator searched");
  EXPECT_EQ(r.exit_code, 3);
  EXPECT_NE(r.output.find("autorecon search --seed 7"), std::string::npos) << r.output;
}

TEST_F(Pipeline, HumanCompressEndToEndAndRerunIsIdempotent) {
  const auto r = cli("compress " + cfg_arg() + " --generator human");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const auto dir = runs_ / "compress" / "w4a4" / "human" / "scale1" / "seed0";
  ASSERT_TRUE(fs::exists(dir / "metrics.jsonl"));
  ASSERT_TRUE(fs::exists(dir / "model.pt"));
  const auto records = read_jsonl(dir / "metrics.jsonl");
  ASSERT_EQ(records.size(), 2u);
  const auto& fin = records.back();
  EXPECT_EQ(fin.at("record"), "final");
  EXPECT_EQ(fin.at("real_training_reads"), 0);
  EXPECT_EQ(fin.at("trajectory").size(), 1u);
  EXPECT_TRUE(fin.at("ptq_accuracy").is_number());

  const auto metrics = slurp(dir / "metrics.jsonl");
  const auto again = cli("compress " + cfg_arg() + " --generator human");
  EXPECT_EQ(again.exit_code, 0);
  EXPECT_NE(again.output.find("[exists]"), std::string::npos) << again.output;
  EXPECT_EQ(slurp(dir / "metrics.jsonl"), metrics);

  const auto ev = cli("eval " + cfg_arg() + " --checkpoint '" + (dir / "model.pt").string() + "'");
  EXPECT_EQ(ev.exit_code, 0) << ev.output;
}

TEST_F(Pipeline, SearchThenSearchedCompress) {
  const auto s = cli("search " + cfg_arg() + " --seed 1");
  ASSERT_EQ(s.exit_code, 0) << s.output;
  const auto sdir = runs_ / "search" / "seed1";
  for (const char* f : {"arch.json", "metrics.jsonl", "telemetry.jsonl", "result.json"})
    EXPECT_TRUE(fs::exists(sdir / f)) << f;
  EXPECT_EQ(read_jsonl(sdir / "telemetry.jsonl").size(), 4u);
  const auto arch = import_arch(sdir / "arch.json");
  EXPECT_TRUE(satisfies_connectivity(arch));

  const auto c = cli("compress " + cfg_arg() + " --seed 1 --generator searched");
  ASSERT_EQ(c.exit_code, 0) << c.output;
  const auto fin = read_jsonl(runs_ / "compress" / "w4a4" / "searched" / "scale1" / "seed1" / "metrics.jsonl").back();
  EXPECT_EQ(fin.at("choices").get<std::vector<int>>(), arch.choices);

  const auto rnd = cli("compress " + cfg_arg() + " --seed 1 --generator random --scale 2");
  EXPECT_EQ(rnd.exit_code, 0) << rnd.output;
}

TEST_F(Pipeline, AblationTableIsCompleteAndDeterministic) {
  // Reuse the shared pre-trained model in two fresh output trees.
  std::vector<std::string> tables;
  for (const char* name : {"ablation_a", "ablation_b"}) {
    const auto root = tmp_->path() / name;
    fs::create_directories(root / "pretrain");
    fs::copy_file(runs_ / "pretrain" / "model.pt", root / "pretrain" / "model.pt", fs::copy_options::overwrite_existing);
    ASSERT_EQ(cli("search " + cfg_arg() + " --output '" + root.string() + "'").exit_code, 0);
    const auto a = cli("ablate-scale " + cfg_arg() + " --output '" + root.string() + "'");
    ASSERT_EQ(a.exit_code, 0) << a.output;
    tables.push_back(slurp(root / "ablate_scale" / "table.csv"));
    EXPECT_TRUE(fs::exists(root / "ablate_scale" / "accuracy_vs_scale.svg"));
  }
  EXPECT_EQ(tables[0], tables[1]);
  std::istringstream in(tables[0]);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "method,scale,top1,seed_median");
  std::vector<std::string> rows;
  while (std::getline(in, line)) rows.push_back(line);
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[0].rfind("searched,0.5,", 0), 0u) << rows[0];
  EXPECT_EQ(rows[5].rfind("human,2,", 0), 0u) << rows[5];
}

TEST_F(Pipeline, SummarizeOverRealRuns) {
  ASSERT_EQ(cli("compress " + cfg_arg() + " --generator human").exit_code, 0);
  const auto r = cli("summarize " + cfg_arg());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const auto md = slurp(runs_ / "summary.md");
  EXPECT_NE(md.find("| lenet_bn | w4a4 |"), std::string::npos) << md;
  EXPECT_TRUE(fs::exists(runs_ / "summary.csv"));
}

TEST(CliErrors, SummarizeWithoutRecordsIsUpstream) {
  fixtures::TempDir tmp("cli_sum");
  const auto r = run_cli("summarize --output '" + tmp.path().string() + "'", tmp.path());
  EXPECT_EQ(r.exit_code, 3);
  EXPECT_NE(r.output.find("autorecon compress"), std::string::npos) << r.output;
}

TEST(Summarize, SingleRunGivesOneRow) {
  fixtures::TempDir tmp("sum1");
  write_record(tmp.path(), final_record("lenet_bn", "w4a4", "human", 0, 0.99, 0.95, 0.97));
  const auto rep = summarize(tmp.path());
  EXPECT_EQ(rep.groups, 1u);
  EXPECT_TRUE(rep.skipped.empty());
  EXPECT_NE(rep.markdown.find("| lenet_bn | w4a4 | 1 | 99.00 | 95.00 | 97.00 | - |"), std::string::npos)
      << rep.markdown;
}

TEST(Summarize, MediansRangesAndDeltaSign) {
  fixtures::TempDir tmp("sum3");
  const double human[] = {0.970, 0.980, 0.975};
  const double searched[] = {0.981, 0.972, 0.990};
  for (std::uint64_t s = 0; s < 3; ++s) {
    write_record(tmp.path(), final_record("lenet_bn", "w4a4", "human", s, 0.99, 0.95 + 0.01 * s, human[s]));
    write_record(tmp.path(), final_record("lenet_bn", "w4a4", "searched", s, 0.99, 0.96, searched[s]));
  }
  // A scale-2 record must not leak into the scale-1 summary.
  write_record(tmp.path(), final_record("lenet_bn", "w4a4", "searched", 0, 0.99, 0.96, 0.10, 2.0));
  const auto rep = summarize(tmp.path());
  ASSERT_EQ(rep.groups, 1u);
  EXPECT_NE(rep.markdown.find("96.00 [95.00, 97.00]"), std::string::npos) << rep.markdown;
  EXPECT_NE(rep.markdown.find("97.50 [97.00, 98.00]"), std::string::npos) << rep.markdown;
  EXPECT_NE(rep.markdown.find("98.10 [97.20, 99.00] (+0.60%)"), std::string::npos) << rep.markdown;
  std::istringstream csv(rep.csv);
  std::string header, row;
  std::getline(csv, header);
  std::getline(csv, row);
  EXPECT_EQ(header,
            "model,scheme,seeds,float_median,float_min,float_max,a0_median,a0_min,a0_max,a1_median,a1_min,a1_max,"
            "a2_median,a2_min,a2_max,delta_a2_a1");
  EXPECT_EQ(row.rfind("lenet_bn,w4a4,3,", 0), 0u) << row;
  EXPECT_NE(row.find(",0.9810,0.9720,0.9900,0.0060"), std::string::npos) << row;
}

TEST(Summarize, NegativeDeltaIsSigned) {
  fixtures::TempDir tmp("sumneg");
  write_record(tmp.path(), final_record("lenet_bn", "w4a4", "human", 0, 0.99, 0.95, 0.98));
  write_record(tmp.path(), final_record("lenet_bn", "w4a4", "searched", 0, 0.99, 0.95, 0.97));
  EXPECT_NE(summarize(tmp.path()).markdown.find("(-1.00%)"), std::string::npos);
}

TEST(Summarize, CorruptRecordsAreSkippedAndListed) {
  fixtures::TempDir tmp("sumbad");
  write_record(tmp.path(), final_record("lenet_bn", "w4a4", "human", 0, 0.99, 0.95, 0.97));
  const auto bad = tmp.path() / "compress" / "w4a4" / "searched" / "scale1" / "seed0";
  fs::create_directories(bad);
  std::ofstream(bad / "metrics.jsonl") << "{\"record\": \"final\", \"model\": ";
  const auto rep = summarize(tmp.path());
  EXPECT_EQ(rep.groups, 1u);
  ASSERT_EQ(rep.skipped.size(), 1u);
  EXPECT_NE(rep.skipped[0].find("seed0"), std::string::npos);
}

TEST(Helpers, MedianAndDelta) {
  EXPECT_DOUBLE_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_DOUBLE_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
  EXPECT_THROW(median({}), Error);
  EXPECT_EQ(format_delta(0.0123), "(+1.23%)");
  EXPECT_EQ(format_delta(-0.005), "(-0.50%)");
}

TEST(Config, JsonRoundTripAndStrictTypes) {
  auto cfg = config_from_json(tiny_config("/tmp/x"));
  const auto j = config_to_json(cfg);
  EXPECT_EQ(config_to_json(config_from_json(j)), j);
  EXPECT_EQ(cfg.search.epochs, 2);
  EXPECT_EQ(cfg.compress.scheme->notation(), "w4a4");

  auto bad = tiny_config("/tmp/x");
  bad["search"]["epochs"] = "two";
  EXPECT_THROW(config_from_json(bad), Error);
  bad = tiny_config("/tmp/x");
  bad["compress"]["mode"] = "prune";
  EXPECT_THROW(config_from_json(bad), Error);
  bad = tiny_config("/tmp/x");
  bad["compress"]["scheme"] = "w1a4";
  try {
    config_from_json(bad).validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
  }
}

TEST(Config, PublishedSchemaCoversEveryKey) {
  const auto schema = json::parse(slurp(fs::path(AUTORECON_SOURCE_DIR) / "docs" / "config.schema.json"));
  auto cfg = config_from_json(tiny_config("/tmp/x"));
  cfg.compress.student = "lenet_bn";  // emit both mode-specific keys
  std::set<std::string> emitted, documented;
  collect_keys(config_to_json(cfg), "", emitted);
  collect_schema_keys(schema, "", documented);
  EXPECT_EQ(emitted, documented);
}

TEST(Config, ShippedConfigsParseAndValidate) {
  for (const auto& entry : fs::directory_iterator(fs::path(AUTORECON_SOURCE_DIR) / "configs")) {
    if (entry.path().extension() != ".json") continue;
    EXPECT_NO_THROW(load_config(entry.path()).validate()) << entry.path();
  }
}
