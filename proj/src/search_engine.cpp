// Copyright (c) 2026 The autorecon Authors
// SPDX-License-Identifier: Apache-2.0

#include "autorecon/search_engine.hpp"

#include <cmath>
#include <fstream>

#include <ATen/CPUGeneratorImpl.h>
#include <fmt/format.h>
#include <json.hpp>

namespace autorecon {

namespace {

// Offset separating the architecture-phase noise stream from the weight phase.
constexpr std::uint64_t kArchStreamOffset = 0x9e3779b97f4a7c15ULL;

torch::optim::Adam make_adam(std::vector<torch::Tensor> params, const AdamSettings& s) {
  return torch::optim::Adam(std::move(params), torch::optim::AdamOptions(s.lr)
                                                   .betas({s.beta1, s.beta2})
                                                   .weight_decay(s.weight_decay));
}

void check_finite(const ReconLossTerms& t, std::int64_t step, const std::string& phase, double tau) {
  const double c = t.l_class.item<double>();
  const double b = t.l_bns.item<double>();
  if (std::isfinite(c) && std::isfinite(b)) return;
  const char* term = !std::isfinite(c) ? "l_class" : "l_bns";
  fail(ErrorKind::numeric, fmt::format("non-finite reconstruction loss at step {} ({} phase, tau={}): {} "
                                       "(l_class={}, l_bns={})",
                                       step, phase, tau, term, c, b));
}

struct Checkpoint {
  int epoch;
  double tau;
  std::uint64_t seed;
};

void save_checkpoint(const std::filesystem::path& path, SupernetImpl& supernet, torch::optim::Adam& wopt,
                     torch::optim::Adam& aopt, at::Generator& wrng, at::Generator& arng, const Checkpoint& meta) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  torch::serialize::OutputArchive archive;
  torch::serialize::OutputArchive weights, wstate, astate;
  supernet.save(weights);
  archive.write("weights", weights);
  for (std::size_t i = 0; i < supernet.arch().alpha.size(); ++i)
    archive.write(fmt::format("alpha{}", i), supernet.arch().alpha[i].detach());
  wopt.save(wstate);
  aopt.save(astate);
  archive.write("weight_optimizer", wstate);
  archive.write("arch_optimizer", astate);
  archive.write("weight_rng", wrng.get_state());
  archive.write("arch_rng", arng.get_state());
  archive.write("epoch", c10::IValue(static_cast<std::int64_t>(meta.epoch)));
  archive.write("tau", c10::IValue(meta.tau));
  archive.write("seed", c10::IValue(static_cast<std::int64_t>(meta.seed)));
  archive.save_to(path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, SupernetImpl& supernet, torch::optim::Adam& wopt,
                           torch::optim::Adam& aopt, at::Generator& wrng, at::Generator& arng) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::upstream, fmt::format("search checkpoint {} not found", path.string()));
  torch::serialize::InputArchive archive;
  archive.load_from(path.string());
  torch::serialize::InputArchive weights, wstate, astate;
  archive.read("weights", weights);
  supernet.load(weights);
  {
    torch::NoGradGuard no_grad;
    for (std::size_t i = 0; i < supernet.arch().alpha.size(); ++i) {
      torch::Tensor a;
      archive.read(fmt::format("alpha{}", i), a);
      supernet.arch().alpha[i].copy_(a);
    }
  }
  archive.read("weight_optimizer", wstate);
  archive.read("arch_optimizer", astate);
  wopt.load(wstate);
  aopt.load(astate);
  torch::Tensor s;
  archive.read("weight_rng", s);
  wrng.set_state(s);
  archive.read("arch_rng", s);
  arng.set_state(s);
  c10::IValue epoch, tau, seed;
  archive.read("epoch", epoch);
  archive.read("tau", tau);
  archive.read("seed", seed);
  return {static_cast<int>(epoch.toInt()), tau.toDouble(), static_cast<std::uint64_t>(seed.toInt())};
}

}  // namespace

void SearchConfig::validate() const {
  if (epochs < 1 || weight_steps < 1 || arch_steps < 0 || batch_size < 2)
    fail(ErrorKind::config, "search needs epochs >= 1, weight_steps >= 1, arch_steps >= 0, batch_size >= 2");
  if (!(tau_end > 0.0) || !(tau_start >= tau_end))
    fail(ErrorKind::config, fmt::format("tau schedule must satisfy tau_start >= tau_end > 0 (got {} -> {})",
                                        tau_start, tau_end));
  if (beta < 0.0) fail(ErrorKind::config, "beta must be non-negative");
  if (weight_optimizer.lr <= 0.0 || arch_optimizer.lr <= 0.0) fail(ErrorKind::config, "learning rates must be positive");
  if (epoch_limit < 0) fail(ErrorKind::config, "epoch_limit must be >= 0");
  if (checkpoint_every < 0) fail(ErrorKind::config, "checkpoint_every must be >= 0");
  if (checkpoint_every > 0 && checkpoint_path.empty()) fail(ErrorKind::config, "checkpoint_every needs checkpoint_path");
}

double anneal_tau(int epoch, const SearchConfig& cfg) {
  if (cfg.epochs <= 1) return cfg.tau_start;
  const double t = static_cast<double>(epoch) / static_cast<double>(cfg.epochs - 1);
  return cfg.tau_start * std::pow(cfg.tau_end / cfg.tau_start, t);
}

std::string TelemetryRecord::to_json() const {
  nlohmann::json j = {{"step", step}, {"phase", phase}, {"l_class", l_class},
                      {"l_bns", l_bns}, {"total", total}, {"tau", tau}};
  return j.dump();
}

ReconLossTerms weight_step(SupernetImpl& net, ClassifierImpl& model, const BNStatsSnapshot& original,
                           torch::optim::Optimizer& optimizer, at::Generator& rng, std::int64_t batch_size,
                           double beta) {
  const auto& macro = net.macro();
  std::vector<torch::Tensor> mix;
  {
    torch::NoGradGuard no_grad;
    mix = net.mix_weights(MixMode::sampled, &rng);
  }
  auto noise = sample_noise(batch_size, macro.latent_dim, macro.num_classes, rng);
  optimizer.zero_grad();
  auto terms = reconstruction_loss(model, net.forward_mixed(noise.z, noise.y, mix), noise.y, original, beta);
  terms.total.backward();
  optimizer.step();
  return terms;
}

ReconLossTerms arch_step(SupernetImpl& net, ClassifierImpl& model, const BNStatsSnapshot& original,
                         torch::optim::Optimizer& optimizer, at::Generator& rng, std::int64_t batch_size, double beta) {
  const auto& macro = net.macro();
  auto weights = net.parameters();
  for (auto& p : weights) p.requires_grad_(false);
  auto mix = net.mix_weights(MixMode::sampled, &rng);
  auto noise = sample_noise(batch_size, macro.latent_dim, macro.num_classes, rng);
  optimizer.zero_grad();
  auto terms = reconstruction_loss(model, net.forward_mixed(noise.z, noise.y, mix), noise.y, original, beta);
  terms.total.backward();
  optimizer.step();
  for (auto& p : weights) p.requires_grad_(true);
  return terms;
}

SearchResult search(ClassifierImpl& model, const MacroArchitecture& macro, const SearchConfig& cfg) {
  cfg.validate();
  const auto original = capture_original_stats(model);

  torch::manual_seed(cfg.seed);
  SearchState state;
  state.supernet = Supernet(macro);
  auto& net = *state.supernet;
  net.gumbel_on_log_probs = cfg.gumbel_on_log_probs;
  net.train();

  auto weight_rng = at::make_generator<at::CPUGeneratorImpl>(cfg.seed);
  auto arch_rng = at::make_generator<at::CPUGeneratorImpl>(cfg.seed ^ kArchStreamOffset);
  auto weight_params = net.parameters();
  auto weight_opt = make_adam(weight_params, cfg.weight_optimizer);
  auto arch_opt = make_adam(net.arch().alpha, cfg.arch_optimizer);

  int start_epoch = 0;
  if (!cfg.resume_from.empty()) {
    const auto ck = load_checkpoint(cfg.resume_from, net, weight_opt, arch_opt, weight_rng, arch_rng);
    if (ck.seed != cfg.seed) fail(ErrorKind::config, fmt::format("checkpoint seed {} differs from config seed {}", ck.seed, cfg.seed));
    start_epoch = ck.epoch;
    state.epoch = ck.epoch;
    state.tau = ck.tau;
  }

  std::ofstream telemetry;
  if (!cfg.telemetry_path.empty()) {
    if (cfg.telemetry_path.has_parent_path()) std::filesystem::create_directories(cfg.telemetry_path.parent_path());
    telemetry.open(cfg.telemetry_path, start_epoch > 0 ? std::ios::app : std::ios::trunc);
  }
  std::int64_t step = static_cast<std::int64_t>(start_epoch) * (cfg.weight_steps + cfg.arch_steps);
  auto log = [&](const std::string& phase, const ReconLossTerms& t, double tau) {
    TelemetryRecord r{step, phase, t.l_class.item<double>(), t.l_bns.item<double>(), t.total.item<double>(), tau};
    if (telemetry.is_open()) telemetry << r.to_json() << '\n';
    state.telemetry.push_back(std::move(r));
    ++step;
  };

  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const double tau = anneal_tau(epoch, cfg);
    net.arch().tau = tau;
    state.tau = tau;

    for (int s = 0; s < cfg.weight_steps; ++s) {
      auto terms = weight_step(net, model, original, weight_opt, weight_rng, cfg.batch_size, cfg.beta);
      check_finite(terms, step, "weight", tau);
      log("weight", terms, tau);
    }
    for (int s = 0; s < cfg.arch_steps; ++s) {
      auto terms = arch_step(net, model, original, arch_opt, arch_rng, cfg.batch_size, cfg.beta);
      check_finite(terms, step, "arch", tau);
      log("arch", terms, tau);
    }

    state.epoch = epoch + 1;
    if (cfg.checkpoint_every > 0 && state.epoch % cfg.checkpoint_every == 0)
      save_checkpoint(cfg.checkpoint_path, net, weight_opt, arch_opt, weight_rng, arch_rng,
                      {state.epoch, tau, cfg.seed});
    if (cfg.epoch_limit > 0 && state.epoch - start_epoch >= cfg.epoch_limit) break;
  }

  SearchResult result;
  result.derived = derive(macro, net.arch());
  result.state = std::move(state);
  return result;
}

LossEstimate estimate_recon_loss(GeneratorImpl& generator, ClassifierImpl& model, const BNStatsSnapshot& original,
                                 double beta, int batches, std::int64_t batch_size, std::uint64_t seed) {
  if (batches < 1) fail(ErrorKind::config, "loss estimate needs at least one batch");
  torch::NoGradGuard no_grad;
  auto rng = at::make_generator<at::CPUGeneratorImpl>(seed);
  LossEstimate e;
  for (int b = 0; b < batches; ++b) {
    auto batch = generate_batch(generator, batch_size, rng);
    auto t = reconstruction_loss(model, batch.x, batch.y, original, beta);
    e.l_class += t.l_class.item<double>();
    e.l_bns += t.l_bns.item<double>();
    e.total += t.total.item<double>();
  }
  e.l_class /= batches;
  e.l_bns /= batches;
  e.total /= batches;
  return e;
}

std::uint64_t hash_tensors(const std::vector<torch::Tensor>& tensors) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : tensors) {
    const auto c = t.detach().contiguous();
    const auto* bytes = static_cast<const unsigned char*>(c.data_ptr());
    const auto n = c.numel() * c.element_size();
    for (std::int64_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace autorecon
