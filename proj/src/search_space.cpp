// Copyright (c) 2026 The autorecon Authors
// SPDX-License-Identifier: Apache-2.0

#include "autorecon/search_space.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

namespace autorecon {

namespace {

struct OpEntry {
  OpKind kind;
  std::string_view name;
  int kernel;
  int dilation;
};

constexpr std::array<OpEntry, 9> kOps = {{
    {OpKind::conv1x1_d1, "conv1x1-d1", 1, 1},
    {OpKind::conv3x3_d1, "conv3x3-d1", 3, 1},
    {OpKind::conv5x5_d1, "conv5x5-d1", 5, 1},
    {OpKind::conv3x3_d2, "conv3x3-d2", 3, 2},
    {OpKind::conv5x5_d2, "conv5x5-d2", 5, 2},
    {OpKind::identity, "identity", 0, 1},
    {OpKind::none, "none", 0, 1},
    {OpKind::nn_interp, "nn-interp", 0, 1},
    {OpKind::bilinear_interp, "bilinear-interp", 0, 1},
}};

const OpEntry& entry(OpKind kind) {
  for (const auto& e : kOps) {
    if (e.kind == kind) return e;
  }
  fail(ErrorKind::structural, "unknown operation kind");
}

std::vector<double> to_host(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kCPU, torch::kFloat64).contiguous();
  return {c.data_ptr<double>(), c.data_ptr<double>() + c.numel()};
}

int argmax_lowest(const std::vector<double>& v) {
  int best = 0;
  for (int j = 1; j < static_cast<int>(v.size()); ++j) {
    if (v[j] > v[best]) best = j;
  }
  return best;
}

int none_index(const EdgeSpec& edge) {
  for (int j = 0; j < static_cast<int>(edge.candidates.size()); ++j) {
    if (edge.candidates[j].kind == OpKind::none) return j;
  }
  return -1;
}

}  // namespace

std::string_view op_name(OpKind kind) { return entry(kind).name; }

std::optional<OpKind> op_from_name(std::string_view name) {
  for (const auto& e : kOps) {
    if (e.name == name) return e.kind;
  }
  return std::nullopt;
}

OperationSpec op_spec(OpKind kind) {
  const auto& e = entry(kind);
  return {e.kind, e.kernel, e.dilation};
}

std::string_view edge_kind_name(EdgeKind kind) {
  switch (kind) {
    case EdgeKind::normal: return "normal";
    case EdgeKind::up: return "up";
    case EdgeKind::cross: return "cross";
  }
  return "?";
}

std::optional<EdgeKind> edge_kind_from_name(std::string_view name) {
  if (name == "normal") return EdgeKind::normal;
  if (name == "up") return EdgeKind::up;
  if (name == "cross") return EdgeKind::cross;
  return std::nullopt;
}

const std::vector<OperationSpec>& default_candidates(EdgeKind kind) {
  static const std::vector<OperationSpec> normal = {
      op_spec(OpKind::conv1x1_d1), op_spec(OpKind::conv3x3_d1), op_spec(OpKind::conv5x5_d1),
      op_spec(OpKind::conv3x3_d2), op_spec(OpKind::conv5x5_d2), op_spec(OpKind::identity),
      op_spec(OpKind::none)};
  static const std::vector<OperationSpec> up = {op_spec(OpKind::nn_interp), op_spec(OpKind::bilinear_interp)};
  static const std::vector<OperationSpec> cross = {op_spec(OpKind::nn_interp), op_spec(OpKind::bilinear_interp),
                                                   op_spec(OpKind::none)};
  switch (kind) {
    case EdgeKind::normal: return normal;
    case EdgeKind::up: return up;
    case EdgeKind::cross: return cross;
  }
  return normal;
}

int MacroArchitecture::node_id(int block, int position) const { return 4 * block + position - 1; }

std::vector<int> MacroArchitecture::incoming_edges(int node) const {
  std::vector<int> out;
  for (const auto& e : edges) {
    if (e.dst == node) out.push_back(e.id);
  }
  return out;
}

MacroArchitecture build_macro(const ImageShape& image, std::int64_t base_channels, std::int64_t latent_dim,
                              std::int64_t num_classes, const MacroOptions& options) {
  if (options.blocks < 1) fail(ErrorKind::config, "macro needs at least one block");
  const std::int64_t factor = std::int64_t{1} << options.blocks;
  if (image.height <= 0 || image.width <= 0 || image.channels <= 0)
    fail(ErrorKind::config, "image shape must be positive");
  if (image.height % factor != 0 || image.width % factor != 0)
    fail(ErrorKind::config, fmt::format("image size {}x{} is not divisible by {} ({} upsampling blocks)",
                                        image.height, image.width, factor, options.blocks));
  if (base_channels < 1) fail(ErrorKind::config, "base_channels must be >= 1");
  if (latent_dim < 1) fail(ErrorKind::config, "latent_dim must be >= 1");
  if (num_classes < 1) fail(ErrorKind::config, "num_classes must be >= 1");

  MacroArchitecture m;
  m.image = image;
  m.base_channels = base_channels;
  m.latent_dim = latent_dim;
  m.num_classes = num_classes;
  m.label_embed_dim = options.label_embed_dim > 0 ? options.label_embed_dim : num_classes;
  m.stem_height = image.height / factor;
  m.stem_width = image.width / factor;
  m.blocks = options.blocks;

  const int node_count = 4 * options.blocks + 1;
  m.nodes.resize(node_count);
  for (int id = 0; id < node_count; ++id) {
    auto& n = m.nodes[id];
    n.id = id;
    n.channels = base_channels;
    if (id == 0) {
      n.block = 0;
      n.position = 1;
    } else {
      n.block = (id - 1) / 4;
      n.position = (id - 1) % 4 + 2;
    }
    // N1 of block b sits at stem * 2^b; N2..N5 one level finer.
    const int level = id == 0 ? 0 : n.block + 1;
    n.height = m.stem_height << level;
    n.width = m.stem_width << level;
  }

  std::vector<OperationSpec> normal = default_candidates(EdgeKind::normal);
  if (options.normal_candidates) {
    if (options.normal_candidates->empty()) fail(ErrorKind::config, "normal candidate list is empty");
    normal.clear();
    for (auto k : *options.normal_candidates) {
      if (k == OpKind::nn_interp || k == OpKind::bilinear_interp)
        fail(ErrorKind::config, "interpolation is not a normal-edge candidate");
      normal.push_back(op_spec(k));
    }
    m.custom_normal_candidates = true;
  }

  auto add_edge = [&](EdgeKind kind, int src, int dst) {
    EdgeSpec e;
    e.id = static_cast<int>(m.edges.size());
    e.kind = kind;
    e.src = src;
    e.dst = dst;
    e.candidates = kind == EdgeKind::normal ? normal : default_candidates(kind);
    m.edges.push_back(std::move(e));
  };

  for (int b = 0; b < options.blocks; ++b) {
    const auto n = [&](int p) { return m.node_id(b, p); };
    add_edge(EdgeKind::up, n(1), n(2));
    add_edge(EdgeKind::normal, n(2), n(3));
    add_edge(EdgeKind::normal, n(2), n(4));
    add_edge(EdgeKind::normal, n(3), n(4));
    add_edge(EdgeKind::normal, n(2), n(5));
    add_edge(EdgeKind::normal, n(3), n(5));
    add_edge(EdgeKind::normal, n(4), n(5));
    if (b + 1 < options.blocks) add_edge(EdgeKind::cross, n(2), m.node_id(b + 1, 2));
  }
  return m;
}

ArchParams ArchParams::uniform(const MacroArchitecture& macro, double tau, torch::Dtype dtype) {
  ArchParams a;
  a.tau = tau;
  for (const auto& e : macro.edges) {
    a.alpha.push_back(torch::zeros({static_cast<std::int64_t>(e.candidates.size())}, torch::dtype(dtype)));
  }
  return a;
}

void ArchParams::check(const MacroArchitecture& macro) const {
  if (!(tau > 0.0) || !std::isfinite(tau)) fail(ErrorKind::config, "tau must be a positive finite number");
  if (alpha.size() != macro.edges.size())
    fail(ErrorKind::structural,
         fmt::format("arch params have {} edges, macro has {}", alpha.size(), macro.edges.size()));
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (alpha[i].dim() != 1 || alpha[i].size(0) != static_cast<std::int64_t>(macro.edges[i].candidates.size()))
      fail(ErrorKind::structural, fmt::format("edge {}: alpha length does not match candidate count", i));
    if (!torch::isfinite(alpha[i]).all().item<bool>())
      fail(ErrorKind::numeric, fmt::format("edge {}: alpha is not finite", i));
  }
}

ArchParams ArchParams::clone() const {
  ArchParams a;
  a.tau = tau;
  for (const auto& t : alpha) a.alpha.push_back(t.detach().clone().requires_grad_(t.requires_grad()));
  return a;
}

std::int64_t DerivedArch::channels() const { return scaled_channels(macro.base_channels, channel_scale); }

bool DerivedArch::operator==(const DerivedArch& o) const {
  return choices == o.choices && channel_scale == o.channel_scale && macro.image == o.macro.image &&
         macro.base_channels == o.macro.base_channels && macro.latent_dim == o.macro.latent_dim &&
         macro.num_classes == o.macro.num_classes && macro.label_embed_dim == o.macro.label_embed_dim &&
         macro.blocks == o.macro.blocks;
}

torch::Tensor edge_probabilities(const torch::Tensor& alpha) { return torch::softmax(alpha, /*dim=*/-1); }

torch::Tensor gumbel_mix_weights(const torch::Tensor& probs, const torch::Tensor& gumbel, double tau,
                                 bool on_log_probs) {
  if (!(tau > 0.0)) fail(ErrorKind::config, fmt::format("temperature must be positive, got {}", tau));
  auto base = on_log_probs ? torch::log(probs) : probs;
  return torch::softmax((base + gumbel) / tau, /*dim=*/-1);
}

torch::Tensor sample_gumbel(const torch::Tensor& like, at::Generator& generator) {
  auto u = torch::rand(like.sizes(), generator, torch::dtype(torch::kFloat64));
  u = u.clamp(1e-12, 1.0 - 1e-12);
  return (-torch::log(-torch::log(u))).to(like.scalar_type());
}

DerivedArch derive(const MacroArchitecture& macro, const ArchParams& arch) {
  arch.check(macro);
  DerivedArch d;
  d.macro = macro;
  std::vector<torch::Tensor> probs;
  for (std::size_t i = 0; i < macro.edges.size(); ++i) {
    d.choices.push_back(argmax_lowest(to_host(arch.alpha[i])));
    probs.push_back(edge_probabilities(arch.alpha[i].detach()));
  }
  repair_connectivity(d, probs);
  return d;
}

int repair_connectivity(DerivedArch& derived, const std::vector<torch::Tensor>& probabilities) {
  const auto& macro = derived.macro;
  int repairs = 0;
  for (int b = 0; b < macro.blocks; ++b) {
    const auto incoming = macro.incoming_edges(macro.node_id(b, 5));
    const bool connected = std::any_of(incoming.begin(), incoming.end(),
                                       [&](int e) { return derived.op(e).kind != OpKind::none; });
    if (connected || incoming.empty()) continue;

    int best_edge = -1;
    double best_mass = -1.0;
    for (int e : incoming) {
      const auto p = to_host(probabilities.at(e));
      const int none_j = none_index(macro.edges[e]);
      const double mass = 1.0 - (none_j >= 0 ? p[none_j] : 0.0);
      if (mass > best_mass) {
        best_mass = mass;
        best_edge = e;
      }
    }
    auto p = to_host(probabilities.at(best_edge));
    const int none_j = none_index(macro.edges[best_edge]);
    if (none_j >= 0) p[none_j] = -1.0;
    derived.choices[best_edge] = argmax_lowest(p);
    ++repairs;
  }
  return repairs;
}

bool satisfies_connectivity(const DerivedArch& derived) {
  const auto& macro = derived.macro;
  for (int b = 0; b < macro.blocks; ++b) {
    const auto incoming = macro.incoming_edges(macro.node_id(b, 5));
    if (std::none_of(incoming.begin(), incoming.end(),
                     [&](int e) { return derived.op(e).kind != OpKind::none; }))
      return false;
  }
  return true;
}

std::int64_t scaled_channels(std::int64_t base_channels, double scale) {
  if (!(scale > 0.0) || !std::isfinite(scale))
    fail(ErrorKind::config, fmt::format("channel scale must be positive, got {}", scale));
  const double raw = static_cast<double>(base_channels) * scale;
  if (std::floor(raw) < 8.0)
    fail(ErrorKind::config,
         fmt::format("scale {} on {} base channels leaves {} channels (< 8)", scale, base_channels, raw));
  const auto even = static_cast<std::int64_t>(2.0 * std::round(raw / 2.0));
  return std::max<std::int64_t>(even, 8);
}

DerivedArch scale_channels(const DerivedArch& derived, double scale) {
  scaled_channels(derived.macro.base_channels, scale);
  DerivedArch out = derived;
  out.channel_scale = scale;
  return out;
}

std::string arch_to_json(const DerivedArch& derived) {
  using nlohmann::json;
  const auto& m = derived.macro;
  json macro = {
      {"blocks", m.blocks},
      {"base_channels", m.base_channels},
      {"latent_dim", m.latent_dim},
      {"image_shape", {m.image.channels, m.image.height, m.image.width}},
      {"num_classes", m.num_classes},
      {"label_embed_dim", m.label_embed_dim},
  };
  if (m.custom_normal_candidates) {
    json names = json::array();
    const auto normal = std::find_if(m.edges.begin(), m.edges.end(),
                                     [](const EdgeSpec& e) { return e.kind == EdgeKind::normal; });
    for (const auto& op : normal->candidates) names.push_back(std::string(op_name(op.kind)));
    macro["normal_candidates"] = names;
  }
  json edges = json::array();
  for (const auto& e : m.edges) {
    edges.push_back({{"id", e.id},
                     {"kind", std::string(edge_kind_name(e.kind))},
                     {"src", e.src},
                     {"dst", e.dst},
                     {"op_name", std::string(op_name(derived.op(e.id).kind))}});
  }
  json doc = {{"format_version", kArchFormatVersion},
              {"macro", macro},
              {"channel_scale", derived.channel_scale},
              {"edges", edges}};
  return doc.dump(2) + "\n";
}

DerivedArch arch_from_json(const std::string& text) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, fmt::format("architecture file is not valid JSON: {}", e.what()));
  }
  try {
    if (doc.at("format_version").get<int>() != kArchFormatVersion)
      fail(ErrorKind::parse, fmt::format("unsupported architecture format_version {}", doc.at("format_version").dump()));
    const auto& mj = doc.at("macro");
    const auto shape = mj.at("image_shape").get<std::vector<std::int64_t>>();
    if (shape.size() != 3) fail(ErrorKind::parse, "macro.image_shape must have 3 entries");
    MacroOptions opts;
    opts.blocks = mj.at("blocks").get<int>();
    opts.label_embed_dim = mj.value("label_embed_dim", std::int64_t{0});
    if (mj.contains("normal_candidates")) {
      std::vector<OpKind> kinds;
      for (const auto& n : mj.at("normal_candidates")) {
        auto k = op_from_name(n.get<std::string>());
        if (!k) fail(ErrorKind::parse, fmt::format("unknown op name '{}' in normal_candidates", n.get<std::string>()));
        kinds.push_back(*k);
      }
      opts.normal_candidates = kinds;
    }
    DerivedArch d;
    try {
      d.macro = build_macro({shape[0], shape[1], shape[2]}, mj.at("base_channels").get<std::int64_t>(),
                            mj.at("latent_dim").get<std::int64_t>(), mj.value("num_classes", std::int64_t{10}),
                            opts);
    } catch (const Error& e) {
      fail(ErrorKind::parse, fmt::format("invalid macro: {}", e.what()));
    }
    d.channel_scale = doc.at("channel_scale").get<double>();

    const auto& edges = doc.at("edges");
    if (!edges.is_array() || edges.size() != d.macro.edges.size())
      fail(ErrorKind::parse, fmt::format("expected {} edges, found {}", d.macro.edges.size(),
                                         edges.is_array() ? edges.size() : 0));
    d.choices.assign(d.macro.edges.size(), -1);
    for (const auto& ej : edges) {
      const int id = ej.at("id").get<int>();
      if (id < 0 || id >= static_cast<int>(d.macro.edges.size()))
        fail(ErrorKind::parse, fmt::format("edge id {} out of range", id));
      const auto& spec = d.macro.edges[id];
      if (d.choices[id] != -1) fail(ErrorKind::parse, fmt::format("edge {}: duplicate entry", id));
      const auto kind = ej.at("kind").get<std::string>();
      if (kind != edge_kind_name(spec.kind))
        fail(ErrorKind::parse, fmt::format("edge {}: kind '{}' does not match macro kind '{}'", id, kind,
                                           edge_kind_name(spec.kind)));
      if (ej.at("src").get<int>() != spec.src || ej.at("dst").get<int>() != spec.dst)
        fail(ErrorKind::parse, fmt::format("edge {}: endpoints do not match the macro ({} -> {})", id, spec.src,
                                           spec.dst));
      const auto name = ej.at("op_name").get<std::string>();
      const auto op = op_from_name(name);
      int index = -1;
      for (int j = 0; op && j < static_cast<int>(spec.candidates.size()); ++j) {
        if (spec.candidates[j].kind == *op) index = j;
      }
      if (index < 0)
        fail(ErrorKind::parse, fmt::format("edge {}: '{}' is not a candidate for {} edges", id, name,
                                           edge_kind_name(spec.kind)));
      d.choices[id] = index;
    }
    scaled_channels(d.macro.base_channels, d.channel_scale);
    if (!satisfies_connectivity(d))
      fail(ErrorKind::parse, "architecture leaves a block output node with only `none` inputs");
    return d;
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, fmt::format("malformed architecture file: {}", e.what()));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::parse) throw;
    fail(ErrorKind::parse, e.what());
  }
}

void export_arch(const DerivedArch& derived, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, fmt::format("cannot write {}", path.string()));
  out << arch_to_json(derived);
}

DerivedArch import_arch(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::upstream, fmt::format("architecture file {} not found", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return arch_from_json(buf.str());
}

}  // namespace autorecon
