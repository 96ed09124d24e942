// Copyright (c) 2026 The autorecon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <torch/torch.h>

#include "autorecon/common.hpp"

namespace autorecon {

enum class EdgeKind { normal, up, cross };

enum class OpKind {
  conv1x1_d1,
  conv3x3_d1,
  conv5x5_d1,
  conv3x3_d2,
  conv5x5_d2,
  identity,
  none,
  nn_interp,
  bilinear_interp,
};

struct OperationSpec {
  OpKind kind = OpKind::none;
  int kernel = 0;  // 0 for parameter-free ops
  int dilation = 1;

  bool is_conv() const { return kernel > 0; }
  bool operator==(const OperationSpec&) const = default;
};

std::string_view op_name(OpKind kind);
std::optional<OpKind> op_from_name(std::string_view name);
OperationSpec op_spec(OpKind kind);

std::string_view edge_kind_name(EdgeKind kind);
std::optional<EdgeKind> edge_kind_from_name(std::string_view name);

/// Default candidate list for an edge type. The index of an op in this list
/// is its identity in ArchParams and DerivedArch.
const std::vector<OperationSpec>& default_candidates(EdgeKind kind);

struct NodeSpec {
  int id = 0;
  int block = 0;     // 0-based; a shared node belongs to the block where it is N5
  int position = 1;  // 1..5
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::int64_t channels = 0;
};

struct EdgeSpec {
  int id = 0;
  EdgeKind kind = EdgeKind::normal;
  int src = 0;
  int dst = 0;
  std::vector<OperationSpec> candidates;
};

struct MacroOptions {
  int blocks = 3;
  std::int64_t label_embed_dim = 0;  // 0: use num_classes
  // Restricts the normal-edge candidate set (tests use tiny supernets).
  std::optional<std::vector<OpKind>> normal_candidates;
};

/// Fixed generator skeleton: a chain of blocks with five nodes each, where N5
/// of block b is N1 of block b+1. Every node is the sum of its incoming edges.
struct MacroArchitecture {
  ImageShape image;
  std::int64_t base_channels = 0;
  std::int64_t latent_dim = 0;
  std::int64_t num_classes = 0;
  std::int64_t label_embed_dim = 0;
  std::int64_t stem_height = 0;
  std::int64_t stem_width = 0;
  int blocks = 0;
  std::vector<NodeSpec> nodes;
  std::vector<EdgeSpec> edges;
  bool custom_normal_candidates = false;

  /// Node id of position (1..5) in a 0-based block.
  int node_id(int block, int position) const;
  int output_node() const { return static_cast<int>(nodes.size()) - 1; }
  std::vector<int> incoming_edges(int node) const;
  std::size_t num_edges() const { return edges.size(); }
};

MacroArchitecture build_macro(const ImageShape& image, std::int64_t base_channels,
                              std::int64_t latent_dim, std::int64_t num_classes,
                              const MacroOptions& options = {});

/// Per-edge architecture logits plus the sampling temperature.
struct ArchParams {
  std::vector<torch::Tensor> alpha;
  double tau = 1.0;

  static ArchParams uniform(const MacroArchitecture& macro, double tau = 1.0,
                            torch::Dtype dtype = torch::kFloat32);
  void check(const MacroArchitecture& macro) const;
  ArchParams clone() const;
};

struct DerivedArch {
  MacroArchitecture macro;
  std::vector<int> choices;
  double channel_scale = 1.0;

  const OperationSpec& op(int edge) const { return macro.edges.at(edge).candidates.at(choices.at(edge)); }
  /// Channel count used when instantiating this architecture.
  std::int64_t channels() const;
  bool operator==(const DerivedArch& other) const;
};

/// Softmax over one edge's logits.
torch::Tensor edge_probabilities(const torch::Tensor& alpha);

/// Relaxed one-hot weights exp((p+g)/tau) / sum exp((p+g)/tau). With
/// on_log_probs the noise is added to log p instead.
torch::Tensor gumbel_mix_weights(const torch::Tensor& probs, const torch::Tensor& gumbel, double tau,
                                 bool on_log_probs = false);

/// Standard Gumbel(0, 1) noise shaped like `like`.
torch::Tensor sample_gumbel(const torch::Tensor& like, at::Generator& generator);

/// Argmax per edge (lowest index wins ties) followed by connectivity repair.
DerivedArch derive(const MacroArchitecture& macro, const ArchParams& arch);

/// If every incoming edge of a block's N5 selects `none`, switch the edge with
/// the largest non-`none` probability mass to its best non-`none` op.
/// Returns the number of repairs applied.
int repair_connectivity(DerivedArch& derived, const std::vector<torch::Tensor>& probabilities);
bool satisfies_connectivity(const DerivedArch& derived);

/// Channel count after scaling: nearest even of base*s, rejected below 8.
std::int64_t scaled_channels(std::int64_t base_channels, double scale);
DerivedArch scale_channels(const DerivedArch& derived, double scale);

inline constexpr int kArchFormatVersion = 1;

std::string arch_to_json(const DerivedArch& derived);
DerivedArch arch_from_json(const std::string& text);
void export_arch(const DerivedArch& derived, const std::filesystem::path& path);
DerivedArch import_arch(const std::filesystem::path& path);

}  // namespace autorecon
