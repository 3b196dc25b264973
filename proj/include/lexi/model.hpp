// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lexi/moe_layer.hpp"

namespace lexi {

/// Architecture shape of a stack of MoE layers.
struct ModelShape {
  std::string name = "custom";
  std::size_t num_layers = 0;
  std::size_t num_experts = 0;
  std::size_t hidden_size = 64;
  std::size_t ffn_dim = 128;
  std::size_t k_base = 0;
  MoeOptions options;

  /// Throws ConfigError when any dimension is zero or k_base > num_experts.
  void validate() const;

  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

/// A stack of MoE layers plus the shape they were generated from. Copies
/// share the (immutable) layer weights; each copy has its own top-k knobs.
struct ModelSpec {
  ModelShape shape;
  std::uint64_t seed = 0;
  std::vector<MoeLayer> layers;

  std::size_t num_layers() const noexcept { return layers.size(); }
  std::vector<std::size_t> active_topk() const;
  std::size_t parameter_count() const;

  /// Throws ConfigError/ShapeError if the layers disagree with the shape.
  void validate() const;
};

/// Shape, weights and top-k settings all equal (weights compared by value).
bool same_model(const ModelSpec& a, const ModelSpec& b);

/// Runs the layers in order with a residual connection: x <- x + layer(x).
Tensor3 model_forward(const ModelSpec& model, const Tensor3& x);

/// Desk-scale shapes that keep (layers, experts, top-k) of published MoE
/// models while shrinking hidden and FFN sizes.
struct ModelPreset {
  std::string_view name;
  std::string_view source_model;
  std::size_t num_layers;
  std::size_t num_experts;
  std::size_t k_base;
  std::vector<std::size_t> budgets;
};

const std::vector<ModelPreset>& model_presets();
std::optional<ModelPreset> find_preset(std::string_view name);
ModelShape preset_shape(const ModelPreset& preset, std::size_t hidden_size = 64,
                        std::size_t ffn_dim = 128);

/// Weights drawn i.i.d. from N(0, 1/fan_in) (standard deviation
/// 1/sqrt(fan_in)), each matrix from its own counter-based stream. Every
/// layer starts at top-k = k_base. Seed must be positive.
ModelSpec generate_model(const ModelShape& shape, std::uint64_t seed);

/// Builds a model from explicit per-layer weights (used by tests and tools).
ModelSpec make_model(const ModelShape& shape, std::vector<MoeLayerWeights> layers,
                     std::uint64_t seed = 0);

}  // namespace lexi
