// SPDX-License-Identifier: Apache-2.0
#include "lexi/model.hpp"

#include <cmath>
#include <memory>

#include "lexi/error.hpp"
#include "lexi/rng.hpp"

namespace lexi {

void ModelShape::validate() const {
  if (num_layers == 0 || num_experts == 0 || hidden_size == 0 || ffn_dim == 0) {
    throw ConfigError("model shape '" + name + "': all dimensions must be positive");
  }
  if (k_base < 1 || k_base > num_experts) {
    throw ConfigError("model shape '" + name + "': k_base " + std::to_string(k_base) +
                      " outside [1, " + std::to_string(num_experts) + "]");
  }
}

std::vector<std::size_t> ModelSpec::active_topk() const {
  std::vector<std::size_t> k;
  k.reserve(layers.size());
  for (const auto& layer : layers) k.push_back(layer.topk());
  return k;
}

std::size_t ModelSpec::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += layer.weights().parameter_count();
  return n;
}

void ModelSpec::validate() const {
  shape.validate();
  if (layers.size() != shape.num_layers) {
    throw ConfigError("model has " + std::to_string(layers.size()) + " layers, shape says " +
                      std::to_string(shape.num_layers));
  }
  for (const auto& layer : layers) {
    const auto& w = layer.weights();
    if (w.hidden_size != shape.hidden_size || w.num_experts != shape.num_experts ||
        w.ffn_dim != shape.ffn_dim) {
      throw ShapeError("layer dimensions disagree with model shape");
    }
    w.validate();
    if (!(layer.options() == shape.options)) throw ConfigError("layer options disagree with model");
  }
}

bool same_model(const ModelSpec& a, const ModelSpec& b) {
  if (!(a.shape == b.shape) || a.seed != b.seed || a.layers.size() != b.layers.size()) {
    return false;
  }
  for (std::size_t j = 0; j < a.layers.size(); ++j) {
    if (a.layers[j].topk() != b.layers[j].topk() ||
        !(a.layers[j].options() == b.layers[j].options()) ||
        !(a.layers[j].weights() == b.layers[j].weights())) {
      return false;
    }
  }
  return true;
}

Tensor3 model_forward(const ModelSpec& model, const Tensor3& x) {
  Tensor3 h = x;
  for (const auto& layer : model.layers) {
    const Tensor3 y = layer.forward(h);
    auto hd = h.data();
    const auto yd = y.data();
    for (std::size_t i = 0; i < hd.size(); ++i) hd[i] += yd[i];
  }
  return h;
}

const std::vector<ModelPreset>& model_presets() {
  static const std::vector<ModelPreset> presets = {
      {"olmoe-mini", "OLMoE-1B-7B", 16, 64, 8, {64, 72, 100}},
      {"qwen-mini", "Qwen1.5-MoE-A2.7B", 24, 60, 4, {48, 56, 72, 80}},
      {"mixtral-mini", "Mixtral-8x7B", 32, 8, 2, {40, 48, 56}},
      {"minicpm-mini", "MiniCPM-MoE-8x2B", 40, 8, 2, {50, 60, 70}},
      {"deepseek-v2-lite-mini", "DeepSeek-V2-Lite", 27, 64, 6, {78, 104, 130}},
      {"deepseek-vl2-tiny-mini", "DeepSeek-VL2-Tiny", 12, 64, 6, {44, 48, 55}},
  };
  return presets;
}

std::optional<ModelPreset> find_preset(std::string_view name) {
  for (const auto& p : model_presets()) {
    if (p.name == name) return p;
  }
  return std::nullopt;
}

ModelShape preset_shape(const ModelPreset& preset, std::size_t hidden_size, std::size_t ffn_dim) {
  ModelShape shape;
  shape.name = std::string(preset.name);
  shape.num_layers = preset.num_layers;
  shape.num_experts = preset.num_experts;
  shape.k_base = preset.k_base;
  shape.hidden_size = hidden_size;
  shape.ffn_dim = ffn_dim;
  return shape;
}

namespace {

// Matrix ids within a layer's key space: router is 0, expert e uses 1 + 3e + {0,1,2}.
Matrix random_matrix(std::uint64_t seed, std::size_t layer, std::size_t matrix_id,
                     std::size_t rows, std::size_t cols) {
  RngStream stream{derive_key(seed, {layer, matrix_id}), 0};
  Matrix m = sample_standard_normal(stream, rows, cols);
  const float scale = static_cast<float>(1.0 / std::sqrt(static_cast<double>(rows)));
  for (float& v : m.data()) v *= scale;
  return m;
}

}  // namespace

ModelSpec generate_model(const ModelShape& shape, std::uint64_t seed) {
  shape.validate();
  if (seed == 0) throw ConfigError("seed must be positive");
  std::vector<MoeLayerWeights> layers;
  layers.reserve(shape.num_layers);
  const std::size_t h = shape.hidden_size;
  const std::size_t f = shape.ffn_dim;
  for (std::size_t j = 0; j < shape.num_layers; ++j) {
    MoeLayerWeights w;
    w.hidden_size = h;
    w.num_experts = shape.num_experts;
    w.ffn_dim = f;
    w.router = random_matrix(seed, j, 0, h, shape.num_experts);
    w.experts.reserve(shape.num_experts);
    for (std::size_t e = 0; e < shape.num_experts; ++e) {
      w.experts.push_back({random_matrix(seed, j, 1 + 3 * e, h, f),
                           random_matrix(seed, j, 2 + 3 * e, h, f),
                           random_matrix(seed, j, 3 + 3 * e, f, h)});
    }
    layers.push_back(std::move(w));
  }
  return make_model(shape, std::move(layers), seed);
}

ModelSpec make_model(const ModelShape& shape, std::vector<MoeLayerWeights> layers,
                     std::uint64_t seed) {
  shape.validate();
  ModelSpec model;
  model.shape = shape;
  model.seed = seed;
  model.layers.reserve(layers.size());
  for (auto& w : layers) {
    model.layers.emplace_back(std::make_shared<const MoeLayerWeights>(std::move(w)),
                              shape.k_base, shape.options);
  }
  model.validate();
  return model;
}

}  // namespace lexi
