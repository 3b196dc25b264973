// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <vector>

#include "lexi/model.hpp"
#include "lexi/moe_layer.hpp"

namespace lexi {

/// Monte-Carlo perturbation profiling settings. Inputs are drawn as
/// N(0, 1) tensors of shape batch_size x seq_len x hidden_size.
struct ProfileConfig {
  std::size_t batch_size = 4;
  std::size_t seq_len = 32;
  std::size_t hidden_size = 64;
  std::size_t n_iter = 1024;
  std::vector<std::size_t> candidates;  // sorted ascending, each in [1, k_base]
  std::size_t k_base = 0;
  std::uint64_t seed = 1;

  void validate() const;

  /// Candidates {1, ..., k_base} with the remaining fields defaulted.
  static ProfileConfig for_model(const ModelSpec& model);
};

/// Mean and sample standard deviation of the Frobenius deviation of one
/// layer's output at each candidate top-k against its output at k_base.
struct LayerProfile {
  std::size_t index = 0;
  std::size_t n_iter = 0;
  std::map<std::size_t, double> delta_mean;
  std::map<std::size_t, double> delta_std;

  friend bool operator==(const LayerProfile&, const LayerProfile&) = default;
};

struct PerturbationProfile {
  std::size_t k_base = 0;
  std::vector<std::size_t> candidates;
  std::vector<LayerProfile> layers;

  std::size_t num_layers() const noexcept { return layers.size(); }

  /// Mean deviation of layer `layer` at top-k `k`; LookupError if absent.
  double delta(std::size_t layer, std::size_t k) const;
  bool has(std::size_t layer, std::size_t k) const;

  friend bool operator==(const PerturbationProfile&, const PerturbationProfile&) = default;
};

/// Profiles one layer. Iteration i draws its input from the stream keyed by
/// (seed, layer_index, i), so the result does not depend on `threads`.
LayerProfile profile_layer(const MoeLayerWeights& layer, const ProfileConfig& cfg,
                           std::size_t layer_index, const MoeOptions& options = {},
                           std::size_t threads = 1);

/// Profiles every layer of the model; work is spread over (layer, iteration)
/// pairs and reduced in a fixed order.
PerturbationProfile profile_model(const ModelSpec& model, const ProfileConfig& cfg,
                                  std::size_t threads = 1);

enum class Normalization {
  kRowMax,     // each layer divided by its own maximum
  kGlobalMax,  // every cell divided by the maximum over the whole profile
};

/// Heatmap view of a profile: rows = layers, columns = candidates.
struct NormalizedProfile {
  std::vector<std::size_t> candidates;
  std::vector<std::vector<double>> rows;
};

NormalizedProfile normalize_profile(const PerturbationProfile& profile,
                                    Normalization mode = Normalization::kRowMax);

}  // namespace lexi
