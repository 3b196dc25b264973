// SPDX-License-Identifier: Apache-2.0
#include "lexi/profiler.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lexi/error.hpp"
#include "lexi/parallel.hpp"
#include "lexi/rng.hpp"

namespace lexi {

void ProfileConfig::validate() const {
  if (batch_size < 1 || seq_len < 1 || hidden_size < 1) {
    throw ArgumentError("profile config: batch, seq_len and hidden must be positive");
  }
  if (n_iter < 1) throw ArgumentError("profile config: n_iter must be at least 1");
  if (k_base < 1) throw ArgumentError("profile config: k_base must be at least 1");
  if (candidates.empty()) throw ArgumentError("profile config: empty candidate list");
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const std::size_t k = candidates[i];
    if (k < 1 || k > k_base) {
      throw ArgumentError("profile config: candidate " + std::to_string(k) + " outside [1, " +
                          std::to_string(k_base) + "]");
    }
    if (i > 0 && candidates[i - 1] >= k) {
      throw ArgumentError("profile config: candidates must be strictly ascending");
    }
  }
}

ProfileConfig ProfileConfig::for_model(const ModelSpec& model) {
  ProfileConfig cfg;
  cfg.hidden_size = model.shape.hidden_size;
  cfg.k_base = model.shape.k_base;
  for (std::size_t k = 1; k <= cfg.k_base; ++k) cfg.candidates.push_back(k);
  return cfg;
}

double PerturbationProfile::delta(std::size_t layer, std::size_t k) const {
  if (layer >= layers.size()) {
    throw LookupError("profile has no layer " + std::to_string(layer));
  }
  const auto& row = layers[layer].delta_mean;
  const auto it = row.find(k);
  if (it == row.end()) {
    throw LookupError("profile layer " + std::to_string(layer) + " has no entry for k=" +
                      std::to_string(k));
  }
  return it->second;
}

bool PerturbationProfile::has(std::size_t layer, std::size_t k) const {
  return layer < layers.size() && layers[layer].delta_mean.contains(k);
}

namespace {

void check_layer(const MoeLayerWeights& layer, const ProfileConfig& cfg) {
  if (layer.hidden_size != cfg.hidden_size) {
    throw ArgumentError("profile config hidden size " + std::to_string(cfg.hidden_size) +
                        " does not match layer hidden size " +
                        std::to_string(layer.hidden_size));
  }
  if (cfg.k_base > layer.num_experts) {
    throw ArgumentError("k_base " + std::to_string(cfg.k_base) + " exceeds layer's " +
                        std::to_string(layer.num_experts) + " experts");
  }
}

// Frobenius deviation for every candidate on one Monte-Carlo draw. Equal to
// frobenius_norm_diff(moe_forward(x, k), moe_forward(x, k_base)) bit for bit:
// the routed outputs match moe_forward and the squared differences are
// summed in the same token-major order.
void iteration_deltas(const MoeLayerWeights& layer, const ProfileConfig& cfg,
                      const MoeOptions& options, std::size_t layer_index,
                      std::size_t iteration, std::span<double> out) {
  RngStream stream{derive_key(cfg.seed, {layer_index, iteration}), 0};
  const Tensor3 x = sample_standard_normal(stream, cfg.batch_size, cfg.seq_len, cfg.hidden_size);

  const std::size_t hidden = cfg.hidden_size;
  std::vector<double> sq(cfg.candidates.size(), 0.0);
  std::vector<float> base(hidden);
  std::vector<float> perturbed(hidden);
  const auto routed_tokens = route_tokens(layer, x, cfg.k_base, options);
  for (const auto& routed : routed_tokens) {
    routed.combine(cfg.k_base, base);
    for (std::size_t c = 0; c < cfg.candidates.size(); ++c) {
      routed.combine(cfg.candidates[c], perturbed);
      double s = sq[c];
      for (std::size_t h = 0; h < hidden; ++h) {
        const double d = static_cast<double>(perturbed[h]) - static_cast<double>(base[h]);
        s += d * d;
      }
      sq[c] = s;
    }
  }
  for (std::size_t c = 0; c < sq.size(); ++c) out[c] = std::sqrt(sq[c]);
}

// samples[i * ncand + c] holds iteration i's deviation for candidate c.
LayerProfile reduce_layer(std::size_t layer_index, const ProfileConfig& cfg,
                          std::span<const double> samples) {
  const std::size_t ncand = cfg.candidates.size();
  const std::size_t n = cfg.n_iter;
  LayerProfile lp;
  lp.index = layer_index;
  lp.n_iter = n;
  for (std::size_t c = 0; c < ncand; ++c) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += samples[i * ncand + c];
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = samples[i * ncand + c] - mean;
      ss += d * d;
    }
    const double std = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    lp.delta_mean[cfg.candidates[c]] = mean;
    lp.delta_std[cfg.candidates[c]] = std;
  }
  return lp;
}

}  // namespace

LayerProfile profile_layer(const MoeLayerWeights& layer, const ProfileConfig& cfg,
                           std::size_t layer_index, const MoeOptions& options,
                           std::size_t threads) {
  cfg.validate();
  check_layer(layer, cfg);
  const std::size_t ncand = cfg.candidates.size();
  std::vector<double> samples(cfg.n_iter * ncand);
  parallel_for(cfg.n_iter, threads, [&](std::size_t i) {
    iteration_deltas(layer, cfg, options, layer_index, i,
                     std::span<double>(samples).subspan(i * ncand, ncand));
  });
  return reduce_layer(layer_index, cfg, samples);
}

PerturbationProfile profile_model(const ModelSpec& model, const ProfileConfig& cfg,
                                  std::size_t threads) {
  cfg.validate();
  for (const auto& layer : model.layers) check_layer(layer.weights(), cfg);

  const std::size_t nlayers = model.layers.size();
  const std::size_t ncand = cfg.candidates.size();
  const std::size_t per_layer = cfg.n_iter * ncand;
  std::vector<double> samples(nlayers * per_layer);
  parallel_for(nlayers * cfg.n_iter, threads, [&](std::size_t item) {
    const std::size_t j = item / cfg.n_iter;
    const std::size_t i = item % cfg.n_iter;
    const auto& layer = model.layers[j];
    iteration_deltas(layer.weights(), cfg, layer.options(), j, i,
                     std::span<double>(samples).subspan(j * per_layer + i * ncand, ncand));
  });

  PerturbationProfile profile;
  profile.k_base = cfg.k_base;
  profile.candidates = cfg.candidates;
  profile.layers.reserve(nlayers);
  for (std::size_t j = 0; j < nlayers; ++j) {
    profile.layers.push_back(
        reduce_layer(j, cfg, std::span<const double>(samples).subspan(j * per_layer, per_layer)));
  }
  return profile;
}

NormalizedProfile normalize_profile(const PerturbationProfile& profile, Normalization mode) {
  NormalizedProfile out;
  out.candidates = profile.candidates;
  out.rows.reserve(profile.layers.size());
  double global_max = 0.0;
  for (const auto& layer : profile.layers) {
    for (const auto& [k, v] : layer.delta_mean) global_max = std::max(global_max, v);
  }
  for (std::size_t j = 0; j < profile.layers.size(); ++j) {
    std::vector<double> row;
    row.reserve(profile.candidates.size());
    for (std::size_t k : profile.candidates) row.push_back(profile.delta(j, k));
    const double denom =
        mode == Normalization::kGlobalMax ? global_max : *std::max_element(row.begin(), row.end());
    for (double& v : row) v = denom > 0.0 ? v / denom : 0.0;
    out.rows.push_back(std::move(row));
  }
  return out;
}

}  // namespace lexi
