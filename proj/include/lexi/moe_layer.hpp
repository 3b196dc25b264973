// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "lexi/tensor.hpp"

namespace lexi {

/// How gate weights are formed from the selected router logits.
enum class GateMode {
  kRenormalized,  // softmax over the selected logits only
  kTruncated,     // softmax over all logits, unselected entries dropped
};

enum class FfnKind {
  kSwiGlu,  // w_down(silu(x w_gate) * (x w_up))
  kGelu,    // w_down(gelu(x w_up)); w_gate unused
};

std::string_view to_string(GateMode mode);
std::string_view to_string(FfnKind kind);
GateMode parse_gate_mode(std::string_view text);
FfnKind parse_ffn_kind(std::string_view text);

struct MoeOptions {
  GateMode gate_mode = GateMode::kRenormalized;
  FfnKind ffn_kind = FfnKind::kSwiGlu;

  friend bool operator==(const MoeOptions&, const MoeOptions&) = default;
};

struct ExpertWeights {
  Matrix w_gate;  // H x F
  Matrix w_up;    // H x F
  Matrix w_down;  // F x H

  friend bool operator==(const ExpertWeights&, const ExpertWeights&) = default;
};

struct MoeLayerWeights {
  std::size_t hidden_size = 0;
  std::size_t num_experts = 0;
  std::size_t ffn_dim = 0;
  Matrix router;  // H x N
  std::vector<ExpertWeights> experts;

  /// Throws ShapeError if any matrix disagrees with (H, N, F), or
  /// ArgumentError on non-finite weights.
  void validate() const;
  std::size_t parameter_count() const;

  friend bool operator==(const MoeLayerWeights&, const MoeLayerWeights&) = default;
};

struct GateDecision {
  std::vector<std::size_t> selected;
  std::vector<double> weights;
};

GateDecision gate(const MoeLayerWeights& layer, std::span<const float> x, std::size_t k,
                  GateMode mode = GateMode::kRenormalized);

std::vector<double> expert_forward(const ExpertWeights& expert, std::span<const float> x,
                                   FfnKind kind = FfnKind::kSwiGlu);

/// Per-token routed sum y = sum_i w_i E_i(x) over the top-k experts.
Tensor3 moe_forward(const MoeLayerWeights& layer, const Tensor3& x, std::size_t k,
                    const MoeOptions& options = {});

/// One token's routing evaluated once at `max_k` and then combined at any
/// k <= max_k. Because top-k selections are prefixes of one ordering, the
/// result of `combine(k, ...)` is bit-identical to the token's row of
/// `moe_forward(layer, x, k)`.
class RoutedToken {
 public:
  RoutedToken(const MoeLayerWeights& layer, std::span<const float> x, std::size_t max_k,
              const MoeOptions& options);

  std::size_t max_k() const noexcept { return order_.size(); }
  GateDecision decision(std::size_t k) const;
  void combine(std::size_t k, std::span<float> out) const;

 private:
  friend std::vector<RoutedToken> route_tokens(const MoeLayerWeights&, const Tensor3&,
                                               std::size_t, const MoeOptions&);
  struct Deferred {};
  RoutedToken(const MoeLayerWeights& layer, std::span<const float> x, std::size_t max_k,
              const MoeOptions& options, Deferred);

  GateMode mode_;
  std::vector<double> logits_;
  std::vector<std::size_t> order_;
  std::vector<std::vector<double>> expert_outputs_;
};

/// Routes every token of `x` at `max_k`, running each expert once over the
/// tokens that selected it. Each token equals RoutedToken(layer, token,
/// max_k, options) bit for bit; only the loop order differs.
std::vector<RoutedToken> route_tokens(const MoeLayerWeights& layer, const Tensor3& x,
                                      std::size_t max_k, const MoeOptions& options = {});

/// Layer handle with a runtime-overridable top-k. Weights are shared and
/// immutable; only the top-k knob is per handle.
class MoeLayer {
 public:
  MoeLayer(std::shared_ptr<const MoeLayerWeights> weights, std::size_t topk,
           MoeOptions options = {});

  void set_topk(std::size_t k);
  std::size_t topk() const noexcept { return topk_; }

  const MoeLayerWeights& weights() const noexcept { return *weights_; }
  const std::shared_ptr<const MoeLayerWeights>& shared_weights() const noexcept {
    return weights_;
  }
  const MoeOptions& options() const noexcept { return options_; }

  Tensor3 forward(const Tensor3& x) const { return moe_forward(*weights_, x, topk_, options_); }

 private:
  std::shared_ptr<const MoeLayerWeights> weights_;
  std::size_t topk_;
  MoeOptions options_;
};

}  // namespace lexi
