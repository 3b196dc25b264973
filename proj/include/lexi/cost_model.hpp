// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "lexi/allocator.hpp"
#include "lexi/model.hpp"

namespace lexi {

/// Per-token FLOPs of one MoE layer; a multiply-add counts as 2 FLOPs.
struct LayerCost {
  std::uint64_t router = 0;
  std::uint64_t experts = 0;
  std::uint64_t total = 0;

  friend bool operator==(const LayerCost&, const LayerCost&) = default;
};

/// Router 2*H*N plus k experts of `projections` H x F matmuls each
/// (3 for SwiGLU, 2 for GELU).
LayerCost layer_cost(std::size_t hidden, std::size_t ffn_dim, std::size_t num_experts,
                     std::size_t k, FfnKind kind = FfnKind::kSwiGlu);

struct CostReport {
  std::vector<std::size_t> allocation;
  std::vector<LayerCost> layers;
  std::uint64_t router_flops = 0;
  std::uint64_t expert_flops = 0;
  std::uint64_t total_flops = 0;
  std::uint64_t baseline_expert_flops = 0;
  std::uint64_t baseline_total_flops = 0;
  double expert_flop_ratio = 0.0;   // expert FLOPs relative to all-k_base
  double total_flop_ratio = 0.0;
  double active_expert_ratio = 0.0; // sum k_j / (L * k_base)
  std::string caveat;
};

CostReport model_cost(const ModelSpec& model, const Allocation& alloc);

}  // namespace lexi
