// SPDX-License-Identifier: Apache-2.0
#include "lexi/cost_model.hpp"

#include <string>

#include "lexi/error.hpp"

namespace lexi {

LayerCost layer_cost(std::size_t hidden, std::size_t ffn_dim, std::size_t num_experts,
                     std::size_t k, FfnKind kind) {
  if (hidden == 0 || ffn_dim == 0 || num_experts == 0 || k == 0) {
    throw ArgumentError("layer_cost: dimensions and k must be positive");
  }
  if (k > num_experts) {
    throw ArgumentError("layer_cost: k=" + std::to_string(k) + " exceeds " +
                        std::to_string(num_experts) + " experts");
  }
  const std::uint64_t projections = kind == FfnKind::kSwiGlu ? 3 : 2;
  LayerCost c;
  c.router = 2ull * hidden * num_experts;
  c.experts = static_cast<std::uint64_t>(k) * projections * 2ull * hidden * ffn_dim;
  c.total = c.router + c.experts;
  return c;
}

CostReport model_cost(const ModelSpec& model, const Allocation& alloc) {
  if (alloc.k.size() != model.layers.size()) {
    throw ArgumentError("allocation has " + std::to_string(alloc.k.size()) +
                        " layers, model has " + std::to_string(model.layers.size()));
  }
  const auto& shape = model.shape;
  CostReport r;
  r.allocation = alloc.k;
  std::size_t active = 0;
  for (std::size_t j = 0; j < alloc.k.size(); ++j) {
    const auto& w = model.layers[j].weights();
    const FfnKind kind = model.layers[j].options().ffn_kind;
    const LayerCost c = layer_cost(w.hidden_size, w.ffn_dim, w.num_experts, alloc.k[j], kind);
    const LayerCost base = layer_cost(w.hidden_size, w.ffn_dim, w.num_experts, shape.k_base, kind);
    r.layers.push_back(c);
    r.router_flops += c.router;
    r.expert_flops += c.experts;
    r.total_flops += c.total;
    r.baseline_expert_flops += base.experts;
    r.baseline_total_flops += base.total;
    active += alloc.k[j];
  }
  r.expert_flop_ratio =
      static_cast<double>(r.expert_flops) / static_cast<double>(r.baseline_expert_flops);
  r.total_flop_ratio =
      static_cast<double>(r.total_flops) / static_cast<double>(r.baseline_total_flops);
  r.active_expert_ratio = static_cast<double>(active) /
                          static_cast<double>(alloc.k.size() * shape.k_base);
  r.caveat =
      "analytical FLOP count of router and expert matmuls only; ignores memory bandwidth, "
      "communication and expert load imbalance";
  return r;
}

}  // namespace lexi
