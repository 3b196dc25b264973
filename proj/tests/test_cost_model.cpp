// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "lexi/allocator.hpp"
#include "lexi/cost_model.hpp"
#include "lexi/error.hpp"
#include "lexi/model.hpp"

using namespace lexi;

namespace {

ModelSpec homogeneous(std::size_t layers, std::size_t experts, std::size_t k_base) {
  ModelShape s;
  s.num_layers = layers;
  s.num_experts = experts;
  s.hidden_size = 4;
  s.ffn_dim = 4;
  s.k_base = k_base;
  return generate_model(s, 1);
}

}  // namespace

TEST_CASE("layer_cost") {
  CHECK(layer_cost(1, 1, 1, 1) == LayerCost{2, 6, 8});
  CHECK(layer_cost(1, 1, 1, 1, FfnKind::kGelu) == LayerCost{2, 4, 6});
  const auto k2 = layer_cost(64, 128, 8, 2);
  const auto k4 = layer_cost(64, 128, 8, 4);
  CHECK(k4.experts == 2 * k2.experts);
  CHECK(k4.router == k2.router);
  CHECK(k4.total == k4.router + k4.experts);
  CHECK(layer_cost(2048, 1024, 64, 8).experts == 2 * layer_cost(2048, 1024, 64, 4).experts);
  CHECK_THROWS_AS(layer_cost(4, 4, 4, 0), ArgumentError);
  CHECK_THROWS_AS(layer_cost(4, 4, 4, 5), ArgumentError);
}

TEST_CASE("model_cost") {
  const auto olmoe = homogeneous(16, 64, 8);
  auto r = model_cost(olmoe, Allocation{std::vector<std::size_t>(16, 8)});
  CHECK(r.expert_flop_ratio == 1.0);
  CHECK(r.total_flop_ratio == 1.0);
  CHECK(r.active_expert_ratio == 1.0);
  CHECK_FALSE(r.caveat.empty());

  r = model_cost(olmoe, Allocation{std::vector<std::size_t>(16, 4)});
  CHECK(r.expert_flop_ratio == 0.5);

  Allocation uneven{{8, 1, 4, 3, 5, 6, 2, 7, 8, 1, 4, 3, 5, 2, 2, 3}};
  REQUIRE(uneven.total() == 64);
  r = model_cost(olmoe, uneven);
  CHECK(r.expert_flop_ratio == 0.5);
  CHECK(r.active_expert_ratio == 0.5);
  std::uint64_t sum = 0;
  for (const auto& c : r.layers) sum += c.total;
  CHECK(sum == r.total_flops);
  CHECK(r.total_flops == r.router_flops + r.expert_flops);

  const auto qwen = homogeneous(24, 60, 4);
  Allocation q{std::vector<std::size_t>(24, 2)};
  q.k[0] = 4;
  q.k[1] = 1;
  q.k[2] = 1;
  REQUIRE(q.total() == 48);
  CHECK(model_cost(qwen, q).expert_flop_ratio == 0.5);

  // Strictly increasing in every coordinate.
  const auto base = model_cost(olmoe, uneven).total_flops;
  for (std::size_t j = 0; j < 16; ++j) {
    if (uneven.k[j] == 8) continue;
    Allocation up = uneven;
    ++up.k[j];
    CHECK(model_cost(olmoe, up).total_flops > base);
  }
  CHECK_THROWS_AS(model_cost(olmoe, Allocation{{1}}), ArgumentError);
}
