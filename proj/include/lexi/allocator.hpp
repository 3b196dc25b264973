// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "lexi/model.hpp"
#include "lexi/profiler.hpp"
#include "lexi/rng.hpp"

namespace lexi {

/// Per-layer top-k assignment.
struct Allocation {
  std::vector<std::size_t> k;

  std::size_t num_layers() const noexcept { return k.size(); }
  std::size_t total() const noexcept;

  friend bool operator==(const Allocation&, const Allocation&) = default;
  friend auto operator<=>(const Allocation&, const Allocation&) = default;
};

/// Budget, per-layer bounds and evolutionary hyperparameters.
struct SearchConfig {
  std::size_t budget = 0;
  std::vector<std::size_t> k_min;
  std::vector<std::size_t> k_max;
  std::size_t population = 64;
  std::size_t generations = 200;
  double mutation_rate = 0.3;
  std::size_t tournament_size = 3;
  std::size_t elite_count = 2;
  std::uint64_t seed = 1;

  std::size_t num_layers() const noexcept { return k_min.size(); }

  /// Throws ConfigError if the bounds or budget admit no allocation, or a
  /// hyperparameter is out of range.
  void validate() const;

  /// Budget and box constraints both hold.
  bool feasible(const Allocation& alloc) const;

  /// Same bounds on every layer.
  static SearchConfig uniform(std::size_t num_layers, std::size_t budget, std::size_t k_min,
                              std::size_t k_max);

  /// Bounds [1, k_base] on every profiled layer.
  static SearchConfig for_profile(const PerturbationProfile& profile, std::size_t budget);
};

struct FitnessReport {
  Allocation best;
  double fitness = 0.0;
  std::vector<double> trace;  // best fitness after each generation
  std::size_t evaluations = 0;
};

/// Sum over layers of the profiled deviation at the allocated top-k,
/// accumulated in layer order.
double fitness(const Allocation& alloc, const PerturbationProfile& profile);

std::vector<Allocation> init_population(const SearchConfig& cfg, RngStream& stream);

/// Uniform crossover: every gene from either parent with probability 1/2.
Allocation crossover(const Allocation& p1, const Allocation& p2, RngStream& stream);

/// With probability mutation_rate, moves one unit of top-k from a random
/// layer b to a random layer a (a != b) where the box bounds allow it.
/// Leaves the total and the box constraints intact.
Allocation mutate(const Allocation& alloc, const SearchConfig& cfg, RngStream& stream);

/// Projection onto the feasible set: clamp into the bounds, then move one
/// unit at a time at the layer whose profiled deviation changes least.
Allocation repair(const Allocation& raw, const SearchConfig& cfg,
                  const PerturbationProfile& profile);

/// Called after every generation with the surviving population.
using GenerationObserver =
    std::function<void(std::size_t generation, std::span<const Allocation> population)>;

FitnessReport evolve(const PerturbationProfile& profile, const SearchConfig& cfg,
                     const GenerationObserver& observer = {}, std::size_t threads = 1);

/// Exact minimiser of the separable objective by dynamic programming over
/// (layer, budget used). Ties resolve to the lexicographically smallest
/// allocation.
Allocation dp_allocate(const PerturbationProfile& profile, const SearchConfig& cfg);

/// Copy of the model with layer j's runtime top-k set to alloc.k[j].
/// Weights are shared, not pruned.
ModelSpec apply_allocation(const ModelSpec& model, const Allocation& alloc);

}  // namespace lexi
