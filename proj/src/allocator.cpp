// SPDX-License-Identifier: Apache-2.0
#include "lexi/allocator.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>

#include "lexi/error.hpp"
#include "lexi/parallel.hpp"

namespace lexi {

std::size_t Allocation::total() const noexcept {
  return std::accumulate(k.begin(), k.end(), std::size_t{0});
}

void SearchConfig::validate() const {
  if (k_min.size() != k_max.size()) {
    throw ConfigError("k_min has " + std::to_string(k_min.size()) + " layers, k_max has " +
                      std::to_string(k_max.size()));
  }
  if (k_min.empty()) throw ConfigError("search config has no layers");
  std::size_t lo = 0;
  std::size_t hi = 0;
  for (std::size_t j = 0; j < k_min.size(); ++j) {
    if (k_min[j] < 1 || k_min[j] > k_max[j]) {
      throw ConfigError("layer " + std::to_string(j) + ": bounds [" + std::to_string(k_min[j]) +
                        ", " + std::to_string(k_max[j]) + "] are empty or include 0");
    }
    lo += k_min[j];
    hi += k_max[j];
  }
  if (budget < lo || budget > hi) {
    throw ConfigError("budget " + std::to_string(budget) + " infeasible: bounds allow [" +
                      std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  if (population < 2) throw ConfigError("population must be at least 2");
  if (!(mutation_rate >= 0.0 && mutation_rate <= 1.0)) {
    throw ConfigError("mutation rate must lie in [0, 1]");
  }
  if (tournament_size < 1) throw ConfigError("tournament size must be at least 1");
  if (elite_count < 1 || elite_count >= population) {
    throw ConfigError("elite count must lie in [1, population)");
  }
}

bool SearchConfig::feasible(const Allocation& alloc) const {
  if (alloc.k.size() != k_min.size()) return false;
  for (std::size_t j = 0; j < alloc.k.size(); ++j) {
    if (alloc.k[j] < k_min[j] || alloc.k[j] > k_max[j]) return false;
  }
  return alloc.total() == budget;
}

SearchConfig SearchConfig::uniform(std::size_t num_layers, std::size_t budget, std::size_t k_min,
                                   std::size_t k_max) {
  SearchConfig cfg;
  cfg.budget = budget;
  cfg.k_min.assign(num_layers, k_min);
  cfg.k_max.assign(num_layers, k_max);
  return cfg;
}

SearchConfig SearchConfig::for_profile(const PerturbationProfile& profile, std::size_t budget) {
  return uniform(profile.num_layers(), budget, 1, profile.k_base);
}

double fitness(const Allocation& alloc, const PerturbationProfile& profile) {
  if (alloc.k.size() != profile.num_layers()) {
    throw ArgumentError("allocation has " + std::to_string(alloc.k.size()) +
                        " layers, profile has " + std::to_string(profile.num_layers()));
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < alloc.k.size(); ++j) sum += profile.delta(j, alloc.k[j]);
  return sum;
}

std::vector<Allocation> init_population(const SearchConfig& cfg, RngStream& stream) {
  cfg.validate();
  const std::size_t layers = cfg.num_layers();
  const std::size_t floor = std::accumulate(cfg.k_min.begin(), cfg.k_min.end(), std::size_t{0});
  std::vector<Allocation> population;
  population.reserve(cfg.population);
  std::vector<std::size_t> open;
  for (std::size_t p = 0; p < cfg.population; ++p) {
    Allocation a{cfg.k_min};
    for (std::size_t left = cfg.budget - floor; left > 0; --left) {
      open.clear();
      for (std::size_t j = 0; j < layers; ++j) {
        if (a.k[j] < cfg.k_max[j]) open.push_back(j);
      }
      ++a.k[open[uniform_index(stream, open.size())]];
    }
    population.push_back(std::move(a));
  }
  return population;
}

Allocation crossover(const Allocation& p1, const Allocation& p2, RngStream& stream) {
  if (p1.k.size() != p2.k.size()) {
    throw ArgumentError("crossover: parents have " + std::to_string(p1.k.size()) + " and " +
                        std::to_string(p2.k.size()) + " layers");
  }
  Allocation child{p1.k};
  std::uint64_t bits = 0;
  for (std::size_t j = 0; j < child.k.size(); ++j) {
    if (j % 64 == 0) bits = next_u64(stream);
    if ((bits >> (j % 64)) & 1u) child.k[j] = p2.k[j];
  }
  return child;
}

Allocation mutate(const Allocation& alloc, const SearchConfig& cfg, RngStream& stream) {
  if (alloc.k.size() != cfg.num_layers()) {
    throw ArgumentError("mutate: allocation length does not match config");
  }
  if (cfg.mutation_rate <= 0.0 || uniform_open01(stream) >= cfg.mutation_rate) return alloc;
  std::vector<std::size_t> up;
  std::vector<std::size_t> down;
  for (std::size_t j = 0; j < alloc.k.size(); ++j) {
    if (alloc.k[j] + 1 <= cfg.k_max[j]) up.push_back(j);
    if (alloc.k[j] >= cfg.k_min[j] + 1) down.push_back(j);
  }
  // Ordered pairs (a, b), a != b, a in up, b in down.
  std::size_t pairs = 0;
  for (std::size_t a : up) {
    pairs += down.size() - static_cast<std::size_t>(std::count(down.begin(), down.end(), a));
  }
  if (pairs == 0) return alloc;
  std::size_t pick = uniform_index(stream, pairs);
  Allocation out = alloc;
  for (std::size_t a : up) {
    for (std::size_t b : down) {
      if (a == b) continue;
      if (pick-- == 0) {
        ++out.k[a];
        --out.k[b];
        return out;
      }
    }
  }
  return out;
}

Allocation repair(const Allocation& raw, const SearchConfig& cfg,
                  const PerturbationProfile& profile) {
  cfg.validate();
  const std::size_t layers = cfg.num_layers();
  if (raw.k.size() != layers) throw ArgumentError("repair: allocation length does not match config");
  Allocation a = raw;
  for (std::size_t j = 0; j < layers; ++j) a.k[j] = std::clamp(a.k[j], cfg.k_min[j], cfg.k_max[j]);

  std::size_t total = a.total();
  while (total > cfg.budget) {
    std::size_t best = layers;
    double best_cost = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < layers; ++j) {
      if (a.k[j] <= cfg.k_min[j]) continue;
      const double cost = profile.delta(j, a.k[j] - 1) - profile.delta(j, a.k[j]);
      if (best == layers || cost < best_cost) {
        best = j;
        best_cost = cost;
      }
    }
    --a.k[best];
    --total;
  }
  while (total < cfg.budget) {
    std::size_t best = layers;
    double best_cost = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < layers; ++j) {
      if (a.k[j] >= cfg.k_max[j]) continue;
      const double cost = profile.delta(j, a.k[j] + 1) - profile.delta(j, a.k[j]);
      if (best == layers || cost < best_cost) {
        best = j;
        best_cost = cost;
      }
    }
    ++a.k[best];
    ++total;
  }
  return a;
}

namespace {

struct Scored {
  Allocation alloc;
  double fitness;
};

bool ranks_before(const Scored& a, const Scored& b) {
  if (a.fitness != b.fitness) return a.fitness < b.fitness;
  return a.alloc < b.alloc;
}

std::size_t tournament(std::span<const Scored> population, std::size_t size, RngStream& stream) {
  std::size_t winner = uniform_index(stream, population.size());
  for (std::size_t t = 1; t < size; ++t) {
    const std::size_t c = uniform_index(stream, population.size());
    if (population[c].fitness < population[winner].fitness ||
        (population[c].fitness == population[winner].fitness && c < winner)) {
      winner = c;
    }
  }
  return winner;
}

// Keeps the `size` best distinct allocations; duplicates only fill the
// remainder when fewer distinct ones exist.
std::vector<Scored> truncate(std::vector<Scored> pool, std::size_t size) {
  std::sort(pool.begin(), pool.end(), ranks_before);
  std::vector<Scored> kept;
  std::vector<Scored> spare;
  kept.reserve(size);
  for (auto& s : pool) {
    if (!kept.empty() && kept.back().alloc == s.alloc) {
      spare.push_back(std::move(s));
    } else if (kept.size() < size) {
      kept.push_back(std::move(s));
    }
  }
  for (std::size_t i = 0; kept.size() < size && i < spare.size(); ++i) {
    kept.push_back(std::move(spare[i]));
  }
  std::sort(kept.begin(), kept.end(), ranks_before);
  return kept;
}

}  // namespace

FitnessReport evolve(const PerturbationProfile& profile, const SearchConfig& cfg,
                     const GenerationObserver& observer, std::size_t threads) {
  cfg.validate();
  if (cfg.num_layers() != profile.num_layers()) {
    throw ArgumentError("search config has " + std::to_string(cfg.num_layers()) +
                        " layers, profile has " + std::to_string(profile.num_layers()));
  }
  FitnessReport report;

  RngStream init_stream{derive_key(cfg.seed, {0}), 0};
  std::vector<Scored> population;
  for (auto& a : init_population(cfg, init_stream)) {
    const double f = fitness(a, profile);
    population.push_back({std::move(a), f});
  }
  report.evaluations = population.size();
  std::sort(population.begin(), population.end(), ranks_before);

  const std::size_t offspring_count = cfg.population - cfg.elite_count;
  std::vector<Scored> offspring(offspring_count);
  std::vector<Allocation> snapshot;
  report.trace.reserve(cfg.generations);
  for (std::size_t g = 0; g < cfg.generations; ++g) {
    // Each child owns a stream keyed by (generation, slot), so children can
    // be bred in any order.
    parallel_for(offspring_count, threads, [&](std::size_t o) {
      RngStream stream{derive_key(cfg.seed, {1, g, o}), 0};
      const auto& p1 = population[tournament(population, cfg.tournament_size, stream)].alloc;
      const auto& p2 = population[tournament(population, cfg.tournament_size, stream)].alloc;
      Allocation child = crossover(p1, p2, stream);
      child = mutate(child, cfg, stream);
      child = repair(child, cfg, profile);
      const double f = fitness(child, profile);
      offspring[o] = {std::move(child), f};
    });
    report.evaluations += offspring_count;

    std::vector<Scored> pool = std::move(population);
    pool.insert(pool.end(), offspring.begin(), offspring.end());
    population = truncate(std::move(pool), cfg.population);
    report.trace.push_back(population.front().fitness);

    if (observer) {
      snapshot.clear();
      for (const auto& s : population) snapshot.push_back(s.alloc);
      observer(g, snapshot);
    }
  }
  report.best = population.front().alloc;
  report.fitness = population.front().fitness;
  return report;
}

Allocation dp_allocate(const PerturbationProfile& profile, const SearchConfig& cfg) {
  cfg.validate();
  const std::size_t layers = cfg.num_layers();
  if (layers != profile.num_layers()) {
    throw ArgumentError("search config has " + std::to_string(layers) + " layers, profile has " +
                        std::to_string(profile.num_layers()));
  }
  const std::size_t budget = cfg.budget;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // rest[j][b]: minimal cost of layers j..L-1 using exactly b units.
  std::vector<std::vector<double>> rest(layers + 1, std::vector<double>(budget + 1, kInf));
  rest[layers][0] = 0.0;
  for (std::size_t j = layers; j-- > 0;) {
    for (std::size_t b = 0; b <= budget; ++b) {
      double best = kInf;
      for (std::size_t k = cfg.k_min[j]; k <= cfg.k_max[j] && k <= b; ++k) {
        if (rest[j + 1][b - k] == kInf) continue;
        best = std::min(best, profile.delta(j, k) + rest[j + 1][b - k]);
      }
      rest[j][b] = best;
    }
  }
  Allocation alloc;
  alloc.k.reserve(layers);
  std::size_t b = budget;
  for (std::size_t j = 0; j < layers; ++j) {
    for (std::size_t k = cfg.k_min[j]; k <= cfg.k_max[j] && k <= b; ++k) {
      if (rest[j + 1][b - k] == kInf) continue;
      if (profile.delta(j, k) + rest[j + 1][b - k] == rest[j][b]) {
        alloc.k.push_back(k);
        b -= k;
        break;
      }
    }
  }
  return alloc;
}

ModelSpec apply_allocation(const ModelSpec& model, const Allocation& alloc) {
  if (alloc.k.size() != model.layers.size()) {
    throw ArgumentError("allocation has " + std::to_string(alloc.k.size()) +
                        " layers, model has " + std::to_string(model.layers.size()));
  }
  ModelSpec out = model;
  for (std::size_t j = 0; j < alloc.k.size(); ++j) out.layers[j].set_topk(alloc.k[j]);
  return out;
}

}  // namespace lexi
