// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include <json.hpp>

#include "lexi/allocator.hpp"
#include "lexi/cost_model.hpp"
#include "lexi/profiler.hpp"

namespace lexi {

inline constexpr int kReportFormatVersion = 1;

/// {"format_version", "k_base", "candidates", "layers": [{"index",
/// "delta_mean": {"k": v}, "delta_std": {"k": v}, "n_iter"}]}
nlohmann::json profile_to_json(const PerturbationProfile& profile);
PerturbationProfile profile_from_json(const nlohmann::json& j);

/// CSV heatmap: header "layer,k=1,...", one row per layer.
std::string heatmap_csv(const NormalizedProfile& heatmap);

/// {"format_version", "budget", "allocation", "fitness", "trace", "method", "evaluations"}
nlohmann::json allocation_to_json(const FitnessReport& report, std::size_t budget,
                                  const std::string& method);

struct AllocationRecord {
  std::size_t budget = 0;
  Allocation allocation;
  double fitness = 0.0;
  std::string method;
};
AllocationRecord allocation_from_json(const nlohmann::json& j);

nlohmann::json cost_to_json(const CostReport& report);

/// Fixed-width table of the allocation next to each layer's deviation.
std::string allocation_table(const FitnessReport& report, const PerturbationProfile& profile);

}  // namespace lexi
