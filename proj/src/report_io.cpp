// SPDX-License-Identifier: Apache-2.0
#include "lexi/report_io.hpp"

#include <cstdio>
#include <iomanip>
#include <limits>
#include <sstream>

#include "lexi/error.hpp"

namespace lexi {

using nlohmann::json;

namespace {

void check_version(const json& j, const char* what) {
  if (!j.is_object() || !j.contains("format_version")) {
    throw FormatError(std::string(what) + ": missing format_version");
  }
  if (j.at("format_version") != kReportFormatVersion) {
    throw FormatError(std::string(what) + ": unsupported format_version " +
                      j.at("format_version").dump());
  }
}

std::map<std::size_t, double> keyed_map(const json& j) {
  std::map<std::size_t, double> out;
  for (const auto& [key, value] : j.items()) {
    std::size_t pos = 0;
    const unsigned long k = std::stoul(key, &pos);
    if (pos != key.size()) throw FormatError("non-integer candidate key '" + key + "'");
    out[k] = value.get<double>();
  }
  return out;
}

}  // namespace

json profile_to_json(const PerturbationProfile& profile) {
  json j;
  j["format_version"] = kReportFormatVersion;
  j["k_base"] = profile.k_base;
  j["candidates"] = profile.candidates;
  json layers = json::array();
  for (const auto& layer : profile.layers) {
    json mean = json::object();
    json std = json::object();
    for (const auto& [k, v] : layer.delta_mean) mean[std::to_string(k)] = v;
    for (const auto& [k, v] : layer.delta_std) std[std::to_string(k)] = v;
    layers.push_back({{"index", layer.index},
                      {"delta_mean", std::move(mean)},
                      {"delta_std", std::move(std)},
                      {"n_iter", layer.n_iter}});
  }
  j["layers"] = std::move(layers);
  return j;
}

PerturbationProfile profile_from_json(const json& j) {
  check_version(j, "profile");
  try {
    PerturbationProfile p;
    p.k_base = j.at("k_base").get<std::size_t>();
    p.candidates = j.at("candidates").get<std::vector<std::size_t>>();
    for (const auto& lj : j.at("layers")) {
      LayerProfile layer;
      layer.index = lj.at("index").get<std::size_t>();
      layer.n_iter = lj.at("n_iter").get<std::size_t>();
      layer.delta_mean = keyed_map(lj.at("delta_mean"));
      layer.delta_std = keyed_map(lj.at("delta_std"));
      if (layer.index != p.layers.size()) throw FormatError("profile layers out of order");
      for (std::size_t k : p.candidates) {
        if (!layer.delta_mean.contains(k)) {
          throw FormatError("profile layer " + std::to_string(layer.index) + " lacks k=" +
                            std::to_string(k));
        }
      }
      p.layers.push_back(std::move(layer));
    }
    return p;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed profile: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw FormatError("malformed profile: non-integer candidate key");
  }
}

std::string heatmap_csv(const NormalizedProfile& heatmap) {
  std::ostringstream out;
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "layer";
  for (std::size_t k : heatmap.candidates) out << ",k=" << k;
  out << '\n';
  for (std::size_t j = 0; j < heatmap.rows.size(); ++j) {
    out << j;
    for (double v : heatmap.rows[j]) out << ',' << v;
    out << '\n';
  }
  return out.str();
}

json allocation_to_json(const FitnessReport& report, std::size_t budget,
                        const std::string& method) {
  json j;
  j["format_version"] = kReportFormatVersion;
  j["budget"] = budget;
  j["allocation"] = report.best.k;
  j["fitness"] = report.fitness;
  j["trace"] = report.trace;
  j["method"] = method;
  j["evaluations"] = report.evaluations;
  return j;
}

AllocationRecord allocation_from_json(const json& j) {
  check_version(j, "allocation");
  try {
    AllocationRecord r;
    r.budget = j.at("budget").get<std::size_t>();
    r.allocation.k = j.at("allocation").get<std::vector<std::size_t>>();
    r.fitness = j.at("fitness").get<double>();
    r.method = j.at("method").get<std::string>();
    if (r.allocation.total() != r.budget) {
      throw FormatError("allocation does not sum to its budget");
    }
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed allocation: ") + e.what());
  }
}

json cost_to_json(const CostReport& report) {
  json layers = json::array();
  for (std::size_t j = 0; j < report.layers.size(); ++j) {
    const auto& c = report.layers[j];
    layers.push_back({{"index", j},
                      {"k", report.allocation[j]},
                      {"router_flops", c.router},
                      {"expert_flops", c.experts},
                      {"total_flops", c.total}});
  }
  return {{"allocation", report.allocation},
          {"layers", std::move(layers)},
          {"router_flops_per_token", report.router_flops},
          {"expert_flops_per_token", report.expert_flops},
          {"total_flops_per_token", report.total_flops},
          {"baseline_expert_flops_per_token", report.baseline_expert_flops},
          {"baseline_total_flops_per_token", report.baseline_total_flops},
          {"expert_flop_ratio", report.expert_flop_ratio},
          {"total_flop_ratio", report.total_flop_ratio},
          {"active_expert_ratio", report.active_expert_ratio},
          {"caveat", report.caveat}};
}

std::string allocation_table(const FitnessReport& report, const PerturbationProfile& profile) {
  std::ostringstream out;
  char line[128];
  std::snprintf(line, sizeof line, "%6s %6s %14s\n", "layer", "top-k", "delta");
  out << line;
  for (std::size_t j = 0; j < report.best.k.size(); ++j) {
    std::snprintf(line, sizeof line, "%6zu %6zu %14.6g\n", j, report.best.k[j],
                  profile.delta(j, report.best.k[j]));
    out << line;
  }
  std::snprintf(line, sizeof line, "total  %6zu %14.6g\n", report.best.total(), report.fitness);
  out << line;
  return out.str();
}

}  // namespace lexi
