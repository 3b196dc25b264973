// SPDX-License-Identifier: Apache-2.0
#include "lexi/cli.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "lexi/allocator.hpp"
#include "lexi/cost_model.hpp"
#include "lexi/error.hpp"
#include "lexi/model_io.hpp"
#include "lexi/profiler.hpp"
#include "lexi/report_io.hpp"

namespace lexi {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error("usage_error", what) {}
};

struct GlobalOptions {
  bool json_errors = false;
  bool deterministic = false;
  std::size_t threads = 1;
};

std::optional<std::string> timestamp(const GlobalOptions& g) {
  if (g.deterministic) return std::nullopt;
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &utc);
  return std::string(buf);
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + " is not valid JSON: " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  out << text;
  if (!out) throw Error("io_error", "failed to write " + path.string());
}

void stamp(json& j, const GlobalOptions& g) {
  if (auto ts = timestamp(g)) j["created_at"] = *ts;
}

struct GenModelArgs {
  std::string preset;
  std::size_t layers = 0;
  std::size_t experts = 0;
  std::size_t top_k = 0;
  std::size_t hidden = 64;
  std::size_t ffn_dim = 128;
  std::string gate_mode = "renormalized";
  std::string ffn = "swiglu";
  std::uint64_t seed = 1;
  std::string out;
};

int gen_model_cmd(const GenModelArgs& a, const GlobalOptions& g, std::ostream& out) {
  ModelShape shape;
  if (!a.preset.empty()) {
    const auto preset = find_preset(a.preset);
    if (!preset) throw UsageError("unknown preset '" + a.preset + "'");
    shape = preset_shape(*preset, a.hidden, a.ffn_dim);
  } else {
    if (a.layers == 0 || a.experts == 0 || a.top_k == 0) {
      throw UsageError("gen-model needs --preset or all of --layers, --experts, --top-k");
    }
    shape.num_layers = a.layers;
    shape.num_experts = a.experts;
    shape.k_base = a.top_k;
    shape.hidden_size = a.hidden;
    shape.ffn_dim = a.ffn_dim;
  }
  shape.options.gate_mode = parse_gate_mode(a.gate_mode);
  shape.options.ffn_kind = parse_ffn_kind(a.ffn);
  const ModelSpec model = generate_model(shape, a.seed);
  save_model(model, a.out, timestamp(g));
  out << "wrote " << shape.name << " (" << shape.num_layers << " layers, " << shape.num_experts
      << " experts, top-k " << shape.k_base << ") to " << a.out << '\n';
  return kExitOk;
}

struct ProfileArgs {
  std::string model;
  std::size_t n_iter = 1024;
  std::size_t batch = 4;
  std::size_t seq_len = 32;
  std::uint64_t seed = 1;
  std::vector<std::size_t> candidates;
  std::string out;
  std::string heatmap;
  std::string heatmap_norm = "row";
};

int profile_cmd(const ProfileArgs& a, const GlobalOptions& g, std::ostream& out) {
  const ModelSpec model = load_model(a.model);
  ProfileConfig cfg = ProfileConfig::for_model(model);
  cfg.n_iter = a.n_iter;
  cfg.batch_size = a.batch;
  cfg.seq_len = a.seq_len;
  cfg.seed = a.seed;
  if (!a.candidates.empty()) cfg.candidates = a.candidates;
  cfg.validate();

  const PerturbationProfile profile = profile_model(model, cfg, g.threads);
  json j = profile_to_json(profile);
  j["model"] = model.shape.name;
  j["config"] = {{"batch_size", cfg.batch_size},
                 {"seq_len", cfg.seq_len},
                 {"hidden_size", cfg.hidden_size},
                 {"n_iter", cfg.n_iter},
                 {"seed", cfg.seed}};
  stamp(j, g);
  write_text(a.out, j.dump(2) + "\n");
  if (!a.heatmap.empty()) {
    const auto mode = a.heatmap_norm == "global" ? Normalization::kGlobalMax : Normalization::kRowMax;
    write_text(a.heatmap, heatmap_csv(normalize_profile(profile, mode)));
  }
  out << "profiled " << profile.num_layers() << " layers x " << cfg.candidates.size()
      << " candidates (" << cfg.n_iter << " iterations) -> " << a.out << '\n';
  return kExitOk;
}

struct AllocateArgs {
  std::string profile;
  std::size_t budget = 0;
  std::string method = "evolve";
  std::size_t pop = 64;
  std::size_t gens = 200;
  double mut_rate = 0.3;
  std::size_t tournament = 3;
  std::size_t elite = 2;
  std::uint64_t seed = 1;
  std::size_t k_min = 1;
  std::size_t k_max = 0;
  std::string out;
};

int allocate_cmd(const AllocateArgs& a, const GlobalOptions& g, std::ostream& out) {
  const PerturbationProfile profile = profile_from_json(read_json(a.profile));
  SearchConfig cfg = SearchConfig::uniform(profile.num_layers(), a.budget, a.k_min,
                                           a.k_max == 0 ? profile.k_base : a.k_max);
  cfg.population = a.pop;
  cfg.generations = a.gens;
  cfg.mutation_rate = a.mut_rate;
  cfg.tournament_size = a.tournament;
  cfg.elite_count = a.elite;
  cfg.seed = a.seed;
  cfg.validate();

  FitnessReport report;
  if (a.method == "dp") {
    report.best = dp_allocate(profile, cfg);
    report.fitness = fitness(report.best, profile);
  } else {
    report = evolve(profile, cfg, {}, g.threads);
  }
  json j = allocation_to_json(report, cfg.budget, a.method);
  stamp(j, g);
  write_text(a.out, j.dump(2) + "\n");
  out << allocation_table(report, profile);
  return kExitOk;
}

struct ReportArgs {
  std::string model;
  std::string alloc;
};

int report_cmd(const ReportArgs& a, const GlobalOptions& g, std::ostream& out) {
  const ModelSpec model = load_model(a.model);
  const AllocationRecord record = allocation_from_json(read_json(a.alloc));
  const ModelSpec applied = apply_allocation(model, record.allocation);
  const CostReport cost = model_cost(applied, record.allocation);

  json j;
  j["format_version"] = kReportFormatVersion;
  j["model"] = model.shape.name;
  j["num_layers"] = model.shape.num_layers;
  j["k_base"] = model.shape.k_base;
  j["budget"] = record.budget;
  j["method"] = record.method;
  j["allocation"] = record.allocation.k;
  j["fitness"] = record.fitness;
  j["parameter_count"] = applied.parameter_count();
  j["cost"] = cost_to_json(cost);
  stamp(j, g);
  out << j.dump(2) << '\n';
  return kExitOk;
}

int presets_cmd(std::ostream& out) {
  json list = json::array();
  for (const auto& p : model_presets()) {
    list.push_back({{"name", p.name},
                    {"source_model", p.source_model},
                    {"num_layers", p.num_layers},
                    {"num_experts", p.num_experts},
                    {"k_base", p.k_base},
                    {"budgets", p.budgets}});
  }
  out << json{{"format_version", kReportFormatVersion}, {"presets", std::move(list)}}.dump(2)
      << '\n';
  return kExitOk;
}

void report_error(const GlobalOptions& g, std::ostream& err, const std::string& code,
                  const std::string& message) {
  if (g.json_errors) {
    err << json{{"error_code", code}, {"message", message}}.dump() << '\n';
  } else {
    err << "error: " << message << '\n';
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  GlobalOptions g;
  CLI::App app{"Layer-adaptive top-k allocation for mixture-of-experts models", "lexi"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_flag("--json-errors", g.json_errors, "Report errors as JSON on stderr");
  app.add_flag("--deterministic", g.deterministic, "Omit timestamps from outputs");
  app.add_option("--threads", g.threads, "Worker threads (results do not depend on it)")
      ->check(CLI::PositiveNumber);

  GenModelArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-model", "Generate a synthetic MoE model");
  gen_cmd->add_option("--preset", gen.preset, "Shape preset (see `presets`)");
  gen_cmd->add_option("--layers", gen.layers, "Number of MoE layers");
  gen_cmd->add_option("--experts", gen.experts, "Experts per layer");
  gen_cmd->add_option("--top-k", gen.top_k, "Baseline top-k");
  gen_cmd->add_option("--hidden", gen.hidden, "Hidden size")->capture_default_str();
  gen_cmd->add_option("--ffn-dim", gen.ffn_dim, "Expert FFN dimension")->capture_default_str();
  gen_cmd->add_option("--gate-mode", gen.gate_mode, "renormalized|truncated")
      ->check(CLI::IsMember({"renormalized", "truncated"}));
  gen_cmd->add_option("--ffn", gen.ffn, "swiglu|gelu")->check(CLI::IsMember({"swiglu", "gelu"}));
  gen_cmd->add_option("--seed", gen.seed, "Weight seed (positive)")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();

  ProfileArgs prof;
  auto* prof_cmd = app.add_subcommand("profile", "Monte-Carlo top-k perturbation profile");
  prof_cmd->add_option("--model", prof.model, "Model directory")->required();
  prof_cmd->add_option("--n-iter", prof.n_iter, "Monte-Carlo iterations")->capture_default_str();
  prof_cmd->add_option("--batch", prof.batch, "Batch size of random inputs")->capture_default_str();
  prof_cmd->add_option("--seq-len", prof.seq_len, "Sequence length of random inputs")
      ->capture_default_str();
  prof_cmd->add_option("--seed", prof.seed, "Sampling seed")->capture_default_str();
  prof_cmd->add_option("--candidates", prof.candidates, "Candidate top-k values (default 1..k_base)")
      ->delimiter(',');
  prof_cmd->add_option("--out", prof.out, "Profile JSON path")->required();
  prof_cmd->add_option("--heatmap", prof.heatmap, "Normalized heatmap CSV path");
  prof_cmd->add_option("--heatmap-norm", prof.heatmap_norm, "row|global")
      ->check(CLI::IsMember({"row", "global"}));

  AllocateArgs alloc;
  auto* alloc_cmd = app.add_subcommand("allocate", "Search per-layer top-k under a budget");
  alloc_cmd->add_option("--profile", alloc.profile, "Profile JSON")->required();
  alloc_cmd->add_option("--budget", alloc.budget, "Total active experts")->required();
  alloc_cmd->add_option("--method", alloc.method, "evolve|dp")
      ->check(CLI::IsMember({"evolve", "dp"}))
      ->capture_default_str();
  alloc_cmd->add_option("--pop", alloc.pop, "Population size")->capture_default_str();
  alloc_cmd->add_option("--gens", alloc.gens, "Generations")->capture_default_str();
  alloc_cmd->add_option("--mut-rate", alloc.mut_rate, "Mutation probability")->capture_default_str();
  alloc_cmd->add_option("--tournament", alloc.tournament, "Tournament size")->capture_default_str();
  alloc_cmd->add_option("--elite", alloc.elite, "Elite count")->capture_default_str();
  alloc_cmd->add_option("--seed", alloc.seed, "Search seed")->capture_default_str();
  alloc_cmd->add_option("--k-min", alloc.k_min, "Lower top-k bound per layer")->capture_default_str();
  alloc_cmd->add_option("--k-max", alloc.k_max, "Upper top-k bound per layer (default k_base)");
  alloc_cmd->add_option("--out", alloc.out, "Allocation JSON path")->required();

  ReportArgs rep;
  auto* rep_cmd = app.add_subcommand("report", "Merge an allocation with its cost report");
  rep_cmd->add_option("--model", rep.model, "Model directory")->required();
  rep_cmd->add_option("--alloc", rep.alloc, "Allocation JSON")->required();

  auto* presets = app.add_subcommand("presets", "List model shape presets and budgets");

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    report_error(g, err, "usage_error", e.what());
    return kExitUsage;
  }

  try {
    if (gen_cmd->parsed()) return gen_model_cmd(gen, g, out);
    if (prof_cmd->parsed()) return profile_cmd(prof, g, out);
    if (alloc_cmd->parsed()) return allocate_cmd(alloc, g, out);
    if (rep_cmd->parsed()) return report_cmd(rep, g, out);
    if (presets->parsed()) return presets_cmd(out);
  } catch (const UsageError& e) {
    report_error(g, err, e.code(), e.what());
    return kExitUsage;
  } catch (const Error& e) {
    report_error(g, err, e.code(), e.what());
    return kExitData;
  } catch (const std::exception& e) {
    report_error(g, err, "io_error", e.what());
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace lexi
