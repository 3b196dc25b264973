// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "lexi/cli.hpp"

using namespace lexi;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "lexi");
  std::ostringstream out;
  std::ostringstream err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("lexi_cli_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("usage errors exit 1") {
  CHECK(cli({}).code == 1);
  CHECK(cli({"frobnicate"}).code == 1);
  CHECK(cli({"gen-model"}).code == 1);
  CHECK(cli({"gen-model", "--layers", "2", "--out", "x"}).code == 1);
  CHECK(cli({"gen-model", "--preset", "nope", "--out", "x"}).code == 1);
  const auto r = cli({"--json-errors", "allocate", "--budget", "3"});
  CHECK(r.code == 1);
  const auto j = nlohmann::json::parse(r.err);
  CHECK(j["error_code"] == "usage_error");
  CHECK(j.contains("message"));
  CHECK(cli({"presets"}).code == 0);
}

TEST_CASE("data errors exit 2") {
  TempDir tmp;
  auto r = cli({"--json-errors", "profile", "--model", tmp / "missing", "--out", tmp / "p.json"});
  CHECK(r.code == 2);
  CHECK(nlohmann::json::parse(r.err)["error_code"] == "format_error");

  REQUIRE(cli({"gen-model", "--layers", "2", "--experts", "4", "--top-k", "2", "--hidden", "8",
               "--ffn-dim", "8", "--out", tmp / "m"})
              .code == 0);
  {
    std::fstream f(tmp / "m/weights.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(10);
    f.put('\x7f');
  }
  r = cli({"--json-errors", "profile", "--model", tmp / "m", "--n-iter", "2", "--out", tmp / "p.json"});
  CHECK(r.code == 2);
  CHECK(nlohmann::json::parse(r.err)["error_code"] == "integrity_error");

  REQUIRE(cli({"gen-model", "--layers", "2", "--experts", "4", "--top-k", "2", "--hidden", "8",
               "--ffn-dim", "8", "--out", tmp / "m2"})
              .code == 0);
  REQUIRE(cli({"profile", "--model", tmp / "m2", "--n-iter", "2", "--out", tmp / "p.json"}).code == 0);
  r = cli({"--json-errors", "allocate", "--profile", tmp / "p.json", "--budget", "9", "--out",
           tmp / "a.json"});
  CHECK(r.code == 2);
  CHECK(nlohmann::json::parse(r.err)["error_code"] == "config_error");
}

TEST_CASE("pipeline") {
  TempDir tmp;
  REQUIRE(cli({"--deterministic", "gen-model", "--layers", "4", "--experts", "6", "--top-k", "3",
               "--hidden", "16", "--ffn-dim", "16", "--seed", "3", "--out", tmp / "m"})
              .code == 0);
  REQUIRE(cli({"--deterministic", "profile", "--model", tmp / "m", "--n-iter", "16", "--batch", "2",
               "--seq-len", "8", "--out", tmp / "p.json", "--heatmap", tmp / "h.csv"})
              .code == 0);
  const auto profile = read_json(tmp / "p.json");
  CHECK_FALSE(profile.contains("created_at"));
  CHECK(fs::exists(tmp / "h.csv"));

  SUBCASE("baseline budget") {
    REQUIRE(cli({"allocate", "--profile", tmp / "p.json", "--budget", "12", "--out", tmp / "a.json"})
                .code == 0);
    const auto a = read_json(tmp / "a.json");
    CHECK(a["allocation"] == nlohmann::json({3, 3, 3, 3}));
    CHECK(a["fitness"] == 0.0);
  }
  SUBCASE("dp and evolve agree") {
    REQUIRE(cli({"allocate", "--profile", tmp / "p.json", "--budget", "7", "--method", "dp", "--out",
                 tmp / "dp.json"})
                .code == 0);
    REQUIRE(cli({"allocate", "--profile", tmp / "p.json", "--budget", "7", "--method", "evolve",
                 "--out", tmp / "ev.json"})
                .code == 0);
    CHECK(read_json(tmp / "dp.json")["fitness"] == read_json(tmp / "ev.json")["fitness"]);
    const auto r = cli({"report", "--model", tmp / "m", "--alloc", tmp / "dp.json"});
    REQUIRE(r.code == 0);
    const auto rep = nlohmann::json::parse(r.out);
    CHECK(rep["cost"]["expert_flop_ratio"] == doctest::Approx(7.0 / 12.0));
    CHECK(rep.contains("parameter_count"));
  }
}
