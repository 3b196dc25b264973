// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

#include "lexi/error.hpp"
#include "lexi/model.hpp"
#include "lexi/model_io.hpp"
#include "lexi/profiler.hpp"
#include "lexi/report_io.hpp"
#include "oracles.hpp"

using namespace lexi;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("lexi_test_" + tag + "_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

ModelShape tiny_shape() {
  ModelShape s;
  s.num_layers = 2;
  s.num_experts = 4;
  s.hidden_size = 8;
  s.ffn_dim = 8;
  s.k_base = 2;
  return s;
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

void write_json(const fs::path& p, const nlohmann::json& j) { std::ofstream(p) << j.dump(2); }

}  // namespace

TEST_CASE("presets") {
  const auto qwen = find_preset("qwen-mini");
  REQUIRE(qwen);
  CHECK(qwen->num_layers == 24);
  CHECK(qwen->num_experts == 60);
  CHECK(qwen->k_base == 4);
  const auto olmoe = find_preset("olmoe-mini");
  REQUIRE(olmoe);
  CHECK(olmoe->num_layers == 16);
  CHECK(olmoe->num_experts == 64);
  CHECK(olmoe->k_base == 8);
  const auto mixtral = find_preset("mixtral-mini");
  REQUIRE(mixtral);
  CHECK(mixtral->num_layers == 32);
  CHECK(mixtral->num_experts == 8);
  CHECK(mixtral->k_base == 2);
  CHECK_FALSE(find_preset("nope"));
  for (const auto& p : model_presets()) {
    for (std::size_t b : p.budgets) {
      CHECK(b >= p.num_layers);
      CHECK(b <= p.num_layers * p.k_base);
    }
  }
}

TEST_CASE("generation") {
  const auto a = generate_model(tiny_shape(), 3);
  const auto b = generate_model(tiny_shape(), 3);
  CHECK(same_model(a, b));
  CHECK(encode_weights(a) == encode_weights(b));
  CHECK_FALSE(encode_weights(a) == encode_weights(generate_model(tiny_shape(), 4)));
  CHECK_THROWS_AS(generate_model(tiny_shape(), 0), ConfigError);
  auto bad = tiny_shape();
  bad.k_base = 5;
  CHECK_THROWS_AS(generate_model(bad, 1), ConfigError);

  // Each matrix has mean 0 and std 1/sqrt(fan_in); its sample mean lies
  // within 3 standard errors of 0.
  ModelShape s = tiny_shape();
  s.hidden_size = 32;
  s.ffn_dim = 48;
  const auto m = generate_model(s, 9);
  std::size_t outside = 0;
  std::size_t total = 0;
  auto check = [&](const Matrix& w) {
    double sum = 0;
    double ss = 0;
    for (float v : w.data()) {
      sum += v;
      ss += static_cast<double>(v) * v;
    }
    const double n = static_cast<double>(w.size());
    const double sigma = 1.0 / std::sqrt(static_cast<double>(w.rows()));
    outside += std::abs(sum / n) > 3 * sigma / std::sqrt(n);
    CHECK(std::sqrt(ss / n) == doctest::Approx(sigma).epsilon(0.1));
    ++total;
  };
  for (const auto& layer : m.layers) {
    check(layer.weights().router);
    for (const auto& e : layer.weights().experts) {
      check(e.w_gate);
      check(e.w_up);
      check(e.w_down);
    }
  }
  CHECK(outside <= total / 100 + 1);
}

TEST_CASE("save and load round trip") {
  TempDir tmp("roundtrip");
  for (const auto& p : model_presets()) {
    const auto m = generate_model(preset_shape(p, 8, 8), 5);
    const auto dir = tmp.path / std::string(p.name);
    save_model(m, dir);
    const auto back = load_model(dir);
    CHECK(same_model(m, back));
    CHECK(back.shape == m.shape);
    CHECK(back.seed == m.seed);
  }
  auto m = generate_model(tiny_shape(), 2);
  m.layers[1].set_topk(1);
  save_model(m, tmp.path / "topk", "2026-01-01T00:00:00Z");
  CHECK(load_model(tmp.path / "topk").active_topk() == std::vector<std::size_t>{2, 1});
  CHECK(read_json(tmp.path / "topk" / "manifest.json")["created_at"] == "2026-01-01T00:00:00Z");
}

TEST_CASE("load rejects damaged models") {
  TempDir tmp("damaged");
  const auto m = generate_model(tiny_shape(), 2);
  save_model(m, tmp.path);
  const auto blob = tmp.path / "weights.bin";
  const auto manifest = tmp.path / "manifest.json";

  SUBCASE("flipped byte") {
    std::fstream f(blob, std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(100);
    char c = 0;
    f.read(&c, 1);
    c = static_cast<char>(c ^ 0x01);
    f.seekp(100);
    f.write(&c, 1);
    f.close();
    CHECK_THROWS_AS(load_model(tmp.path), IntegrityError);
  }
  SUBCASE("unknown version") {
    auto j = read_json(manifest);
    j["format_version"] = 999;
    write_json(manifest, j);
    CHECK_THROWS_AS(load_model(tmp.path), FormatError);
  }
  SUBCASE("truncated blob") {
    fs::resize_file(blob, fs::file_size(blob) - 4);
    CHECK_THROWS_AS(load_model(tmp.path), FormatError);
  }
  SUBCASE("missing field") {
    auto j = read_json(manifest);
    j.erase("num_experts");
    write_json(manifest, j);
    CHECK_THROWS_AS(load_model(tmp.path), FormatError);
  }
  SUBCASE("missing directory") { CHECK_THROWS_AS(load_model(tmp.path / "nope"), FormatError); }
}

TEST_CASE("golden fixture loads identically") {
  const fs::path dir = fs::path(LEXI_FIXTURE_DIR) / "golden_model";
  const auto m = load_model(dir);
  CHECK(m.shape.num_layers == 2);
  CHECK(m.shape.num_experts == 4);
  CHECK(m.shape.hidden_size == 4);
  CHECK(m.shape.ffn_dim == 4);
  CHECK(m.seed == 7);
  CHECK(sha256_hex(encode_weights(m)) ==
        "2b17cad8254cb0bd8896020011b7c03a3d75c5a2c07eefb6421f99ee8ec49f31");
  // Little-endian bit patterns of the first router row and the last two
  // entries of the last w_down, read independently from the file.
  const auto& router = m.layers[0].weights().router;
  CHECK(std::bit_cast<std::uint32_t>(router(0, 0)) == 0xbf4c49dau);
  CHECK(std::bit_cast<std::uint32_t>(router(0, 1)) == 0x3da07580u);
  CHECK(std::bit_cast<std::uint32_t>(router(0, 2)) == 0x3eab4b0du);
  CHECK(std::bit_cast<std::uint32_t>(router(0, 3)) == 0xbd9ec15fu);
  const auto& down = m.layers[1].weights().experts[3].w_down;
  CHECK(std::bit_cast<std::uint32_t>(down(3, 2)) == 0x3ee790a3u);
  CHECK(std::bit_cast<std::uint32_t>(down(3, 3)) == 0x3f30e5feu);
}

TEST_CASE("profile json round trip") {
  std::mt19937_64 rng(3);
  auto p = oracle::random_profile(3, 4, rng);
  for (auto& l : p.layers) l.n_iter = 17;
  const auto j = profile_to_json(p);
  CHECK(profile_from_json(nlohmann::json::parse(j.dump())) == p);
  auto bad = j;
  bad["format_version"] = 999;
  CHECK_THROWS_AS(profile_from_json(bad), FormatError);

  const auto csv = heatmap_csv(normalize_profile(p));
  CHECK(csv.rfind("layer,k=1,k=2,k=3,k=4\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}
