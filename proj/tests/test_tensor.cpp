// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "lexi/error.hpp"
#include "lexi/parallel.hpp"
#include "lexi/rng.hpp"
#include "lexi/tensor.hpp"
#include "oracles.hpp"

using namespace lexi;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  Matrix m(r, c);
  for (float& v : m.data()) v = u(rng);
  return m;
}

void check_matmul(const Matrix& a, const Matrix& b) {
  const Matrix c = matmul(a, b);
  const auto ref = oracle::naive_matmul(a, b);
  REQUIRE(c.rows() == a.rows());
  REQUIRE(c.cols() == b.cols());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double tol = 1e-5 * std::max(1.0, std::abs(ref[i]));
    CHECK(std::abs(c.data()[i] - ref[i]) <= tol);
  }
}

}  // namespace

TEST_CASE("matmul small cases") {
  const Matrix a{{1, 2}, {3, 4}};
  CHECK(matmul(Matrix{{1, 0}, {0, 1}}, a) == a);
  CHECK(matmul(a, Matrix{{0, 1}, {1, 0}}) == Matrix{{2, 1}, {4, 3}});
  CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), ShapeError);
}

TEST_CASE("matmul matches naive reference") {
  std::mt19937_64 rng(11);
  check_matmul(random_matrix(7, 5, rng), random_matrix(5, 3, rng));
  for (std::size_t n : {1, 3, 17, 64}) check_matmul(random_matrix(n, 64, rng), random_matrix(64, n, rng));
}

TEST_CASE("batched rows agree with vecmat bit for bit") {
  std::mt19937_64 rng(5);
  for (std::size_t n : {1, 3, 4, 9}) {
    const Matrix m = random_matrix(13, 7, rng);
    const Matrix in = random_matrix(n, 13, rng);
    std::vector<double> in_d(in.data().begin(), in.data().end());
    std::vector<double> batched(n * 7);
    std::vector<double> batched_d(n * 7);
    rows_times_matrix(in.data(), n, m, batched);
    rows_times_matrix(std::span<const double>(in_d), n, m, batched_d);
    for (std::size_t r = 0; r < n; ++r) {
      std::vector<double> single(7);
      vecmat(in.row(r), m, single);
      for (std::size_t c = 0; c < 7; ++c) {
        CHECK(batched[r * 7 + c] == single[c]);
        CHECK(batched_d[r * 7 + c] == single[c]);
      }
    }
  }
}

TEST_CASE("softmax") {
  auto p = softmax(std::vector<double>{0, 0});
  CHECK(p[0] == doctest::Approx(0.5));
  p = softmax(std::vector<double>{2, 1});
  CHECK(p[0] == doctest::Approx(std::exp(1.0) / (std::exp(1.0) + 1)).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(1 / (std::exp(1.0) + 1)).epsilon(1e-12));
  p = softmax(std::vector<double>{1000, 0});
  CHECK(std::isfinite(p[0]));
  CHECK(p[0] == doctest::Approx(1.0));
  CHECK(p[1] < 1e-300);
  CHECK_THROWS_AS(softmax(std::vector<double>{}), ArgumentError);
  CHECK_THROWS_AS(softmax(std::vector<double>{1, NAN}), ArgumentError);

  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd(0, 5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> v(1 + trial % 20);
    for (double& x : v) x = nd(rng);
    const auto s = softmax(v);
    double sum = 0;
    for (double x : s) {
      CHECK(x >= 0.0);
      sum += x;
    }
    CHECK(std::abs(sum - 1.0) < 1e-6);
    CHECK(std::max_element(s.begin(), s.end()) - s.begin() ==
          std::max_element(v.begin(), v.end()) - v.begin());
  }
}

TEST_CASE("topk_indices") {
  CHECK(topk_indices(std::vector<double>{0.1, 0.9, 0.5}, 3) == std::vector<std::size_t>{1, 2, 0});
  CHECK(topk_indices(std::vector<double>{0.5, 0.5, 0.1}, 1) == std::vector<std::size_t>{0});
  CHECK_THROWS_AS(topk_indices(std::vector<double>{1, 2}, 0), ArgumentError);
  CHECK_THROWS_AS(topk_indices(std::vector<double>{1, 2}, 3), ArgumentError);

  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> coarse(0, 6);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(16);
    // Coarse values force plenty of ties.
    for (double& x : v) x = trial % 2 ? coarse(rng) : std::normal_distribution<double>()(rng);
    CHECK(topk_indices(v, 4) == oracle::sorted_topk(v, 4));
    const auto all = topk_indices(v, v.size());
    CHECK(std::set<std::size_t>(all.begin(), all.end()).size() == v.size());
  }
}

TEST_CASE("frobenius_norm_diff") {
  const Matrix a{{3, 0}, {0, 4}};
  CHECK(frobenius_norm_diff(a, a) == 0.0);
  CHECK(frobenius_norm_diff(a, Matrix(2, 2)) == 5.0);
  CHECK_THROWS_AS(frobenius_norm_diff(a, Matrix(2, 3)), ShapeError);

  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = random_matrix(31, 17, rng);
    const Matrix y = random_matrix(31, 17, rng);
    const Matrix z = random_matrix(31, 17, rng);
    const double ref = oracle::two_pass_frobenius(x.data(), y.data());
    CHECK(std::abs(frobenius_norm_diff(x, y) - ref) <= 1e-9 * ref);
    CHECK(frobenius_norm_diff(x, y) == frobenius_norm_diff(y, x));
    CHECK(frobenius_norm_diff(x, z) <= frobenius_norm_diff(x, y) + frobenius_norm_diff(y, z) + 1e-6);
  }
}

TEST_CASE("philox known answer") {
  const auto block = philox4x32(0, 0);
  CHECK(block[0] == 0x6627e8d5u);
  CHECK(block[1] == 0xe169c58du);
  CHECK(block[2] == 0xbc57ac4cu);
  CHECK(block[3] == 0x9b00dbd8u);
}

TEST_CASE("standard normal sampling") {
  RngStream s1{7, 0};
  RngStream s2{7, 0};
  CHECK(sample_standard_normal(s1, 4, 8) == sample_standard_normal(s2, 4, 8));
  CHECK(s1.counter == 16);

  RngStream big{derive_key(42, {1}), 0};
  const Matrix m = sample_standard_normal(big, 1000, 1000);
  double sum = 0;
  for (float v : m.data()) sum += v;
  const double mean = sum / 1e6;
  double ss = 0;
  for (float v : m.data()) ss += (v - mean) * (v - mean);
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(std::sqrt(ss / (1e6 - 1)) - 1.0) < 0.01);

  RngStream a{1, 0};
  RngStream b{2, 0};
  const Matrix ma = sample_standard_normal(a, 32, 32);
  const Matrix mb = sample_standard_normal(b, 32, 32);
  std::size_t differ = 0;
  for (std::size_t i = 0; i < ma.size(); ++i) differ += ma.data()[i] != mb.data()[i];
  CHECK(differ >= 0.99 * ma.size());

  RngStream zero{1, 0};
  CHECK_THROWS_AS(sample_standard_normal(zero, 0, 3), ArgumentError);
}

TEST_CASE("sampling is position addressable") {
  // Drawing block ranges in any order or on any thread gives the same tensor.
  RngStream whole{99, 5};
  std::vector<float> ref(64);
  fill_standard_normal(whole, ref);
  std::vector<float> pieces(64);
  parallel_for(8, 4, [&](std::size_t i) {
    RngStream s{99, 5 + i * 4};
    fill_standard_normal(s, std::span<float>(pieces).subspan(i * 8, 8));
  });
  CHECK(pieces == ref);
}

TEST_CASE("uniform helpers") {
  RngStream s{derive_key(3, {4, 5}), 0};
  std::vector<int> counts(5, 0);
  for (int i = 0; i < 50000; ++i) ++counts[uniform_index(s, 5)];
  for (int c : counts) CHECK(std::abs(c - 10000) < 500);
  for (int i = 0; i < 1000; ++i) {
    const double u = uniform_open01(s);
    CHECK(u > 0.0);
    CHECK(u < 1.0);
  }
  CHECK(derive_key(1, {2, 3}) != derive_key(1, {3, 2}));
  CHECK(derive_key(1, {2}) == derive_key(1, {2}));
}
