// SPDX-License-Identifier: Apache-2.0
#include "lexi/rng.hpp"

#include <cmath>
#include <numbers>

#include "lexi/error.hpp"

namespace lexi {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

double to_open01(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::uint64_t key, std::uint64_t counter) {
  std::array<std::uint32_t, 4> ctr = {static_cast<std::uint32_t>(counter),
                                      static_cast<std::uint32_t>(counter >> 32), 0u, 0u};
  std::uint32_t k0 = static_cast<std::uint32_t>(key);
  std::uint32_t k1 = static_cast<std::uint32_t>(key >> 32);
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kPhiloxM0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kPhiloxM1) * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0};
    k0 += kPhiloxW0;
    k1 += kPhiloxW1;
  }
  return ctr;
}

std::uint64_t derive_key(std::uint64_t seed, std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = splitmix64(seed);
  for (std::uint64_t p : parts) h = splitmix64(h ^ splitmix64(p + 0x632BE59BD9B4E019ull));
  return h;
}

std::uint64_t next_u64(RngStream& stream) {
  const auto block = philox4x32(stream.key, stream.counter++);
  return (static_cast<std::uint64_t>(block[0]) << 32) | block[1];
}

std::uint64_t uniform_index(RngStream& stream, std::uint64_t n) {
  if (n == 0) throw ArgumentError("uniform_index: empty range");
  const unsigned __int128 wide = static_cast<unsigned __int128>(next_u64(stream)) * n;
  return static_cast<std::uint64_t>(wide >> 64);
}

double uniform_open01(RngStream& stream) {
  const auto block = philox4x32(stream.key, stream.counter++);
  return to_open01(block[0], block[1]);
}

void fill_standard_normal(RngStream& stream, std::span<float> out) {
  const std::size_t pairs = (out.size() + 1) / 2;
  for (std::size_t p = 0; p < pairs; ++p) {
    const auto block = philox4x32(stream.key, stream.counter + p);
    const double u1 = to_open01(block[0], block[1]);
    const double u2 = to_open01(block[2], block[3]);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    out[2 * p] = static_cast<float>(radius * std::cos(angle));
    if (2 * p + 1 < out.size()) out[2 * p + 1] = static_cast<float>(radius * std::sin(angle));
  }
  stream.counter += pairs;
}

Matrix sample_standard_normal(RngStream& stream, std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) throw ArgumentError("sample_standard_normal: zero-size shape");
  Matrix m(rows, cols);
  fill_standard_normal(stream, m.data());
  return m;
}

Tensor3 sample_standard_normal(RngStream& stream, std::size_t batch, std::size_t seq,
                               std::size_t hidden) {
  if (batch == 0 || seq == 0 || hidden == 0) {
    throw ArgumentError("sample_standard_normal: zero-size shape");
  }
  Tensor3 t(batch, seq, hidden);
  fill_standard_normal(stream, t.data());
  return t;
}

}  // namespace lexi
