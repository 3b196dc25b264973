// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>

#include "lexi/tensor.hpp"

namespace lexi {

/// Position-addressable random stream. The sample at a given (key, counter)
/// is a pure function of those two values (Philox4x32-10), so streams can be
/// split across threads without sharing state.
struct RngStream {
  std::uint64_t key = 0;
  std::uint64_t counter = 0;

  friend bool operator==(const RngStream&, const RngStream&) = default;
};

/// Philox4x32-10 block for a 64-bit key and 64-bit counter.
std::array<std::uint32_t, 4> philox4x32(std::uint64_t key, std::uint64_t counter);

/// Hashes a seed and a tuple of indices into a stream key.
std::uint64_t derive_key(std::uint64_t seed, std::initializer_list<std::uint64_t> parts);

/// Consumes one block and returns 64 random bits.
std::uint64_t next_u64(RngStream& stream);

/// Uniform integer in [0, n). n must be positive.
std::uint64_t uniform_index(RngStream& stream, std::uint64_t n);

/// Uniform real in the open interval (0, 1).
double uniform_open01(RngStream& stream);

/// Fills `out` with i.i.d. N(0, 1) samples via Box-Muller, one block per pair.
/// Sample i comes from block `counter + i / 2`; the stream advances by
/// ceil(out.size() / 2).
void fill_standard_normal(RngStream& stream, std::span<float> out);

Matrix sample_standard_normal(RngStream& stream, std::size_t rows, std::size_t cols);
Tensor3 sample_standard_normal(RngStream& stream, std::size_t batch, std::size_t seq,
                               std::size_t hidden);

}  // namespace lexi
