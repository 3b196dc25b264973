// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lexi/model.hpp"

namespace lexi {

inline constexpr int kModelFormatVersion = 1;
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kWeightsFile = "weights.bin";

std::string sha256_hex(std::span<const std::uint8_t> bytes);

/// Little-endian float32 serialization of every layer: router, then per
/// expert w_gate, w_up, w_down, each row-major.
std::vector<std::uint8_t> encode_weights(const ModelSpec& model);

/// Writes `dir/manifest.json` and `dir/weights.bin`, creating `dir`.
/// `created_at`, when set, is recorded verbatim in the manifest.
void save_model(const ModelSpec& model, const std::filesystem::path& dir,
                const std::optional<std::string>& created_at = std::nullopt);

/// Throws FormatError on an unknown version, malformed manifest or
/// wrong-sized blob, and IntegrityError when the blob digest differs.
ModelSpec load_model(const std::filesystem::path& dir);

}  // namespace lexi
