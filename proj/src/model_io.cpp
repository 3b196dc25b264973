// SPDX-License-Identifier: Apache-2.0
#include "lexi/model_io.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>

#include <json.hpp>

#include "lexi/error.hpp"

namespace lexi {

namespace fs = std::filesystem;
using nlohmann::json;

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw Error("internal_error", "sha256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

namespace {

void put_matrix(std::vector<std::uint8_t>& out, const Matrix& m) {
  for (float v : m.data()) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
  }
}

class BlobReader {
 public:
  explicit BlobReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  Matrix matrix(std::size_t rows, std::size_t cols) {
    std::vector<float> data(rows * cols);
    if (bytes_.size() - pos_ < 4 * data.size()) throw FormatError("weights blob is truncated");
    for (float& v : data) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * b);
      v = std::bit_cast<float>(bits);
    }
    return Matrix(rows, cols, std::move(data));
  }

  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::size_t expected_blob_size(const ModelShape& s) {
  const std::size_t per_layer =
      s.hidden_size * s.num_experts + s.num_experts * 3 * s.hidden_size * s.ffn_dim;
  return 4 * s.num_layers * per_layer;
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

template <typename T>
T field(const json& j, const char* name) {
  if (!j.contains(name)) throw FormatError(std::string("manifest is missing '") + name + "'");
  try {
    return j.at(name).get<T>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest field '") + name + "': " + e.what());
  }
}

}  // namespace

std::vector<std::uint8_t> encode_weights(const ModelSpec& model) {
  std::vector<std::uint8_t> out;
  out.reserve(expected_blob_size(model.shape));
  for (const auto& layer : model.layers) {
    const auto& w = layer.weights();
    put_matrix(out, w.router);
    for (const auto& e : w.experts) {
      put_matrix(out, e.w_gate);
      put_matrix(out, e.w_up);
      put_matrix(out, e.w_down);
    }
  }
  return out;
}

void save_model(const ModelSpec& model, const fs::path& dir,
                const std::optional<std::string>& created_at) {
  model.validate();
  fs::create_directories(dir);
  const auto blob = encode_weights(model);

  json manifest;
  manifest["format_version"] = kModelFormatVersion;
  manifest["name"] = model.shape.name;
  manifest["num_layers"] = model.shape.num_layers;
  manifest["num_experts"] = model.shape.num_experts;
  manifest["hidden_size"] = model.shape.hidden_size;
  manifest["ffn_dim"] = model.shape.ffn_dim;
  manifest["k_base"] = model.shape.k_base;
  manifest["gate_mode"] = to_string(model.shape.options.gate_mode);
  manifest["ffn_kind"] = to_string(model.shape.options.ffn_kind);
  manifest["seed"] = model.seed;
  manifest["active_topk"] = model.active_topk();
  manifest["blob"] = {
      {"file", kWeightsFile},
      {"dtype", "float32"},
      {"byte_order", "little"},
      {"layout", "per layer: router[H,N]; per expert: w_gate[H,F], w_up[H,F], w_down[F,H]; row-major"},
      {"size_bytes", blob.size()},
      {"sha256", sha256_hex(blob)},
  };
  if (created_at) manifest["created_at"] = *created_at;

  {
    std::ofstream out(dir / kWeightsFile, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
    if (!out) throw Error("io_error", "failed to write " + (dir / kWeightsFile).string());
  }
  std::ofstream out(dir / kManifestFile, std::ios::trunc);
  out << manifest.dump(2) << '\n';
  if (!out) throw Error("io_error", "failed to write " + (dir / kManifestFile).string());
}

ModelSpec load_model(const fs::path& dir) {
  const auto manifest_bytes = read_file(dir / kManifestFile);
  json manifest;
  try {
    manifest = json::parse(manifest_bytes.begin(), manifest_bytes.end());
  } catch (const json::exception& e) {
    throw FormatError("manifest is not valid JSON: " + std::string(e.what()));
  }
  const int version = field<int>(manifest, "format_version");
  if (version != kModelFormatVersion) {
    throw FormatError("unsupported model format version " + std::to_string(version));
  }

  ModelShape shape;
  shape.name = field<std::string>(manifest, "name");
  shape.num_layers = field<std::size_t>(manifest, "num_layers");
  shape.num_experts = field<std::size_t>(manifest, "num_experts");
  shape.hidden_size = field<std::size_t>(manifest, "hidden_size");
  shape.ffn_dim = field<std::size_t>(manifest, "ffn_dim");
  shape.k_base = field<std::size_t>(manifest, "k_base");
  shape.options.gate_mode = parse_gate_mode(field<std::string>(manifest, "gate_mode"));
  shape.options.ffn_kind = parse_ffn_kind(field<std::string>(manifest, "ffn_kind"));
  try {
    shape.validate();
  } catch (const ConfigError& e) {
    throw FormatError(e.what());
  }
  const auto seed = field<std::uint64_t>(manifest, "seed");
  const auto topk = field<std::vector<std::size_t>>(manifest, "active_topk");
  const json blob_info = field<json>(manifest, "blob");
  const auto blob_name = field<std::string>(blob_info, "file");
  const auto digest = field<std::string>(blob_info, "sha256");
  if (topk.size() != shape.num_layers) throw FormatError("active_topk length mismatch");

  const auto blob = read_file(dir / blob_name);
  if (blob.size() != expected_blob_size(shape)) {
    throw FormatError("weights blob has " + std::to_string(blob.size()) + " bytes, expected " +
                      std::to_string(expected_blob_size(shape)));
  }
  if (sha256_hex(blob) != digest) {
    throw IntegrityError("weights blob digest does not match manifest");
  }

  BlobReader reader(blob);
  std::vector<MoeLayerWeights> layers;
  layers.reserve(shape.num_layers);
  for (std::size_t j = 0; j < shape.num_layers; ++j) {
    MoeLayerWeights w;
    w.hidden_size = shape.hidden_size;
    w.num_experts = shape.num_experts;
    w.ffn_dim = shape.ffn_dim;
    w.router = reader.matrix(shape.hidden_size, shape.num_experts);
    for (std::size_t e = 0; e < shape.num_experts; ++e) {
      ExpertWeights ex;
      ex.w_gate = reader.matrix(shape.hidden_size, shape.ffn_dim);
      ex.w_up = reader.matrix(shape.hidden_size, shape.ffn_dim);
      ex.w_down = reader.matrix(shape.ffn_dim, shape.hidden_size);
      w.experts.push_back(std::move(ex));
    }
    layers.push_back(std::move(w));
  }
  ModelSpec model = make_model(shape, std::move(layers), seed);
  for (std::size_t j = 0; j < topk.size(); ++j) {
    try {
      model.layers[j].set_topk(topk[j]);
    } catch (const ArgumentError& e) {
      throw FormatError(std::string("active_topk: ") + e.what());
    }
  }
  return model;
}

}  // namespace lexi
