// SPDX-License-Identifier: Apache-2.0
#include "lexi/moe_layer.hpp"

#include <cmath>
#include <algorithm>
#include <numbers>
#include <string>

#include "lexi/error.hpp"

namespace lexi {

std::string_view to_string(GateMode mode) {
  return mode == GateMode::kRenormalized ? "renormalized" : "truncated";
}

std::string_view to_string(FfnKind kind) { return kind == FfnKind::kSwiGlu ? "swiglu" : "gelu"; }

GateMode parse_gate_mode(std::string_view text) {
  if (text == "renormalized") return GateMode::kRenormalized;
  if (text == "truncated") return GateMode::kTruncated;
  throw FormatError("unknown gate mode '" + std::string(text) + "'");
}

FfnKind parse_ffn_kind(std::string_view text) {
  if (text == "swiglu") return FfnKind::kSwiGlu;
  if (text == "gelu") return FfnKind::kGelu;
  throw FormatError("unknown ffn kind '" + std::string(text) + "'");
}

namespace {

void expect_shape(const Matrix& m, std::size_t rows, std::size_t cols, const char* what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ShapeError(std::string(what) + " has shape " + m.shape_string() + ", expected [" +
                     std::to_string(rows) + "x" + std::to_string(cols) + "]");
  }
}

void expect_finite(const Matrix& m, const char* what) {
  for (float v : m.data()) {
    if (!std::isfinite(v)) throw ArgumentError(std::string(what) + " contains non-finite values");
  }
}

double silu(double z) { return z / (1.0 + std::exp(-z)); }

double gelu(double z) { return 0.5 * z * (1.0 + std::erf(z / std::numbers::sqrt2)); }

// Hidden activation in place on `up`; `gate` is only read for SwiGLU.
void activate(FfnKind kind, std::span<const double> gate, std::span<double> up) {
  if (kind == FfnKind::kSwiGlu) {
    for (std::size_t f = 0; f < up.size(); ++f) up[f] = silu(gate[f]) * up[f];
  } else {
    for (double& v : up) v = gelu(v);
  }
}

std::vector<double> router_logits(const MoeLayerWeights& layer, std::span<const float> x) {
  if (x.size() != layer.hidden_size) {
    throw ShapeError("token of length " + std::to_string(x.size()) + " for hidden size " +
                     std::to_string(layer.hidden_size));
  }
  std::vector<double> logits(layer.num_experts);
  vecmat(x, layer.router, logits);
  return logits;
}

void check_k(const MoeLayerWeights& layer, std::size_t k) {
  if (k < 1 || k > layer.num_experts) {
    throw ArgumentError("top-k " + std::to_string(k) + " outside [1, " +
                        std::to_string(layer.num_experts) + "]");
  }
}

// Gate weights for the first k entries of `order`. Shared by `gate` and
// `RoutedToken` so both produce identical bits.
std::vector<double> gate_weights(std::span<const double> logits,
                                 std::span<const std::size_t> order, std::size_t k,
                                 GateMode mode) {
  std::vector<double> weights(k);
  if (mode == GateMode::kRenormalized) {
    std::vector<double> picked(k);
    for (std::size_t i = 0; i < k; ++i) picked[i] = logits[order[i]];
    weights = softmax(picked);
  } else {
    const auto all = softmax(logits);
    for (std::size_t i = 0; i < k; ++i) weights[i] = all[order[i]];
  }
  return weights;
}

}  // namespace

void MoeLayerWeights::validate() const {
  if (hidden_size == 0 || num_experts == 0 || ffn_dim == 0) {
    throw ShapeError("layer dimensions must be positive");
  }
  expect_shape(router, hidden_size, num_experts, "router");
  expect_finite(router, "router");
  if (experts.size() != num_experts) {
    throw ShapeError("layer has " + std::to_string(experts.size()) + " experts, expected " +
                     std::to_string(num_experts));
  }
  for (const auto& e : experts) {
    expect_shape(e.w_gate, hidden_size, ffn_dim, "w_gate");
    expect_shape(e.w_up, hidden_size, ffn_dim, "w_up");
    expect_shape(e.w_down, ffn_dim, hidden_size, "w_down");
    expect_finite(e.w_gate, "w_gate");
    expect_finite(e.w_up, "w_up");
    expect_finite(e.w_down, "w_down");
  }
}

std::size_t MoeLayerWeights::parameter_count() const {
  std::size_t n = router.size();
  for (const auto& e : experts) n += e.w_gate.size() + e.w_up.size() + e.w_down.size();
  return n;
}

GateDecision gate(const MoeLayerWeights& layer, std::span<const float> x, std::size_t k,
                  GateMode mode) {
  check_k(layer, k);
  const auto logits = router_logits(layer, x);
  GateDecision decision;
  decision.selected = topk_indices(logits, k);
  decision.weights = gate_weights(logits, decision.selected, k, mode);
  return decision;
}

std::vector<double> expert_forward(const ExpertWeights& expert, std::span<const float> x,
                                   FfnKind kind) {
  const std::size_t hidden = expert.w_down.cols();
  const std::size_t ffn = expert.w_down.rows();
  if (x.size() != expert.w_up.rows() || expert.w_up.cols() != ffn ||
      (kind == FfnKind::kSwiGlu && (expert.w_gate.rows() != x.size() || expert.w_gate.cols() != ffn))) {
    throw ShapeError("expert_forward: input of length " + std::to_string(x.size()) +
                     " with w_up " + expert.w_up.shape_string() + " and w_down " +
                     expert.w_down.shape_string());
  }
  std::vector<double> up(ffn);
  vecmat(x, expert.w_up, up);
  std::vector<double> g;
  if (kind == FfnKind::kSwiGlu) {
    g.resize(ffn);
    vecmat(x, expert.w_gate, g);
  }
  activate(kind, g, up);
  std::vector<double> out(hidden);
  vecmat(std::span<const double>(up), expert.w_down, out);
  return out;
}

RoutedToken::RoutedToken(const MoeLayerWeights& layer, std::span<const float> x,
                         std::size_t max_k, const MoeOptions& options, Deferred)
    : mode_(options.gate_mode) {
  check_k(layer, max_k);
  logits_ = router_logits(layer, x);
  order_ = topk_indices(logits_, max_k);
  expert_outputs_.resize(max_k);
}

RoutedToken::RoutedToken(const MoeLayerWeights& layer, std::span<const float> x,
                         std::size_t max_k, const MoeOptions& options)
    : RoutedToken(layer, x, max_k, options, Deferred{}) {
  for (std::size_t slot = 0; slot < order_.size(); ++slot) {
    expert_outputs_[slot] = expert_forward(layer.experts[order_[slot]], x, options.ffn_kind);
  }
}

std::vector<RoutedToken> route_tokens(const MoeLayerWeights& layer, const Tensor3& x,
                                      std::size_t max_k, const MoeOptions& options) {
  if (x.hidden() != layer.hidden_size) {
    throw ShapeError("route_tokens: input " + x.shape_string() + " for hidden size " +
                     std::to_string(layer.hidden_size));
  }
  std::vector<RoutedToken> tokens;
  tokens.reserve(x.tokens());
  // (token, slot) pairs per expert.
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> by_expert(layer.num_experts);
  for (std::size_t t = 0; t < x.tokens(); ++t) {
    tokens.push_back(RoutedToken(layer, x.token(t), max_k, options, RoutedToken::Deferred{}));
    const auto& order = tokens.back().order_;
    for (std::size_t slot = 0; slot < order.size(); ++slot) by_expert[order[slot]].push_back({t, slot});
  }
  const std::size_t hidden = layer.hidden_size;
  const std::size_t ffn = layer.ffn_dim;
  std::vector<float> rows;
  std::vector<double> gate_act;
  std::vector<double> up;
  std::vector<double> out;
  for (std::size_t e = 0; e < layer.num_experts; ++e) {
    const auto& routed = by_expert[e];
    if (routed.empty()) continue;
    const std::size_t n = routed.size();
    const auto& expert = layer.experts[e];
    rows.resize(n * hidden);
    for (std::size_t r = 0; r < n; ++r) {
      const auto token = x.token(routed[r].first);
      std::copy(token.begin(), token.end(), rows.begin() + static_cast<std::ptrdiff_t>(r * hidden));
    }
    up.resize(n * ffn);
    rows_times_matrix(rows, n, expert.w_up, up);
    if (options.ffn_kind == FfnKind::kSwiGlu) {
      gate_act.resize(n * ffn);
      rows_times_matrix(rows, n, expert.w_gate, gate_act);
    }
    for (std::size_t r = 0; r < n; ++r) {
      const auto g = options.ffn_kind == FfnKind::kSwiGlu
                         ? std::span<const double>(gate_act).subspan(r * ffn, ffn)
                         : std::span<const double>();
      activate(options.ffn_kind, g, std::span<double>(up).subspan(r * ffn, ffn));
    }
    out.resize(n * hidden);
    rows_times_matrix(std::span<const double>(up), n, expert.w_down, out);
    for (std::size_t r = 0; r < n; ++r) {
      const auto [t, slot] = routed[r];
      tokens[t].expert_outputs_[slot].assign(out.begin() + static_cast<std::ptrdiff_t>(r * hidden),
                                             out.begin() + static_cast<std::ptrdiff_t>((r + 1) * hidden));
    }
  }
  return tokens;
}

GateDecision RoutedToken::decision(std::size_t k) const {
  if (k < 1 || k > order_.size()) {
    throw ArgumentError("top-k " + std::to_string(k) + " outside [1, " +
                        std::to_string(order_.size()) + "]");
  }
  GateDecision d;
  d.selected.assign(order_.begin(), order_.begin() + static_cast<std::ptrdiff_t>(k));
  d.weights = gate_weights(logits_, order_, k, mode_);
  return d;
}

void RoutedToken::combine(std::size_t k, std::span<float> out) const {
  const auto weights = decision(k).weights;
  std::vector<double> acc(out.size(), 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    const auto& y = expert_outputs_[i];
    for (std::size_t h = 0; h < acc.size(); ++h) acc[h] += weights[i] * y[h];
  }
  for (std::size_t h = 0; h < acc.size(); ++h) out[h] = static_cast<float>(acc[h]);
}

Tensor3 moe_forward(const MoeLayerWeights& layer, const Tensor3& x, std::size_t k,
                    const MoeOptions& options) {
  check_k(layer, k);
  if (x.hidden() != layer.hidden_size) {
    throw ShapeError("moe_forward: input " + x.shape_string() + " for hidden size " +
                     std::to_string(layer.hidden_size));
  }
  Tensor3 y(x.batch(), x.seq(), x.hidden());
  for (std::size_t t = 0; t < x.tokens(); ++t) {
    RoutedToken(layer, x.token(t), k, options).combine(k, y.token(t));
  }
  return y;
}

MoeLayer::MoeLayer(std::shared_ptr<const MoeLayerWeights> weights, std::size_t topk,
                   MoeOptions options)
    : weights_(std::move(weights)), topk_(0), options_(options) {
  if (!weights_) throw ArgumentError("MoeLayer: null weights");
  set_topk(topk);
}

void MoeLayer::set_topk(std::size_t k) {
  check_k(*weights_, k);
  topk_ = k;
}

}  // namespace lexi
