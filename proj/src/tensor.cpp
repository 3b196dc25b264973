// SPDX-License-Identifier: Apache-2.0
#include "lexi/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lexi/error.hpp"

namespace lexi {

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0f) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_string());
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<float>> rows)
    : rows_(rows.size()), cols_(rows.size() ? rows.begin()->size() : 0) {
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

std::string Matrix::shape_string() const {
  return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

Tensor3::Tensor3(std::size_t batch, std::size_t seq, std::size_t hidden)
    : batch_(batch), seq_(seq), hidden_(hidden), data_(batch * seq * hidden, 0.0f) {}

std::string Tensor3::shape_string() const {
  return "[" + std::to_string(batch_) + "x" + std::to_string(seq_) + "x" +
         std::to_string(hidden_) + "]";
}

namespace {

template <typename T>
void vecmat_impl(std::span<const T> x, const Matrix& m, std::span<double> out) {
  if (x.size() != m.rows() || out.size() != m.cols()) {
    throw ShapeError("vecmat: vector of length " + std::to_string(x.size()) + " times " +
                     m.shape_string() + " into " + std::to_string(out.size()));
  }
  std::fill(out.begin(), out.end(), 0.0);
  const std::size_t cols = m.cols();
  double* acc = out.data();
  std::size_t t = 0;
  // Four rows per pass keep the accumulator in registers. Each element still
  // sums its terms one at a time in ascending t. std::fma is correctly
  // rounded, so the result is the same with or without hardware FMA.
  for (; t + 4 <= x.size(); t += 4) {
    const double x0 = static_cast<double>(x[t]);
    const double x1 = static_cast<double>(x[t + 1]);
    const double x2 = static_cast<double>(x[t + 2]);
    const double x3 = static_cast<double>(x[t + 3]);
    const float* r0 = m.row(t).data();
    const float* r1 = m.row(t + 1).data();
    const float* r2 = m.row(t + 2).data();
    const float* r3 = m.row(t + 3).data();
    for (std::size_t j = 0; j < cols; ++j) {
      double a = acc[j];
      a = std::fma(x0, static_cast<double>(r0[j]), a);
      a = std::fma(x1, static_cast<double>(r1[j]), a);
      a = std::fma(x2, static_cast<double>(r2[j]), a);
      a = std::fma(x3, static_cast<double>(r3[j]), a);
      acc[j] = a;
    }
  }
  for (; t < x.size(); ++t) {
    const double xt = static_cast<double>(x[t]);
    const float* row = m.row(t).data();
    for (std::size_t j = 0; j < cols; ++j) acc[j] = std::fma(xt, static_cast<double>(row[j]), acc[j]);
  }
}

// Four input rows (tokens) against four matrix rows per pass; the inner j loop
// performs the same fma chain per element as vecmat_impl.
template <typename T>
void rows_times_matrix_impl(std::span<const T> in, std::size_t n, const Matrix& m,
                            std::span<double> out) {
  const std::size_t inner = m.rows();
  const std::size_t cols = m.cols();
  if (in.size() != n * inner || out.size() != n * cols) {
    throw ShapeError("rows_times_matrix: " + std::to_string(n) + " rows of length " +
                     std::to_string(in.size() / (n ? n : 1)) + " times " + m.shape_string());
  }
  std::fill(out.begin(), out.end(), 0.0);
  std::size_t r = 0;
  for (; r + 4 <= n; r += 4) {
    const T* a0 = in.data() + r * inner;
    const T* a1 = a0 + inner;
    const T* a2 = a1 + inner;
    const T* a3 = a2 + inner;
    double* __restrict o0 = out.data() + r * cols;
    double* __restrict o1 = o0 + cols;
    double* __restrict o2 = o1 + cols;
    double* __restrict o3 = o2 + cols;
    std::size_t t = 0;
    for (; t + 4 <= inner; t += 4) {
      const float* __restrict w0 = m.row(t).data();
      const float* __restrict w1 = m.row(t + 1).data();
      const float* __restrict w2 = m.row(t + 2).data();
      const float* __restrict w3 = m.row(t + 3).data();
      double s[4][4];
      for (std::size_t q = 0; q < 4; ++q) {
        s[0][q] = static_cast<double>(a0[t + q]);
        s[1][q] = static_cast<double>(a1[t + q]);
        s[2][q] = static_cast<double>(a2[t + q]);
        s[3][q] = static_cast<double>(a3[t + q]);
      }
      for (std::size_t j = 0; j < cols; ++j) {
        const double v0 = static_cast<double>(w0[j]);
        const double v1 = static_cast<double>(w1[j]);
        const double v2 = static_cast<double>(w2[j]);
        const double v3 = static_cast<double>(w3[j]);
        o0[j] = std::fma(s[0][3], v3, std::fma(s[0][2], v2, std::fma(s[0][1], v1, std::fma(s[0][0], v0, o0[j]))));
        o1[j] = std::fma(s[1][3], v3, std::fma(s[1][2], v2, std::fma(s[1][1], v1, std::fma(s[1][0], v0, o1[j]))));
        o2[j] = std::fma(s[2][3], v3, std::fma(s[2][2], v2, std::fma(s[2][1], v1, std::fma(s[2][0], v0, o2[j]))));
        o3[j] = std::fma(s[3][3], v3, std::fma(s[3][2], v2, std::fma(s[3][1], v1, std::fma(s[3][0], v0, o3[j]))));
      }
    }
    for (; t < inner; ++t) {
      const float* w = m.row(t).data();
      for (std::size_t j = 0; j < cols; ++j) {
        const double v = static_cast<double>(w[j]);
        o0[j] = std::fma(static_cast<double>(a0[t]), v, o0[j]);
        o1[j] = std::fma(static_cast<double>(a1[t]), v, o1[j]);
        o2[j] = std::fma(static_cast<double>(a2[t]), v, o2[j]);
        o3[j] = std::fma(static_cast<double>(a3[t]), v, o3[j]);
      }
    }
  }
  for (; r < n; ++r) {
    vecmat_impl(in.subspan(r * inner, inner), m, out.subspan(r * cols, cols));
  }
}

}  // namespace

void rows_times_matrix(std::span<const float> in, std::size_t n, const Matrix& m,
                       std::span<double> out) {
  rows_times_matrix_impl(in, n, m, out);
}

void rows_times_matrix(std::span<const double> in, std::size_t n, const Matrix& m,
                       std::span<double> out) {
  rows_times_matrix_impl(in, n, m, out);
}

void vecmat(std::span<const double> x, const Matrix& m, std::span<double> out) {
  vecmat_impl(x, m, out);
}

void vecmat(std::span<const float> x, const Matrix& m, std::span<double> out) {
  vecmat_impl(x, m, out);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: cannot multiply " + a.shape_string() + " by " +
                     b.shape_string());
  }
  Matrix result(a.rows(), b.cols());
  std::vector<double> acc(b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    vecmat(a.row(i), b, acc);
    auto out = result.row(i);
    for (std::size_t j = 0; j < acc.size(); ++j) out[j] = static_cast<float>(acc[j]);
  }
  return result;
}

std::vector<double> softmax(std::span<const double> v) {
  if (v.empty()) throw ArgumentError("softmax: empty vector");
  double max = v[0];
  for (double x : v) {
    if (!std::isfinite(x)) throw ArgumentError("softmax: non-finite input");
    max = std::max(max, x);
  }
  std::vector<double> out(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - max);
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return out;
}

std::vector<std::size_t> topk_indices(std::span<const double> v, std::size_t k) {
  if (k < 1 || k > v.size()) {
    throw ArgumentError("topk_indices: k=" + std::to_string(k) + " outside [1, " +
                        std::to_string(v.size()) + "]");
  }
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      return v[a] > v[b] || (v[a] == v[b] && a < b);
                    });
  idx.resize(k);
  return idx;
}

namespace {

double frobenius_diff_flat(std::span<const float> a, std::span<const float> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sum += d * d;
  }
  return std::sqrt(sum);
}

}  // namespace

double frobenius_norm_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("frobenius_norm_diff: " + a.shape_string() + " vs " + b.shape_string());
  }
  return frobenius_diff_flat(a.data(), b.data());
}

double frobenius_norm_diff(const Tensor3& a, const Tensor3& b) {
  if (a.batch() != b.batch() || a.seq() != b.seq() || a.hidden() != b.hidden()) {
    throw ShapeError("frobenius_norm_diff: " + a.shape_string() + " vs " + b.shape_string());
  }
  return frobenius_diff_flat(a.data(), b.data());
}

}  // namespace lexi
