// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace lexi {

/// Dense row-major matrix of 32-bit reals.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols);
  Matrix(std::size_t rows, std::size_t cols, std::vector<float> data);
  Matrix(std::initializer_list<std::initializer_list<float>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  float& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<float> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const float> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }

  std::string shape_string() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

/// Activation tensor of shape batch x seq x hidden, row-major.
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(std::size_t batch, std::size_t seq, std::size_t hidden);

  std::size_t batch() const noexcept { return batch_; }
  std::size_t seq() const noexcept { return seq_; }
  std::size_t hidden() const noexcept { return hidden_; }
  std::size_t tokens() const noexcept { return batch_ * seq_; }
  std::size_t size() const noexcept { return data_.size(); }

  /// Hidden vector of flattened token `t` (t = b * seq + s).
  std::span<float> token(std::size_t t) { return {data_.data() + t * hidden_, hidden_}; }
  std::span<const float> token(std::size_t t) const {
    return {data_.data() + t * hidden_, hidden_};
  }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }

  std::string shape_string() const;

  friend bool operator==(const Tensor3&, const Tensor3&) = default;

 private:
  std::size_t batch_ = 0;
  std::size_t seq_ = 0;
  std::size_t hidden_ = 0;
  std::vector<float> data_;
};

/// result[i][j] = sum_t a[i][t] * b[t][j], accumulated in double.
Matrix matmul(const Matrix& a, const Matrix& b);

/// Row-vector times matrix: out[j] = sum_t x[t] * m[t][j] in double.
/// Summation order over t is ascending, the same as `matmul`.
void vecmat(std::span<const double> x, const Matrix& m, std::span<double> out);
void vecmat(std::span<const float> x, const Matrix& m, std::span<double> out);

/// Batched `vecmat`: row r of `out` (n x m.cols()) is row r of `in`
/// (n x m.rows()) times m. Every output element is computed with exactly the
/// arithmetic `vecmat` uses, so the two agree bit for bit.
void rows_times_matrix(std::span<const float> in, std::size_t n, const Matrix& m,
                       std::span<double> out);
void rows_times_matrix(std::span<const double> in, std::size_t n, const Matrix& m,
                       std::span<double> out);

/// Numerically stable softmax (max subtraction).
std::vector<double> softmax(std::span<const double> v);

/// Indices of the k largest entries, by descending value, ties to the lower index.
std::vector<std::size_t> topk_indices(std::span<const double> v, std::size_t k);

/// sqrt(sum (a_i - b_i)^2) accumulated in double.
double frobenius_norm_diff(const Matrix& a, const Matrix& b);
double frobenius_norm_diff(const Tensor3& a, const Tensor3& b);

}  // namespace lexi
