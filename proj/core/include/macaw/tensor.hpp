// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace macaw {

using Shape = std::vector<std::size_t>;

/// Dense row-major array of 64-bit reals. Rank is arbitrary but nearly all
/// math in the library is on rank-1 and rank-2 tensors; conv kernels are
/// rank-3 (k x d_in x d_out).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor scalar(double value) { return Tensor({1}, std::vector<double>{value}); }
  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape()); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t axis) const;

  // Matrix view: rank-1 tensors are treated as a single row.
  std::size_t rows() const noexcept;
  std::size_t cols() const noexcept;

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols() + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols() + j]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> row(std::size_t i) { return {data_.data() + i * cols(), cols()}; }
  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * cols(), cols()};
  }

  double item() const;
  bool all_finite() const noexcept;
  Tensor reshaped(Shape shape) const;

  void fill(double value);
  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(double s);

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

// Value-level kernels. Each throws Error{ShapeMismatch} on incompatible
// extents. The autograd layer reuses these for its forward passes.

Tensor matmul(const Tensor& a, const Tensor& b);
/// a * b^T without materialising the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// a^T * b without materialising the transpose.
Tensor matmul_tn(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& m);
Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

/// Row-wise softmax with per-row max subtraction.
Tensor softmax_rows(const Tensor& m);
/// Row-wise softmax where row i only sees columns 0..i. Masked entries are
/// exactly zero and never influence the row maximum.
Tensor causal_softmax_rows(const Tensor& m);

/// Valid 1-D convolution over the row axis.
/// x: L x d_in, w: k x d_in x d_out, bias: d_out. Output: L_out x d_out with
/// L_out = (L - k) / stride + 1.
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride);
std::size_t conv1d_output_length(std::size_t length, std::size_t kernel, std::size_t stride);

bool allclose(const Tensor& a, const Tensor& b, double rtol, double atol);
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace macaw
