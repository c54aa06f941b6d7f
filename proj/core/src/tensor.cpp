// SPDX-License-Identifier: Apache-2.0
#include "macaw/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "macaw/error.hpp"

namespace macaw {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {
  for (auto d : shape_) {
    if (d == 0) throw Error(Errc::ShapeMismatch, "zero extent in " + shape_string(shape_));
  }
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto d : shape_) {
    if (d == 0) throw Error(Errc::ShapeMismatch, "zero extent in " + shape_string(shape_));
  }
  if (shape_numel(shape_) != data_.size()) {
    throw Error(Errc::ShapeMismatch, "shape " + shape_string(shape_) + " does not hold " +
                                         std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw Error(Errc::ShapeMismatch, "ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) throw Error(Errc::ShapeMismatch, "axis out of range");
  return shape_[axis];
}

std::size_t Tensor::rows() const noexcept {
  if (shape_.empty()) return 0;
  return shape_.size() == 1 ? 1 : shape_[0];
}

std::size_t Tensor::cols() const noexcept {
  if (shape_.empty()) return 0;
  return shape_.size() == 1 ? shape_[0] : data_.size() / shape_[0];
}

double Tensor::item() const {
  if (data_.size() != 1) throw Error(Errc::ShapeMismatch, "item() on non-scalar " + shape_string(shape_));
  return data_[0];
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::reshaped(Shape shape) const {
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Tensor& Tensor::operator+=(const Tensor& other) {
  if (other.shape_ != shape_) {
    throw Error(Errc::ShapeMismatch, shape_string(shape_) + " += " + shape_string(other.shape_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (auto& v : data_) v *= s;
  return *this;
}

namespace {

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw Error(Errc::ShapeMismatch, std::string(what) + " must be a matrix, got " + shape_string(t.shape()));
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul lhs");
  require_matrix(b, "matmul rhs");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw Error(Errc::ShapeMismatch, "matmul " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  Tensor c({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = pc + i * n;
    for (std::size_t t = 0; t < k; ++t) {
      const double av = pa[i * k + t];
      const double* brow = pb + t * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt lhs");
  require_matrix(b, "matmul_nt rhs");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) {
    throw Error(Errc::ShapeMismatch, "matmul_nt " + shape_string(a.shape()) + " x " + shape_string(b.shape()) + "^T");
  }
  Tensor c({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += pa[i * k + t] * pb[j * k + t];
      c(i, j) = acc;
    }
  }
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_tn lhs");
  require_matrix(b, "matmul_tn rhs");
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw Error(Errc::ShapeMismatch, "matmul_tn " + shape_string(a.shape()) + "^T x " + shape_string(b.shape()));
  }
  Tensor c({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  for (std::size_t t = 0; t < k; ++t) {
    for (std::size_t i = 0; i < m; ++i) {
      const double av = pa[t * m + i];
      double* crow = pc + i * n;
      const double* brow = pb + t * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

Tensor transpose(const Tensor& m) {
  require_matrix(m, "transpose");
  Tensor t({m.cols(), m.rows()});
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  return t;
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor c = a;
  c += b;
  return c;
}

Tensor scale(const Tensor& a, double s) {
  Tensor c = a;
  c *= s;
  return c;
}

namespace {

void softmax_prefix(std::span<const double> in, std::span<double> out, std::size_t width) {
  double mx = in[0];
  for (std::size_t j = 1; j < width; ++j) mx = std::max(mx, in[j]);
  double sum = 0.0;
  for (std::size_t j = 0; j < width; ++j) {
    out[j] = std::exp(in[j] - mx);
    sum += out[j];
  }
  const double inv = 1.0 / sum;
  for (std::size_t j = 0; j < width; ++j) out[j] *= inv;
  for (std::size_t j = width; j < out.size(); ++j) out[j] = 0.0;
}

}  // namespace

Tensor softmax_rows(const Tensor& m) {
  Tensor out(m.shape());
  for (std::size_t i = 0; i < m.rows(); ++i) softmax_prefix(m.row(i), out.row(i), m.cols());
  return out;
}

Tensor causal_softmax_rows(const Tensor& m) {
  require_matrix(m, "causal_softmax_rows");
  Tensor out(m.shape());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    softmax_prefix(m.row(i), out.row(i), std::min(i + 1, m.cols()));
  }
  return out;
}

std::size_t conv1d_output_length(std::size_t length, std::size_t kernel, std::size_t stride) {
  if (stride == 0) throw Error(Errc::ShapeMismatch, "conv1d stride must be positive");
  if (kernel == 0) throw Error(Errc::ShapeMismatch, "conv1d kernel must be positive");
  if (kernel > length) {
    throw Error(Errc::KernelTooLarge,
                "kernel " + std::to_string(kernel) + " exceeds length " + std::to_string(length));
  }
  return (length - kernel) / stride + 1;
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride) {
  require_matrix(x, "conv1d input");
  if (w.rank() != 3) throw Error(Errc::ShapeMismatch, "conv1d kernel must be rank 3, got " + shape_string(w.shape()));
  const std::size_t k = w.dim(0), d_in = w.dim(1), d_out = w.dim(2);
  if (x.cols() != d_in) {
    throw Error(Errc::ShapeMismatch, "conv1d input " + shape_string(x.shape()) + " vs kernel " + shape_string(w.shape()));
  }
  if (bias.size() != d_out) throw Error(Errc::ShapeMismatch, "conv1d bias " + shape_string(bias.shape()));
  const std::size_t l_out = conv1d_output_length(x.rows(), k, stride);
  Tensor y({l_out, d_out});
  const double* pw = w.data().data();
  for (std::size_t p = 0; p < l_out; ++p) {
    auto yrow = y.row(p);
    for (std::size_t o = 0; o < d_out; ++o) yrow[o] = bias[o];
    for (std::size_t t = 0; t < k; ++t) {
      auto xrow = x.row(p * stride + t);
      for (std::size_t c = 0; c < d_in; ++c) {
        const double xv = xrow[c];
        const double* wrow = pw + (t * d_in + c) * d_out;
        for (std::size_t o = 0; o < d_out; ++o) yrow[o] += xv * wrow[o];
      }
    }
  }
  return y;
}

bool allclose(const Tensor& a, const Tensor& b, double rtol, double atol) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::abs(a[i] - b[i]) > atol + rtol * std::abs(b[i])) return false;
  }
  return true;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw Error(Errc::ShapeMismatch, "max_abs_diff shapes differ");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace macaw
