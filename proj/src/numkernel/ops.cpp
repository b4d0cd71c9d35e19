#include "clora/ops.hpp"

#include <algorithm>
#include <cmath>

#include "clora/kernels.hpp"

namespace clora {
namespace {

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw_shape_error(op, a, b);
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw_shape_error("matmul", a, b);
  Matrix c(a.rows(), b.cols());
  kernels::active().gemm_nn(a.rows(), a.cols(), b.cols(), a.data().data(), b.data().data(),
                            c.data().data());
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw_shape_error("matmul_tn", a, b);
  Matrix c(a.cols(), b.cols());
  kernels::active().gemm_tn(a.cols(), a.rows(), b.cols(), a.data().data(), b.data().data(),
                            c.data().data());
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw_shape_error("matmul_nt", a, b);
  return matmul(a, transpose(b));
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  }
  return t;
}

Matrix relu(const Matrix& a) {
  Matrix out(a.rows(), a.cols());
  kernels::active().relu(a.size(), a.data().data(), out.data().data());
  return out;
}

Matrix relu_backward(const Matrix& pre, const Matrix& grad) {
  require_same_shape("relu_backward", pre, grad);
  Matrix out(pre.rows(), pre.cols());
  kernels::active().relu_backward(pre.size(), pre.data().data(), grad.data().data(),
                                  out.data().data());
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape("add", a, b);
  Matrix out(a.rows(), a.cols());
  kernels::active().add(a.size(), a.data().data(), b.data().data(), out.data().data());
  return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
  require_same_shape("sub", a, b);
  Matrix out(a.rows(), a.cols());
  kernels::active().sub(a.size(), a.data().data(), b.data().data(), out.data().data());
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape("hadamard", a, b);
  Matrix out(a.rows(), a.cols());
  kernels::active().hadamard(a.size(), a.data().data(), b.data().data(), out.data().data());
  return out;
}

Matrix scale(const Matrix& a, double alpha) {
  Matrix out(a.rows(), a.cols());
  kernels::active().scale(a.size(), alpha, a.data().data(), out.data().data());
  return out;
}

void axpy(double alpha, const Matrix& x, Matrix& y) {
  require_same_shape("axpy", x, y);
  kernels::active().axpy(x.size(), alpha, x.data().data(), y.data().data());
}

void add_inplace(Matrix& y, const Matrix& x) {
  require_same_shape("add_inplace", y, x);
  kernels::active().add(y.size(), y.data().data(), x.data().data(), y.data().data());
}

Matrix add_row_bias(const Matrix& a, const Matrix& bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols()) throw_shape_error("add_row_bias", a, bias);
  Matrix out(a.rows(), a.cols());
  const auto& k = kernels::active();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    k.add(a.cols(), a.row(i).data(), bias.data().data(), out.row(i).data());
  }
  return out;
}

Matrix add_col_bias(const Matrix& a, const Matrix& bias) {
  if (bias.cols() != 1 || bias.rows() != a.rows()) throw_shape_error("add_col_bias", a, bias);
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double b = bias(i, 0);
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = a(i, j) + b;
  }
  return out;
}

Matrix col_sums(const Matrix& a) {
  Matrix out(1, a.cols());
  const auto& k = kernels::active();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    k.add(a.cols(), out.data().data(), a.row(i).data(), out.data().data());
  }
  return out;
}

Matrix row_sums(const Matrix& a) {
  Matrix out(a.rows(), 1);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (double v : a.row(i)) s += v;
    out(i, 0) = s;
  }
  return out;
}

Matrix concat_cols(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw_shape_error("concat_cols", a, b);
  Matrix out(a.rows(), a.cols() + b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto dst = out.row(i);
    std::copy(a.row(i).begin(), a.row(i).end(), dst.begin());
    std::copy(b.row(i).begin(), b.row(i).end(), dst.begin() + static_cast<std::ptrdiff_t>(a.cols()));
  }
  return out;
}

Matrix slice_cols(const Matrix& a, std::size_t begin, std::size_t end) {
  if (begin >= end || end > a.cols()) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") outside " + a.shape_string());
  }
  Matrix out(a.rows(), end - begin);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto src = a.row(i);
    std::copy(src.begin() + static_cast<std::ptrdiff_t>(begin),
              src.begin() + static_cast<std::ptrdiff_t>(end), out.row(i).begin());
  }
  return out;
}

Matrix softmax_rows(const Matrix& a) {
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto src = a.row(i);
    auto dst = out.row(i);
    const double mx = *std::max_element(src.begin(), src.end());
    double total = 0.0;
    for (std::size_t j = 0; j < src.size(); ++j) {
      dst[j] = std::exp(src[j] - mx);
      total += dst[j];
    }
    for (double& v : dst) v /= total;
  }
  return out;
}

double sum_squares(const Matrix& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return s;
}

}  // namespace clora
