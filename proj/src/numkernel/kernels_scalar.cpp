#include <cmath>

#include "clora/kernels.hpp"

namespace clora::kernels {
namespace {

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] = crow[j] + aip * brow[j];
    }
  }
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
  for (std::size_t i = 0; i < m * n; ++i) c[i] = 0.0;
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double api = arow[i];
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] = crow[j] + api * brow[j];
    }
  }
}

void add(std::size_t n, const double* x, const double* y, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + y[i];
}

void sub(std::size_t n, const double* x, const double* y, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] - y[i];
}

void hadamard(std::size_t n, const double* x, const double* y, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

void scale(std::size_t n, double alpha, const double* x, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = alpha * x[i];
}

void relu(std::size_t n, const double* x, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(std::size_t n, const double* pre, const double* grad, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = pre[i] > 0.0 ? grad[i] : 0.0;
}

void adam_update(std::size_t n, double* param, const double* grad, double* m, double* v,
                 const AdamCoeffs& k) {
  const double one_minus_b1 = 1.0 - k.beta1;
  const double one_minus_b2 = 1.0 - k.beta2;
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i];
    m[i] = k.beta1 * m[i] + one_minus_b1 * g;
    v[i] = k.beta2 * v[i] + one_minus_b2 * (g * g);
    const double m_hat = m[i] / k.bias_correction1;
    const double v_hat = v[i] / k.bias_correction2;
    param[i] = param[i] - k.lr * m_hat / (std::sqrt(v_hat) + k.eps);
  }
}

constexpr KernelTable kScalar{
    Isa::scalar, gemm_nn, gemm_tn, add,  sub,           hadamard,
    axpy,        scale,   relu,    relu_backward, adam_update,
};

}  // namespace

const KernelTable& scalar_table() noexcept { return kScalar; }

}  // namespace clora::kernels
