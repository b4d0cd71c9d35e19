// Compiled with -mavx2 (and without -mfma). Only reached after a runtime
// CPU check in dispatch.cpp.

#include <immintrin.h>

#include <cmath>

#include "clora/kernels.hpp"

namespace clora::kernels::detail {
namespace {

// Register-blocks 16 output columns; every element still accumulates
// ascending p starting from +0.0, matching the scalar reference.
template <bool kTransposedA>
void gemm_avx2(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
               double* c) {
  auto a_at = [&](std::size_t i, std::size_t p) {
    return kTransposedA ? a[p * m + i] : a[i * k + p];
  };
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    std::size_t j = 0;
    for (; j + 16 <= n; j += 16) {
      __m256d acc0 = _mm256_setzero_pd();
      __m256d acc1 = _mm256_setzero_pd();
      __m256d acc2 = _mm256_setzero_pd();
      __m256d acc3 = _mm256_setzero_pd();
      for (std::size_t p = 0; p < k; ++p) {
        const __m256d av = _mm256_set1_pd(a_at(i, p));
        const double* brow = b + p * n + j;
        acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(av, _mm256_loadu_pd(brow)));
        acc1 = _mm256_add_pd(acc1, _mm256_mul_pd(av, _mm256_loadu_pd(brow + 4)));
        acc2 = _mm256_add_pd(acc2, _mm256_mul_pd(av, _mm256_loadu_pd(brow + 8)));
        acc3 = _mm256_add_pd(acc3, _mm256_mul_pd(av, _mm256_loadu_pd(brow + 12)));
      }
      _mm256_storeu_pd(crow + j, acc0);
      _mm256_storeu_pd(crow + j + 4, acc1);
      _mm256_storeu_pd(crow + j + 8, acc2);
      _mm256_storeu_pd(crow + j + 12, acc3);
    }
    for (; j + 4 <= n; j += 4) {
      __m256d acc = _mm256_setzero_pd();
      for (std::size_t p = 0; p < k; ++p) {
        const __m256d av = _mm256_set1_pd(a_at(i, p));
        acc = _mm256_add_pd(acc, _mm256_mul_pd(av, _mm256_loadu_pd(b + p * n + j)));
      }
      _mm256_storeu_pd(crow + j, acc);
    }
    for (; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc = acc + a_at(i, p) * b[p * n + j];
      crow[j] = acc;
    }
  }
}

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
  gemm_avx2<false>(m, k, n, a, b, c);
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
  gemm_avx2<true>(m, k, n, a, b, c);
}

template <typename VecOp, typename ScalarOp>
inline void binary(std::size_t n, const double* x, const double* y, double* out, VecOp vop,
                   ScalarOp sop) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, vop(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) out[i] = sop(x[i], y[i]);
}

void add(std::size_t n, const double* x, const double* y, double* out) {
  binary(n, x, y, out, [](__m256d a, __m256d b) { return _mm256_add_pd(a, b); },
         [](double a, double b) { return a + b; });
}

void sub(std::size_t n, const double* x, const double* y, double* out) {
  binary(n, x, y, out, [](__m256d a, __m256d b) { return _mm256_sub_pd(a, b); },
         [](double a, double b) { return a - b; });
}

void hadamard(std::size_t n, const double* x, const double* y, double* out) {
  binary(n, x, y, out, [](__m256d a, __m256d b) { return _mm256_mul_pd(a, b); },
         [](double a, double b) { return a * b; });
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d prod = _mm256_mul_pd(av, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
  }
  for (; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

void scale(std::size_t n, double alpha, const double* x, double* out) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = alpha * x[i];
}

// MAXPD returns the second operand for NaN or signed-zero ties, so
// max(x, +0) reproduces the scalar `x > 0 ? x : 0` exactly.
void relu(std::size_t n, const double* x, double* out) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, _mm256_max_pd(_mm256_loadu_pd(x + i), zero));
  for (; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(std::size_t n, const double* pre, const double* grad, double* out) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(pre + i), zero, _CMP_GT_OQ);
    _mm256_storeu_pd(out + i, _mm256_and_pd(mask, _mm256_loadu_pd(grad + i)));
  }
  for (; i < n; ++i) out[i] = pre[i] > 0.0 ? grad[i] : 0.0;
}

void adam_update(std::size_t n, double* param, const double* grad, double* m, double* v,
                 const AdamCoeffs& k) {
  const double one_minus_b1 = 1.0 - k.beta1;
  const double one_minus_b2 = 1.0 - k.beta2;
  const __m256d b1 = _mm256_set1_pd(k.beta1);
  const __m256d b2 = _mm256_set1_pd(k.beta2);
  const __m256d omb1 = _mm256_set1_pd(one_minus_b1);
  const __m256d omb2 = _mm256_set1_pd(one_minus_b2);
  const __m256d bc1 = _mm256_set1_pd(k.bias_correction1);
  const __m256d bc2 = _mm256_set1_pd(k.bias_correction2);
  const __m256d lr = _mm256_set1_pd(k.lr);
  const __m256d eps = _mm256_set1_pd(k.eps);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d g = _mm256_loadu_pd(grad + i);
    const __m256d mi =
        _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m + i)), _mm256_mul_pd(omb1, g));
    const __m256d vi = _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(v + i)),
                                     _mm256_mul_pd(omb2, _mm256_mul_pd(g, g)));
    _mm256_storeu_pd(m + i, mi);
    _mm256_storeu_pd(v + i, vi);
    const __m256d m_hat = _mm256_div_pd(mi, bc1);
    const __m256d v_hat = _mm256_div_pd(vi, bc2);
    const __m256d step =
        _mm256_div_pd(_mm256_mul_pd(lr, m_hat), _mm256_add_pd(_mm256_sqrt_pd(v_hat), eps));
    _mm256_storeu_pd(param + i, _mm256_sub_pd(_mm256_loadu_pd(param + i), step));
  }
  for (; i < n; ++i) {
    const double g = grad[i];
    m[i] = k.beta1 * m[i] + one_minus_b1 * g;
    v[i] = k.beta2 * v[i] + one_minus_b2 * (g * g);
    const double m_hat = m[i] / k.bias_correction1;
    const double v_hat = v[i] / k.bias_correction2;
    param[i] = param[i] - k.lr * m_hat / (std::sqrt(v_hat) + k.eps);
  }
}

constexpr KernelTable kAvx2{
    Isa::avx2, gemm_nn, gemm_tn, add,  sub,           hadamard,
    axpy,      scale,   relu,    relu_backward, adam_update,
};

}  // namespace

const KernelTable& avx2_table() noexcept { return kAvx2; }

}  // namespace clora::kernels::detail
