// AArch64 Advanced SIMD variant; two doubles per lane group. Same ordering
// rules as the AVX2 variant: ascending accumulation, no fused multiply-add.

#if defined(__aarch64__)

#include <arm_neon.h>

#include <cmath>

#include "clora/kernels.hpp"

namespace clora::kernels::detail {
namespace {

template <bool kTransposedA>
void gemm_neon(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
               double* c) {
  auto a_at = [&](std::size_t i, std::size_t p) {
    return kTransposedA ? a[p * m + i] : a[i * k + p];
  };
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
      float64x2_t acc0 = vdupq_n_f64(0.0);
      float64x2_t acc1 = vdupq_n_f64(0.0);
      float64x2_t acc2 = vdupq_n_f64(0.0);
      float64x2_t acc3 = vdupq_n_f64(0.0);
      for (std::size_t p = 0; p < k; ++p) {
        const float64x2_t av = vdupq_n_f64(a_at(i, p));
        const double* brow = b + p * n + j;
        acc0 = vaddq_f64(acc0, vmulq_f64(av, vld1q_f64(brow)));
        acc1 = vaddq_f64(acc1, vmulq_f64(av, vld1q_f64(brow + 2)));
        acc2 = vaddq_f64(acc2, vmulq_f64(av, vld1q_f64(brow + 4)));
        acc3 = vaddq_f64(acc3, vmulq_f64(av, vld1q_f64(brow + 6)));
      }
      vst1q_f64(crow + j, acc0);
      vst1q_f64(crow + j + 2, acc1);
      vst1q_f64(crow + j + 4, acc2);
      vst1q_f64(crow + j + 6, acc3);
    }
    for (; j + 2 <= n; j += 2) {
      float64x2_t acc = vdupq_n_f64(0.0);
      for (std::size_t p = 0; p < k; ++p) {
        acc = vaddq_f64(acc, vmulq_f64(vdupq_n_f64(a_at(i, p)), vld1q_f64(b + p * n + j)));
      }
      vst1q_f64(crow + j, acc);
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
  gemm_neon<false>(m, k, n, a, b, c);
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
  gemm_neon<true>(m, k, n, a, b, c);
}

void add(std::size_t n, const double* x, const double* y, double* out) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vaddq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
  for (; i < n; ++i) out[i] = x[i] + y[i];
}

void sub(std::size_t n, const double* x, const double* y, double* out) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vsubq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
  for (; i < n; ++i) out[i] = x[i] - y[i];
}

void hadamard(std::size_t n, const double* x, const double* y, double* out) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
  for (; i < n; ++i) out[i] = x[i] * y[i];
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
  const float64x2_t av = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vmulq_f64(av, vld1q_f64(x + i))));
  }
  for (; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

void scale(std::size_t n, double alpha, const double* x, double* out) {
  const float64x2_t av = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_f64(av, vld1q_f64(x + i)));
  for (; i < n; ++i) out[i] = alpha * x[i];
}

// Select via compare mask: FMAX would propagate NaN, unlike the scalar form.
void relu(std::size_t n, const double* x, double* out) {
  const float64x2_t zero = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t xv = vld1q_f64(x + i);
    vst1q_f64(out + i, vbslq_f64(vcgtq_f64(xv, zero), xv, zero));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(std::size_t n, const double* pre, const double* grad, double* out) {
  const float64x2_t zero = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const uint64x2_t mask = vcgtq_f64(vld1q_f64(pre + i), zero);
    vst1q_f64(out + i, vbslq_f64(mask, vld1q_f64(grad + i), zero));
  }
  for (; i < n; ++i) out[i] = pre[i] > 0.0 ? grad[i] : 0.0;
}

void adam_update(std::size_t n, double* param, const double* grad, double* m, double* v,
                 const AdamCoeffs& k) {
  const double one_minus_b1 = 1.0 - k.beta1;
  const double one_minus_b2 = 1.0 - k.beta2;
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t g = vld1q_f64(grad + i);
    const float64x2_t mi = vaddq_f64(vmulq_f64(vdupq_n_f64(k.beta1), vld1q_f64(m + i)),
                                     vmulq_f64(vdupq_n_f64(one_minus_b1), g));
    const float64x2_t vi = vaddq_f64(vmulq_f64(vdupq_n_f64(k.beta2), vld1q_f64(v + i)),
                                     vmulq_f64(vdupq_n_f64(one_minus_b2), vmulq_f64(g, g)));
    vst1q_f64(m + i, mi);
    vst1q_f64(v + i, vi);
    const float64x2_t m_hat = vdivq_f64(mi, vdupq_n_f64(k.bias_correction1));
    const float64x2_t v_hat = vdivq_f64(vi, vdupq_n_f64(k.bias_correction2));
    const float64x2_t step = vdivq_f64(vmulq_f64(vdupq_n_f64(k.lr), m_hat),
                                       vaddq_f64(vsqrtq_f64(v_hat), vdupq_n_f64(k.eps)));
    vst1q_f64(param + i, vsubq_f64(vld1q_f64(param + i), step));
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

constexpr KernelTable kNeon{
    Isa::neon, gemm_nn, gemm_tn, add,  sub,           hadamard,
    axpy,      scale,   relu,    relu_backward, adam_update,
};

}  // namespace

const KernelTable& neon_table() noexcept { return kNeon; }

}  // namespace clora::kernels::detail

#endif  // __aarch64__
