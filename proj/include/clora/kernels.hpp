#pragma once

// Raw double-precision kernels with a scalar reference implementation and
// SIMD variants (AVX2 on x86-64, NEON on AArch64) chosen at runtime.
//
// Every variant accumulates in the same order as the scalar reference and
// never fuses multiply-add, so all variants are bitwise identical. The
// equivalence tests rely on that.

#include <cstddef>
#include <vector>

namespace clora::kernels {

enum class Isa { scalar, avx2, neon };

const char* isa_name(Isa isa) noexcept;

struct AdamCoeffs {
  double lr;
  double beta1;
  double beta2;
  double eps;
  double bias_correction1;  // 1 - beta1^t
  double bias_correction2;  // 1 - beta2^t
};

struct KernelTable {
  Isa isa;

  // c[m x n] = a[m x k] * b[k x n]; each c[i][j] sums p = 0..k-1 ascending.
  void (*gemm_nn)(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
                  double* c);
  // c[m x n] = a^T * b with a stored [k x m], b stored [k x n]; ascending p.
  void (*gemm_tn)(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
                  double* c);

  void (*add)(std::size_t n, const double* x, const double* y, double* out);
  void (*sub)(std::size_t n, const double* x, const double* y, double* out);
  void (*hadamard)(std::size_t n, const double* x, const double* y, double* out);
  // y += alpha * x
  void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
  void (*scale)(std::size_t n, double alpha, const double* x, double* out);
  void (*relu)(std::size_t n, const double* x, double* out);
  // out = pre > 0 ? grad : 0
  void (*relu_backward)(std::size_t n, const double* pre, const double* grad, double* out);
  void (*adam_update)(std::size_t n, double* param, const double* grad, double* m, double* v,
                      const AdamCoeffs& coeffs);
};

const KernelTable& scalar_table() noexcept;

/// Tables compiled into this binary and supported by the running CPU,
/// scalar first.
std::vector<const KernelTable*> available_tables();

/// The table used by the Matrix-level operations. Picks the widest supported
/// ISA unless the CLORA_KERNELS environment variable names another one
/// ("scalar", "avx2", "neon").
const KernelTable& active() noexcept;

/// Overrides the active table (tests and benchmarks). Returns false when the
/// requested ISA is unavailable.
bool select(Isa isa) noexcept;

namespace detail {
#if defined(__x86_64__) || defined(_M_X64)
const KernelTable& avx2_table() noexcept;
#endif
#if defined(__aarch64__)
const KernelTable& neon_table() noexcept;
#endif
}  // namespace detail

}  // namespace clora::kernels
