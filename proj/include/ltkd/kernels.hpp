#pragma once

// Dense float64 inner loops behind Matrix. Every ISA variant implements the
// same table; the scalar variant is the reference the others are tested against.

#include <cstddef>
#include <string_view>

namespace ltkd::kernels {

enum class Isa { scalar, avx2, neon };

std::string_view isa_name(Isa isa) noexcept;

struct KernelTable {
  Isa isa;
  /// sum_i x[i] * y[i]
  double (*dot)(const double* x, const double* y, std::size_t n);
  /// y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  /// c(m x n) = a(m x k) * b(k x n), all row-major; c is overwritten.
  void (*gemm)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
               double* c);
  /// c(m x n) = a^T * b with a stored (k x m) and b stored (k x n).
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c);
  /// c(m x n) = a * b^T with a stored (m x k) and b stored (n x k).
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c);
};

/// True when the variant was compiled in and the running CPU can execute it.
bool supported(Isa isa) noexcept;

/// Table for a specific variant; throws ContractError when unsupported.
const KernelTable& table(Isa isa);

/// Best supported variant, chosen once per process. LTKD_SIMD=scalar|avx2|neon
/// in the environment overrides the choice (falls back to scalar if unsupported).
const KernelTable& active();

namespace detail {
const KernelTable& scalar_table() noexcept;
#if defined(LTKD_HAVE_AVX2)
const KernelTable& avx2_table() noexcept;
#endif
#if defined(LTKD_HAVE_NEON)
const KernelTable& neon_table() noexcept;
#endif
}  // namespace detail

}  // namespace ltkd::kernels
