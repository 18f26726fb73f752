#include <cstdlib>
#include <string>

#include "ltkd/error.hpp"
#include "ltkd/kernels.hpp"

namespace ltkd::kernels {

std::string_view isa_name(Isa isa) noexcept {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
  }
  return "unknown";
}

bool supported(Isa isa) noexcept {
  switch (isa) {
    case Isa::scalar: return true;
    case Isa::avx2:
#if defined(LTKD_HAVE_AVX2)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::neon:
#if defined(LTKD_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& table(Isa isa) {
  if (!supported(isa))
    throw ContractError("kernel variant '" + std::string(isa_name(isa)) + "' is not supported here");
  switch (isa) {
#if defined(LTKD_HAVE_AVX2)
    case Isa::avx2: return detail::avx2_table();
#endif
#if defined(LTKD_HAVE_NEON)
    case Isa::neon: return detail::neon_table();
#endif
    default: return detail::scalar_table();
  }
}

namespace {

const KernelTable& choose() {
  if (const char* env = std::getenv("LTKD_SIMD")) {
    const std::string want(env);
    for (Isa isa : {Isa::scalar, Isa::avx2, Isa::neon})
      if (want == isa_name(isa)) return supported(isa) ? table(isa) : detail::scalar_table();
  }
  for (Isa isa : {Isa::avx2, Isa::neon})
    if (supported(isa)) return table(isa);
  return detail::scalar_table();
}

}  // namespace

const KernelTable& active() {
  static const KernelTable& chosen = choose();
  return chosen;
}

}  // namespace ltkd::kernels
