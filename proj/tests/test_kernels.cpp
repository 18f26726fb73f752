#include <doctest.h>

#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "ltkd/error.hpp"
#include "ltkd/kernels.hpp"

using namespace ltkd;
namespace k = ltkd::kernels;

namespace {

std::vector<double> random_vector(std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

std::vector<k::Isa> available_isas() {
  std::vector<k::Isa> out;
  for (k::Isa isa : {k::Isa::scalar, k::Isa::avx2, k::Isa::neon})
    if (k::supported(isa)) out.push_back(isa);
  return out;
}

}  // namespace

TEST_CASE("scalar kernels on hand-computed values") {
  const auto& s = k::table(k::Isa::scalar);
  const double x[] = {1, 2, 3};
  const double y[] = {4, -5, 6};
  CHECK(s.dot(x, y, 3) == 12.0);

  double acc[] = {1, 1, 1};
  s.axpy(2.0, x, acc, 3);
  CHECK(acc[0] == 3.0);
  CHECK(acc[1] == 5.0);
  CHECK(acc[2] == 7.0);

  // [1 2; 3 4] * [5 6; 7 8] = [19 22; 43 50]
  const double a[] = {1, 2, 3, 4};
  const double b[] = {5, 6, 7, 8};
  double c[4] = {};
  s.gemm(2, 2, 2, a, b, c);
  CHECK(c[0] == 19.0);
  CHECK(c[1] == 22.0);
  CHECK(c[2] == 43.0);
  CHECK(c[3] == 50.0);
}

TEST_CASE("scalar table is always supported and active() is usable") {
  CHECK(k::supported(k::Isa::scalar));
  CHECK(k::table(k::Isa::scalar).isa == k::Isa::scalar);
  CHECK(k::supported(k::active().isa));
  CHECK(k::isa_name(k::Isa::avx2) == "avx2");
}

TEST_CASE("unsupported kernel tables are rejected") {
  for (k::Isa isa : {k::Isa::avx2, k::Isa::neon}) {
    if (!k::supported(isa)) CHECK_THROWS_AS(k::table(isa), ContractError);
  }
}

TEST_CASE("every SIMD variant matches the scalar reference") {
  const auto& ref = k::table(k::Isa::scalar);
  Rng rng = make_rng(7, "kernel-equivalence");
  for (k::Isa isa : available_isas()) {
    const auto& t = k::table(isa);
    CAPTURE(k::isa_name(isa));
    for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 15u, 16u, 17u, 33u, 100u, 257u}) {
      CAPTURE(n);
      const auto x = random_vector(n, rng);
      const auto y = random_vector(n, rng);
      const double scale = 1.0 + static_cast<double>(n);
      CHECK(std::abs(t.dot(x.data(), y.data(), n) - ref.dot(x.data(), y.data(), n)) <=
            1e-12 * scale);

      auto y_ref = y;
      auto y_simd = y;
      ref.axpy(0.37, x.data(), y_ref.data(), n);
      t.axpy(0.37, x.data(), y_simd.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(y_ref[i] - y_simd[i]) <= 1e-14);
    }
    for (auto [m, n, kk] : {std::array<std::size_t, 3>{1, 1, 1}, {3, 5, 7}, {8, 8, 8},
                            {13, 17, 9}, {32, 30, 64}, {5, 33, 2}}) {
      CAPTURE(m);
      CAPTURE(n);
      CAPTURE(kk);
      const auto a = random_vector(m * kk, rng);
      const auto b = random_vector(kk * n, rng);
      const auto at = random_vector(kk * m, rng);  // k x m for gemm_tn
      const auto bt = random_vector(n * kk, rng);  // n x k for gemm_nt
      std::vector<double> c_ref(m * n), c_simd(m * n);
      ref.gemm(m, n, kk, a.data(), b.data(), c_ref.data());
      t.gemm(m, n, kk, a.data(), b.data(), c_simd.data());
      for (std::size_t i = 0; i < m * n; ++i) CHECK(std::abs(c_ref[i] - c_simd[i]) <= 1e-12);
      ref.gemm_tn(m, n, kk, at.data(), b.data(), c_ref.data());
      t.gemm_tn(m, n, kk, at.data(), b.data(), c_simd.data());
      for (std::size_t i = 0; i < m * n; ++i) CHECK(std::abs(c_ref[i] - c_simd[i]) <= 1e-12);
      ref.gemm_nt(m, n, kk, a.data(), bt.data(), c_ref.data());
      t.gemm_nt(m, n, kk, a.data(), bt.data(), c_simd.data());
      for (std::size_t i = 0; i < m * n; ++i) CHECK(std::abs(c_ref[i] - c_simd[i]) <= 1e-12);
    }
  }
}
