#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "helpers.hpp"
#include "ltkd/distributions.hpp"
#include "ltkd/error.hpp"

#if defined(LTKD_HAVE_BOOST_MP)
#include <boost/multiprecision/cpp_bin_float.hpp>
#endif

using namespace ltkd;
using ltkd::testing::random_matrix;

namespace {

const ClassGroups kThree({0, 0, 1, 1, 2, 2}, 3);

double total(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TEST_CASE("softmax of equal logits is uniform") {
  const std::vector<double> z{2.0, 2.0, 2.0, 2.0};
  const auto p = softmax(z);
  for (std::size_t i = 0; i < 4; ++i) CHECK(p[i] == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("softmax survives extreme logits") {
  const std::vector<double> z{1000.0, 0.0, -1000.0};
  const auto p = softmax(z);
  CHECK(p[0] == 1.0);
  CHECK(p[2] == 0.0);
  const auto lp = log_softmax(z);
  CHECK(lp[1] == doctest::Approx(-1000.0));
  CHECK(std::isfinite(lp[2]));
}

TEST_CASE("temperature flattens the distribution") {
  const std::vector<double> z{3.0, 1.0, 0.0};
  CHECK(softmax(z, 4.0)[0] < softmax(z, 1.0)[0]);
  CHECK(softmax(z, 2.0)[0] == doctest::Approx(softmax(std::vector<double>{1.5, 0.5, 0.0})[0]));
}

#if defined(LTKD_HAVE_BOOST_MP)
TEST_CASE("log_softmax matches a 50-digit oracle") {
  using big = boost::multiprecision::cpp_bin_float_50;
  Rng rng = make_rng(3, "softmax-oracle");
  for (int trial = 0; trial < 200; ++trial) {
    const Matrix z = random_matrix(1, 12, rng, -30.0, 30.0);
    const double tau = 1.0 + trial % 4;
    big lse = 0;
    for (double v : z.values()) lse += boost::multiprecision::exp(big(v) / tau);
    lse = boost::multiprecision::log(lse);
    const auto lp = log_softmax(z.row(0), tau);
    const auto p = softmax(z.row(0), tau);
    for (std::size_t i = 0; i < 12; ++i) {
      const big exact = big(z(0, i)) / tau - lse;
      CHECK(std::abs(lp[i] - exact.convert_to<double>()) < 1e-13);
      const double pe = boost::multiprecision::exp(exact).convert_to<double>();
      CHECK(std::abs(p[i] - pe) <= 1e-15 + 1e-14 * pe);
    }
  }
}
#endif

TEST_CASE("ProbVector validates its input") {
  CHECK_NOTHROW(ProbVector({0.5, 0.5}));
  CHECK_THROWS_AS(ProbVector({0.5, 0.6}), ContractError);
  CHECK_THROWS_AS(ProbVector({1.5, -0.5}), ContractError);
}

TEST_CASE("inter and intra group distributions of a known vector") {
  const ProbVector p({0.1, 0.2, 0.3, 0.1, 0.2, 0.1});
  const auto inter = inter_group(p, kThree);
  CHECK(inter[0] == doctest::Approx(0.3));
  CHECK(inter[1] == doctest::Approx(0.4));
  CHECK(inter[2] == doctest::Approx(0.3));
  const auto intra = intra_group(p, kThree);
  CHECK(intra[0][0] == doctest::Approx(1.0 / 3.0));
  CHECK(intra[1][0] == doctest::Approx(0.75));
  CHECK(intra[2][1] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("intra group of a massless group is rejected") {
  const ProbVector p({0.5, 0.5, 0.0, 0.0, 0.0, 0.0});
  CHECK_THROWS_AS(intra_group(p, kThree), ContractError);
}

TEST_CASE("grouped distributions reconstruct the flat distribution") {
  Rng rng = make_rng(4, "grouped");
  for (int trial = 0; trial < 200; ++trial) {
    const Matrix z = random_matrix(1, 6, rng, -5.0, 5.0);
    const auto p = softmax(z.row(0));
    const auto gd = grouped(z.row(0), kThree);
    CHECK(total(gd.inter) == doctest::Approx(1.0).epsilon(1e-14));
    for (const auto& part : gd.intra) CHECK(total(part) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(gd.reconstruction_error(p, kThree) < 1e-14);

    const auto li = log_inter_group(z.row(0), kThree);
    for (std::size_t g = 0; g < 3; ++g) CHECK(std::exp(li[g]) == doctest::Approx(gd.inter[g]));
  }
}

TEST_CASE("batch statistics of a two-to-one batch") {
  // Per-group sums [2, 1, 1]: avg 4/3, scales [2/3, 4/3, 4/3].
  const Matrix inter{{1.0, 0.0, 0.0}, {0.5, 0.5, 0.0}, {0.5, 0.0, 0.5}, {0.0, 0.5, 0.5}};
  const auto s = batch_group_stats(inter);
  CHECK(s.sums[0] == doctest::Approx(2.0));
  CHECK(s.avg == doctest::Approx(4.0 / 3.0));
  CHECK(s.scales[0] == doctest::Approx(2.0 / 3.0));
  CHECK(s.scales[1] == doctest::Approx(4.0 / 3.0));
  CHECK(s.scales[2] == doctest::Approx(4.0 / 3.0));
}

TEST_CASE("batch statistics of the head-heavy exemplar") {
  // Group sums of a 64-sample batch skewed toward the head.
  const std::vector<double> sums{27.88, 19.28, 16.83};
  Matrix inter(1, 3);
  for (std::size_t g = 0; g < 3; ++g) inter(0, g) = sums[g];
  const auto s = batch_group_stats(inter);
  CHECK(s.avg == doctest::Approx(21.33).epsilon(1e-3));
  CHECK(s.scales[0] == doctest::Approx(0.765).epsilon(1e-3));
  CHECK(s.scales[1] == doctest::Approx(1.106).epsilon(1e-3));
  CHECK(s.scales[2] == doctest::Approx(1.267).epsilon(1e-3));
  for (std::size_t g = 0; g < 3; ++g) CHECK(s.scales[g] * s.sums[g] == doctest::Approx(s.avg));
}

TEST_CASE("rebalance of a three-class vector") {
  const ClassGroups singletons({0, 1, 2}, 3);
  BatchGroupStats stats;
  stats.sums = {4.0, 2.0, 1.0};
  stats.avg = 2.0;
  stats.scales = {0.5, 1.0, 2.0};
  const auto r = rebalance(ProbVector({0.5, 0.3, 0.2}), singletons, stats);
  CHECK(r[0] == doctest::Approx(0.25 / 0.95));
  CHECK(r[1] == doctest::Approx(0.30 / 0.95));
  CHECK(r[2] == doctest::Approx(0.40 / 0.95));
}

TEST_CASE("uniform statistics leave the distribution untouched") {
  Rng rng = make_rng(5, "rebalance-identity");
  const Matrix z = random_matrix(1, 6, rng);
  const auto p = softmax(z.row(0));
  const auto r = rebalance(p, kThree, BatchGroupStats::uniform(3));
  for (std::size_t i = 0; i < 6; ++i) CHECK(std::abs(r[i] - p[i]) <= 1e-15);
}

TEST_CASE("log rebalanced inter matches the probability route") {
  Rng rng = make_rng(6, "log-rebalance");
  const Matrix z = random_matrix(8, 6, rng);
  const auto stats = batch_group_stats(inter_group_rows(z, kThree));
  for (std::size_t n = 0; n < z.rows(); ++n) {
    const auto p = softmax(z.row(n));
    const auto reb = inter_group(rebalance(p, kThree, stats), kThree);
    const auto lr = log_rebalanced_inter(log_inter_group(z.row(n), kThree), stats);
    for (std::size_t g = 0; g < 3; ++g) CHECK(std::exp(lr[g]) == doctest::Approx(reb[g]));
  }
}

TEST_CASE("bias CSV layout") {
  std::ostringstream out;
  write_bias_csv_header(out);
  BatchGroupStats s;
  s.sums = {2.0, 1.0, 1.0};
  s.avg = 4.0 / 3.0;
  s.scales = {2.0 / 3.0, 4.0 / 3.0, 4.0 / 3.0};
  write_bias_csv_row(out, 3, s);
  const std::string text = out.str();
  CHECK(text.rfind("batch_idx,sum_H,sum_M,sum_T,scale_H,scale_M,scale_T\n", 0) == 0);
  CHECK(text.find("\n3,2,1,1,") != std::string::npos);
}
