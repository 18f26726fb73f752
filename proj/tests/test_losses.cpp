#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "helpers.hpp"
#include "ltkd/check.hpp"
#include "ltkd/error.hpp"
#include "ltkd/losses.hpp"

using namespace ltkd;
using ltkd::testing::random_matrix;

namespace {

const ClassGroups kThree({0, 0, 1, 1, 2, 2}, 3);

}  // namespace

TEST_CASE("KL of known distributions") {
  const std::vector<double> p{1.0, 0.0};
  const std::vector<double> q{0.5, 0.5};
  CHECK(kl(p, q) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(kl(q, q) == 0.0);
  CHECK(std::isfinite(kl(q, p)));  // zero entries are clamped, not infinite
}

TEST_CASE("KD loss of identical logits is zero") {
  Rng rng = make_rng(1, "kd-zero");
  const Matrix z = random_matrix(5, 7, rng);
  CHECK(std::abs(kd_loss(z, z)) < 1e-15);
  CHECK(max_abs_diff(kd_grad(z, z), Matrix(5, 7)) < 1e-15);
}

TEST_CASE("unscaled KD shrinks as the temperature rises") {
  const Matrix zt{{4.0, 1.0, 0.0, -1.0}};
  const Matrix zs{{0.0, 2.0, 1.0, 0.5}};
  double prev = INFINITY;
  for (double tau : {1.0, 2.0, 4.0, 8.0}) {
    const double l = kd_loss(zt, zs, {tau, false});
    CHECK(l < prev);
    prev = l;
  }
  CHECK(kd_loss(zt, zs, {4.0, true}) == doctest::Approx(16.0 * kd_loss(zt, zs, {4.0, false})));
}

TEST_CASE("decomposition reproduces KD on random rows") {
  Rng rng = make_rng(2, "decomposition");
  for (int trial = 0; trial < 300; ++trial) {
    const Matrix z = random_matrix(2, 6, rng, -6.0, 6.0);
    const double tau = 1.0 + trial % 4;
    const auto b = decomposed_kd(z.row(0), z.row(1), kThree, tau);
    double rebuilt = b.inter_term;
    for (std::size_t g = 0; g < 3; ++g) rebuilt += b.intra_weights[g] * b.intra_terms[g];
    CHECK(std::abs(rebuilt - kd_row(z.row(0), z.row(1), tau)) < 1e-12);
    CHECK(std::abs(b.total - rebuilt) < 1e-12);
  }
}

TEST_CASE("target split reproduces the two-part decomposition") {
  Rng rng = make_rng(3, "dkd");
  for (int trial = 0; trial < 300; ++trial) {
    const Matrix z = random_matrix(2, 10, rng, -6.0, 6.0);
    const auto r = dkd_reduction_check(z.row(0), z.row(1), trial % 10, 1.0 + trial % 3);
    CHECK(r.residual < 1e-12);
    CHECK(r.tckd_like >= 0.0);
    CHECK(r.nckd_like >= 0.0);
  }
  const auto g = target_split(2, 5);
  CHECK(g.num_groups() == 2);
  CHECK(g.members(0).size() == 1);
  CHECK(g.members(0)[0] == 2);
}

TEST_CASE("LTKD with uniform stats and teacher weighting equals the decomposed objective") {
  Rng rng = make_rng(4, "ltkd-equivalence");
  const Matrix zt = random_matrix(6, 6, rng);
  const Matrix zs = random_matrix(6, 6, rng);
  const DistillWeights w{2.0, 3.0};
  for (double tau : {1.0, 4.0}) {
    const DistillOptions o{tau, true};
    const auto a = ltkd_loss(zt, zs, kThree, BatchGroupStats::uniform(3), w, o,
                             IntraWeighting::teacher);
    const auto b = decomposed_kd_loss(zt, zs, kThree, w, o);
    CHECK(a.summary.total == doctest::Approx(b.summary.total).epsilon(1e-14));
    CHECK(max_abs_diff(ltkd_grad(zt, zs, kThree, BatchGroupStats::uniform(3), w, o,
                                 IntraWeighting::teacher),
                       decomposed_kd_grad(zt, zs, kThree, w, o)) < 1e-14);
  }
  // With alpha = beta = 1 the decomposed objective is plain KD.
  const auto kd = kd_loss(zt, zs);
  CHECK(decomposed_kd_loss(zt, zs, kThree, {1.0, 1.0}).summary.total ==
        doctest::Approx(kd).epsilon(1e-13));
  CHECK(max_abs_diff(decomposed_kd_grad(zt, zs, kThree, {1.0, 1.0}), kd_grad(zt, zs)) < 1e-14);
}

TEST_CASE("the intra-only objective ignores per-group logit shifts") {
  Rng rng = make_rng(5, "shift-invariance");
  const Matrix zt = random_matrix(4, 6, rng);
  Matrix zs = random_matrix(4, 6, rng);
  const auto stats = batch_group_stats(inter_group_rows(zt, kThree));
  const DistillWeights w{0.0, 1.0};
  const double before = ltkd_loss(zt, zs, kThree, stats, w).summary.total;
  for (std::size_t n = 0; n < 4; ++n) {
    zs(n, 0) += 3.0;
    zs(n, 1) += 3.0;
    zs(n, 4) -= 2.0;
    zs(n, 5) -= 2.0;
  }
  CHECK(ltkd_loss(zt, zs, kThree, stats, w).summary.total ==
        doctest::Approx(before).epsilon(1e-13));
}

TEST_CASE("loss summary JSON layout") {
  Rng rng = make_rng(6, "summary");
  const Matrix zt = random_matrix(3, 6, rng);
  const Matrix zs = random_matrix(3, 6, rng);
  const auto stats = batch_group_stats(inter_group_rows(zt, kThree));
  const auto l = ltkd_loss(zt, zs, kThree, stats, {});
  const auto j = to_json(l.summary);
  CHECK(j.contains("total"));
  CHECK(j.contains("inter"));
  CHECK(j.at("intra").contains("tail"));
  const double parts = l.summary.inter + std::accumulate(l.summary.intra.begin(),
                                                         l.summary.intra.end(), 0.0);
  CHECK(parts == doctest::Approx(l.summary.total));
  CHECK(l.samples.size() == 3);
}

TEST_CASE("analytic LTKD gradient matches autodiff and finite differences") {
  Rng rng = make_rng(7, "ltkd-grad");
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix zt = random_matrix(4, 6, rng);
    const Matrix zs = random_matrix(4, 6, rng);
    const auto stats = batch_group_stats(inter_group_rows(zt, kThree));
    const DistillWeights w{6.0, 6.0};
    const DistillOptions o{1.0 + trial % 3, true};
    const Matrix g = ltkd_grad(zt, zs, kThree, stats, w, o);
    const auto tape = ltkd_loss_autodiff(zt, zs, kThree, stats, w, o);
    CHECK(tape.loss == doctest::Approx(ltkd_loss(zt, zs, kThree, stats, w, o).summary.total));
    CHECK(max_abs_diff(g, tape.grad) < 1e-9);
    const auto f = [&](const Matrix& z) {
      return ltkd_loss(zt, z, kThree, stats, w, o).summary.total;
    };
    CHECK(relative_error(g, finite_difference_grad(f, zs)) < 1e-5);
  }
}

TEST_CASE("cross entropy oracles") {
  const std::size_t labels[] = {0, 3};
  const auto u = ce_loss(Matrix(2, 4), labels);
  CHECK(u.loss == doctest::Approx(std::log(4.0)).epsilon(1e-15));
  CHECK(u.grad(0, 0) == doctest::Approx(-0.75 / 2.0));
  CHECK(u.grad(0, 1) == doctest::Approx(0.25 / 2.0));

  Matrix margin(2, 4);
  margin(0, 0) = 40.0;
  margin(1, 3) = 40.0;
  CHECK(ce_loss(margin, labels).loss < 1e-6);

  CHECK_THROWS(ce_loss(Matrix(2, 4), std::vector<std::size_t>{0, 4}));
}

TEST_CASE("distillation weights are validated") {
  CHECK_THROWS_AS((DistillWeights{-1.0, 1.0}.validate()), ConfigError);
  CHECK_THROWS_AS((DistillWeights{1.0, NAN}.validate()), ConfigError);
  CHECK_NOTHROW(DistillWeights{}.validate());
}
