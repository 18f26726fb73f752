#include "ltkd/check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ltkd/autodiff.hpp"
#include "ltkd/error.hpp"

namespace ltkd {

TapeLoss ltkd_loss_autodiff(const Matrix& zt, const Matrix& zs, const ClassGroups& g,
                            const BatchGroupStats& stats, const DistillWeights& w,
                            const DistillOptions& opts, IntraWeighting weighting) {
  w.validate();
  if (zt.rows() != zs.rows() || zt.cols() != zs.cols()) throw ShapeError("logit shapes differ");
  const std::size_t N = zs.rows();
  const std::size_t k = g.num_groups();

  // Teacher-side constants.
  Matrix target(N, k), log_target(N, k);
  std::vector<Matrix> intra_weighted(k), log_intra(k);
  for (std::size_t G = 0; G < k; ++G) {
    intra_weighted[G] = Matrix(N, g.members(G).size());
    log_intra[G] = Matrix(N, g.members(G).size());
  }
  for (std::size_t r = 0; r < N; ++r) {
    const std::vector<double> logpt = log_softmax(zt.row(r), opts.tau);
    const std::vector<double> lt = log_inter_group(zt.row(r), g, opts.tau);
    const std::vector<double> lhat = log_rebalanced_inter(lt, stats);
    for (std::size_t G = 0; G < k; ++G) {
      target(r, G) = std::exp(lhat[G]);
      log_target(r, G) = lhat[G];
      const double weight = weighting == IntraWeighting::uniform ? w.beta : w.beta * std::exp(lt[G]);
      auto members = g.members(G);
      for (std::size_t j = 0; j < members.size(); ++j) {
        const double lp = logpt[members[j]] - lt[G];
        log_intra[G](r, j) = lp;
        intra_weighted[G](r, j) = weight * std::exp(lp);
      }
    }
  }

  Tape tape;
  const NodeId z = tape.variable(zs);
  const NodeId u = tape.scale(z, 1.0 / opts.tau);
  const NodeId lse_all = tape.logsumexp_rows(u);
  std::vector<NodeId> lse_groups;
  NodeId intra_total{};
  for (std::size_t G = 0; G < k; ++G) {
    const NodeId ug = tape.select_cols(u, g.members(G));
    const NodeId lse_g = tape.logsumexp_rows(ug);
    lse_groups.push_back(lse_g);
    const NodeId log_student_intra = tape.sub_col(ug, lse_g);
    const NodeId gap = tape.sub(tape.constant(log_intra[G]), log_student_intra);
    const NodeId term = tape.sum(tape.hadamard(tape.constant(intra_weighted[G]), gap));
    intra_total = G == 0 ? term : tape.add(intra_total, term);
  }
  const NodeId log_student_inter = tape.sub_col(tape.concat_cols(lse_groups), lse_all);
  const NodeId inter_gap = tape.sub(tape.constant(log_target), log_student_inter);
  const NodeId inter = tape.sum(tape.hadamard(tape.constant(target), inter_gap));
  const NodeId total = tape.scale(tape.add(tape.scale(inter, w.alpha), intra_total),
                                  opts.loss_scale() / static_cast<double>(N));
  const Gradients grads = tape.backward(total);
  return {tape.value(total)(0, 0), grads.wrt(z)};
}

Matrix finite_difference_grad(const std::function<double(const Matrix&)>& f, const Matrix& x,
                              double h) {
  Matrix grad(x.rows(), x.cols());
  Matrix probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe.values()[i];
    probe.values()[i] = orig + h;
    const double up = f(probe);
    probe.values()[i] = orig - h;
    const double down = f(probe);
    probe.values()[i] = orig;
    grad.values()[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double relative_error(const Matrix& a, const Matrix& b, double floor) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.values()[i] - b.values()[i];
    diff += d * d;
    na += a.values()[i] * a.values()[i];
    nb += b.values()[i] * b.values()[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(na) + std::sqrt(nb), floor);
}

ClassGroups random_three_groups(std::size_t num_classes, Rng& rng) {
  if (num_classes < 3) throw PartitionError("need at least 3 classes");
  std::vector<std::size_t> order(num_classes);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::uniform_int_distribution<std::size_t> first(1, num_classes - 2);
  const std::size_t a = first(rng);
  std::uniform_int_distribution<std::size_t> second(a + 1, num_classes - 1);
  const std::size_t b = second(rng);
  std::vector<std::size_t> group_of(num_classes);
  for (std::size_t r = 0; r < num_classes; ++r) group_of[order[r]] = r < a ? 0 : (r < b ? 1 : 2);
  return ClassGroups(std::move(group_of), 3);
}

namespace {

Matrix random_logits(std::size_t rows, std::size_t cols, double spread, Rng& rng) {
  std::normal_distribution<double> normal(0.0, spread);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = normal(rng);
  return m;
}

// Runs `instance(rng)` for each instance; it returns the error statistic to compare
// against the tolerance.
SuiteResult run_suite(const std::string& name, std::uint64_t base_seed, std::size_t instances,
                      double tolerance, const std::function<double(Rng&)>& instance) {
  SuiteResult r{name, true, instances, 0.0, tolerance, std::nullopt, ""};
  for (std::size_t i = 0; i < instances; ++i) {
    const std::uint64_t seed = mix_seed(derive_seed(base_seed, name) + i);
    Rng rng(seed);
    const double err = instance(rng);
    r.worst = std::max(r.worst, std::isnan(err) ? INFINITY : err);
    if (!(err < tolerance) && r.passed) {
      r.passed = false;
      r.failing_seed = seed;
    }
  }
  return r;
}

}  // namespace

std::vector<SuiteResult> run_checks(const CheckOptions& opts) {
  const double fault = opts.inject_fault ? -1.0 : 1.0;
  const double taus[] = {1.0, 2.0, 4.0};
  std::vector<SuiteResult> out;

  out.push_back(run_suite(
      "decomposition-identity", opts.seed, opts.identity_instances, 1e-10, [&](Rng& rng) {
        const std::size_t C = std::uniform_int_distribution<std::size_t>(3, 50)(rng);
        const double tau = taus[std::uniform_int_distribution<int>(0, 2)(rng)];
        const ClassGroups g = random_three_groups(C, rng);
        const Matrix z = random_logits(2, C, 3.0, rng);
        const LossBreakdown b = decomposed_kd(z.row(0), z.row(1), g, tau);
        double rebuilt = fault * b.inter_term;
        for (std::size_t G = 0; G < 3; ++G) rebuilt += b.intra_weights[G] * b.intra_terms[G];
        return std::abs(kd_row(z.row(0), z.row(1), tau) - rebuilt);
      }));

  out.push_back(run_suite("dkd-reduction", opts.seed, opts.identity_instances, 1e-10, [&](Rng& rng) {
    const std::size_t C = std::uniform_int_distribution<std::size_t>(2, 50)(rng);
    const std::size_t target = std::uniform_int_distribution<std::size_t>(0, C - 1)(rng);
    const Matrix z = random_logits(2, C, 3.0, rng);
    const DkdReduction d = dkd_reduction_check(z.row(0), z.row(1), target);
    const double rebuilt = fault * d.tckd_like + d.nckd_like;
    return std::max(d.residual, std::abs(rebuilt - kd_row(z.row(0), z.row(1))));
  }));

  out.push_back(run_suite("rebalance", opts.seed, opts.identity_instances, 1.0, [&](Rng& rng) {
    // Returns the worst error normalized by its own tolerance, so the suite bound is 1.
    const std::size_t C = std::uniform_int_distribution<std::size_t>(3, 50)(rng);
    const std::size_t N = std::uniform_int_distribution<std::size_t>(1, 64)(rng);
    const ClassGroups g = random_three_groups(C, rng);
    const Matrix z = random_logits(N, C, 2.0, rng);
    const BatchGroupStats stats = batch_group_stats(inter_group_rows(z, g));
    double worst = 0.0;
    for (std::size_t G = 0; G < 3; ++G)
      worst = std::max(worst, std::abs(fault * stats.scales[G] * stats.sums[G] - stats.avg) / 1e-9);
    for (std::size_t r = 0; r < N; ++r) {
      const ProbVector hat = rebalance(softmax(z.row(r)), g, stats);
      double total = 0.0;
      for (double v : hat.values()) total += v;
      worst = std::max(worst, std::abs(total - 1.0) / 1e-12);
    }
    // Balanced batch: cyclic shifts of one inter-group vector give equal column sums.
    const ProbVector p = softmax(random_logits(1, C, 2.0, rng).row(0));
    const std::vector<double> m = inter_group(p, g);
    Matrix balanced(3, 3);
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t G = 0; G < 3; ++G) balanced(r, G) = m[(r + G) % 3];
    const BatchGroupStats even = batch_group_stats(balanced);
    const ProbVector same = rebalance(p, g, even);
    for (std::size_t i = 0; i < C; ++i)
      worst = std::max(worst, std::abs(same[i] - p[i]) / 1e-15);
    return worst;
  }));

  out.push_back(run_suite("ltkd-gradient", opts.seed, opts.gradient_instances, 1.0, [&](Rng& rng) {
    // Normalized as above: finite differences at 1e-5 relative, autodiff at 1e-9 absolute.
    const std::size_t C = std::uniform_int_distribution<std::size_t>(3, 20)(rng);
    const std::size_t N = std::uniform_int_distribution<std::size_t>(1, 8)(rng);
    const double tau = taus[std::uniform_int_distribution<int>(0, 2)(rng)];
    const ClassGroups g = random_three_groups(C, rng);
    const Matrix zt = random_logits(N, C, 3.0, rng);
    const Matrix zs = random_logits(N, C, 3.0, rng);
    const BatchGroupStats stats = batch_group_stats(inter_group_rows(zt, g, tau));
    std::uniform_real_distribution<double> weight(0.0, 10.0);
    const DistillWeights w{weight(rng), weight(rng)};
    const DistillOptions o{tau, true};
    const Matrix analytic = scale(ltkd_grad(zt, zs, g, stats, w, o), fault);
    const Matrix fd = finite_difference_grad(
        [&](const Matrix& x) { return ltkd_loss(zt, x, g, stats, w, o).summary.total; }, zs);
    const TapeLoss tape = ltkd_loss_autodiff(zt, zs, g, stats, w, o);
    return std::max(relative_error(analytic, fd) / 1e-5, max_abs_diff(analytic, tape.grad) / 1e-9);
  }));

  return out;
}

}  // namespace ltkd
