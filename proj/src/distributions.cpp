#include "ltkd/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>

#include "ltkd/error.hpp"
#include "ltkd/text.hpp"

namespace ltkd {
namespace {

void require_tau(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw InputError("temperature must be positive");
}

void require_cover(std::size_t n, const ClassGroups& g) {
  if (g.num_classes() != n)
    throw ShapeError("partition covers " + std::to_string(g.num_classes()) + " classes, got " +
                     std::to_string(n));
}

double logsumexp(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (m == -std::numeric_limits<double>::infinity()) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

ProbVector::ProbVector(std::vector<double> p) : p_(std::move(p)) {
  if (p_.empty()) throw ContractError("ProbVector: empty");
  double total = 0.0;
  for (double v : p_) {
    if (!(v >= 0.0 && v <= 1.0)) throw ContractError("ProbVector: entry outside [0,1]");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ContractError("ProbVector: entries do not sum to 1");
}

std::vector<double> log_softmax(std::span<const double> z, double tau) {
  require_tau(tau);
  if (z.empty()) throw InputError("softmax: empty logits");
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (!std::isfinite(z[i])) throw InputError("softmax: non-finite logit");
    out[i] = z[i] / tau;
  }
  const double lse = logsumexp(out);
  for (double& v : out) v -= lse;
  return out;
}

ProbVector softmax(std::span<const double> z, double tau) {
  std::vector<double> p = log_softmax(z, tau);
  double total = 0.0;
  for (double& v : p) {
    v = std::exp(v);
    total += v;
  }
  // exp(log_softmax) sums to 1 only up to a few ulps; fold the remainder back in.
  for (double& v : p) v /= total;
  return ProbVector(std::move(p));
}

Matrix softmax_rows(const Matrix& z, double tau) {
  Matrix out(z.rows(), z.cols());
  for (std::size_t r = 0; r < z.rows(); ++r) {
    ProbVector p = softmax(z.row(r), tau);
    std::copy(p.values().begin(), p.values().end(), out.row(r).begin());
  }
  return out;
}

double group_logsumexp(std::span<const double> z, std::span<const std::size_t> members,
                       double tau) {
  require_tau(tau);
  std::vector<double> scaled;
  scaled.reserve(members.size());
  for (std::size_t i : members) scaled.push_back(z[i] / tau);
  return logsumexp(scaled);
}

std::vector<double> inter_group(const ProbVector& p, const ClassGroups& g) {
  require_cover(p.size(), g);
  std::vector<double> inter(g.num_groups(), 0.0);
  for (std::size_t k = 0; k < g.num_groups(); ++k)
    for (std::size_t i : g.members(k)) inter[k] += p[i];
  return inter;
}

std::vector<double> log_inter_group(std::span<const double> z, const ClassGroups& g, double tau) {
  require_cover(z.size(), g);
  const std::vector<double> logp = log_softmax(z, tau);
  std::vector<double> out(g.num_groups());
  std::vector<double> part;
  for (std::size_t k = 0; k < g.num_groups(); ++k) {
    part.clear();
    for (std::size_t i : g.members(k)) part.push_back(logp[i]);
    out[k] = logsumexp(part);
  }
  return out;
}

std::vector<std::vector<double>> intra_group(std::span<const double> z, const ClassGroups& g,
                                             double tau) {
  require_cover(z.size(), g);
  require_tau(tau);
  std::vector<std::vector<double>> out(g.num_groups());
  for (std::size_t k = 0; k < g.num_groups(); ++k) {
    auto members = g.members(k);
    std::vector<double> sub;
    sub.reserve(members.size());
    for (std::size_t i : members) sub.push_back(z[i]);
    const ProbVector q = softmax(sub, tau);
    out[k].assign(q.values().begin(), q.values().end());
  }
  return out;
}

std::vector<std::vector<double>> intra_group(const ProbVector& p, const ClassGroups& g) {
  require_cover(p.size(), g);
  const std::vector<double> mass = inter_group(p, g);
  std::vector<std::vector<double>> out(g.num_groups());
  for (std::size_t k = 0; k < g.num_groups(); ++k) {
    if (mass[k] < kProbFloor)
      throw ContractError("intra_group: group mass underflows; renormalize from logits instead");
    for (std::size_t i : g.members(k)) out[k].push_back(p[i] / mass[k]);
  }
  return out;
}

double GroupedDistribution::reconstruction_error(const ProbVector& p, const ClassGroups& g) const {
  double worst = 0.0;
  for (std::size_t k = 0; k < g.num_groups(); ++k) {
    auto members = g.members(k);
    for (std::size_t j = 0; j < members.size(); ++j)
      worst = std::max(worst, std::abs(p[members[j]] - inter[k] * intra[k][j]));
  }
  return worst;
}

GroupedDistribution grouped(std::span<const double> z, const ClassGroups& g, double tau) {
  GroupedDistribution d;
  for (double lp : log_inter_group(z, g, tau)) d.inter.push_back(std::exp(lp));
  d.intra = intra_group(z, g, tau);
#ifndef NDEBUG
  if (d.reconstruction_error(softmax(z, tau), g) > 1e-12)
    throw ContractError("grouped: reconstruction identity violated");
#endif
  return d;
}

GroupedDistribution grouped(const ProbVector& p, const ClassGroups& g) {
  GroupedDistribution d{inter_group(p, g), intra_group(p, g)};
#ifndef NDEBUG
  if (d.reconstruction_error(p, g) > 1e-12)
    throw ContractError("grouped: reconstruction identity violated");
#endif
  return d;
}

BatchGroupStats BatchGroupStats::uniform(std::size_t num_groups) {
  return {std::vector<double>(num_groups, 1.0), 1.0, std::vector<double>(num_groups, 1.0)};
}

BatchGroupStats batch_group_stats(const Matrix& teacher_inter) {
  if (teacher_inter.rows() == 0 || teacher_inter.cols() == 0)
    throw ContractError("batch_group_stats: empty batch");
  BatchGroupStats s;
  const Matrix sums = column_sums(teacher_inter);
  s.sums.assign(sums.values().begin(), sums.values().end());
  double total = 0.0;
  for (double v : s.sums) total += v;
  s.avg = total / static_cast<double>(s.sums.size());
  for (double v : s.sums) s.scales.push_back(s.avg / std::max(v, kProbFloor));
  return s;
}

ProbVector rebalance(const ProbVector& p, const ClassGroups& g, const BatchGroupStats& stats) {
  require_cover(p.size(), g);
  if (stats.scales.size() != g.num_groups())
    throw ShapeError("rebalance: stats group count does not match partition");
  std::vector<double> w(p.size());
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    w[i] = stats.scales[g.group_of(i)] * p[i];
    total += w[i];
  }
  if (!(total > 0.0)) throw ContractError("rebalance: weighted mass is zero");
  for (double& v : w) v /= total;
  return ProbVector(std::move(w));
}

std::vector<double> log_rebalanced_inter(std::span<const double> log_inter,
                                         const BatchGroupStats& stats) {
  if (stats.scales.size() != log_inter.size())
    throw ShapeError("log_rebalanced_inter: group count mismatch");
  std::vector<double> out(log_inter.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = std::log(stats.scales[k]) + log_inter[k];
  const double norm = logsumexp(out);
  for (double& v : out) v -= norm;
  return out;
}

Matrix inter_group_rows(const Matrix& logits, const ClassGroups& g, double tau) {
  Matrix out(logits.rows(), g.num_groups());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const std::vector<double> li = log_inter_group(logits.row(r), g, tau);
    for (std::size_t k = 0; k < li.size(); ++k) out(r, k) = std::exp(li[k]);
  }
  return out;
}

void write_bias_csv_header(std::ostream& out) {
  out << "batch_idx,sum_H,sum_M,sum_T,scale_H,scale_M,scale_T\n";
}

void write_bias_csv_row(std::ostream& out, std::size_t batch_idx, const BatchGroupStats& stats) {
  out << batch_idx;
  for (double v : stats.sums) out << ',' << format_shortest(v);
  for (double v : stats.scales) out << ',' << format_shortest(v);
  out << '\n';
}

}  // namespace ltkd
