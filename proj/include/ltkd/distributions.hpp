#pragma once

// Probability constructions over grouped classes: temperature softmax,
// inter-group masses, intra-group renormalization and per-batch teacher
// rebalancing. Everything that can be computed from logits is computed in
// log space with per-group log-sum-exp.

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "ltkd/grouping.hpp"
#include "ltkd/matrix.hpp"

namespace ltkd {

/// Floor for any probability mass used as a divisor or inside a log.
inline constexpr double kProbFloor = 1e-12;

/// Entries in [0,1] summing to 1 within 1e-9; checked on construction.
class ProbVector {
 public:
  explicit ProbVector(std::vector<double> p);

  std::size_t size() const noexcept { return p_.size(); }
  double operator[](std::size_t i) const noexcept { return p_[i]; }
  std::span<const double> values() const noexcept { return p_; }

 private:
  std::vector<double> p_;
};

/// Row log-softmax of z / tau, max-shifted. Throws InputError on non-finite
/// logits or tau <= 0.
std::vector<double> log_softmax(std::span<const double> z, double tau = 1.0);
ProbVector softmax(std::span<const double> z, double tau = 1.0);
Matrix softmax_rows(const Matrix& z, double tau = 1.0);

/// log sum_{i in members} exp(z_i / tau)
double group_logsumexp(std::span<const double> z, std::span<const std::size_t> members,
                       double tau = 1.0);

/// Per-group summed probability mass.
std::vector<double> inter_group(const ProbVector& p, const ClassGroups& g);
/// Per-group log mass computed from logits: lse_G(z/tau) - lse(z/tau).
std::vector<double> log_inter_group(std::span<const double> z, const ClassGroups& g,
                                    double tau = 1.0);

/// Within-group softmax over the group's own logits (never divides by the group mass).
std::vector<std::vector<double>> intra_group(std::span<const double> z, const ClassGroups& g,
                                             double tau = 1.0);
/// Within-group renormalization of probabilities. Throws ContractError when a
/// group's mass is below kProbFloor; use the logits overload there.
std::vector<std::vector<double>> intra_group(const ProbVector& p, const ClassGroups& g);

struct GroupedDistribution {
  std::vector<double> inter;               // one mass per group
  std::vector<std::vector<double>> intra;  // per group, aligned with ClassGroups::members

  /// max_i |p_i - inter[G(i)] * intra[G(i)][i]|
  double reconstruction_error(const ProbVector& p, const ClassGroups& g) const;
};

GroupedDistribution grouped(std::span<const double> z, const ClassGroups& g, double tau = 1.0);
GroupedDistribution grouped(const ProbVector& p, const ClassGroups& g);

/// Per-batch teacher group statistics used for rebalancing.
struct BatchGroupStats {
  std::vector<double> sums;    // column sums of per-sample inter-group masses
  double avg = 0.0;            // mean of `sums`
  std::vector<double> scales;  // avg / max(sum, kProbFloor)

  /// Stats of a perfectly balanced batch: every scale is exactly 1.
  static BatchGroupStats uniform(std::size_t num_groups);
};

/// Stats from an N x k matrix of teacher inter-group masses. Throws ContractError on empty batch.
BatchGroupStats batch_group_stats(const Matrix& teacher_inter);

/// p_hat_i = s_{G(i)} p_i / sum_j s_{G(j)} p_j
ProbVector rebalance(const ProbVector& p, const ClassGroups& g, const BatchGroupStats& stats);

/// Log of the rebalanced inter-group vector, normalize(s_G * p_G), from log masses.
std::vector<double> log_rebalanced_inter(std::span<const double> log_inter,
                                         const BatchGroupStats& stats);

/// N x k matrix of teacher inter-group masses at temperature tau.
Matrix inter_group_rows(const Matrix& logits, const ClassGroups& g, double tau = 1.0);

/// Diagnostic trace: `batch_idx,sum_H,sum_M,sum_T,scale_H,scale_M,scale_T`.
void write_bias_csv_header(std::ostream& out);
void write_bias_csv_row(std::ostream& out, std::size_t batch_idx, const BatchGroupStats& stats);

}  // namespace ltkd
