#pragma once

// Distillation objectives. All batch losses are means over rows; gradients
// are with respect to the student logits of that batch mean. Teacher-side
// quantities are constants.

#include <cstddef>
#include <span>
#include <vector>

#include <json.hpp>

#include "ltkd/distributions.hpp"
#include "ltkd/grouping.hpp"
#include "ltkd/matrix.hpp"

namespace ltkd {

struct DistillWeights {
  double alpha = 6.0;  // inter-group term
  double beta = 6.0;   // intra-group terms
  /// Throws ConfigError unless both are finite and >= 0.
  void validate() const;
};

struct DistillOptions {
  double tau = 1.0;
  /// Multiply distillation terms by tau^2 when tau != 1.
  bool scale_by_tau_sq = true;

  double loss_scale() const noexcept {
    return (scale_by_tau_sq && tau != 1.0) ? tau * tau : 1.0;
  }
};

/// How the per-group intra KL terms are weighted.
enum class IntraWeighting {
  uniform,  // beta * sum_G KL_G
  teacher,  // beta * sum_G pT_G * KL_G (the weighting plain KD implies)
};

/// One sample's grouped KL terms.
/// total == loss_scale * (inter_weight * inter_term + sum_G intra_weights[G] * intra_terms[G]).
struct LossBreakdown {
  double total = 0.0;
  double inter_term = 0.0;
  std::vector<double> intra_terms;
  double inter_weight = 1.0;
  std::vector<double> intra_weights;
};

/// Batch means of each weighted contribution; total == inter + sum(intra).
struct LossSummary {
  double total = 0.0;
  double inter = 0.0;
  std::vector<double> intra;
};

/// {"total":..., "inter":..., "intra": {"head":..., "medium":..., "tail":...}}
nlohmann::json to_json(const LossSummary& s);

struct BatchLoss {
  LossSummary summary;
  std::vector<LossBreakdown> samples;
};

/// sum_i p_i log(p_i / max(q_i, 1e-12)); terms with p_i == 0 contribute 0.
double kl(std::span<const double> p, std::span<const double> q);

/// KL(softmax(zt/tau) || softmax(zs/tau)) for one row, unscaled, in log space.
double kd_row(std::span<const double> zt, std::span<const double> zs, double tau = 1.0);

/// Mean-over-batch vanilla KD, times tau^2 per options.
double kd_loss(const Matrix& zt, const Matrix& zs, const DistillOptions& opts = {});
Matrix kd_grad(const Matrix& zt, const Matrix& zs, const DistillOptions& opts = {});

/// Unscaled grouped decomposition of one row's KD:
/// inter KL plus teacher-mass-weighted intra KLs.
LossBreakdown decomposed_kd(std::span<const double> zt, std::span<const double> zs,
                            const ClassGroups& g, double tau = 1.0);

/// Batch decomposed KD with alpha on the inter term and beta * pT_G on each
/// intra term. alpha = beta = 1 reproduces kd_loss.
BatchLoss decomposed_kd_loss(const Matrix& zt, const Matrix& zs, const ClassGroups& g,
                             const DistillWeights& w, const DistillOptions& opts = {});
Matrix decomposed_kd_grad(const Matrix& zt, const Matrix& zs, const ClassGroups& g,
                          const DistillWeights& w, const DistillOptions& opts = {});

/// alpha * KL(rebalanced teacher inter || student inter) + beta * sum_G KL(intra_G),
/// with the rebalancing taken from `stats` (computed from this batch's teacher).
BatchLoss ltkd_loss(const Matrix& zt, const Matrix& zs, const ClassGroups& g,
                    const BatchGroupStats& stats, const DistillWeights& w,
                    const DistillOptions& opts = {},
                    IntraWeighting weighting = IntraWeighting::uniform);
Matrix ltkd_grad(const Matrix& zt, const Matrix& zs, const ClassGroups& g,
                 const BatchGroupStats& stats, const DistillWeights& w,
                 const DistillOptions& opts = {},
                 IntraWeighting weighting = IntraWeighting::uniform);

/// Two groups: {target} and everything else.
ClassGroups target_split(std::size_t target, std::size_t num_classes);

struct DkdReduction {
  double tckd_like = 0.0;  // KL of binary target/non-target distributions
  double nckd_like = 0.0;  // teacher non-target mass * non-target intra KL
  double residual = 0.0;   // |tckd_like + nckd_like - full KL|
};

DkdReduction dkd_reduction_check(std::span<const double> zt, std::span<const double> zs,
                                 std::size_t target, double tau = 1.0);

struct CeResult {
  double loss = 0.0;
  Matrix grad;  // d(mean loss)/d logits
};

/// Mean (optionally class-weighted) cross-entropy at tau = 1. Throws InputError
/// for labels outside [0, C).
CeResult ce_loss(const Matrix& zs, std::span<const std::size_t> labels,
                 std::span<const double> class_weights = {});

}  // namespace ltkd
