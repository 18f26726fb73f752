#include "ltkd/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ltkd/error.hpp"

namespace ltkd {
namespace {

void require_same_shape(const Matrix& zt, const Matrix& zs) {
  if (zt.rows() != zs.rows() || zt.cols() != zs.cols())
    throw ShapeError("teacher and student logits differ in shape");
  if (zt.rows() == 0) throw ShapeError("empty batch");
}

// p * (logp - logq), with the 0 * log 0 = 0 convention.
double kl_term(double logp, double logq) {
  const double p = std::exp(logp);
  return p == 0.0 ? 0.0 : p * (logp - logq);
}

struct GroupedKlSpec {
  double alpha = 1.0;
  double beta = 1.0;
  IntraWeighting weighting = IntraWeighting::teacher;
  const BatchGroupStats* stats = nullptr;  // rebalance the teacher inter target when set
  double tau = 1.0;
  double scale = 1.0;
};

// One row of the grouped objective. When `grad` is non-null, adds d(total)/dz_s into it.
LossBreakdown grouped_row(std::span<const double> zt, std::span<const double> zs,
                          const ClassGroups& g, const GroupedKlSpec& spec, double* grad) {
  const std::size_t C = zt.size();
  if (zs.size() != C) throw ShapeError("teacher and student rows differ in length");
  const std::vector<double> logpt = log_softmax(zt, spec.tau);
  const std::vector<double> logps = log_softmax(zs, spec.tau);
  const std::vector<double> lt = log_inter_group(zt, g, spec.tau);
  const std::vector<double> ls = log_inter_group(zs, g, spec.tau);
  const std::vector<double> target = spec.stats ? log_rebalanced_inter(lt, *spec.stats) : lt;
  const std::size_t k = g.num_groups();

  LossBreakdown b;
  b.inter_weight = spec.alpha;
  for (std::size_t G = 0; G < k; ++G) b.inter_term += kl_term(target[G], ls[G]);

  b.intra_terms.assign(k, 0.0);
  b.intra_weights.assign(k, spec.beta);
  for (std::size_t G = 0; G < k; ++G) {
    if (spec.weighting == IntraWeighting::teacher) b.intra_weights[G] = spec.beta * std::exp(lt[G]);
    for (std::size_t i : g.members(G))
      b.intra_terms[G] += kl_term(logpt[i] - lt[G], logps[i] - ls[G]);
  }

  double raw = spec.alpha * b.inter_term;
  for (std::size_t G = 0; G < k; ++G) raw += b.intra_weights[G] * b.intra_terms[G];
  b.total = spec.scale * raw;

  if (grad) {
    const double factor = spec.scale / spec.tau;
    for (std::size_t i = 0; i < C; ++i) {
      const std::size_t G = g.group_of(i);
      const double ps = std::exp(logps[i]);
      const double ps_intra = std::exp(logps[i] - ls[G]);
      const double pt_intra = std::exp(logpt[i] - lt[G]);
      const double d_inter = spec.alpha * (ps - std::exp(target[G]) * ps_intra);
      const double d_intra = b.intra_weights[G] * (ps_intra - pt_intra);
      grad[i] += factor * (d_inter + d_intra);
    }
  }
  return b;
}

BatchLoss grouped_batch(const Matrix& zt, const Matrix& zs, const ClassGroups& g,
                        const GroupedKlSpec& spec, Matrix* grad) {
  require_same_shape(zt, zs);
  if (g.num_classes() != zt.cols()) throw ShapeError("partition does not match class count");
  const double n = static_cast<double>(zt.rows());
  BatchLoss out;
  out.summary.intra.assign(g.num_groups(), 0.0);
  if (grad) *grad = Matrix(zs.rows(), zs.cols());
  for (std::size_t r = 0; r < zt.rows(); ++r) {
    LossBreakdown b = grouped_row(zt.row(r), zs.row(r), g, spec, grad ? grad->row(r).data() : nullptr);
    out.summary.total += b.total / n;
    out.summary.inter += spec.scale * b.inter_weight * b.inter_term / n;
    for (std::size_t G = 0; G < g.num_groups(); ++G)
      out.summary.intra[G] += spec.scale * b.intra_weights[G] * b.intra_terms[G] / n;
    out.samples.push_back(std::move(b));
  }
  if (grad)
    for (double& v : grad->values()) v /= n;
  return out;
}

GroupedKlSpec ltkd_spec(const BatchGroupStats& stats, const DistillWeights& w,
                        const DistillOptions& opts, IntraWeighting weighting) {
  w.validate();
  return {w.alpha, w.beta, weighting, &stats, opts.tau, opts.loss_scale()};
}

GroupedKlSpec decomposed_spec(const DistillWeights& w, const DistillOptions& opts) {
  w.validate();
  return {w.alpha, w.beta, IntraWeighting::teacher, nullptr, opts.tau, opts.loss_scale()};
}

}  // namespace

void DistillWeights::validate() const {
  if (!std::isfinite(alpha) || !std::isfinite(beta) || alpha < 0.0 || beta < 0.0)
    throw ConfigError("distillation weights must be finite and non-negative");
}

nlohmann::json to_json(const LossSummary& s) {
  nlohmann::json intra = nlohmann::json::object();
  for (std::size_t G = 0; G < s.intra.size(); ++G) {
    const std::string key = s.intra.size() == 3 ? std::string(group_name(kGroups[G]))
                                                : "g" + std::to_string(G);
    intra[key] = s.intra[G];
  }
  return {{"total", s.total}, {"inter", s.inter}, {"intra", intra}};
}

double kl(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ShapeError("kl: length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    total += p[i] * (std::log(std::max(p[i], kProbFloor)) - std::log(std::max(q[i], kProbFloor)));
  }
  return total;
}

double kd_row(std::span<const double> zt, std::span<const double> zs, double tau) {
  if (zt.size() != zs.size()) throw ShapeError("kd_row: length mismatch");
  const std::vector<double> lt = log_softmax(zt, tau);
  const std::vector<double> ls = log_softmax(zs, tau);
  double total = 0.0;
  for (std::size_t i = 0; i < lt.size(); ++i) total += kl_term(lt[i], ls[i]);
  return total;
}

double kd_loss(const Matrix& zt, const Matrix& zs, const DistillOptions& opts) {
  require_same_shape(zt, zs);
  double total = 0.0;
  for (std::size_t r = 0; r < zt.rows(); ++r) total += kd_row(zt.row(r), zs.row(r), opts.tau);
  return opts.loss_scale() * total / static_cast<double>(zt.rows());
}

Matrix kd_grad(const Matrix& zt, const Matrix& zs, const DistillOptions& opts) {
  require_same_shape(zt, zs);
  const Matrix pt = softmax_rows(zt, opts.tau);
  const Matrix ps = softmax_rows(zs, opts.tau);
  const double factor = opts.loss_scale() / (opts.tau * static_cast<double>(zt.rows()));
  return scale(sub(ps, pt), factor);
}

LossBreakdown decomposed_kd(std::span<const double> zt, std::span<const double> zs,
                            const ClassGroups& g, double tau) {
  if (g.num_classes() != zt.size()) throw ShapeError("partition does not match class count");
  GroupedKlSpec spec;
  spec.tau = tau;
  return grouped_row(zt, zs, g, spec, nullptr);
}

BatchLoss decomposed_kd_loss(const Matrix& zt, const Matrix& zs, const ClassGroups& g,
                             const DistillWeights& w, const DistillOptions& opts) {
  return grouped_batch(zt, zs, g, decomposed_spec(w, opts), nullptr);
}

Matrix decomposed_kd_grad(const Matrix& zt, const Matrix& zs, const ClassGroups& g,
                          const DistillWeights& w, const DistillOptions& opts) {
  Matrix grad;
  grouped_batch(zt, zs, g, decomposed_spec(w, opts), &grad);
  return grad;
}

BatchLoss ltkd_loss(const Matrix& zt, const Matrix& zs, const ClassGroups& g,
                    const BatchGroupStats& stats, const DistillWeights& w,
                    const DistillOptions& opts, IntraWeighting weighting) {
  return grouped_batch(zt, zs, g, ltkd_spec(stats, w, opts, weighting), nullptr);
}

Matrix ltkd_grad(const Matrix& zt, const Matrix& zs, const ClassGroups& g,
                 const BatchGroupStats& stats, const DistillWeights& w,
                 const DistillOptions& opts, IntraWeighting weighting) {
  Matrix grad;
  grouped_batch(zt, zs, g, ltkd_spec(stats, w, opts, weighting), &grad);
  return grad;
}

ClassGroups target_split(std::size_t target, std::size_t num_classes) {
  if (num_classes < 2) throw ShapeError("target split needs at least two classes");
  if (target >= num_classes) throw InputError("target class out of range");
  std::vector<std::size_t> group_of(num_classes, 1);
  group_of[target] = 0;
  return ClassGroups(std::move(group_of), 2);
}

DkdReduction dkd_reduction_check(std::span<const double> zt, std::span<const double> zs,
                                 std::size_t target, double tau) {
  const ClassGroups split = target_split(target, zt.size());
  const LossBreakdown b = decomposed_kd(zt, zs, split, tau);
  DkdReduction r;
  r.tckd_like = b.inter_term;
  // The {target} group is a singleton: its intra distributions are both [1].
  r.nckd_like = b.intra_weights[1] * b.intra_terms[1];
  r.residual = std::abs(r.tckd_like + r.nckd_like + b.intra_weights[0] * b.intra_terms[0] -
                        kd_row(zt, zs, tau));
  return r;
}

CeResult ce_loss(const Matrix& zs, std::span<const std::size_t> labels,
                 std::span<const double> class_weights) {
  if (labels.size() != zs.rows()) throw ShapeError("ce_loss: one label per row required");
  if (!class_weights.empty() && class_weights.size() != zs.cols())
    throw ShapeError("ce_loss: one weight per class required");
  const double n = static_cast<double>(zs.rows());
  CeResult out{0.0, Matrix(zs.rows(), zs.cols())};
  for (std::size_t r = 0; r < zs.rows(); ++r) {
    if (labels[r] >= zs.cols())
      throw InputError("ce_loss: label " + std::to_string(labels[r]) + " out of range");
    const double w = class_weights.empty() ? 1.0 : class_weights[labels[r]];
    const std::vector<double> logp = log_softmax(zs.row(r));
    out.loss -= w * logp[labels[r]] / n;
    for (std::size_t c = 0; c < zs.cols(); ++c)
      out.grad(r, c) = w * (std::exp(logp[c]) - (c == labels[r] ? 1.0 : 0.0)) / n;
  }
  return out;
}

}  // namespace ltkd
