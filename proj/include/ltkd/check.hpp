#pragma once

// Self-checking property suites behind `ltkd check`, plus the tape-based
// LTKD gradient used as the independent route for gradient verification.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ltkd/distributions.hpp"
#include "ltkd/grouping.hpp"
#include "ltkd/losses.hpp"
#include "ltkd/matrix.hpp"
#include "ltkd/rng.hpp"

namespace ltkd {

/// LTKD batch loss and its gradient w.r.t. the student logits, built from
/// log-sum-exp primitives on a Tape instead of the closed-form derivative.
struct TapeLoss {
  double loss = 0.0;
  Matrix grad;
};
TapeLoss ltkd_loss_autodiff(const Matrix& zt, const Matrix& zs, const ClassGroups& g,
                            const BatchGroupStats& stats, const DistillWeights& w,
                            const DistillOptions& opts = {},
                            IntraWeighting weighting = IntraWeighting::uniform);

/// Central differences of a scalar function of a matrix.
Matrix finite_difference_grad(const std::function<double(const Matrix&)>& f, const Matrix& x,
                              double h = 1e-6);

/// ||a - b|| / max(||a|| + ||b||, floor), Euclidean norms over all entries.
double relative_error(const Matrix& a, const Matrix& b, double floor = 1e-8);

/// Random cover of 0..C-1 by three non-empty groups (C >= 3).
ClassGroups random_three_groups(std::size_t num_classes, Rng& rng);

struct CheckOptions {
  std::uint64_t seed = 20240601;
  std::size_t identity_instances = 1000;
  std::size_t gradient_instances = 200;
  /// Deliberately corrupts the quantities under test; every suite must then fail.
  bool inject_fault = false;
};

struct SuiteResult {
  std::string name;
  bool passed = true;
  std::size_t instances = 0;
  double worst = 0.0;       // worst observed error statistic
  double tolerance = 0.0;
  std::optional<std::uint64_t> failing_seed;  // per-instance seed of the first failure
  std::string detail;
};

std::vector<SuiteResult> run_checks(const CheckOptions& opts = {});

}  // namespace ltkd
