#pragma once

// Teacher training, student distillation and per-group evaluation.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ltkd/data.hpp"
#include "ltkd/distributions.hpp"
#include "ltkd/grouping.hpp"
#include "ltkd/losses.hpp"
#include "ltkd/model.hpp"

namespace ltkd {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  SgdConfig sgd{};
  /// Epoch fractions at which the learning rate is multiplied by decay_factor.
  std::vector<double> decay_at{};
  double decay_factor = 0.1;

  void validate() const;
  double lr_at_epoch(std::size_t epoch) const;
};

enum class Method { kd, ltkd, decomposed };
std::string_view method_name(Method m) noexcept;
Method parse_method(std::string_view s);

struct TeacherConfig {
  std::vector<std::size_t> hidden{128, 128};
  TrainConfig train{};
  std::uint64_t seed = 0;
};

struct DistillConfig {
  Method method = Method::ltkd;
  DistillWeights weights{};
  double tau = 1.0;
  bool scale_by_tau_sq = true;
  double ce_weight = 1.0;
  GroupPolicy policy{};
  std::vector<std::size_t> student_hidden{32};
  TrainConfig train{};
  std::uint64_t seed = 0;

  /// Method defaults: kd uses tau = 4, the grouped methods tau = 1.
  static DistillConfig defaults_for(Method m);
  /// Throws ConfigError on non-finite or out-of-range fields.
  void validate() const;
  DistillOptions options() const { return {tau, scale_by_tau_sq}; }
};

struct EvalReport {
  std::array<double, 3> group_accuracy{};  // percent, mean of member-class accuracies
  double overall = 0.0;                    // percent, unweighted class mean
  std::vector<double> per_class;           // percent; NaN for classes absent from the test set
  std::vector<std::size_t> per_class_count;
  std::size_t samples = 0;

  double head() const { return group_accuracy[0]; }
  double medium() const { return group_accuracy[1]; }
  double tail() const { return group_accuracy[2]; }
};

EvalReport evaluate_predictions(std::span<const std::size_t> labels,
                                std::span<const std::size_t> predictions,
                                const GroupPartition& partition);
EvalReport evaluate(const Mlp& model, const Dataset& test, const GroupPartition& partition);
std::vector<std::size_t> predict(const Mlp& model, const Matrix& x);

/// Per-batch objective: receives the batch logits and row indices, returns
/// dL/dlogits and reports the batch loss through `loss`.
using BatchObjective =
    std::function<Matrix(const Matrix& logits, std::span<const std::size_t> rows, double& loss)>;
using EpochHook = std::function<void(std::size_t epoch, const Mlp& model)>;

/// Shuffled mini-batch SGD over `data`. Batch order comes from `seed`.
/// Throws DivergenceError when a loss or parameter becomes non-finite.
void train_loop(Mlp& model, const Dataset& data, const TrainConfig& cfg, std::uint64_t seed,
                const BatchObjective& objective, const EpochHook& on_epoch = {});

/// Row order of every batch for `epochs` epochs of shuffled training.
std::vector<std::vector<std::size_t>> batch_schedule(std::size_t n, std::size_t batch_size,
                                                     std::uint64_t seed, std::size_t epochs = 1);

struct TeacherResult {
  Mlp model;
  EvalReport report;
  std::vector<double> epoch_loss;
};

/// Cross-entropy training of a [D, hidden..., C] network.
TeacherResult train_teacher(const Dataset& train, const Dataset& test,
                            const GroupPartition& partition, const TeacherConfig& cfg);

struct EpochLog {
  std::size_t epoch = 0;
  LossSummary distill;
  double ce = 0.0;
  double total = 0.0;
  /// method=decomposed: max per-sample |KD - (inter + sum pT_G intra_G)| over the epoch.
  std::optional<double> identity_residual;
  EvalReport eval;
};

nlohmann::json to_json(const EpochLog& log);
nlohmann::json to_json(const EvalReport& r);

struct DistillResult {
  Mlp student;
  EvalReport report;
  std::vector<EpochLog> log;
};

struct DistillSinks {
  std::ostream* batch_stats_csv = nullptr;  // one row per batch of teacher group stats
};

/// Distill `teacher` into a fresh student. Per batch: teacher logits (constant),
/// batch group statistics, configured loss, one SGD step.
DistillResult distill(const Mlp& teacher, const Dataset& train, const Dataset& test,
                      const GroupPartition& partition, const DistillConfig& cfg,
                      DistillSinks sinks = {});

/// Student trained on cross-entropy alone with the same initialization and
/// batch order distill() would use for `cfg`: the no-distillation baseline.
TeacherResult train_ce_student(const Dataset& train, const Dataset& test,
                               const GroupPartition& partition, const DistillConfig& cfg);

/// Teacher group sums and scales for each batch of one shuffled pass over `data`.
std::vector<BatchGroupStats> batch_bias_trace(const Mlp& teacher, const Dataset& data,
                                              const GroupPartition& partition,
                                              std::size_t batch_size, std::uint64_t seed,
                                              double tau = 1.0);

}  // namespace ltkd
