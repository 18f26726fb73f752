#pragma once

// Run-directory experiments: synthetic data, teacher, distillation and the
// alpha/beta sweep, with every resolved setting written for provenance.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ltkd/data.hpp"
#include "ltkd/pipeline.hpp"

namespace ltkd {

struct DataConfig {
  std::size_t num_classes = 30;
  std::size_t base_count = 200;
  double gamma = 100.0;
  std::size_t test_per_class = 50;
  BlobGeometry geometry{};

  void validate() const;
};

struct Datasets {
  LongTailSpec spec;
  Dataset train;
  Dataset test;
};

/// Long-tailed train split plus a balanced test split sharing blob centers.
Datasets make_datasets(const DataConfig& cfg);

/// Writes train.csv, test.csv and spec.json (data config plus realized counts).
void save_data_dir(const Datasets& d, const DataConfig& cfg, const std::filesystem::path& dir);
/// Reads a directory written by save_data_dir. Throws ParseError/Error on malformed input.
Datasets load_data_dir(const std::filesystem::path& dir);

/// LTKD_RUNS_DIR if set, otherwise "runs".
std::filesystem::path runs_root();

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DataConfig& c);
DataConfig data_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TeacherConfig& c);
TeacherConfig teacher_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DistillConfig& c);
DistillConfig distill_config_from_json(const nlohmann::json& j);

/// Full experiment: data -> teacher -> student. One seed drives every stream.
struct ExperimentConfig {
  DataConfig data{};
  TeacherConfig teacher{};
  DistillConfig distill = DistillConfig::defaults_for(Method::ltkd);
  std::size_t trace_batch_size = 128;

  /// Re-seeds every component from `seed`.
  void set_seed(std::uint64_t seed);
};

nlohmann::json to_json(const ExperimentConfig& c);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);

struct ExperimentResult {
  TeacherResult teacher;
  DistillResult student;
};

/// Writes config.json, teacher.ckpt, student.ckpt, metrics.jsonl and bias_trace.csv into `dir`.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& dir);

/// Distillation half of a run: writes config.json (`provenance` plus the resolved
/// distill config and partition), teacher.ckpt, bias_trace.csv, batch_stats.csv,
/// student.ckpt, metrics.jsonl and summary.json into `dir`.
DistillResult run_distill_to_dir(const Mlp& teacher, const Datasets& data,
                                 const GroupPartition& partition, const DistillConfig& cfg,
                                 const std::filesystem::path& dir, nlohmann::json provenance,
                                 std::size_t trace_batch_size = 128);

/// Writes one JSON object per epoch.
void write_metrics_jsonl(const std::vector<EpochLog>& log, const std::filesystem::path& path);

struct AblationCell {
  double alpha = 1.0;
  double beta = 1.0;
};

struct AblationRow {
  double alpha = 0.0;
  double beta = 0.0;
  std::uint64_t seed = 0;
  double tail_acc = 0.0;
  double all_acc = 0.0;
};

struct AblationPlan {
  ExperimentConfig base{};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::size_t jobs = 1;
};

/// Runs every (cell, seed) pair; the teacher for each seed is trained once and shared.
/// Rows come back ordered by cell, then seed.
std::vector<AblationRow> run_ablation(const AblationPlan& plan, const std::vector<AblationCell>& cells);

struct TwoSweepResult {
  std::vector<AblationRow> alpha_sweep;  // beta = 1, alpha over the alpha grid
  double best_alpha = 0.0;               // highest mean overall accuracy in the alpha sweep
  std::vector<AblationRow> beta_sweep;   // alpha = best_alpha, beta over the beta grid
};

/// Alpha sweep at beta = 1, then a beta sweep at the best alpha.
TwoSweepResult run_two_sweep(const AblationPlan& plan, const std::vector<double>& alphas,
                             const std::vector<double>& betas);

/// Header `alpha,beta,seed,tail_acc,all_acc`.
void write_ablation_csv(const std::vector<AblationRow>& rows, const std::filesystem::path& path);

/// Parses {"alphas": [...], "betas": [...], "mode": "grid"|"two-sweep", "seeds": [...]}.
struct GridFile {
  std::vector<double> alphas;
  std::vector<double> betas;
  bool two_sweep = false;
  std::optional<std::vector<std::uint64_t>> seeds;
};
GridFile parse_grid_file(const nlohmann::json& j);

}  // namespace ltkd
