#include "ltkd/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <functional>
#include <mutex>
#include <thread>

#include "ltkd/error.hpp"
#include "ltkd/rng.hpp"
#include "ltkd/text.hpp"

namespace ltkd {
namespace {

// Runs task(i) for i in [0, n) on up to `jobs` threads; rethrows the first failure.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& task) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < jobs; ++w)
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          task(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  for (auto& t : workers) t.join();
  if (failure) std::rethrow_exception(failure);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace

void DataConfig::validate() const {
  if (num_classes < 3) throw ConfigError("need at least 3 classes");
  if (base_count < 1) throw ConfigError("base count must be positive");
  if (!(gamma >= 1.0) || !std::isfinite(gamma)) throw ConfigError("gamma must be >= 1");
  if (test_per_class < 1) throw ConfigError("test split needs at least one sample per class");
  if (geometry.dim < 2) throw ConfigError("feature dimension must be >= 2");
  if (!std::isfinite(geometry.separation) || geometry.separation < 0.0)
    throw ConfigError("separation must be finite and non-negative");
}

Datasets make_datasets(const DataConfig& cfg) {
  cfg.validate();
  Datasets d;
  d.spec = make_long_tail_spec(cfg.num_classes, cfg.base_count, cfg.gamma);
  d.train = make_blobs(d.spec.counts, cfg.geometry, Split::train);
  const std::vector<std::size_t> balanced(cfg.num_classes, cfg.test_per_class);
  d.test = make_blobs(balanced, cfg.geometry, Split::test);
  return d;
}

void save_data_dir(const Datasets& d, const DataConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_dataset(d.train, dir / "train.csv");
  save_dataset(d.test, dir / "test.csv");
  nlohmann::json spec{{"data", to_json(cfg)}, {"long_tail", to_json(d.spec)}};
  write_text(dir / "spec.json", spec.dump(2) + "\n");
}

Datasets load_data_dir(const std::filesystem::path& dir) {
  std::ifstream in(dir / "spec.json");
  if (!in) throw Error("cannot open " + (dir / "spec.json").string());
  nlohmann::json spec;
  try {
    spec = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("spec.json: ") + e.what(), 1);
  }
  const auto& lt = spec.at("long_tail");
  Datasets d;
  d.spec.num_classes = lt.at("num_classes").get<std::size_t>();
  d.spec.base_count = lt.at("base_count").get<std::size_t>();
  d.spec.gamma = lt.at("gamma").get<double>();
  d.spec.counts = lt.at("counts").get<std::vector<std::size_t>>();
  d.train = load_dataset(dir / "train.csv", d.spec.num_classes, Split::train);
  d.test = load_dataset(dir / "test.csv", d.spec.num_classes, Split::test);
  if (d.train.dim() != d.test.dim()) throw ShapeError("train and test feature widths differ");
  return d;
}

std::filesystem::path runs_root() {
  if (const char* env = std::getenv("LTKD_RUNS_DIR"); env && *env) return env;
  return "runs";
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.sgd.lr},
          {"momentum", c.sgd.momentum},
          {"weight_decay", c.sgd.weight_decay},
          {"decay_at", c.decay_at},
          {"decay_factor", c.decay_factor}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.sgd.lr = j.at("lr").get<double>();
  c.sgd.momentum = j.at("momentum").get<double>();
  c.sgd.weight_decay = j.at("weight_decay").get<double>();
  c.decay_at = j.value("decay_at", std::vector<double>{});
  c.decay_factor = j.value("decay_factor", 0.1);
  c.validate();
  return c;
}

nlohmann::json to_json(const DataConfig& c) {
  return {{"num_classes", c.num_classes},       {"base_count", c.base_count},
          {"gamma", c.gamma},                   {"test_per_class", c.test_per_class},
          {"dim", c.geometry.dim},              {"separation", c.geometry.separation},
          {"seed", c.geometry.seed}};
}

DataConfig data_config_from_json(const nlohmann::json& j) {
  DataConfig c;
  c.num_classes = j.at("num_classes").get<std::size_t>();
  c.base_count = j.at("base_count").get<std::size_t>();
  c.gamma = j.at("gamma").get<double>();
  c.test_per_class = j.at("test_per_class").get<std::size_t>();
  c.geometry.dim = j.at("dim").get<std::size_t>();
  c.geometry.separation = j.at("separation").get<double>();
  c.geometry.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

nlohmann::json to_json(const TeacherConfig& c) {
  return {{"hidden", c.hidden}, {"train", to_json(c.train)}, {"seed", c.seed}};
}

TeacherConfig teacher_config_from_json(const nlohmann::json& j) {
  TeacherConfig c;
  c.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  c.train = train_config_from_json(j.at("train"));
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

nlohmann::json to_json(const DistillConfig& c) {
  return {{"method", std::string(method_name(c.method))},
          {"alpha", c.weights.alpha},
          {"beta", c.weights.beta},
          {"tau", c.tau},
          {"scale_by_tau_sq", c.scale_by_tau_sq},
          {"ce_weight", c.ce_weight},
          {"group_policy", to_json(c.policy)},
          {"student_hidden", c.student_hidden},
          {"train", to_json(c.train)},
          {"seed", c.seed}};
}

DistillConfig distill_config_from_json(const nlohmann::json& j) {
  DistillConfig c = DistillConfig::defaults_for(parse_method(j.at("method").get<std::string>()));
  c.weights = {j.at("alpha").get<double>(), j.at("beta").get<double>()};
  c.tau = j.at("tau").get<double>();
  c.scale_by_tau_sq = j.value("scale_by_tau_sq", true);
  c.ce_weight = j.at("ce_weight").get<double>();
  c.policy = policy_from_json(j.at("group_policy"));
  c.student_hidden = j.at("student_hidden").get<std::vector<std::size_t>>();
  c.train = train_config_from_json(j.at("train"));
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

void ExperimentConfig::set_seed(std::uint64_t seed) {
  data.geometry.seed = seed;
  teacher.seed = seed;
  distill.seed = seed;
}

nlohmann::json to_json(const ExperimentConfig& c) {
  return {{"data", to_json(c.data)},
          {"teacher", to_json(c.teacher)},
          {"distill", to_json(c.distill)},
          {"trace_batch_size", c.trace_batch_size}};
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  c.data = data_config_from_json(j.at("data"));
  c.teacher = teacher_config_from_json(j.at("teacher"));
  c.distill = distill_config_from_json(j.at("distill"));
  c.trace_batch_size = j.value("trace_batch_size", std::size_t{64});
  return c;
}

void write_metrics_jsonl(const std::vector<EpochLog>& log, const std::filesystem::path& path) {
  std::string text;
  for (const EpochLog& e : log) text += to_json(e).dump() + "\n";
  write_text(path, text);
}

DistillResult run_distill_to_dir(const Mlp& teacher, const Datasets& data,
                                 const GroupPartition& partition, const DistillConfig& cfg,
                                 const std::filesystem::path& dir, nlohmann::json provenance,
                                 std::size_t trace_batch_size) {
  cfg.validate();
  std::filesystem::create_directories(dir);
  provenance["distill"] = to_json(cfg);
  provenance["partition"] = to_json(partition);
  provenance["long_tail"] = to_json(data.spec);
  provenance["trace_batch_size"] = trace_batch_size;
  write_text(dir / "config.json", provenance.dump(2) + "\n");
  save_checkpoint(teacher, dir / "teacher.ckpt");

  {
    std::ofstream trace(dir / "bias_trace.csv");
    write_bias_csv_header(trace);
    const auto stats = batch_bias_trace(teacher, data.train, partition, trace_batch_size,
                                        derive_seed(cfg.seed, "trace"), cfg.tau);
    for (std::size_t b = 0; b < stats.size(); ++b) write_bias_csv_row(trace, b, stats[b]);
  }

  std::ofstream batch_stats(dir / "batch_stats.csv");
  DistillResult result = distill(teacher, data.train, data.test, partition, cfg, {&batch_stats});
  save_checkpoint(result.student, dir / "student.ckpt");
  write_metrics_jsonl(result.log, dir / "metrics.jsonl");
  nlohmann::json summary{{"teacher", to_json(evaluate(teacher, data.test, partition))},
                         {"student", to_json(result.report)}};
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  cfg.distill.validate();
  const Datasets data = make_datasets(cfg.data);
  const GroupPartition partition = build_partition(data.train.class_counts(), cfg.distill.policy);
  ExperimentResult result;
  result.teacher = train_teacher(data.train, data.test, partition, cfg.teacher);
  nlohmann::json provenance{{"data", to_json(cfg.data)}, {"teacher", to_json(cfg.teacher)}};
  result.student = run_distill_to_dir(result.teacher.model, data, partition, cfg.distill, dir,
                                      std::move(provenance), cfg.trace_batch_size);
  return result;
}

std::vector<AblationRow> run_ablation(const AblationPlan& plan,
                                      const std::vector<AblationCell>& cells) {
  if (cells.empty() || plan.seeds.empty()) throw ConfigError("ablation grid is empty");
  struct SeedContext {
    Datasets data;
    std::optional<GroupPartition> partition;
    Mlp teacher;
  };
  std::vector<SeedContext> contexts(plan.seeds.size());
  parallel_for(plan.seeds.size(), plan.jobs, [&](std::size_t s) {
    ExperimentConfig cfg = plan.base;
    cfg.set_seed(plan.seeds[s]);
    SeedContext& ctx = contexts[s];
    ctx.data = make_datasets(cfg.data);
    ctx.partition = build_partition(ctx.data.train.class_counts(), cfg.distill.policy);
    ctx.teacher = train_teacher(ctx.data.train, ctx.data.test, *ctx.partition, cfg.teacher).model;
  });

  std::vector<AblationRow> rows(cells.size() * plan.seeds.size());
  parallel_for(rows.size(), plan.jobs, [&](std::size_t i) {
    const std::size_t c = i / plan.seeds.size();
    const std::size_t s = i % plan.seeds.size();
    ExperimentConfig cfg = plan.base;
    cfg.set_seed(plan.seeds[s]);
    cfg.distill.weights = {cells[c].alpha, cells[c].beta};
    const SeedContext& ctx = contexts[s];
    const DistillResult r =
        distill(ctx.teacher, ctx.data.train, ctx.data.test, *ctx.partition, cfg.distill);
    rows[i] = {cells[c].alpha, cells[c].beta, plan.seeds[s], r.report.tail(), r.report.overall};
  });
  return rows;
}

TwoSweepResult run_two_sweep(const AblationPlan& plan, const std::vector<double>& alphas,
                             const std::vector<double>& betas) {
  if (alphas.empty() || betas.empty()) throw ConfigError("ablation grid is empty");
  TwoSweepResult out;
  std::vector<AblationCell> first;
  for (double a : alphas) first.push_back({a, 1.0});
  out.alpha_sweep = run_ablation(plan, first);

  double best_mean = -1.0;
  for (std::size_t c = 0; c < alphas.size(); ++c) {
    double mean = 0.0;
    for (std::size_t s = 0; s < plan.seeds.size(); ++s)
      mean += out.alpha_sweep[c * plan.seeds.size() + s].all_acc;
    mean /= static_cast<double>(plan.seeds.size());
    if (mean > best_mean) {
      best_mean = mean;
      out.best_alpha = alphas[c];
    }
  }

  std::vector<AblationCell> second;
  for (double b : betas) second.push_back({out.best_alpha, b});
  out.beta_sweep = run_ablation(plan, second);
  return out;
}

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::filesystem::path& path) {
  std::string text = "alpha,beta,seed,tail_acc,all_acc\n";
  for (const AblationRow& r : rows)
    text += format_shortest(r.alpha) + "," + format_shortest(r.beta) + "," + std::to_string(r.seed) +
            "," + format_shortest(r.tail_acc) + "," + format_shortest(r.all_acc) + "\n";
  write_text(path, text);
}

GridFile parse_grid_file(const nlohmann::json& j) {
  GridFile g;
  g.alphas = j.at("alphas").get<std::vector<double>>();
  g.betas = j.at("betas").get<std::vector<double>>();
  const std::string mode = j.value("mode", std::string("grid"));
  if (mode != "grid" && mode != "two-sweep") throw ConfigError("grid mode must be grid or two-sweep");
  g.two_sweep = mode == "two-sweep";
  if (j.contains("seeds")) g.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (g.alphas.empty() || g.betas.empty()) throw ConfigError("ablation grid is empty");
  return g;
}

}  // namespace ltkd
