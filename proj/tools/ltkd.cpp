// ltkd: command-line front end for data generation, teacher training,
// distillation, evaluation, the property checks and the alpha/beta sweep.
//
// Exit codes: 0 success, 1 usage or configuration, 2 data/format/file, 3 check failure.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ltkd/check.hpp"
#include "ltkd/data.hpp"
#include "ltkd/error.hpp"
#include "ltkd/experiment.hpp"
#include "ltkd/grouping.hpp"
#include "ltkd/kernels.hpp"
#include "ltkd/model.hpp"
#include "ltkd/pipeline.hpp"
#include "ltkd/text.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitCheck = 3;

void write_json(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  std::ofstream out(path);
  if (!out) throw ltkd::Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

fs::path resolve_out(const std::string& flag, const std::string& fallback) {
  return flag.empty() ? ltkd::runs_root() / fallback : fs::path(flag);
}

std::string seed_tag(std::uint64_t seed) { return "seed" + std::to_string(seed); }

// Options shared by every command that builds or reads synthetic data.
struct DataFlags {
  std::size_t classes = 30;
  std::size_t base = 200;
  double gamma = 100.0;
  std::size_t test_per_class = 50;
  std::size_t dim = 16;
  double sep = 4.0;

  void add(CLI::App& app) {
    app.add_option("--classes", classes, "Number of classes")->check(CLI::PositiveNumber);
    app.add_option("--base", base, "Training samples of the largest class")
        ->check(CLI::PositiveNumber);
    app.add_option("--gamma", gamma, "Imbalance factor (>= 1)");
    app.add_option("--test-per-class", test_per_class, "Balanced test samples per class")
        ->check(CLI::PositiveNumber);
    app.add_option("--dim", dim, "Feature dimension")->check(CLI::PositiveNumber);
    app.add_option("--sep", sep, "Norm of every class center");
  }

  ltkd::DataConfig config(std::uint64_t seed) const {
    ltkd::DataConfig c;
    c.num_classes = classes;
    c.base_count = base;
    c.gamma = gamma;
    c.test_per_class = test_per_class;
    c.geometry.dim = dim;
    c.geometry.separation = sep;
    c.geometry.seed = seed;
    c.validate();
    return c;
  }
};

struct TrainFlags {
  std::size_t epochs = 30;
  std::size_t batch = 64;
  double lr = ltkd::SgdConfig{}.lr;
  double momentum = ltkd::SgdConfig{}.momentum;
  double weight_decay = ltkd::SgdConfig{}.weight_decay;

  void add(CLI::App& app) {
    app.add_option("--epochs", epochs, "Training epochs")->check(CLI::PositiveNumber);
    app.add_option("--batch", batch, "Mini-batch size")->check(CLI::PositiveNumber);
    app.add_option("--lr", lr, "SGD learning rate");
    app.add_option("--momentum", momentum, "SGD momentum");
    app.add_option("--weight-decay", weight_decay, "L2 weight decay");
  }

  ltkd::TrainConfig config() const {
    ltkd::TrainConfig c;
    c.epochs = epochs;
    c.batch_size = batch;
    c.sgd = {lr, momentum, weight_decay};
    c.validate();
    return c;
  }
};

struct DistillFlags {
  std::string method = "ltkd";
  std::optional<double> alpha;
  std::optional<double> beta;
  std::optional<double> tau;
  double ce_weight = 1.0;
  std::vector<std::size_t> hidden{32};

  void add(CLI::App& app) {
    app.add_option("--method", method, "kd | ltkd | decomposed")
        ->check(CLI::IsMember({"kd", "ltkd", "decomposed"}));
    app.add_option("--alpha", alpha, "Inter-group weight");
    app.add_option("--beta", beta, "Intra-group weight");
    app.add_option("--tau", tau, "Softmax temperature (kd: 4, otherwise 1)");
    app.add_option("--ce-weight", ce_weight, "Weight of the cross-entropy term");
    app.add_option("--student-hidden", hidden, "Student hidden widths")->delimiter(',');
  }

  ltkd::DistillConfig config(const ltkd::TrainConfig& train, std::uint64_t seed) const {
    auto c = ltkd::DistillConfig::defaults_for(ltkd::parse_method(method));
    if (alpha) c.weights.alpha = *alpha;
    if (beta) c.weights.beta = *beta;
    if (tau) c.tau = *tau;
    c.ce_weight = ce_weight;
    c.student_hidden = hidden;
    c.train = train;
    c.seed = seed;
    c.validate();
    return c;
  }
};

void print_report(const std::string& label, const ltkd::EvalReport& r) {
  std::cout << label << ": head " << ltkd::format_shortest(r.head()) << "  medium "
            << ltkd::format_shortest(r.medium()) << "  tail " << ltkd::format_shortest(r.tail())
            << "  all " << ltkd::format_shortest(r.overall) << '\n';
}

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find(',', start), text.size());
    const std::string item = text.substr(start, end - start);
    if (!item.empty()) {
      const auto v = ltkd::parse_double(item);
      if (!v) throw ltkd::ConfigError(std::string("bad value in ") + what + ": '" + item + "'");
      out.push_back(*v);
    }
    start = end + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Group-decomposed knowledge distillation for long-tailed data"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every command");

  std::uint64_t seed = 0;
  std::string out;

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate long-tailed synthetic blobs");
  DataFlags gen_data;
  gen_data.add(*gen);
  gen->add_option("--seed", seed, "Run seed");
  gen->add_option("--out", out, "Output directory");

  // train-teacher
  auto* teach = app.add_subcommand("train-teacher", "Train the teacher with cross-entropy");
  std::string data_dir;
  TrainFlags teach_train;
  std::vector<std::size_t> teacher_hidden{128, 128};
  teach->add_option("--data", data_dir, "Directory written by gen-data")->required();
  teach_train.add(*teach);
  teach->add_option("--hidden", teacher_hidden, "Teacher hidden widths")->delimiter(',');
  teach->add_option("--seed", seed, "Run seed");
  teach->add_option("--out", out, "Output directory");

  // distill
  auto* dist = app.add_subcommand("distill", "Distill a teacher into a fresh student");
  std::string teacher_path;
  DistillFlags dist_flags;
  TrainFlags dist_train;
  dist->add_option("--teacher", teacher_path, "Teacher checkpoint")->required();
  dist->add_option("--data", data_dir, "Directory written by gen-data")->required();
  dist_flags.add(*dist);
  dist_train.add(*dist);
  dist->add_option("--seed", seed, "Run seed");
  dist->add_option("--out", out, "Output directory");

  // eval
  auto* ev = app.add_subcommand("eval", "Per-group accuracy of a checkpoint");
  std::string model_path;
  ev->add_option("--model", model_path, "Checkpoint to evaluate")->required();
  ev->add_option("--data", data_dir, "Directory written by gen-data")->required();
  ev->add_option("--out", out, "Write the report as JSON to this file");

  // check
  auto* chk = app.add_subcommand("check", "Run the property suites");
  ltkd::CheckOptions check_opts;
  chk->add_option("--seed", check_opts.seed, "Master seed of the suites");
  chk->add_option("--instances", check_opts.identity_instances, "Instances per identity suite");
  chk->add_option("--gradient-instances", check_opts.gradient_instances,
                  "Instances of the gradient suite");
  chk->add_flag("--inject-fault", check_opts.inject_fault)->group("");

  // ablate
  auto* abl = app.add_subcommand("ablate", "Sweep alpha and beta over several seeds");
  DataFlags abl_data;
  TrainFlags abl_train;
  std::string alphas_text;
  std::string betas_text;
  std::string grid_path;
  std::vector<std::uint64_t> abl_seeds{0, 1, 2};
  bool two_sweep = false;
  std::size_t jobs = 1;
  abl_data.add(*abl);
  abl_train.add(*abl);
  abl->add_option("--alphas", alphas_text, "Comma-separated alpha values");
  abl->add_option("--betas", betas_text, "Comma-separated beta values");
  abl->add_option("--grid", grid_path, "JSON grid file {alphas, betas, mode, seeds}");
  abl->add_flag("--two-sweep", two_sweep, "Alpha sweep at beta = 1, then beta at the best alpha");
  abl->add_option("--seeds", abl_seeds, "Comma-separated seeds")->delimiter(',');
  abl->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  abl->add_option("--out", out, "Output CSV");

  // bias-trace
  auto* bias = app.add_subcommand("bias-trace", "Per-batch teacher group sums and scales");
  std::size_t trace_batch = 128;
  double trace_tau = 1.0;
  bias->add_option("--teacher", teacher_path, "Teacher checkpoint")->required();
  bias->add_option("--data", data_dir, "Directory written by gen-data")->required();
  bias->add_option("--batch", trace_batch, "Batch size")->check(CLI::PositiveNumber);
  bias->add_option("--tau", trace_tau, "Softmax temperature");
  bias->add_option("--seed", seed, "Batch-order seed");
  bias->add_option("--out", out, "Output CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) {
      const auto cfg = gen_data.config(seed);
      const fs::path dir = resolve_out(out, "data-" + seed_tag(seed));
      const auto data = ltkd::make_datasets(cfg);
      ltkd::save_data_dir(data, cfg, dir);
      write_json(dir / "config.json", {{"command", "gen-data"}, {"data", ltkd::to_json(cfg)}});
      std::cout << "wrote " << dir.string() << '\n'
                << "train samples " << data.train.size() << ", min class count "
                << *std::min_element(data.spec.counts.begin(), data.spec.counts.end())
                << ", realized imbalance factor "
                << ltkd::format_shortest(ltkd::imbalance_factor(data.spec.counts)) << '\n';
      return kExitOk;
    }

    if (*teach) {
      const auto data = ltkd::load_data_dir(data_dir);
      ltkd::TeacherConfig cfg;
      cfg.hidden = teacher_hidden;
      cfg.train = teach_train.config();
      cfg.seed = seed;
      const auto partition =
          ltkd::build_partition(data.train.class_counts(), ltkd::GroupPolicy{});
      const fs::path dir = resolve_out(out, "teacher-" + seed_tag(seed));
      fs::create_directories(dir);
      write_json(dir / "config.json", {{"command", "train-teacher"},
                                       {"data_dir", data_dir},
                                       {"teacher", ltkd::to_json(cfg)},
                                       {"partition", ltkd::to_json(partition)}});
      const auto result = ltkd::train_teacher(data.train, data.test, partition, cfg);
      ltkd::save_checkpoint(result.model, dir / "teacher.ckpt");
      write_json(dir / "summary.json", {{"teacher", ltkd::to_json(result.report)},
                                        {"epoch_loss", result.epoch_loss}});
      print_report("teacher", result.report);
      std::cout << "wrote " << (dir / "teacher.ckpt").string() << '\n';
      return kExitOk;
    }

    if (*dist) {
      if (!fs::exists(teacher_path)) throw ltkd::Error("teacher checkpoint not found: " + teacher_path);
      const auto cfg = dist_flags.config(dist_train.config(), seed);
      const auto data = ltkd::load_data_dir(data_dir);
      const auto teacher = ltkd::load_checkpoint(teacher_path);
      if (teacher.input_dim() != data.train.dim() ||
          teacher.num_classes() != data.spec.num_classes) {
        throw ltkd::ShapeError("teacher checkpoint does not match the data dimensions");
      }
      const auto partition = ltkd::build_partition(data.train.class_counts(), cfg.policy);
      const fs::path dir =
          resolve_out(out, std::string(ltkd::method_name(cfg.method)) + "-" + seed_tag(seed));
      json provenance{{"command", "distill"}, {"data_dir", data_dir}, {"teacher_path", teacher_path}};
      const auto result =
          ltkd::run_distill_to_dir(teacher, data, partition, cfg, dir, std::move(provenance));
      print_report("student", result.report);
      if (cfg.method == ltkd::Method::decomposed) {
        double worst = 0.0;
        for (const auto& e : result.log) worst = std::max(worst, e.identity_residual.value_or(0.0));
        std::cout << "max identity residual " << ltkd::format_shortest(worst) << '\n';
      }
      std::cout << "wrote " << dir.string() << '\n';
      return kExitOk;
    }

    if (*ev) {
      const auto data = ltkd::load_data_dir(data_dir);
      const auto model = ltkd::load_checkpoint(model_path);
      if (model.input_dim() != data.test.dim() || model.num_classes() != data.spec.num_classes) {
        throw ltkd::ShapeError("checkpoint does not match the data dimensions");
      }
      const auto partition =
          ltkd::build_partition(data.train.class_counts(), ltkd::GroupPolicy{});
      const auto report = ltkd::evaluate(model, data.test, partition);
      print_report(model_path, report);
      if (!out.empty()) {
        write_json(out, {{"command", "eval"},
                         {"model", model_path},
                         {"data_dir", data_dir},
                         {"partition", ltkd::to_json(partition)},
                         {"report", ltkd::to_json(report)}});
      }
      return kExitOk;
    }

    if (*chk) {
      std::cout << "simd: " << ltkd::kernels::isa_name(ltkd::kernels::active().isa) << '\n';
      bool all_passed = true;
      for (const auto& s : ltkd::run_checks(check_opts)) {
        all_passed = all_passed && s.passed;
        std::cout << (s.passed ? "PASS " : "FAIL ") << s.name << "  instances " << s.instances
                  << "  worst " << ltkd::format_shortest(s.worst) << "  tolerance "
                  << ltkd::format_shortest(s.tolerance);
        if (s.failing_seed) std::cout << "  failing seed " << *s.failing_seed;
        if (!s.detail.empty()) std::cout << "  (" << s.detail << ')';
        std::cout << '\n';
      }
      return all_passed ? kExitOk : kExitCheck;
    }

    if (*abl) {
      std::vector<double> alphas;
      std::vector<double> betas;
      if (!grid_path.empty()) {
        std::ifstream in(grid_path);
        if (!in) throw ltkd::Error("cannot open grid file " + grid_path);
        json j;
        try {
          j = json::parse(in);
        } catch (const json::parse_error& e) {
          throw ltkd::ParseError(grid_path + ": " + e.what(), 1);
        }
        const auto grid = ltkd::parse_grid_file(j);
        alphas = grid.alphas;
        betas = grid.betas;
        two_sweep = two_sweep || grid.two_sweep;
        if (grid.seeds) abl_seeds = *grid.seeds;
      }
      if (!alphas_text.empty()) alphas = parse_list(alphas_text, "--alphas");
      if (!betas_text.empty()) betas = parse_list(betas_text, "--betas");
      if (two_sweep) {
        if (alphas.empty()) alphas = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
        if (betas.empty()) betas = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
      }
      if (alphas.empty() || betas.empty() || abl_seeds.empty()) {
        throw ltkd::ConfigError("empty ablation grid: give --alphas and --betas, --grid or --two-sweep");
      }

      ltkd::AblationPlan plan;
      plan.base.data = abl_data.config(0);
      plan.base.teacher.train = abl_train.config();
      plan.base.distill.train = abl_train.config();
      plan.seeds = abl_seeds;
      plan.jobs = jobs;

      const fs::path csv = resolve_out(out, two_sweep ? "ablation-two-sweep.csv" : "ablation.csv");
      json provenance{{"command", "ablate"},
                      {"mode", two_sweep ? "two-sweep" : "grid"},
                      {"alphas", alphas},
                      {"betas", betas},
                      {"seeds", abl_seeds},
                      {"base", ltkd::to_json(plan.base)}};

      std::vector<ltkd::AblationRow> rows;
      if (two_sweep) {
        auto sweep = ltkd::run_two_sweep(plan, alphas, betas);
        rows = std::move(sweep.alpha_sweep);
        rows.insert(rows.end(), sweep.beta_sweep.begin(), sweep.beta_sweep.end());
        provenance["best_alpha"] = sweep.best_alpha;
        std::cout << "best alpha " << ltkd::format_shortest(sweep.best_alpha) << '\n';
      } else {
        std::vector<ltkd::AblationCell> cells;
        for (double a : alphas)
          for (double b : betas) cells.push_back({a, b});
        rows = ltkd::run_ablation(plan, cells);
      }
      if (!csv.parent_path().empty()) fs::create_directories(csv.parent_path());
      ltkd::write_ablation_csv(rows, csv);
      write_json(fs::path(csv.string() + ".config.json"), provenance);
      std::cout << "wrote " << rows.size() << " rows to " << csv.string() << '\n';
      return kExitOk;
    }

    if (*bias) {
      const auto data = ltkd::load_data_dir(data_dir);
      if (!fs::exists(teacher_path)) throw ltkd::Error("teacher checkpoint not found: " + teacher_path);
      const auto teacher = ltkd::load_checkpoint(teacher_path);
      const auto partition =
          ltkd::build_partition(data.train.class_counts(), ltkd::GroupPolicy{});
      const auto stats =
          ltkd::batch_bias_trace(teacher, data.train, partition, trace_batch, seed, trace_tau);
      const fs::path csv = resolve_out(out, "bias-trace-" + seed_tag(seed) + ".csv");
      if (!csv.parent_path().empty()) fs::create_directories(csv.parent_path());
      std::ofstream f(csv);
      if (!f) throw ltkd::Error("cannot write " + csv.string());
      ltkd::write_bias_csv_header(f);
      std::size_t head_heavier = 0;
      for (std::size_t b = 0; b < stats.size(); ++b) {
        ltkd::write_bias_csv_row(f, b, stats[b]);
        if (stats[b].sums[0] > stats[b].sums[2]) ++head_heavier;
      }
      write_json(fs::path(csv.string() + ".config.json"),
                 {{"command", "bias-trace"},
                  {"teacher_path", teacher_path},
                  {"data_dir", data_dir},
                  {"batch_size", trace_batch},
                  {"tau", trace_tau},
                  {"seed", seed},
                  {"partition", ltkd::to_json(partition)}});
      std::cout << stats.size() << " batches, head sum above tail sum in " << head_heavier
                << '\n'
                << "wrote " << csv.string() << '\n';
      return kExitOk;
    }
  } catch (const ltkd::ConfigError& e) {
    std::cerr << "ltkd: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ltkd::PartitionError& e) {
    std::cerr << "ltkd: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ltkd::Error& e) {
    std::cerr << "ltkd: " << e.what() << '\n';
    return kExitData;
  } catch (const json::exception& e) {
    std::cerr << "ltkd: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "ltkd: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
