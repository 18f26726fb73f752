#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "ltkd/error.hpp"
#include "ltkd/experiment.hpp"
#include "ltkd/pipeline.hpp"

using namespace ltkd;
namespace fs = std::filesystem;

namespace {

struct SmallWorld {
  Datasets data;
  GroupPartition partition;
  Mlp teacher;
};

const SmallWorld& world() {
  static const SmallWorld w = [] {
    DataConfig dc;
    dc.num_classes = 9;
    dc.base_count = 60;
    dc.gamma = 10.0;
    dc.test_per_class = 20;
    dc.geometry.dim = 8;
    dc.geometry.seed = 5;
    auto data = make_datasets(dc);
    auto partition = build_partition(data.train.class_counts(), GroupPolicy{});
    TeacherConfig tc;
    tc.hidden = {32};
    tc.train.epochs = 10;
    tc.seed = 5;
    auto teacher = train_teacher(data.train, data.test, partition, tc).model;
    return SmallWorld{std::move(data), std::move(partition), std::move(teacher)};
  }();
  return w;
}

DistillConfig small_config(Method m) {
  auto c = DistillConfig::defaults_for(m);
  c.student_hidden = {16};
  c.train.epochs = 4;
  c.train.batch_size = 32;
  c.seed = 9;
  return c;
}

}  // namespace

TEST_CASE("evaluation of a perfect classifier") {
  const std::vector<std::size_t> counts{100, 50, 10, 5, 2, 1};
  const auto p = build_partition(counts, GroupPolicy{});
  const std::vector<std::size_t> labels{0, 1, 2, 3, 4, 5, 0, 4};
  const auto r = evaluate_predictions(labels, labels, p);
  CHECK(r.overall == 100.0);
  CHECK(r.head() == 100.0);
  CHECK(r.tail() == 100.0);
  CHECK(r.samples == 8);
}

TEST_CASE("a constant head predictor scores zero on the tail") {
  const std::vector<std::size_t> counts{100, 50, 10, 5, 2, 1};
  const auto p = build_partition(counts, GroupPolicy{});
  std::vector<std::size_t> labels;
  for (std::size_t c = 0; c < 6; ++c)
    for (int i = 0; i < 10; ++i) labels.push_back(c);
  const std::vector<std::size_t> preds(labels.size(), 0);
  const auto r = evaluate_predictions(labels, preds, p);
  CHECK(r.head() == 50.0);
  CHECK(r.medium() == 0.0);
  CHECK(r.tail() == 0.0);
  CHECK(r.overall == doctest::Approx(100.0 / 6.0));
}

TEST_CASE("a random predictor stays near chance") {
  std::vector<std::size_t> counts(10, 100);
  const auto p = build_partition(counts, GroupPolicy{});
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> pick(0, 9);
  std::vector<std::size_t> labels, preds;
  for (std::size_t c = 0; c < 10; ++c)
    for (int i = 0; i < 1000; ++i) {
      labels.push_back(c);
      preds.push_back(pick(rng));
    }
  // 10000 Bernoulli(0.1) draws: standard deviation 0.3 points; allow five.
  const auto r = evaluate_predictions(labels, preds, p);
  CHECK(std::abs(r.overall - 10.0) < 1.5);
}

TEST_CASE("evaluation input validation") {
  const std::vector<std::size_t> counts{3, 2, 1};
  const auto p = build_partition(counts, GroupPolicy{});
  CHECK_THROWS_AS(evaluate_predictions(std::vector<std::size_t>{0, 1},
                                       std::vector<std::size_t>{0}, p),
                  ShapeError);
  CHECK_THROWS_AS(evaluate_predictions(std::vector<std::size_t>{7},
                                       std::vector<std::size_t>{0}, p),
                  InputError);
}

TEST_CASE("batch schedules cover every row once per epoch") {
  const auto s = batch_schedule(10, 4, 1, 2);
  REQUIRE(s.size() == 6);
  CHECK(s[2].size() == 2);
  std::vector<int> seen(10, 0);
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t i : s[b]) ++seen[i];
  for (int v : seen) CHECK(v == 1);
  CHECK(batch_schedule(10, 4, 1, 2) == s);
  CHECK(batch_schedule(10, 4, 2, 2) != s);
}

TEST_CASE("learning-rate decay schedule") {
  TrainConfig c;
  c.epochs = 10;
  c.decay_at = {0.5, 0.8};
  c.sgd.lr = 1.0;
  CHECK(c.lr_at_epoch(0) == 1.0);
  CHECK(c.lr_at_epoch(5) == doctest::Approx(0.1));
  CHECK(c.lr_at_epoch(9) == doctest::Approx(0.01));
}

TEST_CASE("config validation") {
  auto c = DistillConfig::defaults_for(Method::ltkd);
  CHECK(c.weights.alpha == 6.0);
  CHECK(c.weights.beta == 6.0);
  CHECK(c.tau == 1.0);
  CHECK(DistillConfig::defaults_for(Method::kd).tau == 4.0);
  c.tau = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(parse_method("decomposed") == Method::decomposed);
  CHECK_THROWS_AS(parse_method("dkd"), ConfigError);
}

TEST_CASE("distillation leaves the teacher untouched") {
  const auto& w = world();
  const auto before = w.teacher.checksum();
  distill(w.teacher, w.data.train, w.data.test, w.partition, small_config(Method::ltkd));
  CHECK(w.teacher.checksum() == before);
}

TEST_CASE("LTKD with zero weights is the cross-entropy baseline, bit for bit") {
  const auto& w = world();
  auto cfg = small_config(Method::ltkd);
  cfg.weights = {0.0, 0.0};
  const auto d = distill(w.teacher, w.data.train, w.data.test, w.partition, cfg);
  const auto base = train_ce_student(w.data.train, w.data.test, w.partition, cfg);
  CHECK(d.student == base.model);
  CHECK(d.report.overall == base.report.overall);
}

TEST_CASE("decomposed distillation logs a vanishing identity residual") {
  const auto& w = world();
  const auto d =
      distill(w.teacher, w.data.train, w.data.test, w.partition, small_config(Method::decomposed));
  REQUIRE(d.log.size() == 4);
  for (const auto& e : d.log) {
    REQUIRE(e.identity_residual.has_value());
    CHECK(*e.identity_residual < 1e-10);
  }
}

TEST_CASE("distillation is deterministic and logs every batch") {
  const auto& w = world();
  std::ostringstream a_csv, b_csv;
  const auto a = distill(w.teacher, w.data.train, w.data.test, w.partition,
                         small_config(Method::ltkd), {&a_csv});
  const auto b = distill(w.teacher, w.data.train, w.data.test, w.partition,
                         small_config(Method::ltkd), {&b_csv});
  CHECK(a.student == b.student);
  CHECK(a_csv.str() == b_csv.str());
  const std::size_t batches = (w.data.train.size() + 31) / 32 * 4;
  const std::string text = a_csv.str();
  CHECK(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) == batches + 1);
  const auto j = to_json(a.log.back());
  CHECK(j.at("epoch") == 3);
  CHECK(j.at("loss").contains("distill"));
  CHECK(j.at("accuracy").contains("tail"));
}

TEST_CASE("the bias trace sees a head-heavy teacher on long-tailed data") {
  const auto& w = world();
  const auto stats = batch_bias_trace(w.teacher, w.data.train, w.partition, 64, 1);
  REQUIRE_FALSE(stats.empty());
  std::size_t heavier = 0;
  for (const auto& s : stats) heavier += s.sums[0] > s.sums[2] ? 1 : 0;
  CHECK(heavier * 10 >= stats.size() * 8);
}

TEST_CASE("run directories hold every artifact and the config round-trips") {
  ExperimentConfig cfg;
  cfg.data.num_classes = 6;
  cfg.data.base_count = 40;
  cfg.data.test_per_class = 10;
  cfg.teacher.hidden = {16};
  cfg.teacher.train.epochs = 2;
  cfg.distill.student_hidden = {8};
  cfg.distill.train.epochs = 2;
  cfg.set_seed(4);
  const fs::path dir = fs::temp_directory_path() / "ltkd-test-run";
  fs::remove_all(dir);
  run_experiment(cfg, dir);
  for (const char* f : {"config.json", "teacher.ckpt", "student.ckpt", "metrics.jsonl",
                        "bias_trace.csv", "batch_stats.csv", "summary.json"})
    CHECK(fs::exists(dir / f));
  CHECK(to_json(experiment_config_from_json(to_json(cfg))) == to_json(cfg));

  const Datasets d = make_datasets(cfg.data);
  save_data_dir(d, cfg.data, dir / "data");
  const Datasets back = load_data_dir(dir / "data");
  CHECK(back.train.features == d.train.features);
  CHECK(back.spec.counts == d.spec.counts);
}
