#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>

#include "ltkd/data.hpp"
#include "ltkd/error.hpp"
#include "ltkd/grouping.hpp"
#include "ltkd/model.hpp"
#include "ltkd/pipeline.hpp"

using namespace ltkd;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "ltkd-test-data";
  fs::create_directories(dir);
  return dir / name;
}

std::string read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("exponential decay counts") {
  const auto c = decay_counts(100, 500, 100.0);
  CHECK(c.front() == 500);
  CHECK(c.back() == 5);
  CHECK(std::is_sorted(c.rbegin(), c.rend()));
  CHECK(imbalance_factor(c) == doctest::Approx(100.0).epsilon(0.05));

  const auto flat = decay_counts(10, 50, 1.0);
  CHECK(std::all_of(flat.begin(), flat.end(), [](std::size_t v) { return v == 50; }));
  CHECK(imbalance_factor(flat) == 1.0);
}

TEST_CASE("decay counts never reach zero and reject gamma below one") {
  const auto c = decay_counts(30, 10, 1000.0);
  CHECK(*std::min_element(c.begin(), c.end()) == 1);
  CHECK_THROWS_AS(decay_counts(10, 100, 0.5), ConfigError);
  CHECK_THROWS_AS(decay_counts(0, 100, 2.0), ConfigError);
}

TEST_CASE("long-tail spec JSON") {
  const auto spec = make_long_tail_spec(5, 100, 10.0);
  const auto j = to_json(spec);
  CHECK(j.at("num_classes") == 5);
  CHECK(j.at("counts").size() == 5);
}

TEST_CASE("blobs have the requested class counts and are deterministic") {
  const std::vector<std::size_t> counts{30, 20, 10};
  const BlobGeometry geo{8, 4.0, 11};
  const auto a = make_blobs(counts, geo, Split::train);
  const auto b = make_blobs(counts, geo, Split::train);
  CHECK(a.size() == 60);
  CHECK(a.dim() == 8);
  CHECK(a.class_counts() == counts);
  CHECK(a.features == b.features);
  CHECK(a.labels == b.labels);

  const auto test = make_blobs(counts, geo, Split::test);
  CHECK_FALSE(test.features == a.features);
  const auto other = make_blobs(counts, BlobGeometry{8, 4.0, 12}, Split::train);
  CHECK_FALSE(other.features == a.features);
}

TEST_CASE("class separation controls learnability") {
  const std::vector<std::size_t> counts(6, 100);
  const std::vector<std::size_t> test_counts(6, 100);
  const auto p = build_partition(counts, GroupPolicy::rank_thirds());
  TeacherConfig cfg;
  cfg.hidden = {32};
  cfg.train.epochs = 20;
  cfg.train.sgd.lr = 0.05;

  const auto far_train = make_blobs(counts, BlobGeometry{16, 8.0, 1}, Split::train);
  const auto far_test = make_blobs(test_counts, BlobGeometry{16, 8.0, 1}, Split::test);
  CHECK(train_teacher(far_train, far_test, p, cfg).report.overall > 95.0);

  const auto none_train = make_blobs(counts, BlobGeometry{16, 0.0, 1}, Split::train);
  const auto none_test = make_blobs(test_counts, BlobGeometry{16, 0.0, 1}, Split::test);
  const double chance = train_teacher(none_train, none_test, p, cfg).report.overall;
  CHECK(chance < 100.0 / 6.0 + 10.0);
}

TEST_CASE("dataset CSV round trip is exact") {
  const std::vector<std::size_t> counts{5, 3, 2};
  const auto d = make_blobs(counts, BlobGeometry{4, 2.0, 3}, Split::test);
  const auto path = temp_path("roundtrip.csv");
  save_dataset(d, path);
  const auto back = load_dataset(path, 3, Split::test);
  CHECK(back.features == d.features);
  CHECK(back.labels == d.labels);
  CHECK(back.num_classes == 3);

  save_dataset(back, temp_path("roundtrip2.csv"));
  CHECK(read_all(path) == read_all(temp_path("roundtrip2.csv")));
}

TEST_CASE("malformed dataset files report the failing line") {
  const auto path = temp_path("bad.csv");
  {
    std::ofstream out(path);
    out << "label,f0,f1\n0,1.0,2.0\n1,3.0\n";
  }
  try {
    load_dataset(path);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }

  {
    std::ofstream out(path);
    out << "label,f0,f1\n";
  }
  CHECK_THROWS_WITH_AS(load_dataset(path), doctest::Contains("empty dataset"), ParseError);

  {
    std::ofstream out(path);
    out << "label,f0\n0,abc\n";
  }
  CHECK_THROWS_AS(load_dataset(path), ParseError);

  {
    std::ofstream out(path);
    out << "label,f0\n7,1.0\n";
  }
  CHECK_THROWS_AS(load_dataset(path, 3), ParseError);
  CHECK_THROWS_AS(load_dataset(temp_path("missing.csv")), Error);
}
