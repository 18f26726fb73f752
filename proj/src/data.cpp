#include "ltkd/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "ltkd/error.hpp"
#include "ltkd/rng.hpp"
#include "ltkd/text.hpp"

namespace ltkd {

std::vector<std::size_t> decay_counts(std::size_t num_classes, std::size_t base_count,
                                      double gamma) {
  if (num_classes < 1 || base_count < 1) throw ConfigError("decay_counts: need C >= 1 and base >= 1");
  if (!(gamma >= 1.0) || !std::isfinite(gamma)) throw ConfigError("decay_counts: gamma must be >= 1");
  std::vector<std::size_t> counts(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double exact = static_cast<double>(base_count) *
                         std::pow(gamma, -static_cast<double>(c) / static_cast<double>(num_classes));
    counts[c] = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(exact)));
  }
  return counts;
}

LongTailSpec make_long_tail_spec(std::size_t num_classes, std::size_t base_count, double gamma) {
  return {num_classes, base_count, gamma, decay_counts(num_classes, base_count, gamma)};
}

double imbalance_factor(std::span<const std::size_t> counts) {
  if (counts.empty()) throw ContractError("imbalance_factor: no counts");
  const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
  if (*lo == 0) throw ContractError("imbalance_factor: zero count");
  return static_cast<double>(*hi) / static_cast<double>(*lo);
}

std::string_view split_name(Split s) noexcept { return s == Split::train ? "train" : "test"; }

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::size_t y : labels) ++counts.at(y);
  return counts;
}

Dataset make_blobs(std::span<const std::size_t> per_class_counts, const BlobGeometry& geometry,
                   Split split) {
  if (geometry.dim < 2) throw ConfigError("make_blobs: dim must be >= 2");
  const std::size_t C = per_class_counts.size();
  const std::size_t D = geometry.dim;

  Rng center_rng = make_rng(geometry.seed, "blob-centers");
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix centers(C, D);
  for (std::size_t c = 0; c < C; ++c) {
    double norm = 0.0;
    while (norm < 1e-8) {
      norm = 0.0;
      for (double& v : centers.row(c)) {
        v = normal(center_rng);
        norm += v * v;
      }
      norm = std::sqrt(norm);
    }
    for (double& v : centers.row(c)) v *= geometry.separation / norm;
  }

  std::size_t total = 0;
  for (std::size_t n : per_class_counts) total += n;
  Dataset d;
  d.features = Matrix(total, D);
  d.labels.reserve(total);
  d.num_classes = C;
  d.split = split;
  d.seed = geometry.seed;

  Rng noise = make_rng(geometry.seed, split == Split::train ? "blob-train" : "blob-test");
  std::size_t row = 0;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t k = 0; k < per_class_counts[c]; ++k, ++row) {
      for (std::size_t j = 0; j < D; ++j) d.features(row, j) = centers(c, j) + normal(noise);
      d.labels.push_back(c);
    }
  return d;
}

void save_dataset(const Dataset& d, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "label";
  for (std::size_t j = 0; j < d.dim(); ++j) out << ",f" << j;
  out << '\n';
  for (std::size_t r = 0; r < d.size(); ++r) {
    out << d.labels[r];
    for (double v : d.features.row(r)) out << ',' << format_double(v);
    out << '\n';
  }
  if (!out) throw Error("write failed for " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path, std::optional<std::size_t> num_classes,
                     Split split) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());

  auto split_fields = [](const std::string& line) {
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    if (!rest.empty() && rest.back() == '\r') rest.remove_suffix(1);
    while (true) {
      const auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    return fields;
  };

  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line)) throw ParseError("missing header", lineno);
  const auto header = split_fields(line);
  if (header.size() < 2 || header[0] != "label") throw ParseError("header must be label,f0,...", lineno);
  for (std::size_t j = 1; j < header.size(); ++j)
    if (header[j] != "f" + std::to_string(j - 1)) throw ParseError("unexpected header column", lineno);
  const std::size_t D = header.size() - 1;

  std::vector<double> values;
  std::vector<std::size_t> labels;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_fields(line);
    if (fields.size() != D + 1)
      throw ParseError("expected " + std::to_string(D + 1) + " fields, got " +
                           std::to_string(fields.size()),
                       lineno);
    const auto label = parse_int(fields[0]);
    if (!label || *label < 0) throw ParseError("bad label '" + std::string(fields[0]) + "'", lineno);
    if (num_classes && static_cast<std::size_t>(*label) >= *num_classes)
      throw ParseError("label exceeds class count", lineno);
    labels.push_back(static_cast<std::size_t>(*label));
    for (std::size_t j = 1; j <= D; ++j) {
      const auto v = parse_double(fields[j]);
      if (!v || !std::isfinite(*v))
        throw ParseError("bad feature '" + std::string(fields[j]) + "'", lineno);
      values.push_back(*v);
    }
  }
  if (labels.empty()) throw ParseError("empty dataset: no samples after header", lineno);

  Dataset d;
  d.num_classes = num_classes.value_or(*std::max_element(labels.begin(), labels.end()) + 1);
  d.features = Matrix(labels.size(), D, std::move(values));
  d.labels = std::move(labels);
  d.split = split;
  return d;
}

nlohmann::json to_json(const LongTailSpec& spec) {
  return {{"num_classes", spec.num_classes},
          {"base_count", spec.base_count},
          {"gamma", spec.gamma},
          {"counts", spec.counts},
          {"realized_imbalance", imbalance_factor(spec.counts)}};
}

}  // namespace ltkd
