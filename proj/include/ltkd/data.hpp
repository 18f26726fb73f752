#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ltkd/matrix.hpp"

namespace ltkd {

/// Per-class training counts from exponential decay:
/// counts[c] = max(1, round(base * gamma^(-c/C))), c = 0..C-1.
struct LongTailSpec {
  std::size_t num_classes = 0;
  std::size_t base_count = 0;
  double gamma = 1.0;
  std::vector<std::size_t> counts;
};

std::vector<std::size_t> decay_counts(std::size_t num_classes, std::size_t base_count, double gamma);
LongTailSpec make_long_tail_spec(std::size_t num_classes, std::size_t base_count, double gamma);

/// max(counts) / min(counts). Throws ContractError on empty input or a zero count.
double imbalance_factor(std::span<const std::size_t> counts);

enum class Split { train, test };
std::string_view split_name(Split s) noexcept;

struct Dataset {
  Matrix features;                  // N x D
  std::vector<std::size_t> labels;  // N, each < num_classes
  std::size_t num_classes = 0;
  Split split = Split::train;
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return features.cols(); }
  std::vector<std::size_t> class_counts() const;
};

struct BlobGeometry {
  std::size_t dim = 16;
  double separation = 4.0;  // norm of every class center
  std::uint64_t seed = 0;
};

/// Isotropic unit-variance Gaussian blobs. Centers depend only on
/// (geometry.seed, C, dim), so train and test splits built from the same
/// geometry share them; the sampling noise stream also depends on the split.
Dataset make_blobs(std::span<const std::size_t> per_class_counts, const BlobGeometry& geometry,
                   Split split);

/// CSV with header `label,f0,f1,...`; floats written with 17 significant digits.
void save_dataset(const Dataset& d, const std::filesystem::path& path);
/// Throws ParseError (with line number) on malformed or empty files. When
/// num_classes is not given it is inferred as max(label) + 1.
Dataset load_dataset(const std::filesystem::path& path, std::optional<std::size_t> num_classes = {},
                     Split split = Split::train);

nlohmann::json to_json(const LongTailSpec& spec);

}  // namespace ltkd
