#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace ltkd {

enum class Group : std::uint8_t { head = 0, medium = 1, tail = 2 };
inline constexpr std::array<Group, 3> kGroups{Group::head, Group::medium, Group::tail};

std::string_view group_name(Group g) noexcept;

/// Disjoint cover of {0..C-1} by an arbitrary number of non-empty groups.
/// The probability and loss code works on this; GroupPartition is the
/// validated three-group specialization.
class ClassGroups {
 public:
  ClassGroups() = default;
  /// group_of[c] in [0, num_groups); throws PartitionError if any group is empty.
  ClassGroups(std::vector<std::size_t> group_of, std::size_t num_groups);

  std::size_t num_classes() const noexcept { return group_of_.size(); }
  std::size_t num_groups() const noexcept { return members_.size(); }
  std::size_t group_of(std::size_t cls) const { return group_of_.at(cls); }
  std::span<const std::size_t> group_of() const noexcept { return group_of_; }
  /// Sorted class indices of group g.
  std::span<const std::size_t> members(std::size_t g) const { return members_.at(g); }

  bool operator==(const ClassGroups&) const = default;

 private:
  std::vector<std::size_t> group_of_;
  std::vector<std::vector<std::size_t>> members_;
};

struct GroupPolicy {
  enum class Mode { rank_thirds, count_thresholds };

  Mode mode = Mode::rank_thirds;
  std::size_t t_head = 0;  // count >= t_head -> head (thresholds mode)
  std::size_t t_tail = 0;  // count <= t_tail -> tail (thresholds mode)

  static GroupPolicy rank_thirds() { return {}; }
  static GroupPolicy thresholds(std::size_t head, std::size_t tail) {
    return {Mode::count_thresholds, head, tail};
  }
  /// Throws ConfigError unless t_head > t_tail >= 1 in thresholds mode.
  void validate() const;

  bool operator==(const GroupPolicy&) const = default;
};

/// Head/medium/tail split of the classes by training frequency.
class GroupPartition {
 public:
  GroupPartition(ClassGroups groups, GroupPolicy policy);

  std::size_t num_classes() const noexcept { return groups_.num_classes(); }
  Group group_of(std::size_t cls) const { return static_cast<Group>(groups_.group_of(cls)); }
  std::span<const std::size_t> members(Group g) const {
    return groups_.members(static_cast<std::size_t>(g));
  }
  const ClassGroups& groups() const noexcept { return groups_; }
  const GroupPolicy& policy() const noexcept { return policy_; }

  bool operator==(const GroupPartition&) const = default;

 private:
  ClassGroups groups_;
  GroupPolicy policy_;
};

/// Rank-thirds sorts by count descending (ties: lower index first) and takes
/// ceil(C/3) head, ceil((C-|H|)/2) medium, the rest tail. Threshold mode uses
/// count >= t_head for head and count <= t_tail for tail.
GroupPartition build_partition(std::span<const std::size_t> class_counts, GroupPolicy policy);

/// One mask per group, indexed by class.
std::array<std::vector<bool>, 3> group_masks(const GroupPartition& p);

nlohmann::json to_json(const GroupPolicy& policy);
GroupPolicy policy_from_json(const nlohmann::json& j);
/// {"policy": {...}, "groups": {"head": [...], "medium": [...], "tail": [...]}}
nlohmann::json to_json(const GroupPartition& p);
GroupPartition partition_from_json(const nlohmann::json& j);

}  // namespace ltkd
