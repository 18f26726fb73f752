#include "ltkd/grouping.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "ltkd/error.hpp"

namespace ltkd {

std::string_view group_name(Group g) noexcept {
  switch (g) {
    case Group::head: return "head";
    case Group::medium: return "medium";
    case Group::tail: return "tail";
  }
  return "?";
}

ClassGroups::ClassGroups(std::vector<std::size_t> group_of, std::size_t num_groups)
    : group_of_(std::move(group_of)), members_(num_groups) {
  for (std::size_t c = 0; c < group_of_.size(); ++c) {
    if (group_of_[c] >= num_groups)
      throw PartitionError("class " + std::to_string(c) + " assigned to unknown group");
    members_[group_of_[c]].push_back(c);
  }
  for (std::size_t g = 0; g < num_groups; ++g)
    if (members_[g].empty()) throw PartitionError("group " + std::to_string(g) + " is empty");
}

void GroupPolicy::validate() const {
  if (mode == Mode::count_thresholds && !(t_head > t_tail && t_tail >= 1))
    throw ConfigError("count thresholds need t_head > t_tail >= 1");
}

GroupPartition::GroupPartition(ClassGroups groups, GroupPolicy policy)
    : groups_(std::move(groups)), policy_(policy) {
  if (groups_.num_groups() != 3) throw PartitionError("partition needs exactly three groups");
}

GroupPartition build_partition(std::span<const std::size_t> class_counts, GroupPolicy policy) {
  policy.validate();
  const std::size_t C = class_counts.size();
  if (C < 3) throw PartitionError("need at least 3 classes, got " + std::to_string(C));
  if (std::any_of(class_counts.begin(), class_counts.end(), [](std::size_t n) { return n == 0; }))
    throw PartitionError("every class needs at least one sample");

  std::vector<std::size_t> group_of(C);
  if (policy.mode == GroupPolicy::Mode::rank_thirds) {
    std::vector<std::size_t> order(C);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return class_counts[a] > class_counts[b];
    });
    const std::size_t n_head = (C + 2) / 3;
    const std::size_t n_medium = (C - n_head + 1) / 2;
    for (std::size_t r = 0; r < C; ++r)
      group_of[order[r]] = r < n_head ? 0 : (r < n_head + n_medium ? 1 : 2);
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t n = class_counts[c];
      group_of[c] = n >= policy.t_head ? 0 : (n <= policy.t_tail ? 2 : 1);
    }
  }
  return GroupPartition(ClassGroups(std::move(group_of), 3), policy);
}

std::array<std::vector<bool>, 3> group_masks(const GroupPartition& p) {
  std::array<std::vector<bool>, 3> masks;
  for (auto& m : masks) m.assign(p.num_classes(), false);
  for (std::size_t c = 0; c < p.num_classes(); ++c)
    masks[static_cast<std::size_t>(p.group_of(c))][c] = true;
  return masks;
}

nlohmann::json to_json(const GroupPolicy& policy) {
  if (policy.mode == GroupPolicy::Mode::rank_thirds) return {{"mode", "rank-thirds"}};
  return {{"mode", "count-thresholds"}, {"t_head", policy.t_head}, {"t_tail", policy.t_tail}};
}

GroupPolicy policy_from_json(const nlohmann::json& j) {
  const std::string mode = j.at("mode").get<std::string>();
  if (mode == "rank-thirds") return GroupPolicy::rank_thirds();
  if (mode == "count-thresholds") {
    GroupPolicy p = GroupPolicy::thresholds(j.at("t_head").get<std::size_t>(),
                                            j.at("t_tail").get<std::size_t>());
    p.validate();
    return p;
  }
  throw ConfigError("unknown group policy '" + mode + "'");
}

nlohmann::json to_json(const GroupPartition& p) {
  nlohmann::json groups;
  for (Group g : kGroups) {
    auto m = p.members(g);
    groups[std::string(group_name(g))] = std::vector<std::size_t>(m.begin(), m.end());
  }
  return {{"policy", to_json(p.policy())}, {"groups", groups}};
}

GroupPartition partition_from_json(const nlohmann::json& j) {
  const auto& groups = j.at("groups");
  std::vector<std::pair<std::size_t, std::size_t>> assignment;
  for (Group g : kGroups)
    for (std::size_t c : groups.at(std::string(group_name(g))).get<std::vector<std::size_t>>())
      assignment.emplace_back(c, static_cast<std::size_t>(g));
  std::sort(assignment.begin(), assignment.end());
  std::vector<std::size_t> group_of;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i].first != i)
      throw PartitionError("partition groups must cover 0..C-1 exactly once");
    group_of.push_back(assignment[i].second);
  }
  return GroupPartition(ClassGroups(std::move(group_of), 3), policy_from_json(j.at("policy")));
}

}  // namespace ltkd
