#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rlad/backends.hpp"
#include "rlad/core.hpp"

namespace rlad {

enum class GroupKind { with_abs, no_abs };
std::string_view to_string(GroupKind kind);
GroupKind parse_group_kind(std::string_view s);

/// One advantage-normalization unit: rollouts sharing (problem, abstraction).
struct PromptGroup {
  std::string problem_id;
  std::string abstraction_id{kNoAbstraction};
  std::vector<std::string> rollout_ids;
  GroupKind group_kind = GroupKind::no_abs;

  static PromptGroup make(std::string problem_id, std::string abstraction_id,
                          std::vector<std::string> rollout_ids);
  void validate() const;
};

/// Fraction of no-abstraction groups in a solver batch; always in [0, 1).
class MixRatio {
 public:
  explicit MixRatio(double fraction = 0.25);
  double value() const noexcept { return value_; }

 private:
  double value_;
};

/// Grades completions against the gold answer and fills rewards (masked when
/// `abstraction_id` is NONE). Advantages are left empty.
std::vector<RolloutRecord> score_completions(const Problem& problem, std::string_view abstraction_id,
                                             std::span<const Completion> completions,
                                             std::uint64_t seed);

/// Masked solution reward: 0 without an abstraction, otherwise 0/1 correctness.
double solution_reward(const RolloutRecord& record);

/// Expected correctness of solutions conditioned on (x, z): the summary's mean
/// accuracy. Rejects the no-abstraction condition.
double abstraction_reward(const RewardSummary& summary);

/// Mean-centred advantages within the group. No-abstraction groups get exactly
/// zero advantage regardless of rewards.
std::vector<double> group_advantages(const PromptGroup& group, std::span<const double> rewards);

/// Takes round(ratio * batch_size) no-abs groups and the rest with-abs groups
/// from the front of each pool, then applies a seeded shuffle.
std::vector<PromptGroup> compose_batch(std::span<const PromptGroup> with_abs_groups,
                                       std::span<const PromptGroup> no_abs_groups,
                                       MixRatio ratio, std::size_t batch_size,
                                       std::uint64_t seed);

/// Shard line for the external solution-generator trainer.
struct TrainingGroup {
  std::string problem_id;
  std::string abstraction_id{kNoAbstraction};
  PromptParts prompt_parts;
  std::vector<std::string> completions;
  std::vector<double> rewards;
  std::vector<double> advantages;
  GroupKind group_kind = GroupKind::no_abs;
  bool keep_kl_on_masked = true;

  bool operator==(const TrainingGroup& o) const;
};

void to_json(nlohmann::json& j, const TrainingGroup& g);
void from_json(const nlohmann::json& j, TrainingGroup& g);
void to_json(nlohmann::json& j, const PromptParts& p);
void from_json(const nlohmann::json& j, PromptParts& p);

}  // namespace rlad
