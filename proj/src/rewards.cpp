#include "rlad/rewards.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "rlad/hashing.hpp"
#include "rlad/verifier.hpp"

namespace rlad {

std::string_view to_string(GroupKind kind) {
  return kind == GroupKind::with_abs ? "with_abs" : "no_abs";
}

GroupKind parse_group_kind(std::string_view s) {
  if (s == "with_abs") return GroupKind::with_abs;
  if (s == "no_abs") return GroupKind::no_abs;
  throw DataError("unknown group_kind '" + std::string(s) + "'");
}

PromptGroup PromptGroup::make(std::string problem_id, std::string abstraction_id,
                              std::vector<std::string> rollout_ids) {
  PromptGroup g;
  g.group_kind = is_no_abstraction(abstraction_id) ? GroupKind::no_abs : GroupKind::with_abs;
  g.problem_id = std::move(problem_id);
  g.abstraction_id = std::move(abstraction_id);
  g.rollout_ids = std::move(rollout_ids);
  return g;
}

void PromptGroup::validate() const {
  if ((group_kind == GroupKind::no_abs) != is_no_abstraction(abstraction_id)) {
    throw DataError("group_kind must be no_abs iff abstraction_id is NONE");
  }
}

MixRatio::MixRatio(double fraction) : value_(fraction) {
  if (!(fraction >= 0.0 && fraction < 1.0)) {
    throw std::invalid_argument("mix ratio must lie in [0, 1)");
  }
}

std::vector<RolloutRecord> score_completions(const Problem& problem, std::string_view abstraction_id,
                                             std::span<const Completion> completions,
                                             std::uint64_t seed) {
  std::vector<RolloutRecord> out;
  out.reserve(completions.size());
  for (const auto& c : completions) {
    RolloutRecord r;
    r.problem_id = problem.id;
    r.abstraction_id = std::string(abstraction_id);
    r.solution_text = c.text;
    r.extracted_answer = extract_answer(c.text);
    r.correct = r.extracted_answer && check_answer(*r.extracted_answer, problem.gold_answer);
    r.reward = solution_reward(r);
    r.seed = seed;
    r.token_count = c.token_count;
    out.push_back(std::move(r));
  }
  return out;
}

double solution_reward(const RolloutRecord& record) {
  if (!record.has_abstraction()) return 0.0;
  return record.correct ? 1.0 : 0.0;
}

double abstraction_reward(const RewardSummary& summary) {
  summary.validate();
  if (is_no_abstraction(summary.abstraction_id)) {
    throw DataError("abstraction_reward needs an abstraction-conditioned summary");
  }
  return summary.mean_acc;
}

std::vector<double> group_advantages(const PromptGroup& group, std::span<const double> rewards) {
  group.validate();
  if (rewards.empty()) throw DataError("group_advantages: empty group");
  if (!group.rollout_ids.empty() && group.rollout_ids.size() != rewards.size()) {
    throw DataError("group_advantages: rewards not aligned with rollout ids");
  }
  std::vector<double> adv(rewards.size(), 0.0);
  if (group.group_kind == GroupKind::no_abs) return adv;
  const bool all_equal =
      std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards.front(); });
  if (all_equal) return adv;
  const double mean =
      std::accumulate(rewards.begin(), rewards.end(), 0.0) / static_cast<double>(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = rewards[i] - mean;
  return adv;
}

std::vector<PromptGroup> compose_batch(std::span<const PromptGroup> with_abs_groups,
                                       std::span<const PromptGroup> no_abs_groups,
                                       MixRatio ratio, std::size_t batch_size,
                                       std::uint64_t seed) {
  const auto n_no = static_cast<std::size_t>(std::lround(ratio.value() * static_cast<double>(batch_size)));
  const std::size_t n_with = batch_size - n_no;
  if (with_abs_groups.size() < n_with || no_abs_groups.size() < n_no) {
    throw DataError("compose_batch: insufficient groups (need " + std::to_string(n_with) +
                    " with_abs and " + std::to_string(n_no) + " no_abs)");
  }
  std::vector<PromptGroup> batch;
  batch.reserve(batch_size);
  for (std::size_t i = 0; i < n_with; ++i) {
    if (with_abs_groups[i].group_kind != GroupKind::with_abs) {
      throw DataError("compose_batch: no_abs group in the with_abs pool");
    }
    batch.push_back(with_abs_groups[i]);
  }
  for (std::size_t i = 0; i < n_no; ++i) {
    if (no_abs_groups[i].group_kind != GroupKind::no_abs) {
      throw DataError("compose_batch: with_abs group in the no_abs pool");
    }
    batch.push_back(no_abs_groups[i]);
  }
  Rng rng(derive_seed(seed, "compose-batch", 0));
  rng.shuffle(batch);
  return batch;
}

bool TrainingGroup::operator==(const TrainingGroup& o) const {
  return problem_id == o.problem_id && abstraction_id == o.abstraction_id &&
         prompt_parts.problem_id == o.prompt_parts.problem_id &&
         prompt_parts.problem == o.prompt_parts.problem &&
         prompt_parts.abstraction == o.prompt_parts.abstraction && completions == o.completions &&
         rewards == o.rewards && advantages == o.advantages && group_kind == o.group_kind &&
         keep_kl_on_masked == o.keep_kl_on_masked;
}

void to_json(nlohmann::json& j, const PromptParts& p) {
  j = nlohmann::json::object();
  if (p.problem_id) j["problem_id"] = *p.problem_id;
  if (p.problem) j["problem"] = *p.problem;
  if (p.abstraction) j["abstraction"] = *p.abstraction;
}

void from_json(const nlohmann::json& j, PromptParts& p) {
  auto opt = [&](const char* key) -> std::optional<std::string> {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return j[key].get<std::string>();
  };
  p.problem_id = opt("problem_id");
  p.problem = opt("problem");
  p.abstraction = opt("abstraction");
}

void to_json(nlohmann::json& j, const TrainingGroup& g) {
  j = nlohmann::json{{"problem_id", g.problem_id},
                     {"abstraction_id", g.abstraction_id},
                     {"prompt_parts", g.prompt_parts},
                     {"completions", g.completions},
                     {"rewards", g.rewards},
                     {"advantages", g.advantages},
                     {"group_kind", to_string(g.group_kind)},
                     {"keep_kl_on_masked", g.keep_kl_on_masked}};
}

void from_json(const nlohmann::json& j, TrainingGroup& g) {
  try {
    g.problem_id = j.at("problem_id").get<std::string>();
    g.abstraction_id = j.at("abstraction_id").get<std::string>();
    g.prompt_parts = j.at("prompt_parts").get<PromptParts>();
    g.completions = j.at("completions").get<std::vector<std::string>>();
    g.rewards = j.at("rewards").get<std::vector<double>>();
    g.advantages = j.at("advantages").get<std::vector<double>>();
    g.group_kind = parse_group_kind(j.at("group_kind").get<std::string>());
    g.keep_kl_on_masked = j.at("keep_kl_on_masked").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad training group: ") + e.what());
  }
}

}  // namespace rlad
