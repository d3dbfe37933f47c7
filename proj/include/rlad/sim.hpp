#pragma once

// Deterministic solution-space simulator.
//
// Each registered problem has a set of solution strategies s with success
// probability p_s and a solver logit l_s. An abstraction names a subset A of
// strategies through [[strategy:<id>]] tags in its text, plus an optional
// [[boost:<b>]] tag (otherwise the problem's default boost). Conditioned on
// the abstraction, the solver picks s ~ softmax(l + b * 1_A) and answers
// correctly with probability p_s, so solve probabilities are known in closed
// form. The abstraction generator is a softmax over a per-problem list of
// candidate abstraction texts.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "rlad/backends.hpp"
#include "rlad/core.hpp"

namespace rlad::sim {

struct Strategy {
  std::string id;
  std::string description;
  double success_prob = 0.0;
  double logit = 0.0;
};

struct CandidateAbstraction {
  std::string text;
  double logit = 0.0;
};

struct SimProblem {
  Problem problem;
  std::vector<Strategy> strategies;
  double default_boost = 2.0;
  std::vector<CandidateAbstraction> candidates;
};

/// Strategy subset and boost an abstraction text encodes.
struct AbstractionSemantics {
  std::vector<std::string> named;
  double boost = 0.0;
};

std::string strategy_tag(std::string_view strategy_id);
std::string boost_tag(double boost);
/// Strategy ids named by [[strategy:...]] tags, in order of first appearance.
std::vector<std::string> strategy_tags_in(std::string_view text);
AbstractionSemantics parse_semantics(std::string_view abstraction_text, double default_boost);

std::vector<double> softmax(const std::vector<double>& logits);

class SimEnv {
 public:
  SimEnv() = default;

  void add(SimProblem problem);
  bool contains(std::string_view problem_id) const;
  /// Throws std::out_of_range for unknown ids.
  const SimProblem& at(std::string_view problem_id) const;
  SimProblem& at(std::string_view problem_id);
  std::vector<Problem> problems() const;
  std::size_t size() const { return problems_.size(); }

  /// Solver logits plus the abstraction's boost on its named strategies.
  std::vector<double> biased_logits(std::string_view problem_id,
                                    const std::optional<std::string>& abstraction_text) const;
  std::vector<double> strategy_distribution(
      std::string_view problem_id, const std::optional<std::string>& abstraction_text) const;
  /// Closed-form solve probability sum_s softmax_s * p_s.
  double solve_probability(std::string_view problem_id,
                           const std::optional<std::string>& abstraction_text) const;
  std::vector<double> abstraction_distribution(std::string_view problem_id) const;

  /// Adds lr * gradient to the solver logits of each listed problem.
  void apply_solver_gradient(const std::map<std::string, std::vector<double>>& gradient,
                             double lr);
  void apply_abstraction_gradient(const std::map<std::string, std::vector<double>>& gradient,
                                  double lr);

  static SimEnv from_json(const nlohmann::json& world);
  static SimEnv load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

 private:
  std::vector<SimProblem> problems_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// Reads the strategy a simulated trace followed (its first strategy tag).
std::optional<std::string> traced_strategy(std::string_view solution_text);

/// Solution generator over a SimEnv. Holds a reference: the env must outlive
/// it, and logits must not change while a sample call is in flight.
///
/// Prompts without a problem (the leak check) fall back to echo behaviour:
/// the only way to answer is to repeat a number stated in the prompt.
class SimPolicy final : public PolicyBackend {
 public:
  explicit SimPolicy(const SimEnv& env) : env_(env) {}
  BackendCapabilities capabilities() const override { return {true, true}; }
  std::vector<Completion> sample(const PromptParts& prompt,
                                 const SamplingParams& params) const override;

 private:
  const SimEnv& env_;
};

/// Answers by echoing the last number that appears in the prompt outside
/// strategy tags, or gives no answer at all.
class EchoPolicy final : public PolicyBackend {
 public:
  BackendCapabilities capabilities() const override { return {true, true}; }
  std::vector<Completion> sample(const PromptParts& prompt,
                                 const SamplingParams& params) const override;
};

/// Abstraction generator sampling candidate texts from softmax(candidate logits).
class SimAbstractionPolicy final : public AbstractionGenerator {
 public:
  explicit SimAbstractionPolicy(const SimEnv& env) : env_(env) {}
  std::vector<std::string> propose(const Problem& problem, int n,
                                   std::uint64_t seed) const override;
  /// Candidate index of an exact candidate text, if any.
  std::optional<std::size_t> candidate_index(std::string_view problem_id,
                                             std::string_view text) const;

 private:
  const SimEnv& env_;
};

/// Summarizes traces into strategy-tag abstractions, most successful
/// strategies first. Never mentions numbers.
class SimSummarizer final : public SummarizerBackend {
 public:
  explicit SimSummarizer(const SimEnv& env) : env_(env) {}
  std::vector<std::string> summarize(const Problem& problem, std::span<const std::string> traces,
                                     int n_candidates, std::uint64_t seed) const override;

 private:
  const SimEnv& env_;
};

/// Adherence judge: the solution (second) adheres to the abstraction (first)
/// iff its traced strategy is one the abstraction names.
class SimAdherenceJudge final : public JudgeBackend {
 public:
  Judgment judge(std::string_view instruction, std::string_view first,
                 std::string_view second) const override;
};

/// Keyword-rule stand-in for the abstraction classifier; its rationale ends in
/// one of (A)..(E).
class SimClassifierJudge final : public JudgeBackend {
 public:
  Judgment judge(std::string_view instruction, std::string_view first,
                 std::string_view second) const override;
};

/// Bag-of-tags embedder: strategy tags dominate; other words are hashed into
/// the remaining dimensions with low weight.
class TagEmbedder final : public EmbeddingBackend {
 public:
  explicit TagEmbedder(std::size_t dimension = 64) : dimension_(dimension) {}
  std::vector<double> embed(std::string_view text) const override;

 private:
  std::size_t dimension_;
};

/// Gradient of sum_r advantage_r * log softmax(l + b*1_A)_{s_r} with respect
/// to each problem's solver logits l. `abstraction_texts` maps abstraction ids
/// to their text. Throws DataError when a record has no advantage or no
/// traced strategy.
std::map<std::string, std::vector<double>> sim_gradient(
    const SimEnv& env, std::span<const RolloutRecord> records,
    const std::map<std::string, std::string>& abstraction_texts);

/// d/dl_j log softmax(l + bias)_chosen = 1[j == chosen] - softmax(l + bias)_j.
std::vector<double> log_softmax_gradient(const std::vector<double>& biased_logits,
                                         std::size_t chosen);

}  // namespace rlad::sim
