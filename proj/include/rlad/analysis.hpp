#pragma once

// Post-hoc analyses: compute allocation between abstractions and solutions,
// adherence of solutions to abstractions, semantic diversity of solutions,
// and categorization of abstractions.

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rlad/backends.hpp"
#include "rlad/core.hpp"
#include "rlad/metrics.hpp"

namespace rlad {

struct IsoComputePoint {
  std::int64_t C = 0;
  std::int64_t k0 = 0;
  std::int64_t m = 0;
  std::int64_t k = 0;
  /// m / (k - k0)
  double ratio = 0.0;
  bool operator==(const IsoComputePoint&) const = default;
};

/// Every (m, k) with m | C and k = k0 + C/m, by increasing ratio.
std::vector<IsoComputePoint> iso_compute_grid(std::int64_t C, std::int64_t k0);

struct FrontierRow {
  IsoComputePoint point;
  double pass_estimate = 0.0;
};

/// Any-correct probability per point, averaged over problems; each problem
/// needs at least m abstraction cells with at least k samples each.
std::vector<FrontierRow> frontier_eval(std::span<const IsoComputePoint> points,
                                       std::span<const EvalCell> cells);

/// Columns C,k0,m,k,ratio,pass_estimate.
std::string frontier_csv(std::span<const FrontierRow> rows);
/// Standalone SVG: one line per (C, k0) over a log-scaled ratio axis.
std::string frontier_svg(std::span<const FrontierRow> rows);

enum class AdherenceCondition { abstraction, no_abstraction, retrieval, unrelated_abstraction };
std::string_view to_string(AdherenceCondition c);
AdherenceCondition parse_adherence_condition(std::string_view s);
inline constexpr AdherenceCondition kAllAdherenceConditions[] = {
    AdherenceCondition::abstraction, AdherenceCondition::no_abstraction,
    AdherenceCondition::retrieval, AdherenceCondition::unrelated_abstraction};

struct AdherencePair {
  std::string abstraction;
  std::string solution;
  AdherenceCondition condition = AdherenceCondition::abstraction;
};
void to_json(nlohmann::json& j, const AdherencePair& p);
void from_json(const nlohmann::json& j, AdherencePair& p);

inline constexpr std::string_view kAdherenceInstruction =
    "Does the solution (second) closely follow the strategy or guidance given in the "
    "abstraction (first)?";

/// Judgments keyed by a hash of the (abstraction, solution) pair. Safe for
/// concurrent use.
class JudgmentCache {
 public:
  std::optional<bool> get(const std::string& key) const;
  void put(const std::string& key, bool verdict);
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, bool> entries_;
};

std::string pair_key(std::string_view abstraction, std::string_view solution);

struct AdherenceReport {
  std::map<AdherenceCondition, double> rate;
  std::map<AdherenceCondition, std::size_t> n_pairs;
  std::size_t judge_calls = 0;
  nlohmann::json to_json() const;
};

/// Mean verdict per condition. `required` conditions must all have pairs;
/// empty means the conditions present in `pairs`.
AdherenceReport adherence_rates(std::span<const AdherencePair> pairs, const JudgeBackend& judge,
                                std::span<const AdherenceCondition> required = {},
                                std::size_t jobs = 1, JudgmentCache* cache = nullptr);

/// Pairs for one problem under all four conditions. For each abstraction:
/// its own solutions, unconditioned solutions, the prior unconditioned
/// solution nearest to it under `embedder`, and solutions written for the
/// next abstraction. Needs at least two abstractions.
std::vector<AdherencePair> build_adherence_pairs(const Problem& problem,
                                                 std::span<const Abstraction> abstractions,
                                                 const PolicyBackend& solver,
                                                 const EmbeddingBackend& embedder,
                                                 std::int64_t samples_per_condition,
                                                 std::uint64_t seed);

enum class PairingType { same_abstraction, different_abstractions, no_abstraction };
std::string_view to_string(PairingType t);
PairingType parse_pairing_type(std::string_view s);

struct SolutionPair {
  std::string first;
  std::string second;
  PairingType type = PairingType::same_abstraction;
};

double cosine(std::span<const double> a, std::span<const double> b);

struct DiversityReport {
  std::map<PairingType, double> mean_similarity;
  std::map<PairingType, std::size_t> n_pairs;
  nlohmann::json to_json() const;
};

DiversityReport semantic_diversity(std::span<const SolutionPair> pairs,
                                   const EmbeddingBackend& embedder, std::size_t jobs = 1);

/// All within-abstraction pairs, all cross-abstraction pairs and all pairs of
/// unconditioned solutions from `n` samples per condition.
std::vector<SolutionPair> build_diversity_pairs(const Problem& problem,
                                                std::span<const Abstraction> abstractions,
                                                const PolicyBackend& solver, std::int64_t n,
                                                std::uint64_t seed);

enum class AbstractionCategory {
  caution_alert,
  productive_launchpoint,
  blind_follow,
  structural_shortcut,
  other
};
std::string_view to_string(AbstractionCategory c);

/// Classifier prompt with an {abstraction} placeholder.
std::string_view classifier_prompt();

/// Category letter at the end of a classifier reply: the last "(A)".."(E)".
std::optional<AbstractionCategory> parse_category(std::string_view reply);

class ClassificationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Sends the filled-in prompt as the instruction and the abstraction as the
/// first item; retries once when no category can be read.
AbstractionCategory classify_abstraction(std::string_view abstraction_text,
                                         const JudgeBackend& judge,
                                         std::string_view prompt_template = classifier_prompt());

}  // namespace rlad
