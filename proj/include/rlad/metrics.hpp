#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rlad/core.hpp"
#include "rlad/verifier.hpp"

namespace rlad {

/// Sample counts for one (problem, condition). `condition` is an abstraction
/// id, or kNoAbstraction for the unconditioned cell.
struct EvalCell {
  std::string problem_id;
  std::string condition{kNoAbstraction};
  std::int64_t n = 0;
  std::int64_t c = 0;
  std::optional<std::vector<double>> coverage_scores;

  bool is_no_abs() const { return is_no_abstraction(condition); }
  void validate() const;
  bool operator==(const EvalCell&) const = default;
};

void to_json(nlohmann::json& j, const EvalCell& cell);
void from_json(const nlohmann::json& j, EvalCell& cell);

/// Exact 1 - C(n-c, k) / C(n, k) as a rational.
Rational pass_at_k_exact(std::int64_t n, std::int64_t c, std::int64_t k);
/// Unbiased pass@k, exact product form converted to double at the end.
/// Requires 1 <= k <= n and 0 <= c <= n.
double pass_at_k(std::int64_t n, std::int64_t c, std::int64_t k);

/// Expected maximum of a uniformly random size-k subset of the n scores.
double max_at_k(std::span<const double> coverage_scores, std::int64_t k, std::int64_t n);

struct Table2Summary {
  double wo_abs_avg = 0.0;
  double w_abs_avg = 0.0;
  double w_abs_best = 0.0;
  std::size_t n_problems = 0;
};

/// Every problem needs exactly one no-abstraction cell and at least one
/// abstraction cell.
Table2Summary table2_protocol(std::span<const EvalCell> cells);

/// Mean over uniformly random m-subsets of prod_{a in subset} values[a],
/// computed exactly through running elementary-symmetric means.
double mean_subset_product(std::span<const double> values, std::size_t m);

/// Probability that at least one of m abstractions x k solutions is correct,
/// averaged over m-subsets of the available abstraction cells. Each cell's
/// failure probability uses the unbiased C(n-c, k)/C(n, k) estimate.
double abstraction_any_correct(std::span<const EvalCell> abstraction_cells, std::size_t m,
                               std::int64_t k);

struct EqualComputeResult {
  double solutions_only = 0.0;
  double abs_conditioned = 0.0;
  std::size_t n_problems = 0;
};

/// n^2 unconditioned samples versus n abstractions x n solutions, averaged
/// over problems.
EqualComputeResult equal_compute_pass(std::int64_t n, std::span<const EvalCell> cells);

/// Builds cells from rollout records grouped by (problem, abstraction).
std::vector<EvalCell> cells_from_rollouts(std::span<const RolloutRecord> records);

}  // namespace rlad
