#include "rlad/metrics.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace rlad {
namespace {

using boost::multiprecision::cpp_int;

cpp_int binomial(std::int64_t n, std::int64_t k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  cpp_int r = 1;
  for (std::int64_t i = 1; i <= k; ++i) {
    r *= n - k + i;
    r /= i;
  }
  return r;
}

void check_pass_args(std::int64_t n, std::int64_t c, std::int64_t k) {
  if (k < 1 || k > n) {
    throw std::invalid_argument("pass@k needs 1 <= k <= n (n=" + std::to_string(n) +
                                ", k=" + std::to_string(k) + ")");
  }
  if (c < 0 || c > n) throw std::invalid_argument("pass@k needs 0 <= c <= n");
}

/// C(n-c, k) / C(n, k) as a double, the unbiased estimate of all-k-fail.
double failure_estimate(std::int64_t n, std::int64_t c, std::int64_t k) {
  return (Rational(1) - pass_at_k_exact(n, c, k)).convert_to<double>();
}

}  // namespace

void EvalCell::validate() const {
  if (n < 0 || c < 0 || c > n) throw DataError("eval cell: need 0 <= c <= n");
  if (coverage_scores && static_cast<std::int64_t>(coverage_scores->size()) != n) {
    throw DataError("eval cell: coverage_scores length must equal n");
  }
}

void to_json(nlohmann::json& j, const EvalCell& cell) {
  j = nlohmann::json{{"problem_id", cell.problem_id},
                     {"condition", cell.condition},
                     {"n", cell.n},
                     {"c", cell.c}};
  if (cell.coverage_scores) j["coverage_scores"] = *cell.coverage_scores;
}

void from_json(const nlohmann::json& j, EvalCell& cell) {
  try {
    cell.problem_id = j.at("problem_id").get<std::string>();
    cell.condition = j.at("condition").get<std::string>();
    cell.n = j.at("n").get<std::int64_t>();
    cell.c = j.at("c").get<std::int64_t>();
    cell.coverage_scores = j.contains("coverage_scores")
                               ? std::optional(j["coverage_scores"].get<std::vector<double>>())
                               : std::nullopt;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad eval cell: ") + e.what());
  }
  cell.validate();
}

Rational pass_at_k_exact(std::int64_t n, std::int64_t c, std::int64_t k) {
  check_pass_args(n, c, k);
  if (n - c < k) return Rational(1);
  if (c == 0) return Rational(0);
  // C(n-c, k) / C(n, k) = prod_{i<k} (n-c-i) / (n-i)
  cpp_int num = 1;
  cpp_int den = 1;
  for (std::int64_t i = 0; i < k; ++i) {
    num *= n - c - i;
    den *= n - i;
  }
  return Rational(1) - Rational(num, den);
}

double pass_at_k(std::int64_t n, std::int64_t c, std::int64_t k) {
  return pass_at_k_exact(n, c, k).convert_to<double>();
}

double max_at_k(std::span<const double> coverage_scores, std::int64_t k, std::int64_t n) {
  if (static_cast<std::int64_t>(coverage_scores.size()) != n) {
    throw std::invalid_argument("max@k: coverage_scores length must equal n");
  }
  check_pass_args(n, 0, k);
  std::vector<double> sorted(coverage_scores.begin(), coverage_scores.end());
  std::sort(sorted.begin(), sorted.end());
  // The i-th smallest (1-indexed) is the subset maximum in C(i-1, k-1) of the
  // C(n, k) subsets.
  const cpp_int total = binomial(n, k);
  double out = 0.0;
  for (std::int64_t i = k; i <= n; ++i) {
    const double w = Rational(binomial(i - 1, k - 1), total).convert_to<double>();
    out += w * sorted[static_cast<std::size_t>(i - 1)];
  }
  return out;
}

Table2Summary table2_protocol(std::span<const EvalCell> cells) {
  struct PerProblem {
    std::optional<double> no_abs;
    std::map<std::string, double> per_abs;
  };
  std::map<std::string, PerProblem> by_problem;
  for (const auto& cell : cells) {
    cell.validate();
    if (cell.n < 1) throw DataError("table2: cell with no samples for " + cell.problem_id);
    const double acc = static_cast<double>(cell.c) / static_cast<double>(cell.n);
    auto& pp = by_problem[cell.problem_id];
    if (cell.is_no_abs()) {
      if (pp.no_abs) throw DataError("table2: duplicate no_abs cell for " + cell.problem_id);
      pp.no_abs = acc;
    } else if (!pp.per_abs.emplace(cell.condition, acc).second) {
      throw DataError("table2: duplicate cell " + cell.condition);
    }
  }
  if (by_problem.empty()) throw DataError("table2: no cells");
  Table2Summary out;
  for (const auto& [pid, pp] : by_problem) {
    if (!pp.no_abs) throw DataError("table2: missing no_abs condition for " + pid);
    if (pp.per_abs.empty()) throw DataError("table2: missing abstraction conditions for " + pid);
    double sum = 0.0;
    double best = 0.0;
    for (const auto& [aid, acc] : pp.per_abs) {
      sum += acc;
      best = std::max(best, acc);
    }
    out.wo_abs_avg += *pp.no_abs;
    out.w_abs_avg += sum / static_cast<double>(pp.per_abs.size());
    out.w_abs_best += best;
  }
  out.n_problems = by_problem.size();
  const auto np = static_cast<double>(out.n_problems);
  out.wo_abs_avg /= np;
  out.w_abs_avg /= np;
  out.w_abs_best /= np;
  return out;
}

double mean_subset_product(std::span<const double> values, std::size_t m) {
  if (m > values.size()) throw std::invalid_argument("subset size exceeds pool size");
  // means[j] = e_j(values[0..i)) / C(i, j), updated one element at a time.
  std::vector<double> means(m + 1, 0.0);
  means[0] = 1.0;
  for (std::size_t i = 1; i <= values.size(); ++i) {
    const double f = values[i - 1];
    const auto di = static_cast<double>(i);
    for (std::size_t j = std::min(m, i); j >= 1; --j) {
      const auto dj = static_cast<double>(j);
      means[j] = ((di - dj) / di) * means[j] + (dj / di) * means[j - 1] * f;
    }
  }
  return means[m];
}

double abstraction_any_correct(std::span<const EvalCell> abstraction_cells, std::size_t m,
                               std::int64_t k) {
  if (m < 1) throw std::invalid_argument("need at least one abstraction");
  if (abstraction_cells.size() < m) {
    throw DataError("need " + std::to_string(m) + " abstraction cells, have " +
                    std::to_string(abstraction_cells.size()));
  }
  std::vector<double> fail;
  fail.reserve(abstraction_cells.size());
  for (const auto& cell : abstraction_cells) {
    if (cell.n < k) {
      throw DataError("cell " + cell.problem_id + "/" + cell.condition + " has " +
                      std::to_string(cell.n) + " samples, need " + std::to_string(k));
    }
    fail.push_back(failure_estimate(cell.n, cell.c, k));
  }
  return 1.0 - mean_subset_product(fail, m);
}

EqualComputeResult equal_compute_pass(std::int64_t n, std::span<const EvalCell> cells) {
  if (n < 1) throw std::invalid_argument("equal_compute_pass: n must be >= 1");
  std::map<std::string, std::pair<std::optional<EvalCell>, std::vector<EvalCell>>> by_problem;
  for (const auto& cell : cells) {
    auto& entry = by_problem[cell.problem_id];
    if (cell.is_no_abs()) {
      entry.first = cell;
    } else {
      entry.second.push_back(cell);
    }
  }
  if (by_problem.empty()) throw DataError("equal_compute_pass: no cells");
  EqualComputeResult out;
  for (auto& [pid, entry] : by_problem) {
    auto& [no_abs, abs_cells] = entry;
    if (!no_abs || no_abs->n < n * n) {
      throw DataError("equal_compute_pass: " + pid + " needs a no_abs cell with >= " +
                      std::to_string(n * n) + " samples");
    }
    // Order-independence: sort abstraction cells by id.
    std::sort(abs_cells.begin(), abs_cells.end(),
              [](const EvalCell& a, const EvalCell& b) { return a.condition < b.condition; });
    out.solutions_only += pass_at_k(no_abs->n, no_abs->c, n * n);
    out.abs_conditioned += abstraction_any_correct(abs_cells, static_cast<std::size_t>(n), n);
  }
  out.n_problems = by_problem.size();
  out.solutions_only /= static_cast<double>(out.n_problems);
  out.abs_conditioned /= static_cast<double>(out.n_problems);
  return out;
}

std::vector<EvalCell> cells_from_rollouts(std::span<const RolloutRecord> records) {
  std::map<std::pair<std::string, std::string>, EvalCell> cells;
  for (const auto& r : records) {
    auto& cell = cells[{r.problem_id, r.abstraction_id}];
    cell.problem_id = r.problem_id;
    cell.condition = r.abstraction_id;
    ++cell.n;
    if (r.correct) ++cell.c;
  }
  std::vector<EvalCell> out;
  out.reserve(cells.size());
  for (auto& [key, cell] : cells) out.push_back(std::move(cell));
  return out;
}

}  // namespace rlad
