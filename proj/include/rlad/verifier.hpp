#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <boost/multiprecision/cpp_int.hpp>

#include "rlad/backends.hpp"
#include "rlad/core.hpp"

namespace rlad {

using Rational = boost::multiprecision::cpp_rational;

/// A final answer in comparable form.
///
/// Normalization trims whitespace, strips outer answer markers (\boxed{},
/// $...$, \(...\), \text{}, braces), drops a trailing period, unifies minus
/// signs and removes interior whitespace. Numeric values are exact rationals
/// parsed from integers, decimals, a/b fractions and \frac{a}{b}.
struct AnswerForm {
  std::string raw;
  std::string normalized;
  std::optional<Rational> numeric_value;

  static AnswerForm parse(std::string_view raw);
};

std::string normalize_answer(std::string_view raw);
std::optional<Rational> parse_rational(std::string_view normalized);

/// Content of the last \boxed{...}, else the tail of the last "answer is/:"
/// line, else nullopt.
std::optional<std::string> extract_answer(std::string_view solution_text);

/// Rule-based 0/1 correctness. Symmetric; exact rational comparison when both
/// sides are numeric.
bool check_answer(std::string_view candidate, std::string_view gold);

/// Extracts and checks in one step.
bool is_correct_solution(std::string_view solution_text, std::string_view gold);

struct LeakCheckResult {
  LeakStatus status = LeakStatus::unchecked;
  std::int64_t n = 0;
  std::int64_t n_correct = 0;
};

class LeakCheckError : public std::runtime_error {
 public:
  LeakCheckError(const std::string& what, std::int64_t completed, std::int64_t n_correct)
      : std::runtime_error(what), completed_(completed), n_correct_(n_correct) {}
  std::int64_t completed() const noexcept { return completed_; }
  std::int64_t n_correct() const noexcept { return n_correct_; }

 private:
  std::int64_t completed_;
  std::int64_t n_correct_;
};

inline constexpr std::int64_t kDefaultLeakSamples = 16;

/// Samples `n` completions from the abstraction text alone (no problem) and
/// passes iff none of them reaches the problem's gold answer.
LeakCheckResult leak_check(const Abstraction& abstraction, const Problem& problem,
                           const PolicyBackend& sampler, std::int64_t n = kDefaultLeakSamples,
                           std::uint64_t seed = 0);

}  // namespace rlad
