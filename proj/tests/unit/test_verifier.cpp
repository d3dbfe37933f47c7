#include <gtest/gtest.h>

#include "rlad/sim.hpp"
#include "rlad/verifier.hpp"

using namespace rlad;

TEST(Normalize, StripsMarkup) {
  EXPECT_EQ(normalize_answer("  \\boxed{42} "), "42");
  EXPECT_EQ(normalize_answer("$x + 1$."), "x+1");
  EXPECT_EQ(normalize_answer("\\text{yes}"), "yes");
  EXPECT_EQ(normalize_answer("−3"), "-3");
}

TEST(ParseRational, Forms) {
  EXPECT_EQ(*parse_rational("0.5"), Rational(1, 2));
  EXPECT_EQ(*parse_rational("-3/6"), Rational(-1, 2));
  EXPECT_EQ(*parse_rational("\\frac{2}{4}"), Rational(1, 2));
  EXPECT_EQ(*parse_rational("17"), Rational(17));
  EXPECT_FALSE(parse_rational("x+1"));
  EXPECT_FALSE(parse_rational("1/0"));
}

TEST(ExtractAnswer, LastBoxedWithNesting) {
  EXPECT_EQ(*extract_answer("first \\boxed{1} then \\boxed{\\frac{1}{2}}"), "\\frac{1}{2}");
  EXPECT_EQ(*extract_answer("Thus the answer is 7"), "7");
  EXPECT_FALSE(extract_answer("no conclusion here"));
}

TEST(CheckAnswer, ExactRationalAndSymmetric) {
  EXPECT_TRUE(check_answer("1/2", "0.5"));
  EXPECT_TRUE(check_answer("0.5", "\\frac{1}{2}"));
  EXPECT_TRUE(check_answer("\\boxed{12}", "12"));
  EXPECT_FALSE(check_answer("0.3333", "1/3"));
  EXPECT_TRUE(check_answer("x+1", "x + 1"));
  EXPECT_FALSE(check_answer("x+2", "x+1"));
  EXPECT_EQ(check_answer("4", "4.0"), check_answer("4.0", "4"));
}

TEST(CheckAnswer, SolutionText) {
  EXPECT_TRUE(is_correct_solution("so \\boxed{3}", "3"));
  EXPECT_FALSE(is_correct_solution("so \\boxed{4}", "3"));
  EXPECT_FALSE(is_correct_solution("nothing", "3"));
}

TEST(LeakCheck, EchoSolver) {
  const auto p = Problem::make("How many sides does a heptagon have?", "7");
  const sim::EchoPolicy echo;
  const auto revealing =
      Abstraction::make(p.id, "Count the sides: there are 7 of them.", AbstractionSource::human);
  const auto neutral =
      Abstraction::make(p.id, "Recall the Greek prefixes for polygons.", AbstractionSource::human);
  const auto r1 = leak_check(revealing, p, echo, 16, 1);
  EXPECT_EQ(r1.status, LeakStatus::failed);
  EXPECT_GE(r1.n_correct, 1);
  const auto r2 = leak_check(neutral, p, echo, 16, 1);
  EXPECT_EQ(r2.status, LeakStatus::passed);
  EXPECT_EQ(r2.n_correct, 0);
  EXPECT_EQ(r2.n, 16);
}

namespace {
class FailingPolicy final : public PolicyBackend {
 public:
  BackendCapabilities capabilities() const override { return {}; }
  std::vector<Completion> sample(const PromptParts&, const SamplingParams&) const override {
    throw BackendError(BackendError::Kind::transient, "down");
  }
};
}  // namespace

TEST(LeakCheck, BackendFailureIsReported) {
  const auto p = Problem::make("Q?", "1");
  const auto a = Abstraction::make(p.id, "hint", AbstractionSource::human);
  EXPECT_THROW(leak_check(a, p, FailingPolicy{}, 16, 0), LeakCheckError);
}
