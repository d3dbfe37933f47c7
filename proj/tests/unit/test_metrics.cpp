#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "rlad/hashing.hpp"
#include "rlad/metrics.hpp"

using namespace rlad;

namespace {
// Fraction of k-subsets of n items (c of them correct) containing a correct item.
double enumerate_pass(int n, int c, int k) {
  std::vector<int> mask(n, 0);
  std::fill(mask.end() - k, mask.end(), 1);
  long total = 0, hit = 0;
  do {
    ++total;
    bool any = false;
    for (int i = 0; i < n; ++i) any |= mask[i] && i < c;
    hit += any;
  } while (std::next_permutation(mask.begin(), mask.end()));
  return double(hit) / double(total);
}
}  // namespace

TEST(PassAtK, MatchesEnumeration) {
  for (int n = 1; n <= 8; ++n) {
    for (int c = 0; c <= n; ++c) {
      for (int k = 1; k <= n; ++k) {
        EXPECT_NEAR(pass_at_k(n, c, k), enumerate_pass(n, c, k), 1e-12) << n << c << k;
      }
    }
  }
}

TEST(PassAtK, FrozenValues) {
  EXPECT_EQ(pass_at_k_exact(5, 2, 2), Rational(7, 10));
  EXPECT_EQ(pass_at_k_exact(10, 3, 1), Rational(3, 10));
  EXPECT_DOUBLE_EQ(pass_at_k(100, 0, 50), 0.0);
  EXPECT_DOUBLE_EQ(pass_at_k(100, 100, 1), 1.0);
  EXPECT_DOUBLE_EQ(pass_at_k(100, 51, 50), 1.0);
}

TEST(PassAtK, RejectsBadArguments) {
  EXPECT_THROW(pass_at_k(4, 5, 1), std::invalid_argument);
  EXPECT_THROW(pass_at_k(4, 1, 0), std::invalid_argument);
  EXPECT_THROW(pass_at_k(4, 1, 5), std::invalid_argument);
}

TEST(MaxAtK, FrozenAndEnumerated) {
  const std::vector<double> s = {0.1, 0.5, 0.9};
  EXPECT_NEAR(max_at_k(s, 2, 3), 2.3 / 3.0, 1e-15);
  EXPECT_NEAR(max_at_k(s, 1, 3), 0.5, 1e-15);
  EXPECT_NEAR(max_at_k(s, 3, 3), 0.9, 1e-15);
  // Ties are counted once per position.
  const std::vector<double> t = {0.4, 0.4, 0.2};
  EXPECT_NEAR(max_at_k(t, 2, 3), 0.4, 1e-15);
}

TEST(MeanSubsetProduct, MatchesEnumeration) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(7));
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform();
    for (int m = 1; m <= n; ++m) {
      std::vector<int> mask(n, 0);
      std::fill(mask.end() - m, mask.end(), 1);
      double sum = 0;
      long count = 0;
      do {
        double prod = 1;
        for (int i = 0; i < n; ++i) {
          if (mask[i]) prod *= v[i];
        }
        sum += prod;
        ++count;
      } while (std::next_permutation(mask.begin(), mask.end()));
      EXPECT_NEAR(mean_subset_product(v, m), sum / count, 1e-12);
    }
  }
}

namespace {
EvalCell cell(std::string pid, std::string cond, std::int64_t n, std::int64_t c) {
  EvalCell e;
  e.problem_id = std::move(pid);
  e.condition = std::move(cond);
  e.n = n;
  e.c = c;
  return e;
}
}  // namespace

TEST(Table2, FrozenValues) {
  const std::vector<EvalCell> cells = {
      cell("p1", "NONE", 8, 2), cell("p1", "a-1", 8, 4), cell("p1", "a-2", 8, 8),
      cell("p2", "NONE", 8, 0), cell("p2", "a-3", 8, 2)};
  const auto t = table2_protocol(cells);
  EXPECT_EQ(t.n_problems, 2u);
  EXPECT_DOUBLE_EQ(t.wo_abs_avg, (0.25 + 0.0) / 2);
  EXPECT_DOUBLE_EQ(t.w_abs_avg, (0.75 + 0.25) / 2);
  EXPECT_DOUBLE_EQ(t.w_abs_best, (1.0 + 0.25) / 2);
}

TEST(Table2, RequiresBothConditions) {
  EXPECT_THROW(table2_protocol(std::vector<EvalCell>{cell("p1", "NONE", 8, 2)}), DataError);
  EXPECT_THROW(table2_protocol(std::vector<EvalCell>{cell("p1", "a-1", 8, 2)}), DataError);
}

TEST(AnyCorrect, SingleAbstractionIsPassAtK) {
  const std::vector<EvalCell> cells = {cell("p", "a-1", 8, 3), cell("p", "a-2", 8, 0)};
  const double expected = (pass_at_k(8, 3, 2) + pass_at_k(8, 0, 2)) / 2;
  EXPECT_NEAR(abstraction_any_correct(cells, 1, 2), expected, 1e-15);
  // m=2: fail only if both fail.
  const double both = 1 - (1 - pass_at_k(8, 3, 2)) * 1.0;
  EXPECT_NEAR(abstraction_any_correct(cells, 2, 2), both, 1e-15);
}

TEST(EqualCompute, FrozenValues) {
  const std::vector<EvalCell> cells = {cell("p", "NONE", 16, 4), cell("p", "a-1", 8, 2),
                                       cell("p", "a-2", 8, 8)};
  const auto r = equal_compute_pass(2, cells);
  EXPECT_NEAR(r.solutions_only, pass_at_k(16, 4, 4), 1e-15);
  EXPECT_NEAR(r.abs_conditioned, 1.0, 1e-15);
  EXPECT_THROW(equal_compute_pass(5, cells), DataError);
}

TEST(CellsFromRollouts, Groups) {
  std::vector<RolloutRecord> rs(3);
  rs[0].problem_id = rs[1].problem_id = rs[2].problem_id = "p";
  rs[1].abstraction_id = "a-1";
  rs[0].correct = true;
  const auto cells = cells_from_rollouts(rs);
  ASSERT_EQ(cells.size(), 2u);
  EXPECT_EQ(cells[0].condition, "NONE");
  EXPECT_EQ(cells[0].n, 2);
  EXPECT_EQ(cells[0].c, 1);
}

TEST(EvalCell, JsonRoundTrip) {
  auto e = cell("p", "a-1", 4, 1);
  e.coverage_scores = std::vector<double>{0.1, 0.2, 0.3, 0.4};
  const nlohmann::json j = e;
  EXPECT_EQ(j.get<EvalCell>(), e);
}
