#include <gtest/gtest.h>

#include <atomic>

#include "rlad/analysis.hpp"
#include "rlad/sim.hpp"
#include "test_support.hpp"

using namespace rlad;

namespace {

EvalCell cell(std::string pid, std::string cond, std::int64_t n, std::int64_t c) {
  EvalCell e;
  e.problem_id = std::move(pid);
  e.condition = std::move(cond);
  e.n = n;
  e.c = c;
  return e;
}

class CountingJudge final : public JudgeBackend {
 public:
  Judgment judge(std::string_view, std::string_view first, std::string_view second) const override {
    ++calls;
    return {first.substr(0, 1) == second.substr(0, 1), ""};
  }
  mutable std::atomic<int> calls{0};
};

/// Replies from a script, one entry per call.
class ScriptedJudge final : public JudgeBackend {
 public:
  explicit ScriptedJudge(std::vector<std::string> replies) : replies_(std::move(replies)) {}
  Judgment judge(std::string_view instruction, std::string_view, std::string_view) const override {
    last_instruction = std::string(instruction);
    return {false, replies_.at(calls++)};
  }
  mutable int calls = 0;
  mutable std::string last_instruction;

 private:
  std::vector<std::string> replies_;
};

}  // namespace

TEST(IsoCompute, DivisorGrid) {
  const auto grid = iso_compute_grid(12, 2);
  std::vector<std::int64_t> ms;
  for (const auto& p : grid) {
    ms.push_back(p.m);
    EXPECT_EQ(p.m * (p.k - p.k0), 12);
    EXPECT_DOUBLE_EQ(p.ratio, double(p.m) / double(p.k - 2));
  }
  EXPECT_EQ(ms, (std::vector<std::int64_t>{1, 2, 3, 4, 6, 12}));
  EXPECT_THROW(iso_compute_grid(0, 0), std::invalid_argument);
}

TEST(Frontier, SingleAbstractionIsPassAtK) {
  const std::vector<EvalCell> cells = {cell("p", "NONE", 8, 0), cell("p", "a-1", 8, 3),
                                       cell("p", "a-2", 8, 5)};
  const std::vector<IsoComputePoint> pts = {{2, 0, 1, 2, 0.5}, {2, 0, 2, 1, 2.0}};
  const auto rows = frontier_eval(pts, cells);
  EXPECT_NEAR(rows[0].pass_estimate, (pass_at_k(8, 3, 2) + pass_at_k(8, 5, 2)) / 2, 1e-15);
  EXPECT_NEAR(rows[1].pass_estimate, 1 - (5.0 / 8) * (3.0 / 8), 1e-15);
  const std::vector<IsoComputePoint> too_many = {{3, 0, 3, 1, 3.0}};
  EXPECT_THROW(frontier_eval(too_many, cells), DataError);
}

TEST(Frontier, CsvAndSvg) {
  const std::vector<FrontierRow> rows = {{{4, 0, 1, 4, 0.25}, 0.5}, {{4, 0, 2, 2, 1.0}, 0.75}};
  const auto csv = frontier_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "C,k0,m,k,ratio,pass_estimate");
  EXPECT_NE(csv.find("4,0,2,2,1,0.75"), std::string::npos);
  const auto svg = frontier_svg(rows);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
}

TEST(Adherence, RatesAndCache) {
  const std::vector<AdherencePair> pairs = {{"x1", "x2", AdherenceCondition::abstraction},
                                            {"x1", "y2", AdherenceCondition::abstraction},
                                            {"x1", "y9", AdherenceCondition::no_abstraction},
                                            {"x1", "x2", AdherenceCondition::unrelated_abstraction}};
  CountingJudge judge;
  JudgmentCache cache;
  const AdherenceCondition required[] = {AdherenceCondition::abstraction,
                                         AdherenceCondition::no_abstraction};
  const auto r = adherence_rates(pairs, judge, required, 2, &cache);
  EXPECT_DOUBLE_EQ(r.rate.at(AdherenceCondition::abstraction), 0.5);
  EXPECT_DOUBLE_EQ(r.rate.at(AdherenceCondition::no_abstraction), 0.0);
  EXPECT_DOUBLE_EQ(r.rate.at(AdherenceCondition::unrelated_abstraction), 1.0);
  EXPECT_EQ(r.judge_calls, 3u);  // (x1, x2) is judged once
  EXPECT_EQ(judge.calls, 3);
  adherence_rates(pairs, judge, required, 1, &cache);
  EXPECT_EQ(judge.calls, 3);
  EXPECT_THROW(adherence_rates(pairs, judge, kAllAdherenceConditions), DataError);
}

TEST(Adherence, PairJsonAndConditionNames) {
  for (auto c : kAllAdherenceConditions) EXPECT_EQ(parse_adherence_condition(to_string(c)), c);
  const AdherencePair p{"a", "s", AdherenceCondition::retrieval};
  const nlohmann::json j = p;
  const auto back = j.get<AdherencePair>();
  EXPECT_EQ(back.condition, p.condition);
  EXPECT_EQ(back.solution, "s");
}

TEST(Adherence, BuildPairsOnSim) {
  sim::SimEnv env;
  env.add(test_util::two_strategy_problem("Invariant problem", "6"));
  const auto p = env.problems()[0];
  const sim::SimPolicy solver(env);
  const sim::TagEmbedder emb;
  std::vector<Abstraction> abs;
  for (const auto& c : env.at(p.id).candidates) {
    abs.push_back(Abstraction::make(p.id, c.text, AbstractionSource::generator_model));
  }
  const auto pairs = build_adherence_pairs(p, abs, solver, emb, 4, 0);
  std::map<AdherenceCondition, int> n;
  for (const auto& x : pairs) ++n[x.condition];
  EXPECT_EQ(n[AdherenceCondition::abstraction], 8);
  EXPECT_EQ(n[AdherenceCondition::no_abstraction], 8);
  EXPECT_EQ(n[AdherenceCondition::unrelated_abstraction], 8);
  EXPECT_EQ(n[AdherenceCondition::retrieval], 2);
  EXPECT_THROW(build_adherence_pairs(p, std::span(abs).first(1), solver, emb, 4, 0), DataError);
}

TEST(Diversity, CosineAndPairs) {
  const std::vector<double> a = {1, 0}, b = {0, 1}, c = {1, 1};
  EXPECT_DOUBLE_EQ(cosine(a, b), 0.0);
  EXPECT_NEAR(cosine(a, c), std::sqrt(0.5), 1e-15);
  sim::SimEnv env;
  env.add(test_util::two_strategy_problem("Diversity problem", "6"));
  const auto p = env.problems()[0];
  const sim::SimPolicy solver(env);
  std::vector<Abstraction> abs;
  for (const auto& cand : env.at(p.id).candidates) {
    abs.push_back(Abstraction::make(p.id, cand.text + " [[boost:6]]", AbstractionSource::generator_model));
  }
  const auto pairs = build_diversity_pairs(p, abs, solver, 4, 0);
  std::map<PairingType, int> n;
  for (const auto& x : pairs) ++n[x.type];
  EXPECT_EQ(n[PairingType::same_abstraction], 2 * 6);
  EXPECT_EQ(n[PairingType::different_abstractions], 16);
  EXPECT_EQ(n[PairingType::no_abstraction], 6);
  const auto r = semantic_diversity(pairs, sim::TagEmbedder{}, 2);
  EXPECT_GT(r.mean_similarity.at(PairingType::same_abstraction),
            r.mean_similarity.at(PairingType::different_abstractions));
}

TEST(Classifier, PromptAndParsing) {
  const auto prompt = classifier_prompt();
  EXPECT_NE(prompt.find("{abstraction}"), std::string_view::npos);
  EXPECT_NE(prompt.find("(E)"), std::string_view::npos);
  EXPECT_EQ(parse_category("maybe (A)... final: (D)"), AbstractionCategory::structural_shortcut);
  EXPECT_FALSE(parse_category("no letter (F)"));
}

TEST(Classifier, RetriesOnceThenFails) {
  ScriptedJudge ok({"hmm", "I pick (B)"});
  EXPECT_EQ(classify_abstraction("Reflect the figure.", ok), AbstractionCategory::productive_launchpoint);
  EXPECT_EQ(ok.calls, 2);
  EXPECT_NE(ok.last_instruction.find("Reflect the figure."), std::string::npos);
  ScriptedJudge bad({"hmm", "still unsure"});
  EXPECT_THROW(classify_abstraction("x", bad), ClassificationError);
}
