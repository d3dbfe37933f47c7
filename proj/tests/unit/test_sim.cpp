#include <gtest/gtest.h>

#include <cmath>

#include "rlad/hashing.hpp"
#include "rlad/sim.hpp"
#include "rlad/verifier.hpp"
#include "test_support.hpp"

using namespace rlad;
using namespace rlad::sim;

namespace {
SimEnv one_problem_env() {
  SimEnv env;
  env.add(test_util::two_strategy_problem("Find the invariant.", "12"));
  return env;
}
}  // namespace

TEST(Softmax, SumsToOneAndIsStable) {
  const auto p = softmax({1000.0, 1000.0, 0.0});
  EXPECT_NEAR(p[0], 0.5, 1e-15);
  EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-15);
}

TEST(Semantics, TagsAndBoost) {
  const auto sem = parse_semantics("use [[strategy:a]] and [[strategy:b]] [[boost:1.5]] [[strategy:a]]", 2.0);
  EXPECT_EQ(sem.named, (std::vector<std::string>{"a", "b"}));
  EXPECT_DOUBLE_EQ(sem.boost, 1.5);
  EXPECT_DOUBLE_EQ(parse_semantics("plain", 2.0).boost, 2.0);
  EXPECT_THROW(parse_semantics("[[boost:-1]]", 2.0), DataError);
}

TEST(SimEnv, SolveProbabilityClosedForm) {
  const auto env = one_problem_env();
  const auto pid = env.problems()[0].id;
  EXPECT_NEAR(env.solve_probability(pid, std::nullopt), 0.5, 1e-15);
  const double e2 = std::exp(2.0);
  EXPECT_NEAR(env.solve_probability(pid, "go [[strategy:strong]]"), (0.1 + 0.9 * e2) / (1 + e2), 1e-15);
  EXPECT_NEAR(env.solve_probability(pid, "go [[strategy:weak]]"), (0.1 * e2 + 0.9) / (1 + e2), 1e-15);
}

TEST(SimPolicy, EmpiricalRateMatchesClosedForm) {
  const auto env = one_problem_env();
  const auto p = env.problems()[0];
  const SimPolicy policy(env);
  SamplingParams params;
  params.n_samples = 20000;
  params.seed = 4;
  const auto text = std::string("go [[strategy:strong]]");
  int correct = 0;
  for (const auto& c : policy.sample(PromptParts::solve_with(p, text), params)) {
    correct += is_correct_solution(c.text, p.gold_answer);
  }
  const double q = env.solve_probability(p.id, text);
  const double sd = std::sqrt(q * (1 - q) / params.n_samples);
  EXPECT_NEAR(correct / double(params.n_samples), q, 4 * sd);
}

TEST(SimPolicy, PrefixStableAndSeeded) {
  const auto env = one_problem_env();
  const auto p = env.problems()[0];
  const SimPolicy policy(env);
  SamplingParams small, big;
  small.n_samples = 4;
  big.n_samples = 12;
  small.seed = big.seed = 77;
  const auto a = policy.sample(PromptParts::solve(p), small);
  const auto b = policy.sample(PromptParts::solve(p), big);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].text, b[i].text);
  big.seed = 78;
  const auto c = policy.sample(PromptParts::solve(p), big);
  bool differs = false;
  for (std::size_t i = 0; i < c.size(); ++i) differs |= c[i].text != b[i].text;
  EXPECT_TRUE(differs);
}

TEST(SimPolicy, UnknownProblemIsPermanentError) {
  const auto env = one_problem_env();
  const SimPolicy policy(env);
  try {
    policy.sample(PromptParts::solve(Problem::make("unknown", "1")), SamplingParams{});
    FAIL();
  } catch (const BackendError& e) {
    EXPECT_EQ(e.kind(), BackendError::Kind::permanent);
  }
}

TEST(SimAbstractionPolicy, FollowsCandidateLogits) {
  auto env = one_problem_env();
  const auto p = env.problems()[0];
  env.at(p.id).candidates[1].logit = std::log(3.0);
  const SimAbstractionPolicy gen(env);
  const auto texts = gen.propose(p, 8000, 1);
  const auto strong = std::count(texts.begin(), texts.end(), env.at(p.id).candidates[1].text);
  EXPECT_NEAR(strong / 8000.0, 0.75, 0.02);
  EXPECT_EQ(gen.candidate_index(p.id, env.at(p.id).candidates[0].text), 0u);
  EXPECT_FALSE(gen.candidate_index(p.id, "unrelated"));
}

TEST(SimEnv, JsonRoundTrip) {
  const auto env = one_problem_env();
  const auto back = SimEnv::from_json(env.to_json());
  EXPECT_EQ(back.to_json(), env.to_json());
  EXPECT_THROW(SimEnv::from_json(nlohmann::json::parse(R"({"problems":[{"prompt":"x"}]})")), DataError);
}

TEST(Gradient, LogSoftmaxRowSumsToZero) {
  const auto g = log_softmax_gradient({0.3, -1.0, 2.0}, 1);
  EXPECT_NEAR(g[0] + g[1] + g[2], 0.0, 1e-15);
  EXPECT_GT(g[1], 0.0);
}

TEST(Gradient, MatchesFiniteDifferences) {
  SimEnv env = one_problem_env();
  const auto pid = env.problems()[0].id;
  env.at(pid).strategies[0].logit = 0.4;
  env.at(pid).strategies[1].logit = -0.7;
  const std::map<std::string, std::string> texts = {
      {"a-s", "[[strategy:strong]] [[boost:1.3]]"}, {"a-w", "[[strategy:weak]]"}};
  std::vector<RolloutRecord> rs;
  Rng rng(2);
  for (int i = 0; i < 12; ++i) {
    RolloutRecord r;
    r.problem_id = pid;
    r.abstraction_id = i % 3 == 0 ? "NONE" : (i % 3 == 1 ? "a-s" : "a-w");
    r.solution_text = strategy_tag(rng.below(2) ? "strong" : "weak");
    r.advantage = rng.uniform() - 0.5;
    rs.push_back(r);
  }
  EXPECT_LT(test_util::gradient_fd_error(env, rs, texts, 1e-5), 1e-6);
}

TEST(Gradient, RejectsMissingAdvantage) {
  SimEnv env = one_problem_env();
  RolloutRecord r;
  r.problem_id = env.problems()[0].id;
  r.solution_text = strategy_tag("weak");
  EXPECT_THROW(sim_gradient(env, std::vector<RolloutRecord>{r}, {}), DataError);
}

TEST(Judges, AdherenceAndClassifier) {
  const SimAdherenceJudge judge;
  EXPECT_TRUE(judge.judge("", "use [[strategy:a]]", "Approach: x [[strategy:a]]").verdict);
  EXPECT_FALSE(judge.judge("", "use [[strategy:a]]", "Approach: x [[strategy:b]]").verdict);
  const SimClassifierJudge cls;
  const auto j = cls.judge("prompt", "Avoid guessing; this approach tends to stall.", "");
  EXPECT_NE(j.rationale.find("("), std::string::npos);
}

TEST(TagEmbedder, UnitNormAndTagDominated) {
  const TagEmbedder emb;
  const auto a = emb.embed("x [[strategy:a]] some words");
  const auto b = emb.embed("y [[strategy:a]] other text");
  const auto c = emb.embed("x [[strategy:b]] some words");
  double na = 0, ab = 0, ac = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    na += a[i] * a[i];
    ab += a[i] * b[i];
    ac += a[i] * c[i];
  }
  EXPECT_NEAR(na, 1.0, 1e-12);
  EXPECT_GT(ab, ac);
  EXPECT_THROW(emb.embed(""), std::invalid_argument);
}
