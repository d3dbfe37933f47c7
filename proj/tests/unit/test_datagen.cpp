#include <gtest/gtest.h>

#include "rlad/datagen.hpp"
#include "rlad/jsonl.hpp"
#include "rlad/sim.hpp"
#include "test_support.hpp"

using namespace rlad;

namespace {

/// Sample i is correct iff i % 8 < rate, with separate rates with and without
/// an abstraction.
class RatePolicy final : public PolicyBackend {
 public:
  RatePolicy(int with_per8, int without_per8, std::string gold)
      : with_(with_per8), without_(without_per8), gold_(std::move(gold)) {}
  BackendCapabilities capabilities() const override { return {true, true}; }
  std::vector<Completion> sample(const PromptParts& prompt, const SamplingParams& params) const override {
    const int rate = prompt.abstraction ? with_ : without_;
    std::vector<Completion> out;
    for (std::int64_t i = 0; i < params.n_samples; ++i) {
      out.push_back({"\\boxed{" + std::string(i % 8 < rate ? gold_ : "nope") + "}", 2});
    }
    return out;
  }

 private:
  int with_, without_;
  std::string gold_;
};

class ListSummarizer final : public SummarizerBackend {
 public:
  explicit ListSummarizer(std::vector<std::string> texts) : texts_(std::move(texts)) {}
  std::vector<std::string> summarize(const Problem&, std::span<const std::string>, int,
                                     std::uint64_t) const override {
    return texts_;
  }

 private:
  std::vector<std::string> texts_;
};

}  // namespace

TEST(TokenSequence, WholeTokensOnly) {
  EXPECT_TRUE(contains_token_sequence("so the total is 42.", "42"));
  EXPECT_FALSE(contains_token_sequence("the year 1420", "42"));
  EXPECT_TRUE(contains_token_sequence("We get 3 / 4 here", "3/4"));
  EXPECT_TRUE(contains_token_sequence("Value: X+1", "x + 1"));
  EXPECT_FALSE(contains_token_sequence("anything", ""));
}

TEST(GenerateCandidates, DedupsScreensAndCaps) {
  const auto p = Problem::make("Q?", "42");
  const ListSummarizer summ({"Work backwards.", "work   BACKWARDS.", "The answer is 42.",
                             "Draw a picture.", "Check parity."});
  SummarizationJob job;
  job.problem = p;
  job.traces = {"t1"};
  job.trace_ids = {"p/0"};
  job.n_candidates = 2;
  job.summarizer = &summ;
  const auto out = generate_candidates(job);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].text, "Work backwards.");
  EXPECT_EQ(out[1].text, "Draw a picture.");
  EXPECT_EQ(out[0].source, AbstractionSource::summarizer);
  EXPECT_EQ(out[0].leak_status, LeakStatus::unchecked);
  job.traces.clear();
  EXPECT_THROW(generate_candidates(job), std::invalid_argument);
}

TEST(Uplift, StrictComparison) {
  const auto p = Problem::make("Q?", "5");
  const auto a = Abstraction::make(p.id, "hint", AbstractionSource::human);
  const auto keep = measure_uplift(p, a, RatePolicy(5, 4, "5"), 16, 0);
  EXPECT_EQ(keep.decision, UpliftDecision::keep);
  EXPECT_EQ(keep.c_with, 10);
  EXPECT_EQ(keep.c_without, 8);
  EXPECT_DOUBLE_EQ(keep.uplift, 0.125);
  const auto tie = measure_uplift(p, a, RatePolicy(4, 4, "5"), 16, 0);
  EXPECT_EQ(tie.decision, UpliftDecision::drop);
  EXPECT_DOUBLE_EQ(tie.uplift, 0.0);
  const auto worse = measure_uplift(p, a, RatePolicy(3, 4, "5"), 16, 0);
  EXPECT_EQ(worse.decision, UpliftDecision::drop);
  const auto other = Abstraction::make(problem_id_for("other"), "hint", AbstractionSource::human);
  EXPECT_THROW(measure_uplift(p, other, RatePolicy(3, 4, "5"), 16, 0), DataError);
}

TEST(Uplift, ReportJsonRoundTrip) {
  const auto p = Problem::make("Q?", "5");
  const auto a = Abstraction::make(p.id, "hint", AbstractionSource::human);
  const auto r = measure_uplift(p, a, RatePolicy(5, 4, "5"), 8, 0);
  const nlohmann::json j = r;
  EXPECT_EQ(j.get<UpliftReport>(), r);
}

TEST(SftCorpus, WritesEntriesAndManifest) {
  test_util::TempDir dir;
  const auto p = Problem::make("Q?", "5");
  auto a = Abstraction::make(p.id, "Try parity.", AbstractionSource::summarizer);
  a.leak_status = LeakStatus::passed;
  const auto report = measure_uplift(p, a, RatePolicy(6, 2, "5"), 8, 0);
  const std::vector<Problem> problems = {p};
  const std::vector<KeptAbstraction> kept = {{a, report}};
  const StageContext ctx{1, "h", ManifestClock::fixed(0), dir.path()};
  const auto path = build_sft_corpus(problems, kept, dir / "sft.jsonl", ctx);
  const auto entries = read_jsonl<SftEntry>(path);
  ASSERT_EQ(entries.size(), 1u);
  EXPECT_EQ(entries[0].prompt, "Q?");
  EXPECT_EQ(entries[0].target, "Try parity.");
  EXPECT_DOUBLE_EQ(entries[0].uplift, 0.5);
  const auto m = read_manifest(dir / "sft.jsonl.manifest.json");
  EXPECT_EQ(m.stage, "sft-corpus");
  ASSERT_EQ(m.outputs.size(), 1u);
  EXPECT_EQ(m.outputs[0].path, "sft.jsonl");
}

TEST(SftCorpus, RejectsUncheckedOrDropped) {
  test_util::TempDir dir;
  const auto p = Problem::make("Q?", "5");
  auto a = Abstraction::make(p.id, "Try parity.", AbstractionSource::summarizer);
  const auto report = measure_uplift(p, a, RatePolicy(6, 2, "5"), 8, 0);
  const std::vector<Problem> problems = {p};
  const StageContext ctx{1, "h", ManifestClock::fixed(0), dir.path()};
  EXPECT_THROW(build_sft_corpus(problems, std::vector<KeptAbstraction>{{a, report}}, dir / "s.jsonl", ctx),
               DataError);
  a.leak_status = LeakStatus::passed;
  const auto dropped = measure_uplift(p, a, RatePolicy(2, 2, "5"), 8, 0);
  EXPECT_THROW(build_sft_corpus(problems, std::vector<KeptAbstraction>{{a, dropped}}, dir / "s.jsonl", ctx),
               DataError);
}

TEST(CollectTraces, DeterministicPerProblem) {
  sim::SimEnv env;
  env.add(test_util::two_strategy_problem("P one", "3"));
  const sim::SimPolicy solver(env);
  const auto p = env.problems()[0];
  EXPECT_EQ(collect_traces(p, solver, 6, 9), collect_traces(p, solver, 6, 9));
  EXPECT_EQ(collect_traces(p, solver, 6, 9).size(), 6u);
}
