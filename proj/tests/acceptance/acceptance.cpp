// Acceptance suite: one PASS/FAIL line per criterion. Tolerances, trial
// counts and time budgets are fixed below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "rlad/analysis.hpp"
#include "rlad/cli.hpp"
#include "rlad/datagen.hpp"
#include "rlad/hashing.hpp"
#include "rlad/jsonl.hpp"
#include "rlad/metrics.hpp"
#include "rlad/rewards.hpp"
#include "rlad/sim.hpp"
#include "rlad/trainer.hpp"
#include "rlad/verifier.hpp"
#include "../unit/test_support.hpp"

namespace {

using namespace rlad;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double budget_s;
  std::function<Outcome()> run;
};

// ------------------------------------------------------------------ 1

constexpr double kPassAtKTol = 1e-12;

double enumerate_pass(int n, int c, int k) {
  std::vector<int> mask(n, 0);
  std::fill(mask.end() - k, mask.end(), 1);
  long total = 0, hit = 0;
  do {
    ++total;
    bool any = false;
    for (int i = 0; i < c; ++i) any |= mask[i] != 0;
    hit += any;
  } while (std::next_permutation(mask.begin(), mask.end()));
  return double(hit) / double(total);
}

Outcome pass_at_k_exactness() {
  double worst = 0.0;
  int cases = 0;
  for (int n = 1; n <= 8; ++n) {
    for (int c = 0; c <= n; ++c) {
      for (int k = 1; k <= n; ++k) {
        worst = std::max(worst, std::abs(pass_at_k(n, c, k) - enumerate_pass(n, c, k)));
        ++cases;
      }
    }
  }
  return {worst < kPassAtKTol, fmt::format("{} cases, max abs err {:.3g}", cases, worst)};
}

// ------------------------------------------------------------------ 2

constexpr double kMaxAtKTol = 1e-12;
constexpr int kMaxAtKVectors = 200;

Outcome max_at_k_exactness() {
  Rng rng(derive_seed(2, "acceptance-max-at-k", 0));
  double worst = 0.0;
  int cases = 0;
  for (int v = 0; v < kMaxAtKVectors; ++v) {
    const int n = 1 + static_cast<int>(rng.below(6));
    std::vector<double> scores(n);
    for (auto& s : scores) {
      // Some ties on purpose.
      s = rng.below(4) == 0 ? 0.5 : rng.uniform();
    }
    for (int k = 1; k <= n; ++k) {
      std::vector<int> mask(n, 0);
      std::fill(mask.end() - k, mask.end(), 1);
      double sum = 0.0;
      long count = 0;
      do {
        double mx = -1.0;
        for (int i = 0; i < n; ++i) {
          if (mask[i]) mx = std::max(mx, scores[i]);
        }
        sum += mx;
        ++count;
      } while (std::next_permutation(mask.begin(), mask.end()));
      worst = std::max(worst, std::abs(max_at_k(scores, k, n) - sum / count));
      ++cases;
    }
  }
  return {worst < kMaxAtKTol, fmt::format("{} vectors, {} cases, max abs err {:.3g}", kMaxAtKVectors,
                                          cases, worst)};
}

// ------------------------------------------------------------------ 3

constexpr double kAdvantageSumTol = 1e-12;

Outcome masking_law() {
  // 200 problems x 4 abstractions; 625 groups of 16 rollouts = 10^4 rollouts.
  sim::SimEnv env;
  Rng rng(derive_seed(3, "acceptance-masking", 0));
  for (int i = 0; i < 200; ++i) {
    sim::SimProblem sp;
    sp.problem = Problem::make("Masking problem " + std::to_string(i), std::to_string(i + 2));
    for (const char* id : {"a", "b", "c", "d"}) {
      sp.strategies.push_back({id, std::string("route ") + id, rng.uniform(), rng.uniform() - 0.5});
    }
    for (const char* id : {"a", "b", "c", "d"}) {
      sp.candidates.push_back({std::string("Prefer [[strategy:") + id + "]].", 0.0});
    }
    env.add(std::move(sp));
  }
  const auto problems = env.problems();
  std::vector<Abstraction> abstractions;
  for (const auto& p : problems) {
    for (const auto& c : env.at(p.id).candidates) {
      abstractions.push_back(Abstraction::make(p.id, c.text, AbstractionSource::generator_model));
    }
  }
  const sim::SimPolicy solver(env);
  const sim::SimAbstractionPolicy gen(env);
  RftConfig cfg;
  cfg.sol_batch_size = 625;
  cfg.solver_group_size = 16;
  test_util::TempDir dir;
  EpochContext ctx;
  ctx.seed = 3;
  ctx.dir = dir.path();
  ctx.stage.clock = ManifestClock::fixed(0);
  const auto r = emit_sol_batches(problems, abstractions, {&gen, &solver, nullptr}, cfg, ctx);
  // Check what the external trainer will read, not just the in-memory batch.
  const auto shard = read_jsonl<TrainingGroup>(r.shard);

  std::size_t rollouts = 0, no_abs_rollouts = 0, violations = 0;
  double worst_sum = 0.0;
  for (const auto& g : shard) {
    rollouts += g.rewards.size();
    if (g.group_kind == GroupKind::no_abs) {
      no_abs_rollouts += g.rewards.size();
      for (std::size_t i = 0; i < g.rewards.size(); ++i) {
        if (g.rewards[i] != 0.0 || g.advantages[i] != 0.0) ++violations;
      }
    } else {
      double sum = 0.0;
      for (double a : g.advantages) sum += a;
      worst_sum = std::max(worst_sum, std::abs(sum));
    }
  }
  const bool ok = rollouts == 10000 && no_abs_rollouts > 0 && violations == 0 &&
                  worst_sum <= kAdvantageSumTol && shard == r.batch;
  return {ok, fmt::format("{} rollouts ({} unconditioned), {} masking violations, max |sum adv| {:.3g}",
                          rollouts, no_abs_rollouts, violations, worst_sum)};
}

// ------------------------------------------------------------------ 4

constexpr int kFilterTrials = 100;
constexpr int kFilterRequired = 99;
constexpr std::int64_t kFilterSamples = 1000;

Outcome filter_power() {
  // Baseline 0.55 = mean of p=0.9 and p=0.2 under equal logits.
  sim::SimEnv env;
  sim::SimProblem sp;
  sp.problem = Problem::make("Planted uplift problem", "31");
  sp.strategies = {{"good", "the sharp route", 0.9, 0.0}, {"poor", "the blunt route", 0.2, 0.0}};
  env.add(sp);
  const auto p = env.problems()[0];
  // Weight w on the named strategy: 0.9w + 0.2(1-w) = 0.72 -> w = 52/70; 0.2w + 0.9(1-w) = 0.40 -> w = 5/7.
  const double b_help = std::log((52.0 / 70.0) / (18.0 / 70.0));
  const double b_harm = std::log(2.5);
  const auto helpful = Abstraction::make(
      p.id, "Go for [[strategy:good]] " + sim::boost_tag(b_help), AbstractionSource::human);
  const auto harmful = Abstraction::make(
      p.id, "Go for [[strategy:poor]] " + sim::boost_tag(b_harm), AbstractionSource::human);
  const double base = env.solve_probability(p.id, std::nullopt);
  const double up_help = env.solve_probability(p.id, helpful.text) - base;
  const double up_harm = env.solve_probability(p.id, harmful.text) - base;
  const sim::SimPolicy solver(env);
  int kept = 0, dropped = 0;
  for (int t = 0; t < kFilterTrials; ++t) {
    const auto seed = derive_seed(4, "acceptance-filter", t);
    kept += measure_uplift(p, helpful, solver, kFilterSamples, seed).decision == UpliftDecision::keep;
    dropped += measure_uplift(p, harmful, solver, kFilterSamples, seed).decision == UpliftDecision::drop;
  }
  return {kept >= kFilterRequired && dropped >= kFilterRequired,
          fmt::format("true uplift {:+.3f}/{:+.3f}; helpful kept {}/{}, harmful dropped {}/{}", up_help,
                      up_harm, kept, kFilterTrials, dropped, kFilterTrials)};
}

// ------------------------------------------------------------------ 5

Outcome leak_check_echo() {
  const auto p = Problem::make("A rectangle has sides 6 and 7. What is its area?", "42");
  const sim::EchoPolicy echo;
  const auto revealing = Abstraction::make(
      p.id, "Multiply the sides; the area comes out to 42.", AbstractionSource::human);
  const auto neutral = Abstraction::make(
      p.id, "Area of a rectangle is the product of its side lengths.", AbstractionSource::human);
  const auto r1 = leak_check(revealing, p, echo, kDefaultLeakSamples, 5);
  const auto r2 = leak_check(neutral, p, echo, kDefaultLeakSamples, 5);
  const auto r1b = leak_check(revealing, p, echo, kDefaultLeakSamples, 5);
  const auto r2b = leak_check(neutral, p, echo, kDefaultLeakSamples, 5);
  const bool det = r1.status == r1b.status && r1.n_correct == r1b.n_correct &&
                   r2.status == r2b.status && r2.n_correct == r2b.n_correct;
  const bool ok = r1.status == LeakStatus::failed && r1.n_correct >= 1 &&
                  r2.status == LeakStatus::passed && r2.n_correct == 0 && r2.n == 16 && det;
  return {ok, fmt::format("revealing {}/{} correct ({}), neutral {}/{} ({}), repeat identical: {}",
                          r1.n_correct, r1.n, to_string(r1.status), r2.n_correct, r2.n,
                          to_string(r2.status), det ? "yes" : "no")};
}

// ------------------------------------------------------------------ 6

constexpr std::size_t kJointEpochs = 5;
constexpr double kHelpfulMassMin = 0.8;
constexpr std::uint64_t kJointSeed = 6;

Outcome joint_training(std::uint64_t seed) {
  sim::SimEnv env;
  sim::SimProblem sp;
  sp.problem = Problem::make("Joint training problem", "17");
  sp.problem.split_tag = SplitTag::medium;
  sp.problem.base_success_rate = 0.5;
  sp.strategies = {{"slow", "the slow route", 0.1, 0.0}, {"fast", "the fast route", 0.9, 0.0}};
  // Two families of two texts each.
  sp.candidates = {{"Take [[strategy:fast]] from the start.", 0.0},
                   {"The key is [[strategy:fast]]; commit to it.", 0.0},
                   {"Take [[strategy:slow]] from the start.", 0.0},
                   {"The key is [[strategy:slow]]; commit to it.", 0.0}};
  env.add(sp);
  const auto problems = env.problems();
  const auto pid = problems[0].id;
  const sim::SimPolicy solver(env);
  const sim::SimAbstractionPolicy gen(env);
  JointConfig cfg;
  cfg.epochs = kJointEpochs;
  cfg.master_seed = seed;
  cfg.curriculum.stages = {{SplitTag::medium, 16384}};
  // Selection keeps the best score per distinct text, so each text needs
  // enough rollouts to be ranked by quality; 1024 draws keep the epoch mean
  // reward within ~0.01.
  cfg.rft.abstractions_per_problem = 1024;
  cfg.rft.rollouts_per_abstraction = 64;
  cfg.rft.sim_lr_abs = 1.0;
  test_util::TempDir dir;
  const auto state =
      run_joint(problems, {&gen, &solver, &env}, cfg, dir.path(), {seed, "acceptance", ManifestClock::fixed(0), dir.path()});
  std::vector<double> rewards;
  for (const auto& s : state.stats) rewards.push_back(s.mean_abstraction_reward);
  bool increasing = rewards.size() == kJointEpochs;
  for (std::size_t i = 1; i < rewards.size(); ++i) increasing &= rewards[i] > rewards[i - 1];
  const auto dist = env.abstraction_distribution(pid);
  const double mass = dist[0] + dist[1];
  return {increasing && mass > kHelpfulMassMin,
          fmt::format("rewards [{:.4f}], helpful mass {:.3f}", fmt::join(rewards, ", "), mass)};
}

// ------------------------------------------------------------------ 7

constexpr int kGradientBatches = 100;
constexpr double kFdEps = 1e-5;
constexpr double kFdTol = 1e-6;

Outcome gradient_correctness() {
  Rng rng(derive_seed(7, "acceptance-gradient", 0));
  double worst = 0.0;
  for (int b = 0; b < kGradientBatches; ++b) {
    sim::SimEnv env;
    std::map<std::string, std::string> texts;
    const int n_problems = 1 + static_cast<int>(rng.below(3));
    for (int i = 0; i < n_problems; ++i) {
      sim::SimProblem sp;
      sp.problem = Problem::make(fmt::format("Gradient problem {} {}", b, i), "1");
      sp.default_boost = 0.5 + 3 * rng.uniform();
      const int n_strategies = 2 + static_cast<int>(rng.below(4));
      for (int s = 0; s < n_strategies; ++s) {
        sp.strategies.push_back({"s" + std::to_string(s), "route", rng.uniform(), 4 * rng.uniform() - 2});
      }
      env.add(std::move(sp));
    }
    const auto problems = env.problems();
    std::vector<RolloutRecord> records;
    const int n_records = 4 + static_cast<int>(rng.below(29));
    for (int r = 0; r < n_records; ++r) {
      const auto& p = problems[rng.below(problems.size())];
      const auto& strategies = env.at(p.id).strategies;
      RolloutRecord rec;
      rec.problem_id = p.id;
      if (rng.below(4) != 0) {
        std::string text = "hint";
        for (const auto& s : strategies) {
          if (rng.below(2)) text += " " + sim::strategy_tag(s.id);
        }
        if (rng.below(2)) text += " " + sim::boost_tag(std::round(rng.uniform() * 400) / 100);
        rec.abstraction_id = "a-" + std::to_string(r);
        texts[rec.abstraction_id] = text;
      }
      rec.solution_text = "Approach " + sim::strategy_tag(strategies[rng.below(strategies.size())].id);
      rec.advantage = 2 * rng.uniform() - 1;
      records.push_back(std::move(rec));
    }
    worst = std::max(worst, test_util::gradient_fd_error(env, records, texts, kFdEps));
  }
  return {worst < kFdTol, fmt::format("{} batches, max abs diff {:.3g}", kGradientBatches, worst)};
}

// ------------------------------------------------------------------ 8

constexpr std::int64_t kIsoC = 64;
constexpr double kMonotoneTol = 1e-12;

Outcome iso_compute_structure() {
  bool grid_ok = true;
  for (std::int64_t k0 : {0, 2, 4, 6, 8}) {
    std::vector<IsoComputePoint> expected;
    for (std::int64_t m = 1; m <= kIsoC; ++m) {
      if (kIsoC % m) continue;
      const std::int64_t k = k0 + kIsoC / m;
      expected.push_back({kIsoC, k0, m, k, double(m) / double(k - k0)});
    }
    std::sort(expected.begin(), expected.end(),
              [](const auto& a, const auto& b) { return a.ratio < b.ratio; });
    grid_ok &= iso_compute_grid(kIsoC, k0) == expected;
  }

  // Heterogeneous abstractions: each names one of eight routes, of which
  // only a few ever succeed.
  sim::SimEnv env;
  Rng rng(derive_seed(8, "acceptance-iso", 0));
  const int kProblems = 6, kAbs = 64;
  for (int i = 0; i < kProblems; ++i) {
    sim::SimProblem sp;
    sp.problem = Problem::make("Iso-compute problem " + std::to_string(i), std::to_string(100 + i));
    sp.default_boost = 4.0;
    for (int s = 0; s < 8; ++s) {
      const double p = s < 2 ? 0.05 + 0.1 * rng.uniform() : 0.0;
      sp.strategies.push_back({"r" + std::to_string(s), "route", p, 0.0});
    }
    env.add(std::move(sp));
  }
  const sim::SimPolicy solver(env);
  std::vector<EvalCell> cells;
  for (const auto& p : env.problems()) {
    EvalCell none;
    none.problem_id = p.id;
    none.n = 72;
    cells.push_back(none);
    for (int a = 0; a < kAbs; ++a) {
      const std::string text = "Use " + sim::strategy_tag("r" + std::to_string(a % 8)) + " variant " + std::to_string(a);
      SamplingParams params;
      params.n_samples = kIsoC + 8;
      params.seed = derive_seed(8, "acceptance-iso:" + p.id, a);
      EvalCell cell;
      cell.problem_id = p.id;
      cell.condition = abstraction_id_for(p.id, text);
      cell.n = params.n_samples;
      for (const auto& c : solver.sample(PromptParts::solve_with(p, text), params)) {
        cell.c += is_correct_solution(c.text, p.gold_answer);
      }
      cells.push_back(cell);
    }
  }
  std::vector<IsoComputePoint> points;
  for (std::int64_t k0 : {0, 2, 4, 6, 8}) {
    const auto g = iso_compute_grid(kIsoC, k0);
    points.insert(points.end(), g.begin(), g.end());
  }
  const auto rows = frontier_eval(points, cells);
  std::map<std::int64_t, std::vector<std::pair<std::int64_t, double>>> series;
  for (const auto& r : rows) series[r.point.k0].push_back({r.point.m, r.pass_estimate});
  bool monotone = true;
  std::string ends;
  for (auto& [k0, s] : series) {
    std::sort(s.begin(), s.end());
    for (std::size_t i = 1; i < s.size(); ++i) monotone &= s[i].second >= s[i - 1].second - kMonotoneTol;
    ends += fmt::format(" k0={}: {:.3f}->{:.3f}", k0, s.front().second, s.back().second);
  }
  return {grid_ok && monotone, fmt::format("grid {}, monotone in m {};{}", grid_ok ? "exact" : "MISMATCH",
                                           monotone ? "yes" : "NO", ends)};
}

// ------------------------------------------------------------------ 9

constexpr int kEqualTrials = 100;
constexpr int kEqualRequired = 95;

Outcome equal_compute() {
  // The base policy prefers a dead-end route; each abstraction names a
  // different route.
  sim::SimEnv env;
  const int kProblems = 8;
  for (int i = 0; i < kProblems; ++i) {
    sim::SimProblem sp;
    sp.problem = Problem::make("Equal-compute problem " + std::to_string(i), std::to_string(7 * i + 3));
    sp.default_boost = 6.0;
    sp.strategies = {{"dead", "a dead end", 0.02, 4.0},
                     {"r1", "route one", 0.5, 0.0},
                     {"r2", "route two", 0.35, 0.0},
                     {"r3", "route three", 0.25, 0.0}};
    for (const char* id : {"r1", "r2", "r3", "dead"}) {
      sp.candidates.push_back({std::string("Consider [[strategy:") + id + "]].", 0.0});
    }
    env.add(std::move(sp));
  }
  const sim::SimPolicy solver(env);
  std::map<std::int64_t, int> wins;
  for (int t = 0; t < kEqualTrials; ++t) {
    std::vector<EvalCell> cells;
    for (const auto& p : env.problems()) {
      auto add_cell = [&](const std::string& cond, const PromptParts& parts, std::int64_t n) {
        SamplingParams params;
        params.n_samples = n;
        params.seed = derive_seed(derive_seed(9, "acceptance-equal", t), p.id + ":" + cond, 0);
        EvalCell cell;
        cell.problem_id = p.id;
        cell.condition = cond;
        cell.n = n;
        for (const auto& c : solver.sample(parts, params)) cell.c += is_correct_solution(c.text, p.gold_answer);
        cells.push_back(cell);
      };
      add_cell(std::string(kNoAbstraction), PromptParts::solve(p), 16);
      for (const auto& cand : env.at(p.id).candidates) {
        add_cell(abstraction_id_for(p.id, cand.text), PromptParts::solve_with(p, cand.text), 8);
      }
    }
    for (std::int64_t n : {1, 2, 4}) {
      const auto r = equal_compute_pass(n, cells);
      wins[n] += r.abs_conditioned >= r.solutions_only;
    }
  }
  bool ok = true;
  for (const auto& [n, w] : wins) ok &= w >= kEqualRequired;
  return {ok, fmt::format("abs >= solutions-only in {}/{}/{} of {} trials (n=1/2/4)", wins[1], wins[2],
                          wins[4], kEqualTrials)};
}

// ------------------------------------------------------------------ 10

Outcome adherence_ordering() {
  auto once = [] {
    const auto env = sim::SimEnv::load(RLAD_FIXTURE_DIR "/sim_world.json");
    const sim::SimPolicy solver(env);
    const sim::TagEmbedder embedder;
    const sim::SimAdherenceJudge judge;
    std::vector<AdherencePair> pairs;
    std::vector<SolutionPair> div;
    for (const auto& p : env.problems()) {
      std::vector<Abstraction> abs;
      for (const auto& c : env.at(p.id).candidates) {
        abs.push_back(Abstraction::make(p.id, c.text, AbstractionSource::generator_model));
      }
      const auto a = build_adherence_pairs(p, abs, solver, embedder, 8, 10);
      pairs.insert(pairs.end(), a.begin(), a.end());
      const auto d = build_diversity_pairs(p, abs, solver, 8, 10);
      div.insert(div.end(), d.begin(), d.end());
    }
    return std::make_pair(adherence_rates(pairs, judge, kAllAdherenceConditions, 2),
                          semantic_diversity(div, embedder, 2));
  };
  const auto [adh, dv] = once();
  const auto [adh2, dv2] = once();
  const bool det = adh.to_json() == adh2.to_json() && dv.to_json() == dv2.to_json();
  const double r_abs = adh.rate.at(AdherenceCondition::abstraction);
  const double r_unrel = adh.rate.at(AdherenceCondition::unrelated_abstraction);
  const double s_same = dv.mean_similarity.at(PairingType::same_abstraction);
  const double s_diff = dv.mean_similarity.at(PairingType::different_abstractions);
  return {r_abs > r_unrel && s_same > s_diff && det,
          fmt::format("adherence {:.3f} vs unrelated {:.3f}; similarity same {:.3f} vs different {:.3f}; "
                      "repeat identical: {}",
                      r_abs, r_unrel, s_same, s_diff, det ? "yes" : "no")};
}

// ------------------------------------------------------------------ 11

bool cli_ok(std::vector<std::string> args, std::string& log) {
  args.insert(args.begin(), "rlad");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (code != 0) log += fmt::format("`{}` exited {}: {}", fmt::join(args, " "), code, err.str());
  return code == 0;
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[e.path().lexically_relative(root).generic_string()] = test_util::slurp(e.path());
  }
  return out;
}

Outcome reproducibility() {
  test_util::TempDir a, b;
  std::string log;
  const std::string problems = RLAD_FIXTURE_DIR "/sim_problems.jsonl";
  for (const fs::path& root : {a.path(), b.path()}) {
    const std::string o = root.string();
    const std::string seed = "20";
    const bool ok =
        cli_ok({"gen-abstractions", "--problems", problems, "--out-dir", o, "--seed", seed}, log) &&
        cli_ok({"filter", "--problems", problems, "--abstractions", o + "/abstractions.jsonl", "--out-dir", o,
                "--seed", seed, "--jobs", "2"},
               log) &&
        cli_ok({"partition", "--problems", problems, "--out-dir", o, "--seed", seed}, log) &&
        cli_ok({"run-joint", "--problems", o + "/partitioned_problems.jsonl", "--epochs", "2", "--out-dir", o,
                "--seed", seed},
               log) &&
        cli_ok({"eval", "--problems", problems, "--abstractions", o + "/filtered_abstractions.jsonl",
                "--sim-world", o + "/run-joint/epoch-001/sim_world.json", "--out-dir", o, "--seed", seed},
               log) &&
        cli_ok({"report", "--eval-cells", o + "/eval_cells.jsonl", "--run-dir", o + "/run-joint", "--out-dir",
                o, "--seed", seed},
               log);
    if (!ok) return {false, log};
  }
  const auto ta = tree(a.path()), tb = tree(b.path());
  std::size_t manifests = 0, reports = 0, mismatched = 0;
  for (const auto& [path, content] : ta) {
    const bool is_manifest = path.find("manifest.json") != std::string::npos;
    const bool is_report = path == "report.md" || path == "report.json";
    manifests += is_manifest;
    reports += is_report;
    if (!tb.count(path) || tb.at(path) != content) ++mismatched;
  }
  const bool ok = ta.size() == tb.size() && mismatched == 0 && manifests >= 9 && reports == 2;
  return {ok, fmt::format("{} files ({} manifests, {} reports), {} differ", ta.size(), manifests, reports,
                          mismatched)};
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::warn);
  const std::vector<Criterion> criteria = {
      {1, "pass@k exactness", 1.0, pass_at_k_exactness},
      {2, "max@k exactness", 5.0, max_at_k_exactness},
      {3, "masking law", 1.0, masking_law},
      {4, "uplift filter power", 30.0, filter_power},
      {5, "leak check", 1.0, leak_check_echo},
      {6, "joint training on simulator", 60.0, [] { return joint_training(kJointSeed); }},
      {7, "toy gradient vs finite differences", 5.0, gradient_correctness},
      {8, "iso-compute structure", 30.0, iso_compute_structure},
      {9, "equal-compute comparison", 60.0, equal_compute},
      {10, "adherence ordering", 10.0, adherence_ordering},
      {11, "pipeline reproducibility", 120.0, reproducibility},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.budget_s;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::printf("%s  [%2d] %s: %s (%.2f s, budget %.0f s%s)\n", pass ? "PASS" : "FAIL", c.id, c.name.c_str(),
                o.detail.c_str(), secs, c.budget_s, in_time ? "" : ", OVER BUDGET");
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
