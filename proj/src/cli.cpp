#include "rlad/cli.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include <spdlog/fmt/fmt.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "rlad/analysis.hpp"
#include "rlad/datagen.hpp"
#include "rlad/hashing.hpp"
#include "rlad/http_backend.hpp"
#include "rlad/jsonl.hpp"
#include "rlad/manifest.hpp"
#include "rlad/metrics.hpp"
#include "rlad/parallel.hpp"
#include "rlad/rewards.hpp"
#include "rlad/sim.hpp"
#include "rlad/trainer.hpp"
#include "rlad/verifier.hpp"

namespace rlad::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Parameters holding file paths. They are rebased onto the output directory
// when hashed so that runs in different directories agree.
const std::set<std::string> kPathKeys = {"problems", "abstractions", "cells",   "sim_world",
                                         "eval_cells", "run_dir",    "prompt"};
// Never change results, so they stay out of the config hash.
const std::set<std::string> kUnhashedKeys = {"out_dir", "jobs"};
const std::set<std::string> kCommonKeys = {"seed", "jobs", "backend", "out_dir", "sim_world"};

/// Defaults < config file < flags.
struct ParamTable {
  json defaults = json::object();
  json overrides = json::object();
  std::vector<std::string> required;
};

std::string dashed(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

template <class T>
CLI::Option* param(CLI::App* sub, ParamTable& t, const std::string& key, T def,
                   const std::string& help) {
  t.defaults[key] = def;
  auto* opt = sub->add_option_function<T>(
      dashed(key), [&t, key](const T& v) { t.overrides[key] = v; }, help);
  if constexpr (std::is_same_v<T, std::string>) {
    if (!def.empty()) opt->default_str(def);
  } else if constexpr (std::is_same_v<T, std::vector<std::int64_t>>) {
    opt->default_str(fmt::format("{}", fmt::join(def, " ")));
  } else {
    opt->default_str(fmt::format("{}", def));
  }
  return opt;
}

void required_path(CLI::App* sub, ParamTable& t, const std::string& key, const std::string& help) {
  param<std::string>(sub, t, key, "", help + " (required)");
  t.required.push_back(key);
}

/// Absent unless given on the command line or in the config file.
template <class T>
void optional_param(CLI::App* sub, ParamTable& t, const std::string& key, const std::string& help) {
  t.defaults[key] = nullptr;
  sub->add_option_function<T>(
      dashed(key), [&t, key](const T& v) { t.overrides[key] = v; }, help);
}

void rft_params(CLI::App* sub, ParamTable& t) {
  const RftConfig d;
  param(sub, t, "tau", d.tau, "keep abstractions with reward >= tau");
  param<std::int64_t>(sub, t, "max_kept_per_problem", d.max_kept_per_problem,
                      "abstractions kept per problem, best first");
  param<std::int64_t>(sub, t, "abstractions_per_problem", d.abstractions_per_problem,
                      "abstractions sampled per problem each round");
  param<std::int64_t>(sub, t, "rollouts_per_abstraction", d.rollouts_per_abstraction,
                      "solver rollouts scoring each abstraction");
  param<std::int64_t>(sub, t, "solver_group_size", d.solver_group_size,
                      "rollouts per solver prompt group");
  param<std::int64_t>(sub, t, "abs_batch_size", static_cast<std::int64_t>(d.abs_batch_size),
                      "problems per abstraction round (0 = all)");
  param<std::int64_t>(sub, t, "sol_batch_size", static_cast<std::int64_t>(d.sol_batch_size),
                      "prompt groups per solver batch");
  param(sub, t, "mix_ratio", d.mix_ratio, "fraction of no-abstraction groups per solver batch");
  param(sub, t, "sim_lr_abs", d.sim_lr_abs, "simulator abstraction-policy step size");
  param(sub, t, "sim_lr_sol", d.sim_lr_sol, "simulator solver step size");
  t.defaults["alpha_abs"] = d.alpha_abs;
  t.defaults["alpha_sol"] = d.alpha_sol;
}

struct CommandSpec {
  std::string name;
  std::string help;
  std::function<void(CLI::App*, ParamTable&)> add_params;
  /// Output files relative to the output directory, listed by --dry-run.
  std::vector<std::string> planned_outputs;
};

std::vector<CommandSpec> command_specs() {
  return {
      {"gen-abstractions", "Propose candidate abstractions for each problem",
       [](CLI::App* s, ParamTable& t) {
         required_path(s, t, "problems", "problems JSONL");
         param<std::string>(s, t, "source", "summarizer", "summarizer or generator")
             ->check(CLI::IsMember({"summarizer", "generator"}));
         param<std::int64_t>(s, t, "n_traces", 8, "solution attempts given to the summarizer");
         param<std::int64_t>(s, t, "n_candidates", 2, "candidates per problem");
       },
       {"abstractions.jsonl"}},
      {"filter", "Leak-check abstractions and keep those that raise accuracy",
       [](CLI::App* s, ParamTable& t) {
         required_path(s, t, "problems", "problems JSONL");
         required_path(s, t, "abstractions", "abstractions JSONL");
         param<std::int64_t>(s, t, "leak_samples", kDefaultLeakSamples,
                             "samples drawn from the abstraction alone");
         optional_param<std::int64_t>(s, t, "uplift_samples",
                                      "rollouts per condition (default 1000 sim, 16 http)");
       },
       {"leak_report.jsonl", "uplift_reports.jsonl", "filtered_abstractions.jsonl",
        "sft_corpus.jsonl", "sft_corpus.jsonl.manifest.json"}},
      {"partition", "Tag problems easy/medium/hard by base success rate",
       [](CLI::App* s, ParamTable& t) {
         required_path(s, t, "problems", "problems JSONL");
         param<std::int64_t>(s, t, "samples", 16, "unconditioned rollouts per problem");
         const CurriculumConfig d;
         param(s, t, "easy_min", d.easy_min, "easy when rate >= easy-min");
         param(s, t, "hard_max", d.hard_max, "hard when rate <= hard-max");
       },
       {"partitioned_problems.jsonl"}},
      {"eval", "Solve rates with and without abstractions",
       [](CLI::App* s, ParamTable& t) {
         required_path(s, t, "problems", "problems JSONL");
         optional_param<std::string>(s, t, "abstractions",
                                     "abstractions JSONL (default: sample from the generator)");
         param<std::int64_t>(s, t, "n_abstractions", 4, "abstractions per problem");
         param<std::int64_t>(s, t, "samples", 8, "solutions per (problem, condition)");
       },
       {"eval_abstractions.jsonl", "eval_cells.jsonl", "eval_report.json"}},
      {"train-abs", "One abstraction-generator round (RFT shard)",
       [](CLI::App* s, ParamTable& t) {
         required_path(s, t, "problems", "problems JSONL");
         param<std::int64_t>(s, t, "epoch", 0, "epoch index used for seeding");
         param<std::int64_t>(s, t, "token_budget", 16384, "max tokens per rollout");
         rft_params(s, t);
       },
       {"train-abs/abs_sft.jsonl", "train-abs/sim_world.json"}},
      {"train-sol", "One solution-generator round (masked-reward shard)",
       [](CLI::App* s, ParamTable& t) {
         required_path(s, t, "problems", "problems JSONL");
         required_path(s, t, "abstractions", "abstractions JSONL");
         param<std::int64_t>(s, t, "epoch", 0, "epoch index used for seeding");
         param<std::int64_t>(s, t, "token_budget", 16384, "max tokens per rollout");
         rft_params(s, t);
       },
       {"train-sol/sol_shard.jsonl", "train-sol/sol_shard.manifest.json",
        "train-sol/sim_world.json"}},
      {"run-joint", "Joint training loop over the curriculum stages",
       [](CLI::App* s, ParamTable& t) {
         required_path(s, t, "problems", "partitioned problems JSONL");
         param<std::int64_t>(s, t, "epochs", 1, "epochs E");
         param<std::int64_t>(s, t, "stop_after", 0, "stop after this many epochs (0 = run all)");
         rft_params(s, t);
         t.defaults["curriculum"] = CurriculumConfig{}.to_json();
       },
       {"run-joint/epoch-NNN/manifest.json"}},
      {"analyze-compute", "Iso-compute frontier: abstractions versus solutions per abstraction",
       [](CLI::App* s, ParamTable& t) {
         required_path(s, t, "cells", "eval cells JSONL");
         param<std::vector<std::int64_t>>(s, t, "budgets", {16}, "compute budgets C");
         param<std::vector<std::int64_t>>(s, t, "k0", {0, 2, 4, 6, 8}, "solution offsets k0");
       },
       {"frontier.csv", "frontier.svg"}},
      {"analyze-adherence", "Adherence rates and semantic diversity of solutions",
       [](CLI::App* s, ParamTable& t) {
         required_path(s, t, "problems", "problems JSONL");
         required_path(s, t, "abstractions", "abstractions JSONL");
         param<std::int64_t>(s, t, "samples", 8, "solutions per condition");
       },
       {"adherence_pairs.jsonl", "adherence_report.json", "diversity_report.json"}},
      {"classify", "Categorize abstractions",
       [](CLI::App* s, ParamTable& t) {
         required_path(s, t, "abstractions", "abstractions JSONL");
         optional_param<std::string>(s, t, "prompt", "classifier prompt file");
       },
       {"categories.jsonl", "categories_summary.json"}},
      {"report", "Render evaluation and training results",
       [](CLI::App* s, ParamTable& t) {
         required_path(s, t, "eval_cells", "eval cells JSONL");
         optional_param<std::string>(s, t, "run_dir", "run-joint output directory");
       },
       {"report.md", "report.json"}},
  };
}

// ---------------------------------------------------------------- backends

struct Backends {
  bool is_sim = true;
  std::unique_ptr<sim::SimEnv> env;
  std::unique_ptr<PolicyBackend> solver;
  std::unique_ptr<PolicyBackend> uplift_solver;
  std::unique_ptr<AbstractionGenerator> generator;
  std::unique_ptr<SummarizerBackend> summarizer;
  std::unique_ptr<JudgeBackend> judge;
  std::unique_ptr<JudgeBackend> classifier;
  std::unique_ptr<EmbeddingBackend> embedder;

  const PolicyBackend& uplift() const { return uplift_solver ? *uplift_solver : *solver; }
};

const std::vector<std::string> kHttpRoles = {"solver", "uplift_solver", "generator", "summarizer",
                                             "judge",  "classifier",    "embedder"};

Backends make_backends(const json& resolved) {
  Backends b;
  const auto backend = resolved.at("backend").get<std::string>();
  if (backend == "sim") {
    b.env = std::make_unique<sim::SimEnv>(
        sim::SimEnv::load(resolved.at("sim_world").get<std::string>()));
    b.solver = std::make_unique<sim::SimPolicy>(*b.env);
    b.generator = std::make_unique<sim::SimAbstractionPolicy>(*b.env);
    b.summarizer = std::make_unique<sim::SimSummarizer>(*b.env);
    b.judge = std::make_unique<sim::SimAdherenceJudge>();
    b.classifier = std::make_unique<sim::SimClassifierJudge>();
    b.embedder = std::make_unique<sim::TagEmbedder>();
    return b;
  }
  b.is_sim = false;
  const json http = resolved.value("http", json::object());
  json shared = http;
  for (const auto& role : kHttpRoles) shared.erase(role);
  const auto limiter = std::make_shared<RequestLimiter>(shared.value("request_cap", 32));
  auto client = [&](const std::string& role) {
    json cfg = shared;
    if (http.contains(role)) cfg.merge_patch(http[role]);
    return std::make_shared<const HttpClient>(HttpConfig::from_json(cfg), limiter);
  };
  b.solver = std::make_unique<HttpPolicy>(client("solver"));
  if (http.contains("uplift_solver")) b.uplift_solver = std::make_unique<HttpPolicy>(client("uplift_solver"));
  b.generator = std::make_unique<HttpAbstractionGenerator>(client("generator"));
  b.summarizer = std::make_unique<HttpSummarizer>(client("summarizer"));
  b.judge = std::make_unique<HttpJudge>(client("judge"));
  b.classifier = std::make_unique<HttpJudge>(client("classifier"), true);
  b.embedder = std::make_unique<HttpEmbedder>(client("embedder"));
  return b;
}

// ---------------------------------------------------------------- commands

struct Ctx {
  std::string command;
  json params;
  fs::path out_dir;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  StageContext stage;
  Backends* backends = nullptr;
  RunManifest* manifest = nullptr;
  std::ostream* out = nullptr;

  fs::path path(const std::string& key) const { return params.at(key).get<std::string>(); }
  std::int64_t integer(const std::string& key) const { return params.at(key).get<std::int64_t>(); }
  void input(const fs::path& p) const { manifest->inputs.push_back(digest_file(p, out_dir)); }
  void output(const fs::path& p) const { manifest->outputs.push_back(digest_file(p, out_dir)); }
  TrainerBackends trainer() const {
    return {backends->generator.get(), backends->solver.get(), backends->env.get()};
  }
};

std::vector<Problem> load_problems_input(const Ctx& c, const std::string& key = "problems") {
  const auto path = c.path(key);
  auto problems = load_problems(path);
  c.input(path);
  return problems;
}

std::vector<Abstraction> load_abstractions_input(const Ctx& c) {
  const auto path = c.path("abstractions");
  auto abstractions = load_abstractions(path);
  c.input(path);
  return abstractions;
}

std::map<std::string, const Problem*> index_problems(const std::vector<Problem>& problems) {
  std::map<std::string, const Problem*> by_id;
  for (const auto& p : problems) by_id.emplace(p.id, &p);
  return by_id;
}

void write_json_file(const fs::path& path, const json& j) { write_text_atomic(path, j.dump(2) + "\n"); }

json cmd_gen_abstractions(Ctx& c) {
  const auto problems = load_problems_input(c);
  const auto source = c.params.at("source").get<std::string>();
  const auto n_traces = c.integer("n_traces");
  const auto n_candidates = static_cast<int>(c.integer("n_candidates"));
  const auto& b = *c.backends;
  auto per_problem = parallel_map(problems.size(), c.jobs, [&](std::size_t i) {
    const Problem& p = problems[i];
    if (source == "summarizer") {
      SummarizationJob job;
      job.problem = p;
      job.traces = collect_traces(p, *b.solver, n_traces, c.seed);
      for (std::size_t t = 0; t < job.traces.size(); ++t) job.trace_ids.push_back(p.id + "/" + std::to_string(t));
      job.n_candidates = n_candidates;
      job.summarizer = b.summarizer.get();
      job.seed = c.seed;
      return generate_candidates(job);
    }
    std::vector<Abstraction> out;
    std::set<std::string> seen;
    for (const auto& text : b.generator->propose(p, n_candidates, derive_seed(c.seed, "gen-propose:" + p.id, 0))) {
      if (contains_token_sequence(text, p.gold_answer)) continue;
      auto a = Abstraction::make(p.id, text, AbstractionSource::generator_model);
      if (seen.insert(a.id).second) out.push_back(std::move(a));
    }
    return out;
  });
  std::vector<Abstraction> all;
  for (auto& list : per_problem) all.insert(all.end(), list.begin(), list.end());
  const auto path = c.out_dir / "abstractions.jsonl";
  write_jsonl(path, all);
  c.output(path);
  return {{"n_problems", problems.size()}, {"n_abstractions", all.size()}, {"source", source}};
}

json cmd_filter(Ctx& c) {
  const auto problems = load_problems_input(c);
  const auto abstractions = load_abstractions_input(c);
  const auto by_id = index_problems(problems);
  for (const auto& a : abstractions) {
    if (!by_id.count(a.problem_id)) {
      throw DataError("abstraction " + a.id + " refers to unknown problem " + a.problem_id);
    }
  }
  const auto n_leak = c.integer("leak_samples");
  const auto n_uplift = c.params.at("uplift_samples").is_null()
                            ? (c.backends->is_sim ? kDefaultUpliftSamplesSim : kDefaultUpliftSamplesHttp)
                            : c.integer("uplift_samples");
  struct Outcome {
    Abstraction abstraction;
    LeakCheckResult leak;
    std::optional<UpliftReport> uplift;
  };
  const auto& b = *c.backends;
  const auto outcomes = parallel_map(abstractions.size(), c.jobs, [&](std::size_t i) {
    Outcome o;
    o.abstraction = abstractions[i];
    const Problem& p = *by_id.at(o.abstraction.problem_id);
    o.leak = leak_check(o.abstraction, p, *b.solver, n_leak, c.seed);
    o.abstraction.leak_status = o.leak.status;
    if (o.leak.status == LeakStatus::passed) {
      o.uplift = measure_uplift(p, o.abstraction, b.uplift(), n_uplift, c.seed);
      o.abstraction.uplift = o.uplift->uplift;
    }
    return o;
  });

  std::vector<json> leak_rows;
  std::vector<UpliftReport> reports;
  std::vector<Abstraction> kept_abstractions;
  std::vector<KeptAbstraction> kept;
  for (const auto& o : outcomes) {
    leak_rows.push_back({{"abstraction_id", o.abstraction.id},
                         {"problem_id", o.abstraction.problem_id},
                         {"status", to_string(o.leak.status)},
                         {"n", o.leak.n},
                         {"n_correct", o.leak.n_correct}});
    if (!o.uplift) continue;
    reports.push_back(*o.uplift);
    if (o.uplift->decision == UpliftDecision::keep) {
      kept_abstractions.push_back(o.abstraction);
      kept.push_back({o.abstraction, *o.uplift});
    }
  }
  const auto leak_path = c.out_dir / "leak_report.jsonl";
  const auto uplift_path = c.out_dir / "uplift_reports.jsonl";
  const auto kept_path = c.out_dir / "filtered_abstractions.jsonl";
  write_jsonl(leak_path, leak_rows);
  write_jsonl(uplift_path, reports);
  write_jsonl(kept_path, kept_abstractions);
  const auto corpus = build_sft_corpus(problems, kept, c.out_dir / "sft_corpus.jsonl", c.stage);
  for (const auto& p : {leak_path, uplift_path, kept_path, corpus}) c.output(p);
  c.output(fs::path(corpus.string() + ".manifest.json"));
  const auto n_failed = std::count_if(outcomes.begin(), outcomes.end(), [](const Outcome& o) {
    return o.leak.status == LeakStatus::failed;
  });
  return {{"n_abstractions", abstractions.size()},
          {"n_leak_failed", n_failed},
          {"n_kept", kept.size()},
          {"leak_samples", n_leak},
          {"uplift_samples", n_uplift}};
}

json cmd_partition(Ctx& c) {
  const auto problems = load_problems_input(c);
  CurriculumConfig cfg;
  cfg.easy_min = c.params.at("easy_min").get<double>();
  cfg.hard_max = c.params.at("hard_max").get<double>();
  cfg.validate();
  const auto checkpoint =
      c.out_dir / ("partition." + c.stage.config_hash.substr(0, 12) + ".checkpoint.jsonl");
  const auto tagged = partition_by_success(problems, *c.backends->solver, c.integer("samples"), cfg,
                                           c.seed, c.jobs, checkpoint);
  const auto path = c.out_dir / "partitioned_problems.jsonl";
  write_jsonl(path, tagged);
  c.output(path);
  fs::remove(checkpoint);
  std::map<std::string, std::size_t> counts;
  for (const auto& p : tagged) ++counts[std::string(to_string(p.split_tag))];
  return {{"n_problems", tagged.size()}, {"splits", counts}};
}

constexpr std::int64_t kProposalOversample = 8;

/// Drops problems without any abstraction cell, which have nothing to compare.
std::vector<EvalCell> paired_cells(std::span<const EvalCell> cells) {
  std::set<std::string> with_abs;
  for (const auto& cell : cells) {
    if (!cell.is_no_abs()) with_abs.insert(cell.problem_id);
  }
  std::vector<EvalCell> out;
  std::set<std::string> dropped;
  for (const auto& cell : cells) {
    if (with_abs.count(cell.problem_id)) {
      out.push_back(cell);
    } else {
      dropped.insert(cell.problem_id);
    }
  }
  for (const auto& pid : dropped) spdlog::warn("problem {}: no abstraction cells, left out of the summary", pid);
  if (out.empty()) throw DataError("no problem has abstraction cells");
  return out;
}

json cmd_eval(Ctx& c) {
  const auto problems = load_problems_input(c);
  const auto n_abs = c.integer("n_abstractions");
  const auto samples = c.integer("samples");
  if (n_abs < 1 || samples < 1) throw UsageError("--n-abstractions and --samples must be >= 1");
  std::map<std::string, std::vector<Abstraction>> from_file;
  const bool use_file = !c.params.at("abstractions").is_null();
  if (use_file) {
    for (const auto& a : load_abstractions_input(c)) {
      auto& list = from_file[a.problem_id];
      if (a.leak_status != LeakStatus::failed && static_cast<std::int64_t>(list.size()) < n_abs) {
        list.push_back(a);
      }
    }
  }
  const auto& b = *c.backends;
  struct PerProblem {
    std::vector<Abstraction> abstractions;
    std::vector<EvalCell> cells;
  };
  auto results = parallel_map(problems.size(), c.jobs, [&](std::size_t i) {
    const Problem& p = problems[i];
    PerProblem r;
    if (use_file) {
      r.abstractions = from_file[p.id];
    } else {
      // Oversample, then keep the first n_abs distinct proposals.
      std::set<std::string> seen;
      for (const auto& text :
           b.generator->propose(p, static_cast<int>(n_abs * kProposalOversample),
                                derive_seed(c.seed, "eval-propose:" + p.id, 0))) {
        if (static_cast<std::int64_t>(r.abstractions.size()) == n_abs) break;
        auto a = Abstraction::make(p.id, text, AbstractionSource::generator_model);
        if (seen.insert(a.id).second) r.abstractions.push_back(std::move(a));
      }
    }
    if (!use_file && static_cast<std::int64_t>(r.abstractions.size()) < n_abs) {
      spdlog::warn("problem {}: {} distinct abstractions (requested {})", p.id,
                   r.abstractions.size(), n_abs);
    }
    auto cell_for = [&](const std::string& condition, const PromptParts& parts) {
      SamplingParams params = SamplingParams::val();
      params.n_samples = samples;
      params.seed = derive_seed(c.seed, "eval:" + p.id + ":" + condition, 0);
      EvalCell cell;
      cell.problem_id = p.id;
      cell.condition = condition;
      for (const auto& comp : b.solver->sample(parts, params)) {
        ++cell.n;
        if (is_correct_solution(comp.text, p.gold_answer)) ++cell.c;
      }
      return cell;
    };
    r.cells.push_back(cell_for(std::string(kNoAbstraction), PromptParts::solve(p)));
    for (const auto& a : r.abstractions) {
      r.cells.push_back(cell_for(a.id, PromptParts::solve_with(p, a.text)));
    }
    return r;
  });
  std::vector<Abstraction> used;
  std::vector<EvalCell> cells;
  for (auto& r : results) {
    used.insert(used.end(), r.abstractions.begin(), r.abstractions.end());
    cells.insert(cells.end(), r.cells.begin(), r.cells.end());
  }
  const auto summary = table2_protocol(paired_cells(cells));
  const json report = {{"wo_abs_avg", summary.wo_abs_avg},
                       {"w_abs_avg", summary.w_abs_avg},
                       {"w_abs_best", summary.w_abs_best},
                       {"n_problems", summary.n_problems},
                       {"samples_per_cell", samples},
                       {"n_abstractions", n_abs}};
  const auto abs_path = c.out_dir / "eval_abstractions.jsonl";
  const auto cells_path = c.out_dir / "eval_cells.jsonl";
  const auto report_path = c.out_dir / "eval_report.json";
  write_jsonl(abs_path, used);
  write_jsonl(cells_path, cells);
  write_json_file(report_path, report);
  for (const auto& p : {abs_path, cells_path, report_path}) c.output(p);
  return report;
}

std::vector<Problem> without_hard(std::vector<Problem> problems) {
  const auto before = problems.size();
  std::erase_if(problems, [](const Problem& p) { return p.split_tag == SplitTag::hard; });
  if (problems.size() != before) {
    spdlog::info("holding out {} hard problems", before - problems.size());
  }
  if (problems.empty()) throw DataError("no trainable (non-hard) problems");
  return problems;
}

EpochContext epoch_context(const Ctx& c, const fs::path& dir) {
  EpochContext e;
  e.epoch = static_cast<std::size_t>(c.integer("epoch"));
  e.seed = derive_seed(c.seed, "epoch", e.epoch);
  e.token_budget = c.integer("token_budget");
  e.dir = dir;
  e.stage = c.stage;
  e.jobs = c.jobs;
  return e;
}

void save_world(const Ctx& c, const fs::path& dir) {
  if (!c.backends->env) return;
  const auto path = dir / "sim_world.json";
  write_json_file(path, c.backends->env->to_json());
  c.output(path);
}

json cmd_train_abs(Ctx& c) {
  const auto problems = without_hard(load_problems_input(c));
  const auto rft = RftConfig::from_json(c.params);
  const auto dir = c.out_dir / "train-abs";
  fs::create_directories(dir);
  const auto r = rft_epoch_abs(problems, c.trainer(), rft, epoch_context(c, dir));
  if (r.shard) c.output(*r.shard);
  save_world(c, dir);
  return {{"mean_abstraction_reward", r.mean_reward},
          {"n_scored", r.scored.size()},
          {"n_kept", r.kept.size()},
          {"rft", rft.to_json()}};
}

json cmd_train_sol(Ctx& c) {
  const auto problems = without_hard(load_problems_input(c));
  std::vector<Abstraction> abstractions;
  for (auto& a : load_abstractions_input(c)) {
    if (a.leak_status != LeakStatus::failed) abstractions.push_back(std::move(a));
  }
  const auto rft = RftConfig::from_json(c.params);
  const auto dir = c.out_dir / "train-sol";
  const auto r = emit_sol_batches(problems, abstractions, c.trainer(), rft, epoch_context(c, dir));
  c.output(r.shard);
  c.output(dir / "sol_shard.manifest.json");
  save_world(c, dir);
  return {{"n_groups", r.batch.size()},
          {"mean_reward_with_abs", r.mean_reward_with_abs},
          {"rft", rft.to_json()}};
}

json cmd_run_joint(Ctx& c) {
  const auto problems = load_problems_input(c);
  JointConfig jc;
  const auto epochs = c.integer("epochs");
  const auto stop_after = c.integer("stop_after");
  if (epochs < 0 || stop_after < 0) throw UsageError("--epochs and --stop-after must be >= 0");
  jc.epochs = static_cast<std::size_t>(epochs);
  jc.curriculum = CurriculumConfig::from_json(c.params.at("curriculum"));
  jc.rft = RftConfig::from_json(c.params);
  jc.master_seed = c.seed;
  jc.jobs = c.jobs;
  if (stop_after > 0) jc.stop_after = static_cast<std::size_t>(stop_after);
  const auto state = run_joint(problems, c.trainer(), jc, c.out_dir / "run-joint", c.stage);
  for (const auto& m : state.manifests) c.output(m);
  if (!state.manifests.empty()) c.manifest->previous = sha256_file(state.manifests.back());
  return {{"epochs", jc.epochs},
          {"epochs_done", state.epochs_done},
          {"stats", state.stats},
          {"rft", jc.rft.to_json()},
          {"curriculum", jc.curriculum.to_json()}};
}

json cmd_analyze_compute(Ctx& c) {
  const auto cells_path = c.path("cells");
  const auto cells = read_jsonl<EvalCell>(cells_path);
  c.input(cells_path);
  std::map<std::string, std::int64_t> n_abs_cells;
  std::int64_t min_n = std::numeric_limits<std::int64_t>::max();
  for (const auto& cell : cells) {
    if (cell.is_no_abs()) continue;
    ++n_abs_cells[cell.problem_id];
    min_n = std::min(min_n, cell.n);
  }
  if (n_abs_cells.empty()) throw DataError("no abstraction cells in " + cells_path.string());
  std::int64_t min_m = std::numeric_limits<std::int64_t>::max();
  for (const auto& [pid, m] : n_abs_cells) min_m = std::min(min_m, m);
  std::vector<IsoComputePoint> points;
  std::size_t n_dropped = 0;
  for (const auto C : c.params.at("budgets").get<std::vector<std::int64_t>>()) {
    for (const auto k0 : c.params.at("k0").get<std::vector<std::int64_t>>()) {
      if (C < 1 || k0 < 0) throw UsageError("budgets must be >= 1 and k0 >= 0");
      for (const auto& pt : iso_compute_grid(C, k0)) {
        if (pt.m <= min_m && pt.k <= min_n) {
          points.push_back(pt);
        } else {
          ++n_dropped;
        }
      }
    }
  }
  if (n_dropped > 0) {
    spdlog::warn("{} grid points need more than {} abstractions or {} samples per cell; skipped",
                 n_dropped, min_m, min_n);
  }
  if (points.empty()) throw DataError("no grid point is covered by the available cells");
  const auto rows = frontier_eval(points, cells);
  const auto csv = c.out_dir / "frontier.csv";
  const auto svg = c.out_dir / "frontier.svg";
  write_text_atomic(csv, frontier_csv(rows));
  write_text_atomic(svg, frontier_svg(rows));
  c.output(csv);
  c.output(svg);
  return {{"n_points", rows.size()}, {"n_skipped", n_dropped}};
}

json cmd_analyze_adherence(Ctx& c) {
  const auto problems = load_problems_input(c);
  std::map<std::string, std::vector<Abstraction>> by_problem;
  for (auto& a : load_abstractions_input(c)) {
    if (a.leak_status != LeakStatus::failed) by_problem[a.problem_id].push_back(std::move(a));
  }
  const auto samples = c.integer("samples");
  const auto& b = *c.backends;
  std::vector<const Problem*> usable;
  for (const auto& p : problems) {
    if (by_problem[p.id].size() >= 2) {
      usable.push_back(&p);
    } else {
      spdlog::warn("problem {}: fewer than two abstractions, skipped", p.id);
    }
  }
  if (usable.empty()) throw DataError("no problem has at least two abstractions");
  struct Pairs {
    std::vector<AdherencePair> adherence;
    std::vector<SolutionPair> diversity;
  };
  auto per = parallel_map(usable.size(), c.jobs, [&](std::size_t i) {
    const Problem& p = *usable[i];
    const auto& abs = by_problem.at(p.id);
    return Pairs{build_adherence_pairs(p, abs, *b.solver, *b.embedder, samples, c.seed),
                 build_diversity_pairs(p, abs, *b.solver, samples, c.seed)};
  });
  std::vector<AdherencePair> pairs;
  std::vector<SolutionPair> div_pairs;
  for (auto& x : per) {
    pairs.insert(pairs.end(), x.adherence.begin(), x.adherence.end());
    div_pairs.insert(div_pairs.end(), x.diversity.begin(), x.diversity.end());
  }
  const auto adherence = adherence_rates(pairs, *b.judge, kAllAdherenceConditions, c.jobs);
  const auto diversity = semantic_diversity(div_pairs, *b.embedder, c.jobs);
  const auto pairs_path = c.out_dir / "adherence_pairs.jsonl";
  const auto adh_path = c.out_dir / "adherence_report.json";
  const auto div_path = c.out_dir / "diversity_report.json";
  write_jsonl(pairs_path, pairs);
  write_json_file(adh_path, adherence.to_json());
  write_json_file(div_path, diversity.to_json());
  for (const auto& p : {pairs_path, adh_path, div_path}) c.output(p);
  return {{"adherence", adherence.to_json()},
          {"diversity", diversity.to_json()},
          {"judge_calls", adherence.judge_calls}};
}

json cmd_classify(Ctx& c) {
  const auto abstractions = load_abstractions_input(c);
  std::string prompt(classifier_prompt());
  if (!c.params.at("prompt").is_null()) {
    const auto path = c.path("prompt");
    std::ifstream in(path);
    if (!in) throw DataError("cannot open prompt " + path.string());
    prompt.assign(std::istreambuf_iterator<char>(in), {});
    c.input(path);
  }
  const auto& b = *c.backends;
  const auto categories = parallel_map(abstractions.size(), c.jobs, [&](std::size_t i) {
    return classify_abstraction(abstractions[i].text, *b.classifier, prompt);
  });
  std::vector<json> rows;
  std::map<std::string, std::size_t> counts;
  for (std::size_t i = 0; i < abstractions.size(); ++i) {
    const std::string cat(to_string(categories[i]));
    rows.push_back({{"abstraction_id", abstractions[i].id},
                    {"problem_id", abstractions[i].problem_id},
                    {"category", cat}});
    ++counts[cat];
  }
  const auto rows_path = c.out_dir / "categories.jsonl";
  const auto summary_path = c.out_dir / "categories_summary.json";
  write_jsonl(rows_path, rows);
  write_json_file(summary_path, counts);
  c.output(rows_path);
  c.output(summary_path);
  return {{"counts", counts}};
}

json cmd_report(Ctx& c) {
  const auto cells_path = c.path("eval_cells");
  const auto cells = paired_cells(read_jsonl<EvalCell>(cells_path));
  c.input(cells_path);
  const auto summary = table2_protocol(cells);

  std::string md = "# Evaluation report\n\n";
  md += "| problems | w/o abstraction | w/ abstraction (avg) | w/ abstraction (best) |\n";
  md += "|---:|---:|---:|---:|\n";
  md += fmt::format("| {} | {:.4f} | {:.4f} | {:.4f} |\n\n", summary.n_problems,
                    summary.wo_abs_avg, summary.w_abs_avg, summary.w_abs_best);

  std::map<std::string, std::vector<const EvalCell*>> by_problem;
  for (const auto& cell : cells) by_problem[cell.problem_id].push_back(&cell);
  md += "| problem | w/o | w/ avg | w/ best | abstractions |\n|---|---:|---:|---:|---:|\n";
  json per_problem = json::array();
  for (const auto& [pid, list] : by_problem) {
    const auto one = table2_protocol(
        [&] {
          std::vector<EvalCell> v;
          for (const auto* x : list) v.push_back(*x);
          return v;
        }());
    md += fmt::format("| {} | {:.4f} | {:.4f} | {:.4f} | {} |\n", pid, one.wo_abs_avg,
                      one.w_abs_avg, one.w_abs_best, list.size() - 1);
    per_problem.push_back({{"problem_id", pid},
                           {"wo_abs", one.wo_abs_avg},
                           {"w_abs_avg", one.w_abs_avg},
                           {"w_abs_best", one.w_abs_best}});
  }
  json report = {{"wo_abs_avg", summary.wo_abs_avg},
                 {"w_abs_avg", summary.w_abs_avg},
                 {"w_abs_best", summary.w_abs_best},
                 {"n_problems", summary.n_problems},
                 {"per_problem", per_problem}};

  if (!c.params.at("run_dir").is_null()) {
    const auto run_dir = c.path("run_dir");
    json epochs = json::array();
    md += "\n## Training\n\n| epoch | stage | problems | abstractions | kept | abstraction reward | "
          "solution reward |\n|---:|---:|---:|---:|---:|---:|---:|\n";
    for (std::size_t e = 0;; ++e) {
      const auto mpath = epoch_dir(run_dir, e) / "manifest.json";
      if (!fs::exists(mpath)) break;
      c.input(mpath);
      const auto s = read_manifest(mpath).details.at("stats").get<EpochStats>();
      md += fmt::format("| {} | {} | {} | {} | {} | {:.4f} | {:.4f} |\n", s.epoch, s.stage,
                        s.n_problems, s.n_abstractions, s.n_kept, s.mean_abstraction_reward,
                        s.mean_solution_reward);
      epochs.push_back(s);
    }
    report["training"] = epochs;
  }
  const auto md_path = c.out_dir / "report.md";
  const auto json_path = c.out_dir / "report.json";
  write_text_atomic(md_path, md);
  write_json_file(json_path, report);
  c.output(md_path);
  c.output(json_path);
  *c.out << md;
  return {{"n_problems", summary.n_problems}};
}

const std::map<std::string, std::function<json(Ctx&)>>& command_table() {
  static const std::map<std::string, std::function<json(Ctx&)>> table = {
      {"gen-abstractions", cmd_gen_abstractions},
      {"filter", cmd_filter},
      {"partition", cmd_partition},
      {"eval", cmd_eval},
      {"train-abs", cmd_train_abs},
      {"train-sol", cmd_train_sol},
      {"run-joint", cmd_run_joint},
      {"analyze-compute", cmd_analyze_compute},
      {"analyze-adherence", cmd_analyze_adherence},
      {"classify", cmd_classify},
      {"report", cmd_report},
  };
  return table;
}

// ---------------------------------------------------------------- plumbing

std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::string suggestion(const std::string& unknown, const std::vector<std::string>& known) {
  std::string best;
  std::size_t best_d = 4;
  for (const auto& k : known) {
    const auto d = edit_distance(unknown, k);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

std::vector<std::string> known_names(const CLI::App& app, const CLI::App* sub) {
  std::vector<std::string> names;
  for (const auto* s : app.get_subcommands({})) names.push_back(s->get_name());
  if (sub) {
    for (const auto* o : sub->get_options()) {
      for (const auto& l : o->get_lnames()) names.push_back("--" + l);
    }
  }
  return names;
}

json rebased_for_hash(const json& resolved, const fs::path& out_dir) {
  json h = resolved;
  for (const auto& k : kUnhashedKeys) h.erase(k);
  const auto base = fs::weakly_canonical(out_dir);
  for (const auto& k : kPathKeys) {
    if (!h.contains(k) || !h[k].is_string()) continue;
    const auto rel = fs::weakly_canonical(h[k].get<std::string>()).lexically_relative(base);
    if (!rel.empty() && *rel.begin() != "..") h[k] = "$OUT/" + rel.generic_string();
  }
  return h;
}

void setup_logging(bool verbose) {
  auto logger = spdlog::get("rlad");
  if (!logger) {
    logger = spdlog::stderr_color_mt("rlad");
    logger->set_pattern("[%l] %v");
    spdlog::set_default_logger(logger);
  }
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Abstraction-guided reasoning: training and evaluation harness", "rlad"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  const auto specs = command_specs();
  std::map<std::string, ParamTable> tables;
  std::string config_path;
  bool dry_run = false;
  bool verbose = false;
  for (const auto& spec : specs) {
    auto* sub = app.add_subcommand(spec.name, spec.help);
    auto& t = tables[spec.name];
    spec.add_params(sub, t);
    param<std::uint64_t>(sub, t, "seed", 0, "master seed");
    param<std::int64_t>(sub, t, "jobs", 1, "parallel workers");
    param<std::string>(sub, t, "backend", "sim", "sim or http")
        ->check(CLI::IsMember({"sim", "http"}));
    param<std::string>(sub, t, "out_dir", "out", "output directory");
    param<std::string>(sub, t, "sim_world", RLAD_FIXTURE_DIR "/sim_world.json",
                       "simulator world JSON");
    sub->add_option("--config", config_path, "JSON config file (flags override it)");
    sub->add_flag("--dry-run", dry_run, "print the resolved config and planned manifest, then exit");
    sub->add_flag("-v,--verbose", verbose, "debug logging");
  }

  if (args.size() > 1 && !args[1].empty() && args[1][0] != '-' &&
      !command_table().count(args[1])) {
    err << "error: unknown command '" << args[1] << "'\n";
    const auto s = suggestion(args[1], known_names(app, nullptr));
    if (!s.empty()) err << "did you mean '" << s << "'?\n";
    err << "run with --help for usage\n";
    return kExitUsageError;
  }
  std::vector<std::string> argv_rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(argv_rev);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      std::ostringstream msg;
      app.exit(e, msg, msg);
      out << msg.str();
      return kExitOk;
    }
    err << "error: " << e.what() << "\n";
    const CLI::App* active = nullptr;
    for (const auto* s : app.get_subcommands()) active = s;
    if (const auto* extras = dynamic_cast<const CLI::ExtrasError*>(&e)) {
      (void)extras;
      for (const auto& arg : active ? active->remaining() : app.remaining()) {
        const auto s = suggestion(arg, known_names(app, active));
        if (!s.empty()) err << "did you mean '" << s << "'?\n";
      }
    }
    err << "run with --help for usage\n";
    return kExitUsageError;
  }

  const auto* sub = app.get_subcommands().front();
  const std::string command = sub->get_name();
  const auto& spec = *std::find_if(specs.begin(), specs.end(),
                                   [&](const auto& s) { return s.name == command; });
  setup_logging(verbose);
  ParamTable& table = tables.at(command);

  json resolved;
  fs::path out_dir;
  StageContext stage;
  try {
    resolved = table.defaults;
    json file = json::object();
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw UsageError("config file not found: " + config_path);
      try {
        file = json::parse(in);
      } catch (const json::exception& e) {
        throw UsageError("config file " + config_path + " is not valid JSON: " + e.what());
      }
      if (!file.is_object()) throw UsageError("config file must hold a JSON object");
      for (const auto& [k, v] : file.items()) {
        if (kCommonKeys.count(k)) {
          resolved[k] = v;
        } else if (k != "http" && !command_table().count(k)) {
          throw UsageError("unknown config key '" + k + "'");
        }
      }
      if (file.contains(command)) {
        for (const auto& [k, v] : file[command].items()) {
          if (!table.defaults.contains(k) || kCommonKeys.count(k)) {
            throw UsageError("unknown key '" + k + "' in config section '" + command + "'");
          }
          resolved[k] = v;
        }
      }
    }
    for (const auto& [k, v] : table.overrides.items()) resolved[k] = v;
    for (const auto& k : table.required) {
      if (!resolved[k].is_string() || resolved[k].get<std::string>().empty()) {
        throw UsageError("missing required option " + dashed(k));
      }
    }
    const auto backend = resolved.at("backend").get<std::string>();
    if (backend != "sim" && backend != "http") throw UsageError("backend must be sim or http");
    if (backend == "http") {
      resolved["http"] = file.value("http", json::object());
      resolved.erase("sim_world");
    }
    if (resolved.at("jobs").get<std::int64_t>() < 1) throw UsageError("--jobs must be >= 1");
    out_dir = resolved.at("out_dir").get<std::string>();
    resolved["command"] = command;

    stage.master_seed = resolved.at("seed").get<std::uint64_t>();
    stage.config_hash = config_hash(rebased_for_hash(resolved, out_dir));
    stage.clock = backend == "sim" ? ManifestClock::fixed_from_env() : ManifestClock::wall();
    stage.base_dir = out_dir;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsageError;
  } catch (const json::exception& e) {
    err << "error: bad parameter value: " << e.what() << "\n";
    return kExitUsageError;
  }

  if (dry_run) {
    json planned = begin_manifest(stage, command);
    planned.erase("started_at");
    planned.erase("finished_at");
    json inputs = json::array();
    for (const auto& k : kPathKeys) {
      if (resolved.contains(k) && resolved[k].is_string()) inputs.push_back(resolved[k]);
    }
    if (!config_path.empty()) inputs.push_back(config_path);
    json outputs = json::array();
    for (const auto& o : spec.planned_outputs) outputs.push_back((out_dir / o).generic_string());
    planned["inputs"] = inputs;
    planned["outputs"] = outputs;
    out << json{{"config", resolved}, {"config_hash", stage.config_hash}, {"planned_manifest", planned}}.dump(2)
        << "\n";
    return kExitOk;
  }

  Backends backends;
  try {
    backends = make_backends(resolved);
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsageError;
  }

  RunManifest manifest = begin_manifest(stage, command);
  Ctx ctx;
  ctx.command = command;
  ctx.params = resolved;
  ctx.out_dir = out_dir;
  ctx.seed = stage.master_seed;
  ctx.jobs = static_cast<std::size_t>(resolved.at("jobs").get<std::int64_t>());
  ctx.stage = stage;
  ctx.backends = &backends;
  ctx.manifest = &manifest;
  ctx.out = &out;
  if (resolved.contains("sim_world")) ctx.input(resolved["sim_world"].get<std::string>());
  if (!config_path.empty()) ctx.input(config_path);

  const auto manifest_path = out_dir / (command + ".manifest.json");
  auto finish = [&](const char* status, int code) {
    manifest.status = status;
    try {
      fs::create_directories(out_dir);
      finish_manifest(stage, manifest, manifest_path);
    } catch (const std::exception& e) {
      err << "error: could not write manifest: " << e.what() << "\n";
      return kExitDomainError;
    }
    return code;
  };

  try {
    fs::create_directories(out_dir);
    manifest.details = command_table().at(command)(ctx);
    return finish("complete", kExitOk);
  } catch (const Cancelled&) {
    err << "interrupted; partial manifest written to " << manifest_path.string() << "\n";
    return finish("cancelled", kExitDomainError);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsageError;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsageError;
  } catch (const json::exception& e) {
    err << "error: bad parameter value: " << e.what() << "\n";
    return kExitUsageError;
  } catch (const PartitionError& e) {
    err << "error: " << e.what() << " (" << e.completed().size()
        << " problems done; rerun to resume)\n";
    return finish("failed", kExitDomainError);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return finish("failed", kExitDomainError);
  }
}

}  // namespace rlad::cli
