#include "rlad/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <set>

#include <spdlog/spdlog.h>

#include "rlad/hashing.hpp"
#include "rlad/jsonl.hpp"
#include "rlad/parallel.hpp"
#include "rlad/sim.hpp"
#include "rlad/verifier.hpp"

namespace rlad {
namespace {

double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

std::string epoch_name(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch-%03zu", epoch);
  return buf;
}

/// Index subset of size n (or all when n == 0 or n >= size), seeded, in input order.
std::vector<std::size_t> sample_indices(std::size_t size, std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(size);
  std::iota(idx.begin(), idx.end(), 0);
  if (n == 0 || n >= size) return idx;
  Rng rng(seed);
  rng.shuffle(idx);
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

void CurriculumConfig::validate() const {
  if (!(hard_max >= 0.0 && easy_min <= 1.0 && hard_max < easy_min)) {
    throw DataError("curriculum: need 0 <= hard_max < easy_min <= 1");
  }
  for (const auto& s : stages) {
    if (s.split == SplitTag::hard) throw DataError("curriculum: the hard split is held out");
    if (s.split == SplitTag::unassigned) throw DataError("curriculum: stage needs a split");
    if (s.token_budget < 1) throw DataError("curriculum: token_budget must be >= 1");
  }
}

CurriculumConfig CurriculumConfig::from_json(const nlohmann::json& j) {
  CurriculumConfig c;
  try {
    c.easy_min = j.value("easy_min", c.easy_min);
    c.hard_max = j.value("hard_max", c.hard_max);
    if (j.contains("stages")) {
      c.stages.clear();
      for (const auto& s : j["stages"]) {
        c.stages.push_back({parse_split_tag(s.at("split").get<std::string>()),
                            s.at("token_budget").get<std::int64_t>()});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad curriculum config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json CurriculumConfig::to_json() const {
  auto stages_json = nlohmann::json::array();
  for (const auto& s : stages) {
    stages_json.push_back({{"split", to_string(s.split)}, {"token_budget", s.token_budget}});
  }
  return {{"easy_min", easy_min}, {"hard_max", hard_max}, {"stages", stages_json}};
}

SplitTag tag_for_rate(double rate, const CurriculumConfig& cfg) {
  if (rate >= cfg.easy_min) return SplitTag::easy;
  if (rate <= cfg.hard_max) return SplitTag::hard;
  return SplitTag::medium;
}

std::size_t stage_for_epoch(std::size_t epoch, std::size_t epochs, std::size_t n_stages) {
  if (n_stages == 0) throw std::invalid_argument("no curriculum stages");
  if (epochs == 0) return 0;
  return std::min(n_stages - 1, epoch * n_stages / epochs);
}

std::vector<Problem> partition_by_success(std::span<const Problem> problems,
                                          const PolicyBackend& solver, std::int64_t n,
                                          const CurriculumConfig& cfg, std::uint64_t seed,
                                          std::size_t jobs,
                                          const std::filesystem::path& checkpoint) {
  if (n < 1) throw std::invalid_argument("partition_by_success: n must be >= 1");
  cfg.validate();
  std::map<std::string, Problem> done;
  if (!checkpoint.empty() && std::filesystem::exists(checkpoint)) {
    for (auto& p : read_jsonl<Problem>(checkpoint)) done.emplace(p.id, std::move(p));
  }
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < problems.size(); ++i) {
    if (!done.count(problems[i].id)) todo.push_back(i);
  }

  std::mutex mu;
  struct Slot {
    std::optional<Problem> tagged;
    std::string error;
  };
  auto slots = parallel_map(todo.size(), jobs, [&](std::size_t t) {
    const Problem& p = problems[todo[t]];
    Slot s;
    SamplingParams params = SamplingParams::train();
    params.n_samples = n;
    params.seed = derive_seed(seed, "partition:" + p.id, 0);
    try {
      std::int64_t c = 0;
      for (const auto& comp : solver.sample(PromptParts::solve(p), params)) {
        if (is_correct_solution(comp.text, p.gold_answer)) ++c;
      }
      Problem tagged = p;
      tagged.base_success_rate = static_cast<double>(c) / static_cast<double>(n);
      tagged.split_tag = tag_for_rate(*tagged.base_success_rate, cfg);
      if (!checkpoint.empty()) {
        std::lock_guard lock(mu);
        std::ofstream out(checkpoint, std::ios::app);
        out << canonical_dump(nlohmann::json(tagged)) << '\n';
      }
      s.tagged = std::move(tagged);
    } catch (const BackendError& e) {
      s.error = p.id + ": " + e.what();
    }
    return s;
  });

  std::string first_error;
  for (std::size_t t = 0; t < todo.size(); ++t) {
    if (slots[t].tagged) {
      done.emplace(slots[t].tagged->id, std::move(*slots[t].tagged));
    } else if (first_error.empty()) {
      first_error = slots[t].error;
    }
  }
  std::vector<Problem> out;
  for (const auto& p : problems) {
    if (auto it = done.find(p.id); it != done.end()) out.push_back(it->second);
  }
  if (!first_error.empty()) {
    throw PartitionError("partition failed for " + first_error, std::move(out));
  }
  return out;
}

nlohmann::json SolverHyperparams::to_json() const {
  return {{"train_batch_size", train_batch_size},
          {"clip_ratio_low", clip_low},
          {"clip_ratio_high", clip_high},
          {"entropy_coef", entropy_coef},
          {"kl_coef", kl_coef},
          {"learning_rate", learning_rate},
          {"epochs", epochs},
          {"total_steps", total_steps},
          {"temperature", temperature},
          {"max_response_tokens", max_response_tokens},
          {"samples_per_prompt_train", samples_per_prompt_train},
          {"samples_per_prompt_val", samples_per_prompt_val}};
}

void RftConfig::validate() const {
  if (!(tau > 0.0 && tau <= 1.0)) throw DataError("rft: tau must be in (0, 1]");
  if (max_kept_per_problem < 1) throw DataError("rft: max_kept_per_problem must be >= 1");
  if (abstractions_per_problem < 1) throw DataError("rft: abstractions_per_problem must be >= 1");
  if (rollouts_per_abstraction < 1) throw DataError("rft: rollouts_per_abstraction must be >= 1");
  if (solver_group_size < 1) throw DataError("rft: solver_group_size must be >= 1");
  if (sol_batch_size < 1) throw DataError("rft: sol_batch_size must be >= 1");
  MixRatio{mix_ratio};
}

RftConfig RftConfig::from_json(const nlohmann::json& j) {
  RftConfig c;
  try {
    c.tau = j.value("tau", c.tau);
    c.max_kept_per_problem = j.value("max_kept_per_problem", c.max_kept_per_problem);
    c.abs_batch_size = j.value("abs_batch_size", c.abs_batch_size);
    c.sol_batch_size = j.value("sol_batch_size", c.sol_batch_size);
    c.abstractions_per_problem = j.value("abstractions_per_problem", c.abstractions_per_problem);
    c.rollouts_per_abstraction = j.value("rollouts_per_abstraction", c.rollouts_per_abstraction);
    c.solver_group_size = j.value("solver_group_size", c.solver_group_size);
    c.mix_ratio = j.value("mix_ratio", c.mix_ratio);
    c.alpha_abs = j.value("alpha_abs", c.alpha_abs);
    c.alpha_sol = j.value("alpha_sol", c.alpha_sol);
    c.sim_lr_abs = j.value("sim_lr_abs", c.sim_lr_abs);
    c.sim_lr_sol = j.value("sim_lr_sol", c.sim_lr_sol);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad rft config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json RftConfig::to_json() const {
  return {{"tau", tau},
          {"max_kept_per_problem", max_kept_per_problem},
          {"abs_batch_size", abs_batch_size},
          {"sol_batch_size", sol_batch_size},
          {"abstractions_per_problem", abstractions_per_problem},
          {"rollouts_per_abstraction", rollouts_per_abstraction},
          {"solver_group_size", solver_group_size},
          {"mix_ratio", mix_ratio},
          {"alpha_abs", alpha_abs},
          {"alpha_sol", alpha_sol},
          {"sim_lr_abs", sim_lr_abs},
          {"sim_lr_sol", sim_lr_sol}};
}

std::vector<ScoredAbstraction> select_rft(std::span<const ScoredAbstraction> scored,
                                          const RftConfig& cfg) {
  std::map<std::string, const ScoredAbstraction*> best;
  for (const auto& s : scored) {
    if (s.reward < cfg.tau) continue;
    auto [it, inserted] = best.emplace(s.abstraction.id, &s);
    if (!inserted && s.reward > it->second->reward) it->second = &s;
  }
  std::map<std::string, std::vector<const ScoredAbstraction*>> by_problem;
  for (const auto& [id, s] : best) by_problem[s->abstraction.problem_id].push_back(s);
  std::vector<ScoredAbstraction> out;
  for (auto& [pid, list] : by_problem) {
    std::sort(list.begin(), list.end(), [](const auto* a, const auto* b) {
      if (a->reward != b->reward) return a->reward > b->reward;
      return a->abstraction.id < b->abstraction.id;
    });
    const auto keep = std::min<std::size_t>(list.size(), cfg.max_kept_per_problem);
    for (std::size_t i = 0; i < keep; ++i) out.push_back(*list[i]);
  }
  return out;
}

void to_json(nlohmann::json& j, const RftEntry& e) {
  j = nlohmann::json{{"problem_id", e.problem_id},
                     {"prompt", e.prompt},
                     {"target", e.target},
                     {"reward", e.reward},
                     {"n_rollouts", e.n_rollouts}};
}

void from_json(const nlohmann::json& j, RftEntry& e) {
  try {
    e.problem_id = j.at("problem_id").get<std::string>();
    e.prompt = j.at("prompt").get<std::string>();
    e.target = j.at("target").get<std::string>();
    e.reward = j.at("reward").get<double>();
    e.n_rollouts = j.at("n_rollouts").get<std::int64_t>();
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("bad rft entry: ") + ex.what());
  }
}

AbsRoundResult rft_epoch_abs(std::span<const Problem> problems, const TrainerBackends& backends,
                             const RftConfig& cfg, const EpochContext& ctx) {
  cfg.validate();
  if (!backends.generator || !backends.solver) {
    throw std::invalid_argument("rft_epoch_abs needs a generator and a solver");
  }
  const auto chosen =
      sample_indices(problems.size(), cfg.abs_batch_size, derive_seed(ctx.seed, "abs-batch", 0));

  auto per_problem = parallel_map(chosen.size(), ctx.jobs, [&](std::size_t t) {
    const Problem& p = problems[chosen[t]];
    const auto texts = backends.generator->propose(p, cfg.abstractions_per_problem,
                                                   derive_seed(ctx.seed, "propose:" + p.id, 0));
    std::vector<ScoredAbstraction> scored;
    for (std::size_t i = 0; i < texts.size(); ++i) {
      ScoredAbstraction s;
      s.abstraction = Abstraction::make(p.id, texts[i], AbstractionSource::generator_model);
      SamplingParams params = SamplingParams::train();
      params.n_samples = cfg.rollouts_per_abstraction;
      params.max_tokens = ctx.token_budget;
      params.seed = derive_seed(ctx.seed, "abs-rollouts:" + p.id, i);
      const auto completions =
          backends.solver->sample(PromptParts::solve_with(p, s.abstraction.text), params);
      const auto records = score_completions(p, s.abstraction.id, completions, params.seed);
      s.summary = summarize(records);
      s.reward = abstraction_reward(s.summary);
      scored.push_back(std::move(s));
    }
    return scored;
  });

  AbsRoundResult result;
  std::vector<double> rewards;
  for (auto& list : per_problem) {
    for (auto& s : list) {
      rewards.push_back(s.reward);
      result.scored.push_back(std::move(s));
    }
  }
  result.mean_reward = mean_of(rewards);
  result.kept = select_rft(result.scored, cfg);

  if (result.kept.empty()) {
    spdlog::warn("epoch {}: no abstraction reached reward {}; abstraction shard omitted", ctx.epoch,
                 cfg.tau);
  } else {
    std::map<std::string, const Problem*> by_id;
    for (const auto& p : problems) by_id[p.id] = &p;
    std::vector<RftEntry> entries;
    for (const auto& k : result.kept) {
      entries.push_back({k.abstraction.problem_id, by_id.at(k.abstraction.problem_id)->prompt,
                         k.abstraction.text, k.reward, k.summary.n_rollouts});
    }
    std::filesystem::create_directories(ctx.dir);
    const auto shard = ctx.dir / "abs_sft.jsonl";
    write_jsonl(shard, entries);
    result.shard = shard;
  }

  if (backends.sim_env && !result.kept.empty()) {
    // Supervised step on the kept pairs: mean of grad log pi_abs(z | x).
    std::map<std::string, std::vector<const ScoredAbstraction*>> kept_by_problem;
    for (const auto& k : result.kept) kept_by_problem[k.abstraction.problem_id].push_back(&k);
    std::map<std::string, std::vector<double>> grad;
    for (const auto& [pid, kept] : kept_by_problem) {
      const auto& candidates = backends.sim_env->at(pid).candidates;
      const auto pi = backends.sim_env->abstraction_distribution(pid);
      std::vector<double> g(candidates.size(), 0.0);
      for (const auto* k : kept) {
        const auto it = std::find_if(candidates.begin(), candidates.end(), [&](const auto& c) {
          return c.text == k->abstraction.text;
        });
        if (it == candidates.end()) {
          throw DataError("kept abstraction " + k->abstraction.id + " is not a simulator candidate");
        }
        const auto chosen_idx = static_cast<std::size_t>(it - candidates.begin());
        for (std::size_t j = 0; j < g.size(); ++j) {
          g[j] += ((j == chosen_idx ? 1.0 : 0.0) - pi[j]) / static_cast<double>(kept.size());
        }
      }
      grad.emplace(pid, std::move(g));
    }
    backends.sim_env->apply_abstraction_gradient(grad, cfg.sim_lr_abs);
  }
  return result;
}

SolRoundResult emit_sol_batches(std::span<const Problem> problems,
                                std::span<const Abstraction> abstractions,
                                const TrainerBackends& backends, const RftConfig& cfg,
                                const EpochContext& ctx) {
  cfg.validate();
  if (!backends.solver) throw std::invalid_argument("emit_sol_batches needs a solver");
  std::map<std::string, const Problem*> by_id;
  for (const auto& p : problems) by_id[p.id] = &p;

  std::map<std::string, const Abstraction*> abs_by_id;
  for (const auto& a : abstractions) {
    if (by_id.count(a.problem_id)) abs_by_id.emplace(a.id, &a);
  }
  std::vector<PromptGroup> with_pool;
  for (const auto& [aid, a] : abs_by_id) with_pool.push_back(PromptGroup::make(a->problem_id, aid, {}));
  std::vector<PromptGroup> no_pool;
  for (const auto& [pid, p] : by_id) no_pool.push_back(PromptGroup::make(pid, std::string(kNoAbstraction), {}));
  Rng(derive_seed(ctx.seed, "sol-pool-with", 0)).shuffle(with_pool);
  Rng(derive_seed(ctx.seed, "sol-pool-no", 0)).shuffle(no_pool);

  const MixRatio ratio(cfg.mix_ratio);
  std::size_t batch_size = 0;
  for (std::size_t b = std::min(cfg.sol_batch_size, with_pool.size() + no_pool.size()); b >= 1; --b) {
    const auto n_no = static_cast<std::size_t>(std::lround(ratio.value() * static_cast<double>(b)));
    if (n_no <= no_pool.size() && b - n_no <= with_pool.size()) {
      batch_size = b;
      break;
    }
  }
  if (batch_size == 0) throw DataError("emit_sol_batches: no abstraction groups to train on");
  if (batch_size < cfg.sol_batch_size) {
    spdlog::info("epoch {}: solver batch holds {} groups (requested {})", ctx.epoch, batch_size,
                 cfg.sol_batch_size);
  }
  auto batch = compose_batch(with_pool, no_pool, ratio, batch_size, derive_seed(ctx.seed, "sol-batch", 0));

  struct GroupOut {
    TrainingGroup group;
    std::vector<RolloutRecord> records;
  };
  auto groups = parallel_map(batch.size(), ctx.jobs, [&](std::size_t g) {
    PromptGroup& pg = batch[g];
    const Problem& p = *by_id.at(pg.problem_id);
    PromptParts parts = PromptParts::solve(p);
    if (pg.group_kind == GroupKind::with_abs) parts.abstraction = abs_by_id.at(pg.abstraction_id)->text;
    SamplingParams params = SamplingParams::train();
    params.n_samples = cfg.solver_group_size;
    params.max_tokens = ctx.token_budget;
    params.seed = derive_seed(ctx.seed, "sol-rollouts:" + p.id + ":" + pg.abstraction_id, 0);
    const auto completions = backends.solver->sample(parts, params);
    GroupOut out;
    out.records = score_completions(p, pg.abstraction_id, completions, params.seed);
    for (std::size_t i = 0; i < out.records.size(); ++i) {
      pg.rollout_ids.push_back(pg.abstraction_id + "/" + std::to_string(i));
    }
    std::vector<double> rewards;
    for (const auto& r : out.records) rewards.push_back(r.reward);
    const auto adv = group_advantages(pg, rewards);
    for (std::size_t i = 0; i < out.records.size(); ++i) out.records[i].advantage = adv[i];
    out.group.problem_id = p.id;
    out.group.abstraction_id = pg.abstraction_id;
    out.group.prompt_parts = parts;
    for (const auto& c : completions) out.group.completions.push_back(c.text);
    out.group.rewards = rewards;
    out.group.advantages = adv;
    out.group.group_kind = pg.group_kind;
    return out;
  });

  SolRoundResult result;
  std::vector<RolloutRecord> all_records;
  std::vector<double> with_rewards;
  for (auto& g : groups) {
    if (g.group.group_kind == GroupKind::with_abs) {
      with_rewards.insert(with_rewards.end(), g.group.rewards.begin(), g.group.rewards.end());
    }
    all_records.insert(all_records.end(), g.records.begin(), g.records.end());
    result.batch.push_back(std::move(g.group));
  }
  result.mean_reward_with_abs = mean_of(with_rewards);

  std::filesystem::create_directories(ctx.dir);
  result.shard = ctx.dir / "sol_shard.jsonl";
  write_jsonl(result.shard, result.batch);
  RunManifest m = begin_manifest(ctx.stage, "sol-shard");
  m.outputs.push_back(digest_file(result.shard, ctx.stage.base_dir));
  m.details = {{"epoch", ctx.epoch},
               {"n_groups", result.batch.size()},
               {"mix_ratio", ratio.value()},
               {"alpha_sol", cfg.alpha_sol},
               {"keep_kl_on_masked", true},
               {"hyperparameters", cfg.solver.to_json()}};
  finish_manifest(ctx.stage, m, ctx.dir / "sol_shard.manifest.json");

  if (backends.sim_env && !all_records.empty()) {
    std::map<std::string, std::string> texts;
    for (const auto& [aid, a] : abs_by_id) texts.emplace(aid, a->text);
    const auto grad = sim::sim_gradient(*backends.sim_env, all_records, texts);
    backends.sim_env->apply_solver_gradient(grad,
                                            cfg.sim_lr_sol / static_cast<double>(all_records.size()));
  }
  return result;
}

void to_json(nlohmann::json& j, const EpochStats& s) {
  j = nlohmann::json{{"epoch", s.epoch},
                     {"stage", s.stage},
                     {"n_problems", s.n_problems},
                     {"n_abstractions", s.n_abstractions},
                     {"n_kept", s.n_kept},
                     {"mean_abstraction_reward", s.mean_abstraction_reward},
                     {"mean_solution_reward", s.mean_solution_reward}};
}

void from_json(const nlohmann::json& j, EpochStats& s) {
  try {
    s.epoch = j.at("epoch").get<std::size_t>();
    s.stage = j.at("stage").get<std::size_t>();
    s.n_problems = j.at("n_problems").get<std::size_t>();
    s.n_abstractions = j.at("n_abstractions").get<std::size_t>();
    s.n_kept = j.at("n_kept").get<std::size_t>();
    s.mean_abstraction_reward = j.at("mean_abstraction_reward").get<double>();
    s.mean_solution_reward = j.at("mean_solution_reward").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad epoch stats: ") + e.what());
  }
}

std::filesystem::path epoch_dir(const std::filesystem::path& out_dir, std::size_t epoch) {
  return out_dir / epoch_name(epoch);
}

TrainState run_joint(std::span<const Problem> problems, const TrainerBackends& backends,
                     const JointConfig& cfg, const std::filesystem::path& out_dir,
                     const StageContext& ctx) {
  cfg.curriculum.validate();
  cfg.rft.validate();
  TrainState state;
  if (cfg.epochs == 0) return state;

  std::vector<Problem> trainable;
  for (const auto& p : problems) {
    if (p.split_tag != SplitTag::hard) trainable.push_back(p);
  }
  if (trainable.empty()) throw DataError("run_joint: no non-hard problems to train on");

  // Resume after the last complete epoch.
  while (state.epochs_done < cfg.epochs) {
    const auto path = epoch_dir(out_dir, state.epochs_done) / "manifest.json";
    if (!std::filesystem::exists(path)) break;
    const auto m = read_manifest(path);
    if (m.status != "complete") break;
    if (state.epochs_done > 0 && m.previous != sha256_file(state.manifests.back())) {
      throw DataError("manifest chain broken at " + path.string());
    }
    state.stats.push_back(m.details.at("stats").get<EpochStats>());
    state.manifests.push_back(path);
    ++state.epochs_done;
  }
  if (state.epochs_done > 0) {
    spdlog::info("resuming after epoch {}", state.epochs_done - 1);
    if (backends.sim_env) {
      *backends.sim_env =
          sim::SimEnv::load(epoch_dir(out_dir, state.epochs_done - 1) / "sim_world.json");
    }
  }

  std::size_t ran = 0;
  while (state.epochs_done < cfg.epochs) {
    if (cfg.stop_after && ran >= *cfg.stop_after) break;
    throw_if_cancelled();
    const std::size_t epoch = state.epochs_done;
    const std::size_t stage_idx = stage_for_epoch(epoch, cfg.epochs, cfg.curriculum.stages.size());
    const auto& stage = cfg.curriculum.stages[stage_idx];

    std::vector<Problem> stage_problems;
    for (const auto& p : trainable) {
      if (p.split_tag == stage.split) stage_problems.push_back(p);
    }
    if (stage_problems.empty()) {
      spdlog::warn("epoch {}: no {} problems; training on all non-hard problems", epoch,
                   to_string(stage.split));
      stage_problems = trainable;
    }

    EpochContext ectx;
    ectx.epoch = epoch;
    ectx.seed = derive_seed(cfg.master_seed, "epoch", epoch);
    ectx.token_budget = stage.token_budget;
    ectx.dir = epoch_dir(out_dir, epoch);
    ectx.stage = ctx;
    ectx.jobs = cfg.jobs;
    std::filesystem::create_directories(ectx.dir);

    RunManifest m = begin_manifest(ctx, "run-joint/epoch");
    const auto abs = rft_epoch_abs(stage_problems, backends, cfg.rft, ectx);
    if (abs.shard) m.outputs.push_back(digest_file(*abs.shard, ctx.base_dir));

    std::vector<Abstraction> proposed;
    std::set<std::string> seen;
    for (const auto& s : abs.scored) {
      if (seen.insert(s.abstraction.id).second) proposed.push_back(s.abstraction);
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.stage = stage_idx;
    stats.n_problems = stage_problems.size();
    stats.n_abstractions = abs.scored.size();
    stats.n_kept = abs.kept.size();
    stats.mean_abstraction_reward = abs.mean_reward;
    if (proposed.empty()) {
      spdlog::warn("epoch {}: generator proposed nothing; solver round skipped", epoch);
    } else {
      const auto sol = emit_sol_batches(stage_problems, proposed, backends, cfg.rft, ectx);
      stats.mean_solution_reward = sol.mean_reward_with_abs;
      m.outputs.push_back(digest_file(sol.shard, ctx.base_dir));
      m.outputs.push_back(digest_file(ectx.dir / "sol_shard.manifest.json", ctx.base_dir));
    }
    if (backends.sim_env) {
      const auto world = ectx.dir / "sim_world.json";
      write_text_atomic(world, backends.sim_env->to_json().dump(2) + "\n");
      m.outputs.push_back(digest_file(world, ctx.base_dir));
    }
    m.details = {{"epoch", epoch},
                 {"epochs", cfg.epochs},
                 {"stage", stage_idx},
                 {"split", to_string(stage.split)},
                 {"token_budget", stage.token_budget},
                 {"stats", stats},
                 {"rft", cfg.rft.to_json()},
                 {"curriculum", cfg.curriculum.to_json()}};
    if (!state.manifests.empty()) m.previous = sha256_file(state.manifests.back());
    const auto manifest_path = ectx.dir / "manifest.json";
    finish_manifest(ctx, m, manifest_path);

    spdlog::info("epoch {} ({}): mean abstraction reward {:.4f}, kept {}", epoch,
                 to_string(stage.split), stats.mean_abstraction_reward, stats.n_kept);
    state.stats.push_back(stats);
    state.manifests.push_back(manifest_path);
    ++state.epochs_done;
    ++ran;
  }
  return state;
}

}  // namespace rlad
