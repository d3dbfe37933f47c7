#pragma once

// Joint training loop: curriculum partition, RFT rounds for the abstraction
// generator, and masked-reward batches for the solution generator. Policy
// weights live outside this process except for the simulator, whose logits
// are updated in place with toy gradient steps.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rlad/backends.hpp"
#include "rlad/core.hpp"
#include "rlad/manifest.hpp"
#include "rlad/rewards.hpp"

namespace rlad {

namespace sim {
class SimEnv;
}

struct CurriculumStage {
  SplitTag split = SplitTag::easy;
  std::int64_t token_budget = 8192;
  bool operator==(const CurriculumStage&) const = default;
};

struct CurriculumConfig {
  double easy_min = 0.6;
  double hard_max = 0.1;
  std::vector<CurriculumStage> stages{{SplitTag::easy, 8192}, {SplitTag::medium, 16384}};

  void validate() const;
  static CurriculumConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// easy if rate >= easy_min, hard if rate <= hard_max, medium otherwise.
SplitTag tag_for_rate(double rate, const CurriculumConfig& cfg);

/// Stage index for 0-based `epoch` of `epochs`; stages get equal shares.
std::size_t stage_for_epoch(std::size_t epoch, std::size_t epochs, std::size_t n_stages);

class PartitionError : public std::runtime_error {
 public:
  PartitionError(const std::string& what, std::vector<Problem> completed)
      : std::runtime_error(what), completed_(std::move(completed)) {}
  const std::vector<Problem>& completed() const noexcept { return completed_; }

 private:
  std::vector<Problem> completed_;
};

/// Tags each problem from `n` unconditioned rollouts. With a checkpoint path,
/// finished problems are appended there as they complete and skipped on a
/// rerun. Output order follows the input.
std::vector<Problem> partition_by_success(std::span<const Problem> problems,
                                          const PolicyBackend& solver, std::int64_t n,
                                          const CurriculumConfig& cfg, std::uint64_t seed,
                                          std::size_t jobs = 1,
                                          const std::filesystem::path& checkpoint = {});

/// Solver optimizer settings handed to the external fine-tuner via manifests.
struct SolverHyperparams {
  std::int64_t train_batch_size = 128;
  double clip_low = 0.2;
  double clip_high = 0.5;
  double entropy_coef = 0.001;
  double kl_coef = 0.001;
  double learning_rate = 1e-6;
  std::int64_t epochs = 10;
  std::int64_t total_steps = 100;
  double temperature = 0.6;
  std::int64_t max_response_tokens = 16384;
  std::int64_t samples_per_prompt_train = 16;
  std::int64_t samples_per_prompt_val = 8;

  nlohmann::json to_json() const;
};

struct RftConfig {
  /// Keep (x, z) pairs with reward >= tau.
  double tau = 0.5;
  int max_kept_per_problem = 2;
  /// N: problems per abstraction round; 0 takes every problem in the stage.
  std::size_t abs_batch_size = 0;
  /// M: prompt groups per solver batch (capped by what the pools can supply).
  std::size_t sol_batch_size = 128;
  int abstractions_per_problem = 4;
  std::int64_t rollouts_per_abstraction = 16;
  std::int64_t solver_group_size = 16;
  double mix_ratio = 0.25;
  /// Learning-rate labels for the external trainers; recorded, not used.
  double alpha_abs = 1e-6;
  double alpha_sol = 1e-6;
  /// Step sizes of the in-process simulator updates.
  double sim_lr_abs = 0.5;
  double sim_lr_sol = 1.0;
  SolverHyperparams solver;

  void validate() const;
  static RftConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct ScoredAbstraction {
  Abstraction abstraction;
  RewardSummary summary;
  double reward = 0.0;
};

/// {reward >= tau}, deduplicated by abstraction id keeping the best score,
/// then at most max_kept_per_problem per problem, best first. Ties go to the
/// smaller abstraction id.
std::vector<ScoredAbstraction> select_rft(std::span<const ScoredAbstraction> scored,
                                          const RftConfig& cfg);

struct RftEntry {
  std::string problem_id;
  std::string prompt;
  std::string target;
  double reward = 0.0;
  std::int64_t n_rollouts = 0;
  bool operator==(const RftEntry&) const = default;
};
void to_json(nlohmann::json& j, const RftEntry& e);
void from_json(const nlohmann::json& j, RftEntry& e);

/// Policies used by the loop. `sim_env`, when set, is the world behind the
/// simulated policies and receives the toy updates; HTTP policies are frozen
/// within a run.
struct TrainerBackends {
  const AbstractionGenerator* generator = nullptr;
  const PolicyBackend* solver = nullptr;
  sim::SimEnv* sim_env = nullptr;
};

/// Per-call settings derived from the epoch.
struct EpochContext {
  std::size_t epoch = 0;
  std::uint64_t seed = 0;
  std::int64_t token_budget = 16384;
  std::filesystem::path dir;
  StageContext stage;
  std::size_t jobs = 1;
};

struct AbsRoundResult {
  std::vector<ScoredAbstraction> scored;
  std::vector<ScoredAbstraction> kept;
  std::optional<std::filesystem::path> shard;
  double mean_reward = 0.0;
};

/// One abstraction round: propose, score by solver rollouts, select, write the
/// SFT shard (omitted with a warning when nothing is kept) and, on the
/// simulator, move the candidate logits toward the kept abstractions.
AbsRoundResult rft_epoch_abs(std::span<const Problem> problems, const TrainerBackends& backends,
                             const RftConfig& cfg, const EpochContext& ctx);

struct SolRoundResult {
  std::vector<TrainingGroup> batch;
  std::filesystem::path shard;
  double mean_reward_with_abs = 0.0;
};

/// One solver round over the given abstractions: a with_abs group per
/// abstraction and a no_abs group per problem, mixed by cfg.mix_ratio, masked
/// advantages, one shard plus manifest. On the simulator the solver logits
/// take a REINFORCE step with the batch's advantages.
SolRoundResult emit_sol_batches(std::span<const Problem> problems,
                                std::span<const Abstraction> abstractions,
                                const TrainerBackends& backends, const RftConfig& cfg,
                                const EpochContext& ctx);

struct EpochStats {
  std::size_t epoch = 0;
  std::size_t stage = 0;
  std::size_t n_problems = 0;
  std::size_t n_abstractions = 0;
  std::size_t n_kept = 0;
  double mean_abstraction_reward = 0.0;
  double mean_solution_reward = 0.0;
  bool operator==(const EpochStats&) const = default;
};
void to_json(nlohmann::json& j, const EpochStats& s);
void from_json(const nlohmann::json& j, EpochStats& s);

struct TrainState {
  std::size_t epochs_done = 0;
  std::vector<EpochStats> stats;
  std::vector<std::filesystem::path> manifests;
};

struct JointConfig {
  std::size_t epochs = 1;
  CurriculumConfig curriculum;
  RftConfig rft;
  std::uint64_t master_seed = 0;
  std::size_t jobs = 1;
  /// Stop after this many epochs in this invocation (simulates interruption).
  std::optional<std::size_t> stop_after;
};

/// Runs epochs until `cfg.epochs`, resuming after the last epoch manifest
/// already in `out_dir`. Each epoch writes epoch-NNN/{abs_sft.jsonl,
/// sol_shard.jsonl, manifest.json} and, on the simulator, the world state;
/// each manifest records the hash of its predecessor. Hard problems are never
/// trained on. When a stage's split is empty, all non-hard problems are used.
TrainState run_joint(std::span<const Problem> problems, const TrainerBackends& backends,
                     const JointConfig& cfg, const std::filesystem::path& out_dir,
                     const StageContext& ctx);

std::filesystem::path epoch_dir(const std::filesystem::path& out_dir, std::size_t epoch);

}  // namespace rlad
