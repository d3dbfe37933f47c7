#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rlad/core.hpp"

namespace rlad {

/// Defaults follow the training hyperparameters: temperature 0.6, 16384 max
/// response tokens, 16 samples per prompt in training and 8 in validation.
struct SamplingParams {
  double temperature = 0.6;
  std::int64_t max_tokens = 16384;
  std::int64_t n_samples = 16;
  std::uint64_t seed = 0;

  static SamplingParams train() { return {}; }
  static SamplingParams val() {
    SamplingParams p;
    p.n_samples = 8;
    return p;
  }
  void validate() const;
};

/// What a policy is conditioned on. An abstraction-only prompt (no problem)
/// is what the leak check sends.
struct PromptParts {
  std::optional<std::string> problem_id;
  std::optional<std::string> problem;
  std::optional<std::string> abstraction;

  static PromptParts solve(const Problem& p) { return {p.id, p.prompt, std::nullopt}; }
  static PromptParts solve_with(const Problem& p, std::string abstraction) {
    return {p.id, p.prompt, std::move(abstraction)};
  }
  static PromptParts abstraction_only(std::string abstraction) {
    return {std::nullopt, std::nullopt, std::move(abstraction)};
  }
};

struct Completion {
  std::string text;
  std::int64_t token_count = 0;
  bool truncated = false;
  int attempts = 1;
};

struct BackendCapabilities {
  bool supports_seeding = false;
  bool is_deterministic = false;
};

class BackendError : public std::runtime_error {
 public:
  enum class Kind { permanent, transient };

  BackendError(Kind kind, const std::string& what, std::vector<std::string> attempt_log = {},
               std::vector<std::optional<Completion>> partial = {})
      : std::runtime_error(what),
        kind_(kind),
        attempt_log_(std::move(attempt_log)),
        partial_(std::move(partial)) {}

  Kind kind() const noexcept { return kind_; }
  const std::vector<std::string>& attempt_log() const noexcept { return attempt_log_; }
  /// Per-index completions that did succeed before the failure.
  const std::vector<std::optional<Completion>>& partial() const noexcept { return partial_; }

 private:
  Kind kind_;
  std::vector<std::string> attempt_log_;
  std::vector<std::optional<Completion>> partial_;
};

/// A solution or abstraction-conditioned policy. Completion i of a call is a
/// function of (prompt, params.seed, i) only, so a call with more samples
/// returns a superset of a call with fewer. Must tolerate concurrent calls.
class PolicyBackend {
 public:
  virtual ~PolicyBackend() = default;
  virtual BackendCapabilities capabilities() const = 0;
  /// Returns exactly params.n_samples completions or throws BackendError.
  virtual std::vector<Completion> sample(const PromptParts& prompt,
                                         const SamplingParams& params) const = 0;
};

/// Proposes abstractions for a problem (the abstraction generator).
class AbstractionGenerator {
 public:
  virtual ~AbstractionGenerator() = default;
  virtual std::vector<std::string> propose(const Problem& problem, int n,
                                           std::uint64_t seed) const = 0;
};

struct Judgment {
  bool verdict = false;
  std::string rationale;
};

class JudgeBackend {
 public:
  virtual ~JudgeBackend() = default;
  virtual Judgment judge(std::string_view instruction, std::string_view first,
                         std::string_view second) const = 0;
};

/// Turns solution attempts into candidate abstraction texts.
class SummarizerBackend {
 public:
  virtual ~SummarizerBackend() = default;
  virtual std::vector<std::string> summarize(const Problem& problem,
                                             std::span<const std::string> traces,
                                             int n_candidates, std::uint64_t seed) const = 0;
};

class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  /// Unit-norm vector of fixed dimension. Throws std::invalid_argument on empty text.
  virtual std::vector<double> embed(std::string_view text) const = 0;
};

/// Scales v to unit L2 norm; throws std::invalid_argument for the zero vector.
std::vector<double> normalized(std::vector<double> v);

}  // namespace rlad
