#pragma once

// Warmstart corpus construction for the abstraction generator: summarize
// solution attempts into candidate abstractions, keep those that raise the
// solver's accuracy and do not leak the answer, and emit SFT pairs.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rlad/backends.hpp"
#include "rlad/core.hpp"
#include "rlad/manifest.hpp"

namespace rlad {

struct SummarizationJob {
  Problem problem;
  std::vector<std::string> trace_ids;
  std::vector<std::string> traces;
  int n_candidates = 2;
  const SummarizerBackend* summarizer = nullptr;
  std::uint64_t seed = 0;
};

/// True when the token sequence of `needle` occurs contiguously in `text`.
/// Tokens are alphanumeric runs and single punctuation characters.
bool contains_token_sequence(std::string_view text, std::string_view needle);

/// Samples `n` unconditioned attempts used as summarization input.
std::vector<std::string> collect_traces(const Problem& problem, const PolicyBackend& solver,
                                        std::int64_t n, std::uint64_t seed);

/// Candidate abstractions (source=summarizer, leak_status=unchecked),
/// deduplicated after normalization, with any candidate that contains the
/// gold answer removed. An empty result is logged as a warning.
std::vector<Abstraction> generate_candidates(const SummarizationJob& job);

enum class UpliftDecision { keep, drop };
std::string_view to_string(UpliftDecision d);

struct UpliftReport {
  std::string problem_id;
  std::string abstraction_id;
  std::int64_t n_with = 0;
  std::int64_t n_without = 0;
  std::int64_t c_with = 0;
  std::int64_t c_without = 0;
  double acc_with = 0.0;
  double acc_without = 0.0;
  double uplift = 0.0;
  UpliftDecision decision = UpliftDecision::drop;

  bool operator==(const UpliftReport&) const = default;
};

void to_json(nlohmann::json& j, const UpliftReport& r);
void from_json(const nlohmann::json& j, UpliftReport& r);

class UpliftError : public std::runtime_error {
 public:
  UpliftError(const std::string& what, UpliftReport partial)
      : std::runtime_error(what), partial_(std::move(partial)) {}
  const UpliftReport& partial() const noexcept { return partial_; }

 private:
  UpliftReport partial_;
};

/// n rollouts with and n without the abstraction on the same seed stream.
/// Keep iff acc_with > acc_without strictly.
UpliftReport measure_uplift(const Problem& problem, const Abstraction& abstraction,
                            const PolicyBackend& solver, std::int64_t n, std::uint64_t seed);

inline constexpr std::int64_t kDefaultUpliftSamplesHttp = 16;
inline constexpr std::int64_t kDefaultUpliftSamplesSim = 1000;

struct KeptAbstraction {
  Abstraction abstraction;
  UpliftReport report;
};

struct SftEntry {
  std::string problem_id;
  std::string prompt;
  std::string target;
  double uplift = 0.0;
  std::int64_t n_with = 0;
  std::int64_t n_without = 0;
  bool operator==(const SftEntry&) const = default;
};

void to_json(nlohmann::json& j, const SftEntry& e);
void from_json(const nlohmann::json& j, SftEntry& e);

/// Writes (problem prompt -> abstraction text) SFT pairs to `out_path` and a
/// manifest next to it. Every abstraction must have passed the leak check
/// and been kept by the uplift filter. Returns `out_path`.
std::filesystem::path build_sft_corpus(std::span<const Problem> problems,
                                       std::span<const KeptAbstraction> kept,
                                       const std::filesystem::path& out_path,
                                       const StageContext& ctx);

}  // namespace rlad
