#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace rlad {

/// Id used for the "no abstraction" condition. Never a valid abstraction id,
/// which are always prefixed with "a-".
inline constexpr std::string_view kNoAbstraction = "NONE";

inline bool is_no_abstraction(std::string_view id) { return id == kNoAbstraction; }

/// Thrown for malformed or contract-violating records. Carries the 1-based
/// line number when the record came from a JSONL file.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what, std::size_t line = 0);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

enum class SplitTag { unassigned, easy, medium, hard };
enum class AbstractionSource { summarizer, generator_model, human };
enum class LeakStatus { unchecked, passed, failed };

std::string_view to_string(SplitTag tag);
std::string_view to_string(AbstractionSource source);
std::string_view to_string(LeakStatus status);
SplitTag parse_split_tag(std::string_view s);
AbstractionSource parse_abstraction_source(std::string_view s);
LeakStatus parse_leak_status(std::string_view s);

/// Content hash of a prompt, "p-" followed by 16 hex digits.
std::string problem_id_for(std::string_view prompt);
/// Content hash of (problem id, text), "a-" followed by 16 hex digits.
std::string abstraction_id_for(std::string_view problem_id, std::string_view text);

struct Problem {
  std::string id;
  std::string prompt;
  std::string gold_answer;
  SplitTag split_tag = SplitTag::unassigned;
  std::optional<double> base_success_rate;

  static Problem make(std::string prompt, std::string gold_answer);
  /// Throws DataError when an invariant does not hold.
  void validate() const;

  bool operator==(const Problem&) const = default;
};

struct Abstraction {
  std::string id;
  std::string problem_id;
  std::string text;
  AbstractionSource source = AbstractionSource::summarizer;
  LeakStatus leak_status = LeakStatus::unchecked;
  std::optional<double> uplift;

  static Abstraction make(std::string problem_id, std::string text, AbstractionSource source);
  void validate() const;

  bool operator==(const Abstraction&) const = default;
};

struct RolloutRecord {
  std::string problem_id;
  std::string abstraction_id{kNoAbstraction};
  std::string solution_text;
  std::optional<std::string> extracted_answer;
  bool correct = false;
  double reward = 0.0;
  std::optional<double> advantage;
  std::uint64_t seed = 0;
  std::int64_t token_count = 0;

  bool has_abstraction() const { return !is_no_abstraction(abstraction_id); }
  void validate() const;

  bool operator==(const RolloutRecord&) const = default;
};

struct RewardSummary {
  std::string problem_id;
  std::string abstraction_id{kNoAbstraction};
  std::int64_t n_rollouts = 0;
  std::int64_t n_correct = 0;
  double mean_acc = 0.0;

  void validate() const;
  bool operator==(const RewardSummary&) const = default;
};

/// Aggregates rollouts sharing one (problem, abstraction) pair. Throws
/// DataError on an empty span or mixed conditioning.
RewardSummary summarize(std::span<const RolloutRecord> records);

void to_json(nlohmann::json& j, const Problem& p);
void from_json(const nlohmann::json& j, Problem& p);
void to_json(nlohmann::json& j, const Abstraction& a);
void from_json(const nlohmann::json& j, Abstraction& a);
void to_json(nlohmann::json& j, const RolloutRecord& r);
void from_json(const nlohmann::json& j, RolloutRecord& r);
void to_json(nlohmann::json& j, const RewardSummary& s);
void from_json(const nlohmann::json& j, RewardSummary& s);

/// Whitespace-separated word count; the simulator's token-count proxy.
std::int64_t word_count(std::string_view text);

}  // namespace rlad
