#include "rlad/core.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <utility>

#include "rlad/hashing.hpp"

namespace rlad {

DataError::DataError(const std::string& what, std::size_t line)
    : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
      line_(line) {}

namespace {

template <class E, std::size_t N>
E parse_enum(std::string_view s, const std::array<std::pair<std::string_view, E>, N>& table,
             std::string_view what) {
  for (const auto& [name, value] : table) {
    if (name == s) return value;
  }
  throw DataError("unknown " + std::string(what) + " '" + std::string(s) + "'");
}

template <class E, std::size_t N>
std::string_view enum_name(E e, const std::array<std::pair<std::string_view, E>, N>& table) {
  for (const auto& [name, value] : table) {
    if (value == e) return name;
  }
  return "?";
}

constexpr std::array<std::pair<std::string_view, SplitTag>, 4> kSplitTags{{
    {"unassigned", SplitTag::unassigned},
    {"easy", SplitTag::easy},
    {"medium", SplitTag::medium},
    {"hard", SplitTag::hard},
}};
constexpr std::array<std::pair<std::string_view, AbstractionSource>, 3> kSources{{
    {"summarizer", AbstractionSource::summarizer},
    {"generator_model", AbstractionSource::generator_model},
    {"human", AbstractionSource::human},
}};
constexpr std::array<std::pair<std::string_view, LeakStatus>, 3> kLeakStatuses{{
    {"unchecked", LeakStatus::unchecked},
    {"passed", LeakStatus::passed},
    {"failed", LeakStatus::failed},
}};

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

template <class T>
T required(const nlohmann::json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw DataError(std::string("missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad field '") + key + "': " + e.what());
  }
}

template <class T>
std::optional<T> optional_field(const nlohmann::json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad field '") + key + "': " + e.what());
  }
}

}  // namespace

std::string_view to_string(SplitTag tag) { return enum_name(tag, kSplitTags); }
std::string_view to_string(AbstractionSource source) { return enum_name(source, kSources); }
std::string_view to_string(LeakStatus status) { return enum_name(status, kLeakStatuses); }
SplitTag parse_split_tag(std::string_view s) { return parse_enum(s, kSplitTags, "split_tag"); }
AbstractionSource parse_abstraction_source(std::string_view s) {
  return parse_enum(s, kSources, "source");
}
LeakStatus parse_leak_status(std::string_view s) {
  return parse_enum(s, kLeakStatuses, "leak_status");
}

std::string problem_id_for(std::string_view prompt) {
  return "p-" + sha256_hex(prompt).substr(0, 16);
}

std::string abstraction_id_for(std::string_view problem_id, std::string_view text) {
  std::string buf;
  buf.reserve(problem_id.size() + 1 + text.size());
  buf.append(problem_id).push_back('\0');
  buf.append(text);
  return "a-" + sha256_hex(buf).substr(0, 16);
}

Problem Problem::make(std::string prompt, std::string gold_answer) {
  Problem p;
  p.id = problem_id_for(prompt);
  p.prompt = std::move(prompt);
  p.gold_answer = std::move(gold_answer);
  return p;
}

void Problem::validate() const {
  if (id != problem_id_for(prompt)) {
    throw DataError("problem id '" + id + "' does not match hash of prompt");
  }
  if (is_blank(gold_answer)) throw DataError("problem " + id + ": empty gold_answer");
  const bool tagged = split_tag != SplitTag::unassigned;
  if (tagged != base_success_rate.has_value()) {
    throw DataError("problem " + id + ": base_success_rate must be present iff split_tag is set");
  }
  if (base_success_rate && !(*base_success_rate >= 0.0 && *base_success_rate <= 1.0)) {
    throw DataError("problem " + id + ": base_success_rate outside [0,1]");
  }
}

Abstraction Abstraction::make(std::string problem_id, std::string text, AbstractionSource source) {
  Abstraction a;
  a.id = abstraction_id_for(problem_id, text);
  a.problem_id = std::move(problem_id);
  a.text = std::move(text);
  a.source = source;
  return a;
}

void Abstraction::validate() const {
  if (is_blank(text)) throw DataError("abstraction " + id + ": empty text");
  if (is_no_abstraction(id)) throw DataError("the no-abstraction sentinel cannot be stored");
  if (id != abstraction_id_for(problem_id, text)) {
    throw DataError("abstraction id '" + id + "' does not match hash of (problem_id, text)");
  }
}

void RolloutRecord::validate() const {
  if (correct && !extracted_answer) {
    throw DataError("rollout marked correct without an extracted answer");
  }
  if (!has_abstraction() && reward != 0.0) {
    throw DataError("rollout without abstraction must carry zero reward");
  }
  if (token_count < 0) throw DataError("negative token_count");
}

void RewardSummary::validate() const {
  if (n_rollouts < 1) throw DataError("reward summary needs n_rollouts >= 1");
  if (n_correct < 0 || n_correct > n_rollouts) throw DataError("n_correct outside [0, n_rollouts]");
  if (mean_acc != static_cast<double>(n_correct) / static_cast<double>(n_rollouts)) {
    throw DataError("mean_acc inconsistent with counts");
  }
}

RewardSummary summarize(std::span<const RolloutRecord> records) {
  if (records.empty()) throw DataError("cannot summarize an empty rollout set");
  RewardSummary s;
  s.problem_id = records.front().problem_id;
  s.abstraction_id = records.front().abstraction_id;
  for (const auto& r : records) {
    if (r.problem_id != s.problem_id || r.abstraction_id != s.abstraction_id) {
      throw DataError("summary over rollouts with mixed (problem, abstraction)");
    }
    ++s.n_rollouts;
    if (r.correct) ++s.n_correct;
  }
  s.mean_acc = static_cast<double>(s.n_correct) / static_cast<double>(s.n_rollouts);
  return s;
}

void to_json(nlohmann::json& j, const Problem& p) {
  j = nlohmann::json{{"id", p.id},
                     {"prompt", p.prompt},
                     {"gold_answer", p.gold_answer},
                     {"split_tag", to_string(p.split_tag)}};
  if (p.base_success_rate) j["base_success_rate"] = *p.base_success_rate;
}

void from_json(const nlohmann::json& j, Problem& p) {
  if (!j.is_object()) throw DataError("problem record is not a JSON object");
  p.prompt = required<std::string>(j, "prompt");
  p.gold_answer = required<std::string>(j, "gold_answer");
  p.id = j.contains("id") ? required<std::string>(j, "id") : problem_id_for(p.prompt);
  const auto tag = optional_field<std::string>(j, "split_tag");
  p.split_tag = tag ? parse_split_tag(*tag) : SplitTag::unassigned;
  p.base_success_rate = optional_field<double>(j, "base_success_rate");
}

void to_json(nlohmann::json& j, const Abstraction& a) {
  j = nlohmann::json{{"id", a.id},
                     {"problem_id", a.problem_id},
                     {"text", a.text},
                     {"source", to_string(a.source)},
                     {"leak_status", to_string(a.leak_status)}};
  if (a.uplift) j["uplift"] = *a.uplift;
}

void from_json(const nlohmann::json& j, Abstraction& a) {
  if (!j.is_object()) throw DataError("abstraction record is not a JSON object");
  a.problem_id = required<std::string>(j, "problem_id");
  a.text = required<std::string>(j, "text");
  a.id = j.contains("id") ? required<std::string>(j, "id")
                          : abstraction_id_for(a.problem_id, a.text);
  const auto source = optional_field<std::string>(j, "source");
  a.source = source ? parse_abstraction_source(*source) : AbstractionSource::human;
  const auto leak = optional_field<std::string>(j, "leak_status");
  a.leak_status = leak ? parse_leak_status(*leak) : LeakStatus::unchecked;
  a.uplift = optional_field<double>(j, "uplift");
}

void to_json(nlohmann::json& j, const RolloutRecord& r) {
  j = nlohmann::json{{"problem_id", r.problem_id},
                     {"abstraction_id", r.abstraction_id},
                     {"solution_text", r.solution_text},
                     {"correct", r.correct},
                     {"reward", r.reward},
                     {"seed", r.seed},
                     {"token_count", r.token_count}};
  if (r.extracted_answer) j["extracted_answer"] = *r.extracted_answer;
  if (r.advantage) j["advantage"] = *r.advantage;
}

void from_json(const nlohmann::json& j, RolloutRecord& r) {
  if (!j.is_object()) throw DataError("rollout record is not a JSON object");
  r.problem_id = required<std::string>(j, "problem_id");
  r.abstraction_id = required<std::string>(j, "abstraction_id");
  r.solution_text = required<std::string>(j, "solution_text");
  r.extracted_answer = optional_field<std::string>(j, "extracted_answer");
  r.correct = required<bool>(j, "correct");
  r.reward = required<double>(j, "reward");
  r.advantage = optional_field<double>(j, "advantage");
  r.seed = required<std::uint64_t>(j, "seed");
  r.token_count = required<std::int64_t>(j, "token_count");
}

void to_json(nlohmann::json& j, const RewardSummary& s) {
  j = nlohmann::json{{"problem_id", s.problem_id},
                     {"abstraction_id", s.abstraction_id},
                     {"n_rollouts", s.n_rollouts},
                     {"n_correct", s.n_correct},
                     {"mean_acc", s.mean_acc}};
}

void from_json(const nlohmann::json& j, RewardSummary& s) {
  if (!j.is_object()) throw DataError("reward summary is not a JSON object");
  s.problem_id = required<std::string>(j, "problem_id");
  s.abstraction_id = required<std::string>(j, "abstraction_id");
  s.n_rollouts = required<std::int64_t>(j, "n_rollouts");
  s.n_correct = required<std::int64_t>(j, "n_correct");
  s.mean_acc = required<double>(j, "mean_acc");
}

std::int64_t word_count(std::string_view text) {
  std::int64_t n = 0;
  bool in_word = false;
  for (unsigned char c : text) {
    const bool space = std::isspace(c) != 0;
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

}  // namespace rlad
