#include "rlad/datagen.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>

#include <spdlog/spdlog.h>

#include "rlad/hashing.hpp"
#include "rlad/jsonl.hpp"
#include "rlad/verifier.hpp"

namespace rlad {
namespace {

std::vector<std::string> tokenize(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
      continue;
    }
    if (!cur.empty()) out.push_back(std::exchange(cur, {}));
    if (!std::isspace(c)) out.emplace_back(1, ch);
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::string dedup_key(std::string_view text) {
  std::string key;
  for (const auto& t : tokenize(text)) {
    if (!key.empty()) key.push_back(' ');
    key += t;
  }
  return key;
}

}  // namespace

bool contains_token_sequence(std::string_view text, std::string_view needle) {
  const auto hay = tokenize(text);
  const auto pat = tokenize(needle);
  if (pat.empty()) return false;
  return std::search(hay.begin(), hay.end(), pat.begin(), pat.end()) != hay.end();
}

std::vector<std::string> collect_traces(const Problem& problem, const PolicyBackend& solver,
                                        std::int64_t n, std::uint64_t seed) {
  SamplingParams params = SamplingParams::train();
  params.n_samples = n;
  params.seed = derive_seed(seed, "traces:" + problem.id, 0);
  std::vector<std::string> out;
  for (auto& c : solver.sample(PromptParts::solve(problem), params)) out.push_back(std::move(c.text));
  return out;
}

std::vector<Abstraction> generate_candidates(const SummarizationJob& job) {
  if (job.traces.empty()) throw std::invalid_argument("generate_candidates: no traces");
  if (job.n_candidates < 1) throw std::invalid_argument("generate_candidates: n_candidates < 1");
  if (!job.summarizer) throw std::invalid_argument("generate_candidates: no summarizer");
  const auto texts = job.summarizer->summarize(job.problem, job.traces, job.n_candidates,
                                               derive_seed(job.seed, "summarize:" + job.problem.id, 0));
  std::vector<Abstraction> out;
  std::set<std::string> seen;
  std::size_t screened = 0;
  for (const auto& text : texts) {
    if (static_cast<int>(out.size()) >= job.n_candidates) break;
    const auto key = dedup_key(text);
    if (key.empty() || !seen.insert(key).second) continue;
    if (contains_token_sequence(text, job.problem.gold_answer) ||
        contains_token_sequence(text, normalize_answer(job.problem.gold_answer))) {
      ++screened;
      continue;
    }
    out.push_back(Abstraction::make(job.problem.id, text, AbstractionSource::summarizer));
  }
  if (out.empty()) {
    spdlog::warn("problem {}: no candidate abstractions survived ({} screened for answer leaks)",
                 job.problem.id, screened);
  }
  return out;
}

std::string_view to_string(UpliftDecision d) { return d == UpliftDecision::keep ? "keep" : "drop"; }

void to_json(nlohmann::json& j, const UpliftReport& r) {
  j = nlohmann::json{{"problem_id", r.problem_id}, {"abstraction_id", r.abstraction_id},
                     {"n_with", r.n_with},         {"n_without", r.n_without},
                     {"c_with", r.c_with},         {"c_without", r.c_without},
                     {"acc_with", r.acc_with},     {"acc_without", r.acc_without},
                     {"uplift", r.uplift},         {"decision", to_string(r.decision)}};
}

void from_json(const nlohmann::json& j, UpliftReport& r) {
  try {
    r.problem_id = j.at("problem_id").get<std::string>();
    r.abstraction_id = j.at("abstraction_id").get<std::string>();
    r.n_with = j.at("n_with").get<std::int64_t>();
    r.n_without = j.at("n_without").get<std::int64_t>();
    r.c_with = j.at("c_with").get<std::int64_t>();
    r.c_without = j.at("c_without").get<std::int64_t>();
    r.acc_with = j.at("acc_with").get<double>();
    r.acc_without = j.at("acc_without").get<double>();
    r.uplift = j.at("uplift").get<double>();
    const auto d = j.at("decision").get<std::string>();
    if (d != "keep" && d != "drop") throw DataError("bad decision '" + d + "'");
    r.decision = d == "keep" ? UpliftDecision::keep : UpliftDecision::drop;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad uplift report: ") + e.what());
  }
}

UpliftReport measure_uplift(const Problem& problem, const Abstraction& abstraction,
                            const PolicyBackend& solver, std::int64_t n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("measure_uplift: n must be >= 1");
  if (abstraction.problem_id != problem.id) {
    throw DataError("abstraction " + abstraction.id + " belongs to another problem");
  }
  UpliftReport report;
  report.problem_id = problem.id;
  report.abstraction_id = abstraction.id;

  SamplingParams params = SamplingParams::train();
  params.n_samples = n;
  // Both conditions share one seed stream.
  params.seed = derive_seed(seed, "uplift:" + problem.id, 0);

  auto count = [&](const PromptParts& prompt, std::int64_t& n_out, std::int64_t& c_out) {
    try {
      for (const auto& c : solver.sample(prompt, params)) {
        ++n_out;
        if (is_correct_solution(c.text, problem.gold_answer)) ++c_out;
      }
    } catch (const BackendError& e) {
      for (const auto& c : e.partial()) {
        if (!c) continue;
        ++n_out;
        if (is_correct_solution(c->text, problem.gold_answer)) ++c_out;
      }
      throw UpliftError(std::string("uplift rollouts failed: ") + e.what(), report);
    }
  };
  count(PromptParts::solve_with(problem, abstraction.text), report.n_with, report.c_with);
  count(PromptParts::solve(problem), report.n_without, report.c_without);

  report.acc_with = static_cast<double>(report.c_with) / static_cast<double>(report.n_with);
  report.acc_without = static_cast<double>(report.c_without) / static_cast<double>(report.n_without);
  report.uplift = report.acc_with - report.acc_without;
  // Compare exact fractions, not the rounded difference.
  const bool increase = report.c_with * report.n_without > report.c_without * report.n_with;
  report.decision = increase ? UpliftDecision::keep : UpliftDecision::drop;
  return report;
}

void to_json(nlohmann::json& j, const SftEntry& e) {
  j = nlohmann::json{{"problem_id", e.problem_id}, {"prompt", e.prompt},
                     {"target", e.target},         {"uplift", e.uplift},
                     {"n_with", e.n_with},         {"n_without", e.n_without}};
}

void from_json(const nlohmann::json& j, SftEntry& e) {
  try {
    e.problem_id = j.at("problem_id").get<std::string>();
    e.prompt = j.at("prompt").get<std::string>();
    e.target = j.at("target").get<std::string>();
    e.uplift = j.at("uplift").get<double>();
    e.n_with = j.at("n_with").get<std::int64_t>();
    e.n_without = j.at("n_without").get<std::int64_t>();
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("bad sft entry: ") + ex.what());
  }
}

std::filesystem::path build_sft_corpus(std::span<const Problem> problems,
                                       std::span<const KeptAbstraction> kept,
                                       const std::filesystem::path& out_path,
                                       const StageContext& ctx) {
  std::map<std::string, const Problem*> by_id;
  for (const auto& p : problems) by_id[p.id] = &p;

  RunManifest m = begin_manifest(ctx, "sft-corpus");
  std::vector<SftEntry> entries;
  for (const auto& k : kept) {
    const auto& a = k.abstraction;
    if (a.leak_status != LeakStatus::passed) {
      throw DataError("abstraction " + a.id + " has not passed the leak check");
    }
    if (k.report.decision != UpliftDecision::keep || k.report.abstraction_id != a.id) {
      throw DataError("abstraction " + a.id + " was not kept by the uplift filter");
    }
    const auto it = by_id.find(a.problem_id);
    if (it == by_id.end()) throw DataError("abstraction " + a.id + " refers to an unknown problem");
    const Problem& p = *it->second;
    if (contains_token_sequence(a.text, p.gold_answer)) {
      throw DataError("abstraction " + a.id + " contains the gold answer");
    }
    entries.push_back({p.id, p.prompt, a.text, k.report.uplift, k.report.n_with, k.report.n_without});
  }
  write_jsonl(out_path, entries);
  m.outputs.push_back(digest_file(out_path, ctx.base_dir));
  m.details = {{"n_entries", entries.size()}};
  auto manifest_path = out_path;
  manifest_path += ".manifest.json";
  finish_manifest(ctx, m, manifest_path);
  return out_path;
}

}  // namespace rlad
