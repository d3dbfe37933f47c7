#include "rlad/sim.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <regex>
#include <set>
#include <sstream>
#include <stdexcept>

#include "rlad/hashing.hpp"
#include "rlad/verifier.hpp"

namespace rlad::sim {
namespace {

constexpr std::string_view kStrategyOpen = "[[strategy:";
constexpr std::string_view kBoostOpen = "[[boost:";
constexpr std::string_view kClose = "]]";

std::vector<std::string> tag_values(std::string_view text, std::string_view open) {
  std::vector<std::string> out;
  for (std::size_t pos = text.find(open); pos != std::string_view::npos;
       pos = text.find(open, pos + 1)) {
    const std::size_t start = pos + open.size();
    const std::size_t end = text.find(kClose, start);
    if (end == std::string_view::npos) break;
    out.emplace_back(text.substr(start, end - start));
  }
  return out;
}

std::string strip_tags(std::string_view text) {
  std::string out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t open = text.find("[[", pos);
    if (open == std::string_view::npos) break;
    const std::size_t close = text.find(kClose, open);
    if (close == std::string_view::npos) break;
    out.append(text.substr(pos, open - pos)).push_back(' ');
    pos = close + kClose.size();
  }
  out.append(text.substr(std::min(pos, text.size())));
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string rational_to_string(const Rational& r) {
  const auto num = boost::multiprecision::numerator(r);
  const auto den = boost::multiprecision::denominator(r);
  return den == 1 ? num.str() : num.str() + "/" + den.str();
}

/// A wrong answer that never matches the gold answer.
std::string wrong_answer(std::string_view gold, Rng& rng) {
  const auto form = AnswerForm::parse(gold);
  if (form.numeric_value) {
    return rational_to_string(*form.numeric_value + static_cast<int>(1 + rng.below(9)));
  }
  return "none";
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

Completion make_completion(std::string text, std::int64_t max_tokens) {
  Completion c;
  c.token_count = word_count(text);
  if (c.token_count > max_tokens) {
    std::istringstream in(text);
    std::string word;
    std::string cut;
    for (std::int64_t i = 0; i < max_tokens && in >> word; ++i) {
      if (!cut.empty()) cut.push_back(' ');
      cut += word;
    }
    text = std::move(cut);
    c.token_count = max_tokens;
    c.truncated = true;
  }
  c.text = std::move(text);
  return c;
}

}  // namespace

std::string strategy_tag(std::string_view strategy_id) {
  return std::string(kStrategyOpen) + std::string(strategy_id) + std::string(kClose);
}

std::string boost_tag(double boost) {
  return std::string(kBoostOpen) + format_double(boost) + std::string(kClose);
}

std::vector<std::string> strategy_tags_in(std::string_view text) {
  std::vector<std::string> out;
  for (auto& id : tag_values(text, kStrategyOpen)) {
    if (std::find(out.begin(), out.end(), id) == out.end()) out.push_back(std::move(id));
  }
  return out;
}

AbstractionSemantics parse_semantics(std::string_view abstraction_text, double default_boost) {
  AbstractionSemantics sem;
  sem.named = strategy_tags_in(abstraction_text);
  sem.boost = default_boost;
  const auto boosts = tag_values(abstraction_text, kBoostOpen);
  if (!boosts.empty()) {
    const std::string& b = boosts.back();
    double v = 0.0;
    const auto res = std::from_chars(b.data(), b.data() + b.size(), v);
    if (res.ec != std::errc() || res.ptr != b.data() + b.size() || !(v >= 0.0)) {
      throw DataError("bad boost tag '" + b + "'");
    }
    sem.boost = v;
  }
  return sem;
}

std::vector<double> softmax(const std::vector<double>& logits) {
  if (logits.empty()) return {};
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

void SimEnv::add(SimProblem problem) {
  if (problem.strategies.empty()) throw DataError("sim problem without strategies");
  std::set<std::string> ids;
  for (const auto& s : problem.strategies) {
    if (!(s.success_prob >= 0.0 && s.success_prob <= 1.0)) {
      throw DataError("strategy " + s.id + ": success_prob outside [0,1]");
    }
    if (!ids.insert(s.id).second) throw DataError("duplicate strategy id " + s.id);
  }
  if (!(problem.default_boost >= 0.0)) throw DataError("default_boost must be >= 0");
  problem.problem.validate();
  const std::string id = problem.problem.id;
  if (index_.contains(id)) throw DataError("duplicate sim problem " + id);
  index_.emplace(id, problems_.size());
  problems_.push_back(std::move(problem));
}

bool SimEnv::contains(std::string_view problem_id) const {
  return index_.find(problem_id) != index_.end();
}

const SimProblem& SimEnv::at(std::string_view problem_id) const {
  const auto it = index_.find(problem_id);
  if (it == index_.end()) {
    throw std::out_of_range("problem " + std::string(problem_id) + " not registered in SimEnv");
  }
  return problems_[it->second];
}

SimProblem& SimEnv::at(std::string_view problem_id) {
  return const_cast<SimProblem&>(std::as_const(*this).at(problem_id));
}

std::vector<Problem> SimEnv::problems() const {
  std::vector<Problem> out;
  out.reserve(problems_.size());
  for (const auto& p : problems_) out.push_back(p.problem);
  return out;
}

std::vector<double> SimEnv::biased_logits(
    std::string_view problem_id, const std::optional<std::string>& abstraction_text) const {
  const SimProblem& sp = at(problem_id);
  std::vector<double> logits;
  logits.reserve(sp.strategies.size());
  for (const auto& s : sp.strategies) logits.push_back(s.logit);
  if (abstraction_text) {
    const auto sem = parse_semantics(*abstraction_text, sp.default_boost);
    for (std::size_t i = 0; i < sp.strategies.size(); ++i) {
      if (std::find(sem.named.begin(), sem.named.end(), sp.strategies[i].id) != sem.named.end()) {
        logits[i] += sem.boost;
      }
    }
  }
  return logits;
}

std::vector<double> SimEnv::strategy_distribution(
    std::string_view problem_id, const std::optional<std::string>& abstraction_text) const {
  return softmax(biased_logits(problem_id, abstraction_text));
}

double SimEnv::solve_probability(std::string_view problem_id,
                                 const std::optional<std::string>& abstraction_text) const {
  const auto dist = strategy_distribution(problem_id, abstraction_text);
  const auto& strategies = at(problem_id).strategies;
  double p = 0.0;
  for (std::size_t i = 0; i < dist.size(); ++i) p += dist[i] * strategies[i].success_prob;
  return p;
}

std::vector<double> SimEnv::abstraction_distribution(std::string_view problem_id) const {
  std::vector<double> logits;
  for (const auto& c : at(problem_id).candidates) logits.push_back(c.logit);
  return softmax(logits);
}

void SimEnv::apply_solver_gradient(const std::map<std::string, std::vector<double>>& gradient,
                                   double lr) {
  for (const auto& [pid, g] : gradient) {
    auto& strategies = at(pid).strategies;
    if (g.size() != strategies.size()) throw std::invalid_argument("solver gradient size mismatch");
    for (std::size_t i = 0; i < g.size(); ++i) strategies[i].logit += lr * g[i];
  }
}

void SimEnv::apply_abstraction_gradient(
    const std::map<std::string, std::vector<double>>& gradient, double lr) {
  for (const auto& [pid, g] : gradient) {
    auto& candidates = at(pid).candidates;
    if (g.size() != candidates.size()) {
      throw std::invalid_argument("abstraction gradient size mismatch");
    }
    for (std::size_t i = 0; i < g.size(); ++i) candidates[i].logit += lr * g[i];
  }
}

SimEnv SimEnv::from_json(const nlohmann::json& world) {
  SimEnv env;
  try {
    for (const auto& jp : world.at("problems")) {
      SimProblem sp;
      sp.problem = Problem::make(jp.at("prompt").get<std::string>(),
                                 jp.at("gold_answer").get<std::string>());
      sp.default_boost = jp.value("default_boost", 2.0);
      for (const auto& js : jp.at("strategies")) {
        sp.strategies.push_back({js.at("id").get<std::string>(),
                                 js.value("description", js.at("id").get<std::string>()),
                                 js.at("success_prob").get<double>(), js.value("logit", 0.0)});
      }
      for (const auto& ja : jp.value("abstractions", nlohmann::json::array())) {
        sp.candidates.push_back({ja.at("text").get<std::string>(), ja.value("logit", 0.0)});
      }
      env.add(std::move(sp));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad sim world: ") + e.what());
  }
  return env;
}

SimEnv SimEnv::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open sim world " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("bad sim world " + path.string() + ": " + e.what());
  }
}

nlohmann::json SimEnv::to_json() const {
  auto problems = nlohmann::json::array();
  for (const auto& sp : problems_) {
    auto strategies = nlohmann::json::array();
    for (const auto& s : sp.strategies) {
      strategies.push_back({{"id", s.id},
                            {"description", s.description},
                            {"success_prob", s.success_prob},
                            {"logit", s.logit}});
    }
    auto candidates = nlohmann::json::array();
    for (const auto& c : sp.candidates) candidates.push_back({{"text", c.text}, {"logit", c.logit}});
    problems.push_back({{"prompt", sp.problem.prompt},
                        {"gold_answer", sp.problem.gold_answer},
                        {"default_boost", sp.default_boost},
                        {"strategies", strategies},
                        {"abstractions", candidates}});
  }
  return {{"problems", problems}};
}

std::optional<std::string> traced_strategy(std::string_view solution_text) {
  auto tags = strategy_tags_in(solution_text);
  if (tags.empty()) return std::nullopt;
  return tags.front();
}

std::vector<Completion> SimPolicy::sample(const PromptParts& prompt,
                                          const SamplingParams& params) const {
  params.validate();
  if (!prompt.problem_id && !prompt.problem) return EchoPolicy{}.sample(prompt, params);
  const std::string pid = prompt.problem_id ? *prompt.problem_id : problem_id_for(*prompt.problem);
  if (!env_.contains(pid)) {
    throw BackendError(BackendError::Kind::permanent,
                       "problem " + pid + " not registered in SimEnv");
  }
  const SimProblem& sp = env_.at(pid);
  const auto dist = env_.strategy_distribution(pid, prompt.abstraction);

  std::vector<Completion> out;
  out.reserve(static_cast<std::size_t>(params.n_samples));
  for (std::int64_t i = 0; i < params.n_samples; ++i) {
    Rng rng(derive_seed(params.seed, "sim-sample", static_cast<std::uint64_t>(i)));
    const Strategy& s = sp.strategies[rng.categorical(dist)];
    const bool solved = rng.uniform() < s.success_prob;
    const std::string answer = solved ? sp.problem.gold_answer : wrong_answer(sp.problem.gold_answer, rng);
    std::string text;
    if (prompt.abstraction) text += "Using the given guidance. ";
    text += "Approach: " + s.description + " " + strategy_tag(s.id) + ".\n";
    text += "Working through " + s.description + " step by step and checking each reduction.\n";
    text += "So the final answer is \\boxed{" + answer + "}.";
    out.push_back(make_completion(std::move(text), params.max_tokens));
  }
  return out;
}

std::vector<Completion> EchoPolicy::sample(const PromptParts& prompt,
                                           const SamplingParams& params) const {
  params.validate();
  std::string context;
  if (prompt.abstraction) context += strip_tags(*prompt.abstraction) + "\n";
  if (prompt.problem) context += strip_tags(*prompt.problem);
  static const std::regex kNumber(R"(-?\d+(?:\.\d+)?(?:/\d+)?)");
  std::string last;
  for (std::sregex_iterator it(context.begin(), context.end(), kNumber), end; it != end; ++it) {
    last = it->str();
  }
  const std::string text = last.empty() ? std::string("No value is stated, so no answer can be given.")
                                        : "Repeating the stated value: \\boxed{" + last + "}.";
  return std::vector<Completion>(static_cast<std::size_t>(params.n_samples),
                                 make_completion(text, params.max_tokens));
}

std::vector<std::string> SimAbstractionPolicy::propose(const Problem& problem, int n,
                                                       std::uint64_t seed) const {
  if (n < 1) throw std::invalid_argument("propose: n must be >= 1");
  if (!env_.contains(problem.id)) {
    throw BackendError(BackendError::Kind::permanent,
                       "problem " + problem.id + " not registered in SimEnv");
  }
  const auto& candidates = env_.at(problem.id).candidates;
  if (candidates.empty()) {
    throw BackendError(BackendError::Kind::permanent,
                       "problem " + problem.id + " has no candidate abstractions");
  }
  const auto dist = env_.abstraction_distribution(problem.id);
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, "sim-abstraction", static_cast<std::uint64_t>(i)));
    out.push_back(candidates[rng.categorical(dist)].text);
  }
  return out;
}

std::optional<std::size_t> SimAbstractionPolicy::candidate_index(std::string_view problem_id,
                                                                 std::string_view text) const {
  const auto& candidates = env_.at(problem_id).candidates;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (candidates[i].text == text) return i;
  }
  return std::nullopt;
}

std::vector<std::string> SimSummarizer::summarize(const Problem& problem,
                                                  std::span<const std::string> traces,
                                                  int n_candidates, std::uint64_t) const {
  if (traces.empty()) throw std::invalid_argument("summarize: no traces");
  const SimProblem& sp = env_.at(problem.id);
  struct Tally {
    std::string id;
    int successes = 0;
    int attempts = 0;
  };
  std::vector<Tally> tallies;
  for (const auto& t : traces) {
    const auto s = traced_strategy(t);
    if (!s) continue;
    auto it = std::find_if(tallies.begin(), tallies.end(), [&](const Tally& x) { return x.id == *s; });
    if (it == tallies.end()) it = tallies.insert(tallies.end(), Tally{*s});
    ++it->attempts;
    if (is_correct_solution(t, problem.gold_answer)) ++it->successes;
  }
  std::sort(tallies.begin(), tallies.end(), [](const Tally& a, const Tally& b) {
    // Success rate, compared exactly by cross-multiplication.
    const long lhs = static_cast<long>(a.successes) * b.attempts;
    const long rhs = static_cast<long>(b.successes) * a.attempts;
    if (lhs != rhs) return lhs > rhs;
    if (a.attempts != b.attempts) return a.attempts > b.attempts;
    return a.id < b.id;
  });
  std::vector<std::string> out;
  for (const auto& t : tallies) {
    if (static_cast<int>(out.size()) >= n_candidates) break;
    const auto it = std::find_if(sp.strategies.begin(), sp.strategies.end(),
                                 [&](const Strategy& s) { return s.id == t.id; });
    const std::string desc = it == sp.strategies.end() ? t.id : it->description;
    if (t.successes > 0) {
      out.push_back("Commit early to " + desc + " " + strategy_tag(t.id) +
                    ": set up the structure it needs first, then carry the computation "
                    "through without switching approaches.");
    } else {
      out.push_back("Attempts based on " + desc + " " + strategy_tag(t.id) +
                    " tend to stall; if you use it, double-check each reduction before "
                    "moving on.");
    }
  }
  return out;
}

Judgment SimAdherenceJudge::judge(std::string_view, std::string_view first,
                                  std::string_view second) const {
  const auto named = strategy_tags_in(first);
  const auto followed = traced_strategy(second);
  Judgment j;
  j.verdict = followed && std::find(named.begin(), named.end(), *followed) != named.end();
  j.rationale = followed ? "solution follows strategy " + *followed +
                               (j.verdict ? ", which the abstraction names" : ", not named")
                         : std::string("solution names no strategy");
  return j;
}

Judgment SimClassifierJudge::judge(std::string_view, std::string_view first,
                                   std::string_view) const {
  const std::string text = lowercase(strip_tags(first));
  const auto has = [&](std::initializer_list<std::string_view> words) {
    return std::any_of(words.begin(), words.end(),
                       [&](std::string_view w) { return text.find(w) != std::string::npos; });
  };
  Judgment j;
  if (has({"avoid", "caution", "double-check", "do not", "don't", "beware", "stall"})) {
    j.rationale = "The abstraction mainly warns against a pitfall. (A)";
  } else if (has({"reformulat", "symmetr", "reframe", "substitut", "framing"})) {
    j.rationale = "The abstraction offers a reformulation that opens new paths. (B)";
  } else if (has({"invariant", "shortcut", "collapse", "insight"})) {
    j.rationale = "The abstraction collapses several steps into one insight. (D)";
  } else if (has({"step", "formula", "procedure", "plug", "commit", "carry"})) {
    j.rationale = "The abstraction prescribes a repeatable procedure. (C)";
  } else {
    j.rationale = "The abstraction fits none of the listed functions. (E)";
  }
  j.verdict = true;
  return j;
}

std::vector<double> TagEmbedder::embed(std::string_view text) const {
  if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) {
    throw std::invalid_argument("embed: empty text");
  }
  const std::size_t half = std::max<std::size_t>(dimension_ / 2, 1);
  std::vector<double> v(dimension_, 0.0);
  for (const auto& tag : tag_values(text, kStrategyOpen)) v[fnv1a(tag) % half] += 1.0;
  const std::string rest = lowercase(strip_tags(text));
  std::string word;
  bool any_word = false;
  auto flush = [&] {
    if (word.empty()) return;
    v[half + fnv1a(word) % (dimension_ - half)] += 0.05;
    any_word = true;
    word.clear();
  };
  for (char c : rest) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      word.push_back(c);
    } else {
      flush();
    }
  }
  flush();
  if (!any_word && std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; })) {
    v[half + fnv1a(text) % (dimension_ - half)] = 1.0;
  }
  return normalized(std::move(v));
}

std::vector<double> log_softmax_gradient(const std::vector<double>& biased_logits,
                                         std::size_t chosen) {
  auto g = softmax(biased_logits);
  for (double& x : g) x = -x;
  g.at(chosen) += 1.0;
  return g;
}

std::map<std::string, std::vector<double>> sim_gradient(
    const SimEnv& env, std::span<const RolloutRecord> records,
    const std::map<std::string, std::string>& abstraction_texts) {
  std::map<std::string, std::vector<double>> grad;
  for (const auto& r : records) {
    if (!r.advantage) throw DataError("sim_gradient: record without advantage");
    const auto strategy = traced_strategy(r.solution_text);
    if (!strategy) throw DataError("sim_gradient: record names no strategy");
    const SimProblem& sp = env.at(r.problem_id);
    std::optional<std::string> text;
    if (r.has_abstraction()) {
      const auto it = abstraction_texts.find(r.abstraction_id);
      if (it == abstraction_texts.end()) {
        throw DataError("sim_gradient: unknown abstraction " + r.abstraction_id);
      }
      text = it->second;
    }
    const auto pos = std::find_if(sp.strategies.begin(), sp.strategies.end(),
                                  [&](const Strategy& s) { return s.id == *strategy; });
    if (pos == sp.strategies.end()) throw DataError("sim_gradient: unknown strategy " + *strategy);
    auto& g = grad[r.problem_id];
    if (g.empty()) g.assign(sp.strategies.size(), 0.0);
    if (*r.advantage == 0.0) continue;
    const auto local = log_softmax_gradient(env.biased_logits(r.problem_id, text),
                                            static_cast<std::size_t>(pos - sp.strategies.begin()));
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += *r.advantage * local[i];
  }
  return grad;
}

}  // namespace rlad::sim

namespace rlad {

std::vector<double> normalized(std::vector<double> v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  if (!(sq > 0.0)) throw std::invalid_argument("cannot normalize the zero vector");
  const double inv = 1.0 / std::sqrt(sq);
  for (double& x : v) x *= inv;
  return v;
}

}  // namespace rlad
