#include "rlad/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <set>
#include <stdexcept>

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "classifier_prompt.hpp"
#include "rlad/hashing.hpp"
#include "rlad/parallel.hpp"

namespace rlad {
namespace {

template <class Enum, std::size_t N>
Enum parse_enum(std::string_view s, const std::pair<std::string_view, Enum> (&table)[N],
                const char* what) {
  for (const auto& [name, value] : table) {
    if (name == s) return value;
  }
  throw DataError(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

template <class Enum, std::size_t N>
std::string_view enum_name(Enum e, const std::pair<std::string_view, Enum> (&table)[N]) {
  for (const auto& [name, value] : table) {
    if (value == e) return name;
  }
  return "?";
}

constexpr std::pair<std::string_view, AdherenceCondition> kConditions[] = {
    {"abstraction", AdherenceCondition::abstraction},
    {"no_abstraction", AdherenceCondition::no_abstraction},
    {"retrieval", AdherenceCondition::retrieval},
    {"unrelated_abstraction", AdherenceCondition::unrelated_abstraction},
};

constexpr std::pair<std::string_view, PairingType> kPairings[] = {
    {"same_abstraction", PairingType::same_abstraction},
    {"different_abstractions", PairingType::different_abstractions},
    {"no_abstraction", PairingType::no_abstraction},
};

constexpr std::pair<std::string_view, AbstractionCategory> kCategories[] = {
    {"caution_alert", AbstractionCategory::caution_alert},
    {"productive_launchpoint", AbstractionCategory::productive_launchpoint},
    {"blind_follow", AbstractionCategory::blind_follow},
    {"structural_shortcut", AbstractionCategory::structural_shortcut},
    {"other", AbstractionCategory::other},
};

std::vector<std::string> texts_of(const std::vector<Completion>& cs) {
  std::vector<std::string> out;
  out.reserve(cs.size());
  for (const auto& c : cs) out.push_back(c.text);
  return out;
}

std::vector<std::string> sample_texts(const PolicyBackend& solver, const PromptParts& prompt,
                                      std::int64_t n, std::uint64_t seed) {
  SamplingParams params = SamplingParams::val();
  params.n_samples = n;
  params.seed = seed;
  return texts_of(solver.sample(prompt, params));
}

}  // namespace

std::vector<IsoComputePoint> iso_compute_grid(std::int64_t C, std::int64_t k0) {
  if (C < 1) throw std::invalid_argument("iso_compute_grid: C must be >= 1");
  if (k0 < 0) throw std::invalid_argument("iso_compute_grid: k0 must be >= 0");
  std::vector<IsoComputePoint> out;
  for (std::int64_t m = 1; m <= C; ++m) {
    if (C % m != 0) continue;
    const std::int64_t per = C / m;
    out.push_back({C, k0, m, k0 + per, static_cast<double>(m) / static_cast<double>(per)});
  }
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.ratio < b.ratio; });
  return out;
}

std::vector<FrontierRow> frontier_eval(std::span<const IsoComputePoint> points,
                                       std::span<const EvalCell> cells) {
  std::map<std::string, std::vector<EvalCell>> by_problem;
  for (const auto& cell : cells) {
    cell.validate();
    if (!cell.is_no_abs()) by_problem[cell.problem_id].push_back(cell);
  }
  if (by_problem.empty()) throw DataError("frontier_eval: no abstraction cells");
  for (auto& [pid, list] : by_problem) {
    std::sort(list.begin(), list.end(),
              [](const auto& a, const auto& b) { return a.condition < b.condition; });
  }
  std::vector<FrontierRow> out;
  for (const auto& pt : points) {
    if (pt.m < 1 || pt.k <= pt.k0 || pt.m * (pt.k - pt.k0) != pt.C) {
      throw std::invalid_argument("frontier_eval: point violates m * (k - k0) = C");
    }
    double sum = 0.0;
    for (const auto& [pid, list] : by_problem) {
      if (static_cast<std::int64_t>(list.size()) < pt.m) {
        throw DataError("frontier_eval: problem " + pid + " has " + std::to_string(list.size()) +
                        " abstraction cells, point (m=" + std::to_string(pt.m) +
                        ", k=" + std::to_string(pt.k) + ") needs " + std::to_string(pt.m));
      }
      sum += abstraction_any_correct(list, static_cast<std::size_t>(pt.m), pt.k);
    }
    out.push_back({pt, sum / static_cast<double>(by_problem.size())});
  }
  return out;
}

std::string frontier_csv(std::span<const FrontierRow> rows) {
  std::string out = "C,k0,m,k,ratio,pass_estimate\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{:.10g},{:.10g}\n", r.point.C, r.point.k0, r.point.m,
                       r.point.k, r.point.ratio, r.pass_estimate);
  }
  return out;
}

std::string frontier_svg(std::span<const FrontierRow> rows) {
  constexpr double W = 640, H = 420, L = 70, R = 170, T = 30, B = 60;
  constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                     "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};
  std::map<std::pair<std::int64_t, std::int64_t>, std::vector<const FrontierRow*>> series;
  double lo = 1.0, hi = 1.0;
  for (const auto& r : rows) {
    series[{r.point.C, r.point.k0}].push_back(&r);
    lo = std::min(lo, r.point.ratio);
    hi = std::max(hi, r.point.ratio);
  }
  const double llo = std::log2(lo), lhi = std::log2(hi) == llo ? llo + 1 : std::log2(hi);
  auto x = [&](double ratio) { return L + (std::log2(ratio) - llo) / (lhi - llo) * (W - L - R); };
  auto y = [&](double p) { return T + (1.0 - p) * (H - T - B); };

  std::string s = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" "
      "font-family=\"sans-serif\" font-size=\"12\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      W, H);
  s += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n", L, H - B,
                   W - R, H - B);
  s += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n", L, T, L,
                   H - B);
  for (int i = 0; i <= 4; ++i) {
    const double p = i / 4.0;
    s += fmt::format(
        "<line x1=\"{0}\" y1=\"{1:.2f}\" x2=\"{2}\" y2=\"{1:.2f}\" stroke=\"#ddd\"/>"
        "<text x=\"{3}\" y=\"{4:.2f}\" text-anchor=\"end\">{5:.2f}</text>\n",
        L, y(p), W - R, L - 6, y(p) + 4, p);
  }
  for (int e = static_cast<int>(std::floor(llo)); e <= static_cast<int>(std::ceil(lhi)); ++e) {
    const double ratio = std::ldexp(1.0, e);
    if (ratio < lo || ratio > hi) continue;
    s += fmt::format("<text x=\"{:.2f}\" y=\"{}\" text-anchor=\"middle\">{:g}</text>\n", x(ratio),
                     H - B + 18, ratio);
  }
  s += fmt::format(
      "<text x=\"{:.2f}\" y=\"{}\" text-anchor=\"middle\">abstractions / solutions per "
      "abstraction (m / (k - k0), log scale)</text>\n",
      L + (W - L - R) / 2, H - 15);
  s += fmt::format(
      "<text transform=\"translate(18,{:.2f}) rotate(-90)\" text-anchor=\"middle\">"
      "any-correct probability</text>\n",
      T + (H - T - B) / 2);
  std::size_t idx = 0;
  for (const auto& [key, pts] : series) {
    const char* color = kColors[idx % std::size(kColors)];
    std::string poly;
    for (const auto* r : pts) {
      poly += fmt::format("{:.2f},{:.2f} ", x(r->point.ratio), y(r->pass_estimate));
    }
    s += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>\n",
                     color, poly);
    for (const auto* r : pts) {
      s += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"3\" fill=\"{}\"/>\n",
                       x(r->point.ratio), y(r->pass_estimate), color);
    }
    const double ly = T + 18.0 * static_cast<double>(idx);
    s += fmt::format(
        "<line x1=\"{0}\" y1=\"{1:.2f}\" x2=\"{2}\" y2=\"{1:.2f}\" stroke=\"{3}\" "
        "stroke-width=\"2\"/><text x=\"{4}\" y=\"{5:.2f}\">C={6}, k0={7}</text>\n",
        W - R + 12, ly, W - R + 32, color, W - R + 38, ly + 4, key.first, key.second);
    ++idx;
  }
  s += "</svg>\n";
  return s;
}

std::string_view to_string(AdherenceCondition c) { return enum_name(c, kConditions); }
AdherenceCondition parse_adherence_condition(std::string_view s) {
  return parse_enum(s, kConditions, "adherence condition");
}
std::string_view to_string(PairingType t) { return enum_name(t, kPairings); }
PairingType parse_pairing_type(std::string_view s) { return parse_enum(s, kPairings, "pairing type"); }
std::string_view to_string(AbstractionCategory c) { return enum_name(c, kCategories); }

void to_json(nlohmann::json& j, const AdherencePair& p) {
  j = nlohmann::json{{"abstraction", p.abstraction},
                     {"solution", p.solution},
                     {"condition", to_string(p.condition)}};
}

void from_json(const nlohmann::json& j, AdherencePair& p) {
  try {
    p.abstraction = j.at("abstraction").get<std::string>();
    p.solution = j.at("solution").get<std::string>();
    p.condition = parse_adherence_condition(j.at("condition").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad adherence pair: ") + e.what());
  }
}

std::optional<bool> JudgmentCache::get(const std::string& key) const {
  std::lock_guard lock(mu_);
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void JudgmentCache::put(const std::string& key, bool verdict) {
  std::lock_guard lock(mu_);
  entries_[key] = verdict;
}

std::size_t JudgmentCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

std::string pair_key(std::string_view abstraction, std::string_view solution) {
  std::string buf(abstraction);
  buf.push_back('\0');
  buf += solution;
  return sha256_hex(buf);
}

nlohmann::json AdherenceReport::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [c, r] : rate) {
    j[std::string(to_string(c))] = {{"rate", r}, {"n_pairs", n_pairs.at(c)}};
  }
  return j;
}

AdherenceReport adherence_rates(std::span<const AdherencePair> pairs, const JudgeBackend& judge,
                                std::span<const AdherenceCondition> required, std::size_t jobs,
                                JudgmentCache* cache) {
  std::set<AdherenceCondition> present;
  for (const auto& p : pairs) present.insert(p.condition);
  for (const auto c : required) {
    if (!present.count(c)) {
      throw DataError("adherence: no pairs for condition " + std::string(to_string(c)));
    }
  }
  if (present.empty()) throw DataError("adherence: no pairs");

  JudgmentCache local;
  JudgmentCache& store = cache ? *cache : local;
  std::vector<std::string> keys;
  keys.reserve(pairs.size());
  std::map<std::string, std::size_t> pending;  // key -> first pair index
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    keys.push_back(pair_key(pairs[i].abstraction, pairs[i].solution));
    if (!store.get(keys.back())) pending.emplace(keys.back(), i);
  }
  std::vector<std::pair<std::string, std::size_t>> todo(pending.begin(), pending.end());
  const auto verdicts = parallel_map(todo.size(), jobs, [&](std::size_t t) {
    const auto& p = pairs[todo[t].second];
    return judge.judge(kAdherenceInstruction, p.abstraction, p.solution).verdict;
  });
  for (std::size_t t = 0; t < todo.size(); ++t) store.put(todo[t].first, verdicts[t]);

  AdherenceReport report;
  report.judge_calls = todo.size();
  std::map<AdherenceCondition, std::size_t> yes;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    ++report.n_pairs[pairs[i].condition];
    if (*store.get(keys[i])) ++yes[pairs[i].condition];
  }
  for (const auto& [c, n] : report.n_pairs) {
    report.rate[c] = static_cast<double>(yes[c]) / static_cast<double>(n);
  }
  return report;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw std::invalid_argument("cosine: zero vector");
  return dot / std::sqrt(na * nb);
}

std::vector<AdherencePair> build_adherence_pairs(const Problem& problem,
                                                 std::span<const Abstraction> abstractions,
                                                 const PolicyBackend& solver,
                                                 const EmbeddingBackend& embedder,
                                                 std::int64_t samples_per_condition,
                                                 std::uint64_t seed) {
  if (abstractions.size() < 2) {
    throw DataError("adherence pairs for " + problem.id + " need at least two abstractions");
  }
  const auto n = samples_per_condition;
  const auto none = sample_texts(solver, PromptParts::solve(problem), n,
                                 derive_seed(seed, "adherence-none:" + problem.id, 0));
  const auto prior = sample_texts(solver, PromptParts::solve(problem), n,
                                  derive_seed(seed, "adherence-prior:" + problem.id, 0));
  std::vector<std::vector<double>> prior_vecs;
  for (const auto& t : prior) prior_vecs.push_back(embedder.embed(t));

  std::vector<std::vector<std::string>> with;
  for (const auto& a : abstractions) {
    with.push_back(sample_texts(solver, PromptParts::solve_with(problem, a.text), n,
                                derive_seed(seed, "adherence-with:" + a.id, 0)));
  }
  std::vector<AdherencePair> out;
  for (std::size_t i = 0; i < abstractions.size(); ++i) {
    const auto& a = abstractions[i].text;
    for (const auto& s : with[i]) out.push_back({a, s, AdherenceCondition::abstraction});
    for (const auto& s : none) out.push_back({a, s, AdherenceCondition::no_abstraction});
    const auto av = embedder.embed(a);
    std::size_t best = 0;
    for (std::size_t j = 1; j < prior_vecs.size(); ++j) {
      if (cosine(av, prior_vecs[j]) > cosine(av, prior_vecs[best])) best = j;
    }
    out.push_back({a, prior[best], AdherenceCondition::retrieval});
    for (const auto& s : with[(i + 1) % abstractions.size()]) {
      out.push_back({a, s, AdherenceCondition::unrelated_abstraction});
    }
  }
  return out;
}

nlohmann::json DiversityReport::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [t, v] : mean_similarity) {
    j[std::string(to_string(t))] = {{"mean_cosine", v}, {"n_pairs", n_pairs.at(t)}};
  }
  return j;
}

DiversityReport semantic_diversity(std::span<const SolutionPair> pairs,
                                   const EmbeddingBackend& embedder, std::size_t jobs) {
  if (pairs.empty()) throw DataError("semantic_diversity: no pairs");
  std::map<std::string, std::size_t> index;
  std::vector<std::string> texts;
  for (const auto& p : pairs) {
    for (const auto* t : {&p.first, &p.second}) {
      if (index.emplace(*t, texts.size()).second) texts.push_back(*t);
    }
  }
  const auto vecs =
      parallel_map(texts.size(), jobs, [&](std::size_t i) { return embedder.embed(texts[i]); });
  DiversityReport report;
  std::map<PairingType, double> sums;
  for (const auto& p : pairs) {
    sums[p.type] += cosine(vecs[index.at(p.first)], vecs[index.at(p.second)]);
    ++report.n_pairs[p.type];
  }
  for (const auto& [t, s] : sums) {
    report.mean_similarity[t] = s / static_cast<double>(report.n_pairs[t]);
  }
  return report;
}

std::vector<SolutionPair> build_diversity_pairs(const Problem& problem,
                                                std::span<const Abstraction> abstractions,
                                                const PolicyBackend& solver, std::int64_t n,
                                                std::uint64_t seed) {
  std::vector<std::vector<std::string>> with;
  for (const auto& a : abstractions) {
    with.push_back(sample_texts(solver, PromptParts::solve_with(problem, a.text), n,
                                derive_seed(seed, "diversity-with:" + a.id, 0)));
  }
  const auto none = sample_texts(solver, PromptParts::solve(problem), n,
                                 derive_seed(seed, "diversity-none:" + problem.id, 0));
  std::vector<SolutionPair> out;
  auto all_pairs = [&](const std::vector<std::string>& xs, PairingType t) {
    for (std::size_t i = 0; i < xs.size(); ++i) {
      for (std::size_t j = i + 1; j < xs.size(); ++j) out.push_back({xs[i], xs[j], t});
    }
  };
  for (const auto& w : with) all_pairs(w, PairingType::same_abstraction);
  for (std::size_t a = 0; a < with.size(); ++a) {
    for (std::size_t b = a + 1; b < with.size(); ++b) {
      for (const auto& x : with[a]) {
        for (const auto& y : with[b]) out.push_back({x, y, PairingType::different_abstractions});
      }
    }
  }
  all_pairs(none, PairingType::no_abstraction);
  return out;
}

std::string_view classifier_prompt() { return detail::kClassifierPrompt; }

std::optional<AbstractionCategory> parse_category(std::string_view reply) {
  static const std::regex kLetter(R"(\(([A-E])\))");
  std::optional<AbstractionCategory> found;
  const std::string text(reply);
  for (std::sregex_iterator it(text.begin(), text.end(), kLetter), end; it != end; ++it) {
    found = kCategories[(*it)[1].str()[0] - 'A'].second;
  }
  return found;
}

AbstractionCategory classify_abstraction(std::string_view abstraction_text,
                                         const JudgeBackend& judge,
                                         std::string_view prompt_template) {
  std::string prompt(prompt_template);
  static constexpr std::string_view kSlot = "{abstraction}";
  if (const auto pos = prompt.find(kSlot); pos != std::string::npos) {
    prompt.replace(pos, kSlot.size(), abstraction_text);
  } else {
    prompt += "\n\n" + std::string(abstraction_text);
  }
  for (int attempt = 1; attempt <= 2; ++attempt) {
    const auto j = judge.judge(prompt, abstraction_text, "");
    if (const auto c = parse_category(j.rationale)) return *c;
    spdlog::warn("classifier reply has no category letter (attempt {})", attempt);
  }
  throw ClassificationError("classifier reply has no (A)-(E) category after a retry");
}

}  // namespace rlad
