#include "rlad/verifier.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <vector>

#include "rlad/hashing.hpp"

namespace rlad {
namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos)) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

/// Index of the brace closing the one at `open`, or npos.
std::size_t matching_brace(std::string_view s, std::size_t open) {
  int depth = 0;
  for (std::size_t i = open; i < s.size(); ++i) {
    if (s[i] == '{') {
      ++depth;
    } else if (s[i] == '}') {
      if (--depth == 0) return i;
    }
  }
  return std::string_view::npos;
}

/// Strips one outer wrapper if it spans the whole string.
bool strip_wrapper(std::string& s) {
  static constexpr std::string_view kCommands[] = {"\\boxed{", "\\fbox{", "\\text{",
                                                   "\\textbf{", "\\mathrm{", "\\mathbf{"};
  for (auto cmd : kCommands) {
    if (s.starts_with(cmd)) {
      const std::size_t open = cmd.size() - 1;
      if (matching_brace(s, open) == s.size() - 1) {
        s = s.substr(cmd.size(), s.size() - cmd.size() - 1);
        return true;
      }
    }
  }
  if (s.size() >= 2 && s.front() == '{' && matching_brace(s, 0) == s.size() - 1) {
    s = s.substr(1, s.size() - 2);
    return true;
  }
  static constexpr std::pair<std::string_view, std::string_view> kDelims[] = {
      {"$$", "$$"}, {"$", "$"}, {"\\(", "\\)"}, {"\\[", "\\]"}};
  for (const auto& [l, r] : kDelims) {
    if (s.size() >= l.size() + r.size() && s.starts_with(l) && s.ends_with(r)) {
      s = s.substr(l.size(), s.size() - l.size() - r.size());
      return true;
    }
  }
  return false;
}

std::optional<boost::multiprecision::cpp_int> parse_integer(std::string_view s) {
  bool negative = false;
  if (!s.empty() && (s.front() == '-' || s.front() == '+')) {
    negative = s.front() == '-';
    s.remove_prefix(1);
  }
  if (s.empty() || !std::all_of(s.begin(), s.end(), is_digit)) return std::nullopt;
  boost::multiprecision::cpp_int v{std::string(s)};
  return negative ? -v : v;
}

std::optional<Rational> parse_unsigned_decimal(std::string_view s) {
  const auto dot = s.find('.');
  if (dot == std::string_view::npos) {
    if (auto v = parse_integer(s); v && s.front() != '-' && s.front() != '+') return Rational(*v);
    return std::nullopt;
  }
  const auto int_part = s.substr(0, dot);
  const auto frac_part = s.substr(dot + 1);
  if (int_part.empty() && frac_part.empty()) return std::nullopt;
  if (!std::all_of(int_part.begin(), int_part.end(), is_digit) ||
      !std::all_of(frac_part.begin(), frac_part.end(), is_digit)) {
    return std::nullopt;
  }
  boost::multiprecision::cpp_int num(int_part.empty() ? std::string("0") : std::string(int_part));
  boost::multiprecision::cpp_int den = 1;
  for (char c : frac_part) {
    num = num * 10 + (c - '0');
    den *= 10;
  }
  return Rational(num, den);
}

std::optional<Rational> make_fraction(std::string_view a, std::string_view b) {
  const auto num = parse_integer(a);
  const auto den = parse_integer(b);
  if (!num || !den || *den == 0) return std::nullopt;
  return Rational(*num, *den);
}

}  // namespace

std::string normalize_answer(std::string_view raw) {
  std::string s(trim(raw));
  replace_all(s, "\xE2\x88\x92", "-");  // U+2212 minus sign
  replace_all(s, "\\dfrac", "\\frac");
  replace_all(s, "\\tfrac", "\\frac");
  replace_all(s, "\\,", "");
  replace_all(s, "\\!", "");
  replace_all(s, "\\left", "");
  replace_all(s, "\\right", "");
  std::erase_if(s, is_space);
  for (bool changed = true; changed;) {
    changed = false;
    while (!s.empty() && s.back() == '.') {
      s.pop_back();
      changed = true;
    }
    if (strip_wrapper(s)) changed = true;
    if (s.size() > 1 && s.front() == '+' && is_digit(s[1])) {
      s.erase(0, 1);
      changed = true;
    }
  }
  return s;
}

std::optional<Rational> parse_rational(std::string_view s) {
  bool negative = false;
  if (!s.empty() && s.front() == '-') {
    negative = true;
    s.remove_prefix(1);
  }
  if (s.empty() || s.front() == '-' || s.front() == '+') return std::nullopt;

  std::optional<Rational> value;
  if (s.starts_with("\\frac{")) {
    const std::size_t close1 = matching_brace(s, 5);
    if (close1 != std::string_view::npos && close1 + 1 < s.size() && s[close1 + 1] == '{' &&
        matching_brace(s, close1 + 1) == s.size() - 1) {
      value = make_fraction(s.substr(6, close1 - 6), s.substr(close1 + 2, s.size() - close1 - 3));
    }
  } else if (const auto slash = s.find('/'); slash != std::string_view::npos) {
    value = make_fraction(s.substr(0, slash), s.substr(slash + 1));
  } else {
    value = parse_unsigned_decimal(s);
  }
  if (value && negative) *value = -*value;
  return value;
}

AnswerForm AnswerForm::parse(std::string_view raw) {
  AnswerForm f;
  f.raw = std::string(raw);
  f.normalized = normalize_answer(raw);
  f.numeric_value = parse_rational(f.normalized);
  return f;
}

std::optional<std::string> extract_answer(std::string_view text) {
  static constexpr std::string_view kMarkers[] = {"\\boxed", "\\fbox"};
  std::size_t best_pos = std::string_view::npos;
  std::optional<std::string> best;
  for (auto marker : kMarkers) {
    for (std::size_t pos = text.rfind(marker); pos != std::string_view::npos;
         pos = pos == 0 ? std::string_view::npos : text.rfind(marker, pos - 1)) {
      std::size_t open = pos + marker.size();
      while (open < text.size() && is_space(text[open])) ++open;
      if (open >= text.size() || text[open] != '{') continue;
      const std::size_t close = matching_brace(text, open);
      if (close == std::string_view::npos) continue;
      if (best_pos == std::string_view::npos || pos > best_pos) {
        best_pos = pos;
        best = std::string(trim(text.substr(open + 1, close - open - 1)));
      }
      break;
    }
  }
  if (best) return best;

  static const std::regex kAnswerLine(R"((?:final\s+answer|answer)\s*(?:is\s*:?|:|=)\s*(.+))",
                                      std::regex::icase);
  std::size_t end = text.size();
  while (end > 0) {
    std::size_t start = text.rfind('\n', end - 1);
    start = start == std::string_view::npos ? 0 : start + 1;
    const std::string line(text.substr(start, end - start));
    std::smatch m;
    if (std::regex_search(line, m, kAnswerLine)) {
      std::string ans(trim(m[1].str()));
      while (!ans.empty() && ans.back() == '.') ans.pop_back();
      if (!trim(ans).empty()) return std::string(trim(ans));
    }
    if (start == 0) break;
    end = start - 1;
  }
  return std::nullopt;
}

bool check_answer(std::string_view candidate, std::string_view gold) {
  const AnswerForm c = AnswerForm::parse(candidate);
  const AnswerForm g = AnswerForm::parse(gold);
  if (c.normalized.empty() || g.normalized.empty()) return false;
  if (c.normalized == g.normalized) return true;
  return c.numeric_value && g.numeric_value && *c.numeric_value == *g.numeric_value;
}

bool is_correct_solution(std::string_view solution_text, std::string_view gold) {
  const auto ans = extract_answer(solution_text);
  return ans && check_answer(*ans, gold);
}

void SamplingParams::validate() const {
  if (!(temperature >= 0.0)) throw std::invalid_argument("temperature must be >= 0");
  if (max_tokens <= 0) throw std::invalid_argument("max_tokens must be > 0");
  if (n_samples < 1) throw std::invalid_argument("n_samples must be >= 1");
}

LeakCheckResult leak_check(const Abstraction& abstraction, const Problem& problem,
                           const PolicyBackend& sampler, std::int64_t n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("leak_check: n must be >= 1");
  SamplingParams params = SamplingParams::train();
  params.n_samples = n;
  params.seed = derive_seed(seed, "leak-check:" + abstraction.id, 0);
  const auto prompt = PromptParts::abstraction_only(abstraction.text);

  LeakCheckResult result;
  result.n = n;
  try {
    for (const auto& c : sampler.sample(prompt, params)) {
      if (is_correct_solution(c.text, problem.gold_answer)) ++result.n_correct;
    }
  } catch (const BackendError& e) {
    std::int64_t completed = 0;
    std::int64_t correct = 0;
    for (const auto& c : e.partial()) {
      if (!c) continue;
      ++completed;
      if (is_correct_solution(c->text, problem.gold_answer)) ++correct;
    }
    throw LeakCheckError(std::string("leak check backend failure: ") + e.what(), completed,
                         correct);
  }
  result.status = result.n_correct == 0 ? LeakStatus::passed : LeakStatus::failed;
  return result;
}

}  // namespace rlad
