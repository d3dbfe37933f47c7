#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "rlad/http_backend.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <thread>

#include <spdlog/spdlog.h>

#include "httplib.h"
#include "rlad/hashing.hpp"
#include "rlad/parallel.hpp"

namespace rlad {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string upper(std::string s) {
  for (auto& ch : s) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return s;
}

// Servers commonly store the seed in a signed 32-bit field.
std::int64_t wire_seed(std::uint64_t seed) { return static_cast<std::int64_t>(seed & 0x7fffffffULL); }

}  // namespace

std::chrono::milliseconds RetryPolicy::backoff(int attempt) const {
  double ms = static_cast<double>(initial_backoff_ms);
  for (int i = 1; i < attempt; ++i) ms *= multiplier;
  ms = std::min(ms, static_cast<double>(max_backoff_ms));
  return std::chrono::milliseconds(static_cast<std::int64_t>(ms));
}

PromptTemplates PromptTemplates::from_json(const nlohmann::json& j) {
  PromptTemplates t;
  t.solve = j.value("solve", t.solve);
  t.solve_with = j.value("solve_with", t.solve_with);
  t.abstraction_only = j.value("abstraction_only", t.abstraction_only);
  t.propose = j.value("propose", t.propose);
  t.summarize = j.value("summarize", t.summarize);
  t.judge = j.value("judge", t.judge);
  return t;
}

std::string render_template(std::string_view tmpl,
                            const std::vector<std::pair<std::string, std::string>>& values) {
  std::string out;
  out.reserve(tmpl.size());
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    const char ch = tmpl[i];
    if ((ch == '{' || ch == '}') && i + 1 < tmpl.size() && tmpl[i + 1] == ch) {
      out.push_back(ch);
      ++i;
      continue;
    }
    if (ch == '{') {
      const auto close = tmpl.find('}', i);
      if (close != std::string_view::npos) {
        const auto name = tmpl.substr(i + 1, close - i - 1);
        const auto it = std::find_if(values.begin(), values.end(),
                                     [&](const auto& kv) { return kv.first == name; });
        if (it != values.end()) {
          out += it->second;
          i = close;
          continue;
        }
      }
    }
    out.push_back(ch);
  }
  return out;
}

HttpConfig HttpConfig::from_json(const nlohmann::json& j) {
  HttpConfig c;
  try {
    c.base_url = j.value("base_url", c.base_url);
    c.model = j.value("model", c.model);
    c.embedding_model = j.value("embedding_model", c.embedding_model);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    c.request_cap = j.value("request_cap", c.request_cap);
    c.timeout_s = j.value("timeout_s", c.timeout_s);
    if (j.contains("retry")) {
      const auto& r = j["retry"];
      c.retry.max_attempts = r.value("max_attempts", c.retry.max_attempts);
      c.retry.initial_backoff_ms = r.value("initial_backoff_ms", c.retry.initial_backoff_ms);
      c.retry.multiplier = r.value("multiplier", c.retry.multiplier);
      c.retry.max_backoff_ms = r.value("max_backoff_ms", c.retry.max_backoff_ms);
    }
    if (j.contains("templates")) c.templates = PromptTemplates::from_json(j["templates"]);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad http config: ") + e.what());
  }
  c.validate();
  return c;
}

void HttpConfig::validate() const {
  if (base_url.empty()) throw DataError("http config: base_url is required");
  if (request_cap < 1) throw DataError("http config: request_cap must be >= 1");
  if (retry.max_attempts < 1) throw DataError("http config: retry.max_attempts must be >= 1");
  if (retry.multiplier < 1.0) throw DataError("http config: retry.multiplier must be >= 1");
  if (timeout_s < 1) throw DataError("http config: timeout_s must be >= 1");
}

void RequestLimiter::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return in_flight_ < cap_; });
  ++in_flight_;
  peak_ = std::max(peak_, in_flight_);
}

void RequestLimiter::release() {
  {
    std::lock_guard lock(mu_);
    --in_flight_;
  }
  cv_.notify_one();
}

int RequestLimiter::in_flight() const {
  std::lock_guard lock(mu_);
  return in_flight_;
}

int RequestLimiter::peak() const {
  std::lock_guard lock(mu_);
  return peak_;
}

std::pair<std::string, std::string> split_base_url(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) {
    throw DataError("base_url needs a scheme: " + std::string(url));
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string_view::npos) return {std::string(url), ""};
  std::string prefix(url.substr(path_start));
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {std::string(url.substr(0, path_start)), prefix};
}

HttpClient::HttpClient(HttpConfig config, std::shared_ptr<RequestLimiter> limiter)
    : config_(std::move(config)), limiter_(std::move(limiter)) {
  config_.validate();
  std::tie(scheme_host_port_, path_prefix_) = split_base_url(config_.base_url);
  if (!limiter_) limiter_ = std::make_shared<RequestLimiter>(config_.request_cap);
}

HttpResponse HttpClient::post(std::string_view endpoint, const nlohmann::json& body) const {
  const std::string path = path_prefix_ + std::string(endpoint);
  const std::string payload = body.dump();
  httplib::Headers headers;
  if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  std::vector<std::string> log;
  for (int attempt = 1; attempt <= config_.retry.max_attempts; ++attempt) {
    throw_if_cancelled();
    httplib::Result res{nullptr, httplib::Error::Unknown};
    {
      limiter_->acquire();
      httplib::Client cli(scheme_host_port_);
      cli.set_connection_timeout(std::chrono::seconds(std::min<std::int64_t>(config_.timeout_s, 30)));
      cli.set_read_timeout(std::chrono::seconds(config_.timeout_s));
      cli.set_write_timeout(std::chrono::seconds(config_.timeout_s));
      res = cli.Post(path, headers, payload, "application/json");
      limiter_->release();
    }
    std::string outcome;
    if (!res) {
      outcome = "attempt " + std::to_string(attempt) + ": " + httplib::to_string(res.error());
    } else if (res->status >= 200 && res->status < 300) {
      try {
        return {nlohmann::json::parse(res->body), attempt};
      } catch (const nlohmann::json::exception& e) {
        log.push_back("attempt " + std::to_string(attempt) + ": unparseable body");
        throw BackendError(BackendError::Kind::permanent,
                           std::string("unparseable response from ") + path + ": " + e.what(),
                           log);
      }
    } else {
      outcome = "attempt " + std::to_string(attempt) + ": HTTP " + std::to_string(res->status);
      if (res->status != 429 && res->status < 500) {
        log.push_back(outcome);
        throw BackendError(BackendError::Kind::permanent,
                           "request to " + path + " rejected with HTTP " +
                               std::to_string(res->status) + ": " + res->body.substr(0, 200),
                           log);
      }
    }
    log.push_back(outcome);
    spdlog::debug("{} {}", path, outcome);
    if (attempt < config_.retry.max_attempts) std::this_thread::sleep_for(config_.retry.backoff(attempt));
  }
  throw BackendError(BackendError::Kind::transient,
                     "request to " + path + " failed after " +
                         std::to_string(config_.retry.max_attempts) + " attempts",
                     log);
}

Completion HttpClient::chat(const std::string& user_message, double temperature,
                            std::int64_t max_tokens, std::uint64_t seed) const {
  const nlohmann::json body = {
      {"model", config_.model},
      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", user_message}}})},
      {"temperature", temperature},
      {"max_tokens", max_tokens},
      {"seed", wire_seed(seed)},
      {"n", 1}};
  const auto res = post("/chat/completions", body);
  Completion c;
  c.attempts = res.attempts;
  try {
    const auto& choice = res.body.at("choices").at(0);
    const auto& content = choice.at("message").at("content");
    c.text = content.is_null() ? std::string() : content.get<std::string>();
    c.truncated = choice.value("finish_reason", std::string()) == "length";
    if (res.body.contains("usage") && res.body["usage"].contains("completion_tokens")) {
      c.token_count = res.body["usage"]["completion_tokens"].get<std::int64_t>();
    } else {
      c.token_count = static_cast<std::int64_t>(word_count(c.text));
    }
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(BackendError::Kind::permanent,
                       std::string("malformed chat completion: ") + e.what());
  }
  return c;
}

std::vector<std::string> extract_tagged_abstractions(std::string_view text) {
  static constexpr std::string_view open = "<abstraction>";
  static constexpr std::string_view close = "</abstraction>";
  std::vector<std::string> out;
  std::size_t pos = 0;
  while ((pos = text.find(open, pos)) != std::string_view::npos) {
    const auto start = pos + open.size();
    const auto end = text.find(close, start);
    if (end == std::string_view::npos) break;
    auto t = trim(text.substr(start, end - start));
    if (!t.empty()) out.push_back(std::move(t));
    pos = end + close.size();
  }
  return out;
}

std::vector<Completion> HttpPolicy::sample(const PromptParts& prompt,
                                           const SamplingParams& params) const {
  params.validate();
  const auto& t = client_->config().templates;
  const std::string problem = prompt.problem.value_or("");
  const std::string abstraction = prompt.abstraction.value_or("");
  std::string message;
  if (!prompt.problem) {
    message = render_template(t.abstraction_only, {{"abstraction", abstraction}});
  } else if (prompt.abstraction) {
    message = render_template(t.solve_with, {{"problem", problem}, {"abstraction", abstraction}});
  } else {
    message = render_template(t.solve, {{"problem", problem}});
  }

  struct Slot {
    std::optional<Completion> completion;
    std::exception_ptr error;
  };
  const auto n = static_cast<std::size_t>(params.n_samples);
  auto slots = parallel_map(n, static_cast<std::size_t>(client_->config().request_cap),
                            [&](std::size_t i) {
                              Slot s;
                              try {
                                s.completion = client_->chat(
                                    message, params.temperature, params.max_tokens,
                                    derive_seed(params.seed, "http-sample", i));
                              } catch (const BackendError&) {
                                s.error = std::current_exception();
                              }
                              return s;
                            });
  std::vector<Completion> out;
  std::vector<std::optional<Completion>> partial;
  std::exception_ptr first_error;
  for (auto& s : slots) {
    if (s.error && !first_error) first_error = s.error;
    partial.push_back(s.completion);
    if (s.completion) out.push_back(std::move(*s.completion));
  }
  if (first_error) {
    try {
      std::rethrow_exception(first_error);
    } catch (const BackendError& e) {
      throw BackendError(e.kind(), e.what(), e.attempt_log(), std::move(partial));
    }
  }
  return out;
}

std::vector<std::string> HttpAbstractionGenerator::propose(const Problem& problem, int n,
                                                           std::uint64_t seed) const {
  const auto& cfg = client_->config();
  const auto message = render_template(cfg.templates.propose, {{"problem", problem.prompt}});
  const SamplingParams params = SamplingParams::train();
  return parallel_map(static_cast<std::size_t>(std::max(n, 0)),
                      static_cast<std::size_t>(cfg.request_cap), [&](std::size_t i) {
                        const auto c = client_->chat(message, params.temperature,
                                                     params.max_tokens,
                                                     derive_seed(seed, "http-propose", i));
                        auto tagged = extract_tagged_abstractions(c.text);
                        return tagged.empty() ? trim(c.text) : tagged.front();
                      });
}

std::vector<std::string> HttpSummarizer::summarize(const Problem& problem,
                                                   std::span<const std::string> traces,
                                                   int n_candidates, std::uint64_t seed) const {
  std::string joined;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    joined += "--- attempt " + std::to_string(i + 1) + " ---\n" + traces[i] + "\n";
  }
  const auto message = render_template(client_->config().templates.summarize,
                                       {{"problem", problem.prompt},
                                        {"traces", joined},
                                        {"n", std::to_string(n_candidates)}});
  const SamplingParams params = SamplingParams::train();
  const auto c = client_->chat(message, params.temperature, params.max_tokens,
                               derive_seed(seed, "http-summarize", 0));
  auto out = extract_tagged_abstractions(c.text);
  if (out.size() > static_cast<std::size_t>(n_candidates)) out.resize(n_candidates);
  return out;
}

Judgment HttpJudge::judge(std::string_view instruction, std::string_view first,
                          std::string_view second) const {
  const auto& cfg = client_->config();
  const std::string message =
      raw_ ? std::string(instruction)
           : render_template(cfg.templates.judge, {{"instruction", std::string(instruction)},
                                                   {"first", std::string(first)},
                                                   {"second", std::string(second)}});
  const auto c = client_->chat(message, 0.0, 4096, derive_seed(0, "http-judge", 0));
  Judgment j;
  j.rationale = c.text;
  if (raw_) return j;
  std::size_t end = c.text.size();
  while (end > 0) {
    const auto start = c.text.rfind('\n', end - 1);
    const auto b = start == std::string::npos ? 0 : start + 1;
    std::string word;
    for (char ch : std::string_view(c.text).substr(b, end - b)) {
      if (std::isalpha(static_cast<unsigned char>(ch))) word.push_back(ch);
    }
    word = upper(std::move(word));
    if (word == "YES") {
      j.verdict = true;
      return j;
    }
    if (word == "NO") return j;
    if (start == std::string::npos) break;
    end = start;
  }
  throw BackendError(BackendError::Kind::permanent, "judge reply has no YES/NO verdict");
}

std::vector<double> HttpEmbedder::embed(std::string_view text) const {
  if (trim(text).empty()) throw std::invalid_argument("cannot embed empty text");
  const auto& cfg = client_->config();
  const auto res = client_->post(
      "/embeddings",
      {{"model", cfg.embedding_model.empty() ? cfg.model : cfg.embedding_model},
       {"input", std::string(text)}});
  try {
    return normalized(res.body.at("data").at(0).at("embedding").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(BackendError::Kind::permanent,
                       std::string("malformed embedding response: ") + e.what());
  }
}

}  // namespace rlad
