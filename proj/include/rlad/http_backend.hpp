#pragma once

// Client for OpenAI-compatible inference servers (chat completions and
// embeddings). Every backend role is a thin prompt template over one shared
// request path with retries and a process-wide in-flight cap.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "json.hpp"
#include "rlad/backends.hpp"

namespace rlad {

struct RetryPolicy {
  int max_attempts = 5;
  std::int64_t initial_backoff_ms = 500;
  double multiplier = 2.0;
  std::int64_t max_backoff_ms = 30000;

  std::chrono::milliseconds backoff(int attempt) const;
};

/// Prompt texts. Placeholders: {problem}, {abstraction}, {traces}, {n},
/// {instruction}, {first}, {second}.
struct PromptTemplates {
  std::string solve =
      "Solve the following problem. Put the final answer in \\boxed{{}}.\n\n{problem}";
  std::string solve_with =
      "Solve the following problem. Put the final answer in \\boxed{{}}.\n\n{problem}\n\n"
      "Here is some guidance that may help:\n{abstraction}";
  std::string abstraction_only =
      "{abstraction}\n\nPut the final answer in \\boxed{{}}.";
  std::string propose =
      "Write a short piece of guidance (a useful technique, a caution, or a key insight) "
      "that would help someone solve the problem below. Do not solve it and do not state "
      "the answer. Wrap the guidance in <abstraction></abstraction> tags.\n\n{problem}";
  std::string summarize =
      "Below are several attempts at a problem. Write {n} distinct pieces of reusable "
      "guidance capturing what worked and what went wrong. Do not state the final answer. "
      "Wrap each one in <abstraction></abstraction> tags.\n\nProblem:\n{problem}\n\n"
      "Attempts:\n{traces}";
  std::string judge =
      "{instruction}\n\nFirst:\n{first}\n\nSecond:\n{second}\n\n"
      "Reply with your reasoning, then a final line that is exactly YES or NO.";

  static PromptTemplates from_json(const nlohmann::json& j);
};

/// Replaces {name} placeholders; "{{" and "}}" are literal braces.
std::string render_template(std::string_view tmpl,
                            const std::vector<std::pair<std::string, std::string>>& values);

struct HttpConfig {
  /// e.g. "http://127.0.0.1:8000/v1"; endpoint paths are appended to it.
  std::string base_url;
  std::string model;
  std::string embedding_model;
  /// Name of the environment variable holding the bearer token. An unset
  /// variable sends no Authorization header.
  std::string api_key_env = "OPENAI_API_KEY";
  int request_cap = 32;
  std::int64_t timeout_s = 600;
  RetryPolicy retry;
  PromptTemplates templates;

  static HttpConfig from_json(const nlohmann::json& j);
  void validate() const;
};

/// Counting semaphore shared by every client of a process.
class RequestLimiter {
 public:
  explicit RequestLimiter(int cap) : cap_(cap) {}
  void acquire();
  void release();
  int in_flight() const;
  int peak() const;

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  int cap_;
  int in_flight_ = 0;
  int peak_ = 0;
};

struct HttpResponse {
  nlohmann::json body;
  int attempts = 1;
};

/// POSTs JSON with retries: network errors, 429 and 5xx are retried with
/// exponential backoff; other 4xx are permanent.
class HttpClient {
 public:
  HttpClient(HttpConfig config, std::shared_ptr<RequestLimiter> limiter);
  const HttpConfig& config() const { return config_; }
  HttpResponse post(std::string_view endpoint, const nlohmann::json& body) const;

  /// One chat completion; returns the message text and fills the rest.
  Completion chat(const std::string& user_message, double temperature, std::int64_t max_tokens,
                  std::uint64_t seed) const;

 private:
  HttpConfig config_;
  std::string scheme_host_port_;
  std::string path_prefix_;
  std::shared_ptr<RequestLimiter> limiter_;
};

/// Splits "scheme://host[:port][/prefix]" into the origin and path prefix.
std::pair<std::string, std::string> split_base_url(std::string_view url);

/// Text between every <abstraction>...</abstraction> pair, trimmed.
std::vector<std::string> extract_tagged_abstractions(std::string_view text);

class HttpPolicy final : public PolicyBackend {
 public:
  explicit HttpPolicy(std::shared_ptr<const HttpClient> client) : client_(std::move(client)) {}
  BackendCapabilities capabilities() const override { return {true, false}; }
  /// One request per sample with seed derived from (params.seed, index), so
  /// completion i does not depend on n_samples when the server honors seeds.
  std::vector<Completion> sample(const PromptParts& prompt,
                                 const SamplingParams& params) const override;

 private:
  std::shared_ptr<const HttpClient> client_;
};

class HttpAbstractionGenerator final : public AbstractionGenerator {
 public:
  explicit HttpAbstractionGenerator(std::shared_ptr<const HttpClient> client)
      : client_(std::move(client)) {}
  std::vector<std::string> propose(const Problem& problem, int n,
                                   std::uint64_t seed) const override;

 private:
  std::shared_ptr<const HttpClient> client_;
};

class HttpSummarizer final : public SummarizerBackend {
 public:
  explicit HttpSummarizer(std::shared_ptr<const HttpClient> client) : client_(std::move(client)) {}
  std::vector<std::string> summarize(const Problem& problem, std::span<const std::string> traces,
                                     int n_candidates, std::uint64_t seed) const override;

 private:
  std::shared_ptr<const HttpClient> client_;
};

/// Binary judge. The verdict is read from the last YES/NO line of the reply.
/// With `raw_instruction` the instruction is sent as-is (classifier prompts
/// that define their own output format).
class HttpJudge final : public JudgeBackend {
 public:
  explicit HttpJudge(std::shared_ptr<const HttpClient> client, bool raw_instruction = false)
      : client_(std::move(client)), raw_(raw_instruction) {}
  Judgment judge(std::string_view instruction, std::string_view first,
                 std::string_view second) const override;

 private:
  std::shared_ptr<const HttpClient> client_;
  bool raw_;
};

class HttpEmbedder final : public EmbeddingBackend {
 public:
  explicit HttpEmbedder(std::shared_ptr<const HttpClient> client) : client_(std::move(client)) {}
  std::vector<double> embed(std::string_view text) const override;

 private:
  std::shared_ptr<const HttpClient> client_;
};

}  // namespace rlad
