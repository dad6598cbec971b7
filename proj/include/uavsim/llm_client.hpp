#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace uavsim {

struct EndpointConfig {
  std::string base_url = "http://127.0.0.1:8000/v1";
  std::string model_name = "gpt-4o-mini";
  double timeout_s = 30.0;
  int max_retries = 2;
  double temperature = 0.0;
  double backoff_initial_s = 0.5;
  double backoff_factor = 2.0;
  std::size_t max_response_chars = 64 * 1024;
  std::string token_env = "UAVSIM_LLM_TOKEN";
};

/// Throws std::invalid_argument on a non-positive timeout or negative retry count.
void validate(const EndpointConfig& cfg);

enum class BackendKind { Live, Mock };

std::string_view to_string(BackendKind kind);

struct CompletionRecord {
  std::size_t prompt_chars = 0;
  std::size_t response_chars = 0;
  double latency_s = 0.0;
  int attempt = 0;  // 1-based
  BackendKind backend = BackendKind::Mock;
};

enum class LlmErrorKind { TimeoutExhausted, Transport, HttpStatus, Malformed };

class LlmError : public std::runtime_error {
 public:
  LlmError(LlmErrorKind kind, const std::string& what, int http_status = 0)
      : std::runtime_error(what), kind_(kind), http_status_(http_status) {}
  LlmErrorKind kind() const { return kind_; }
  int http_status() const { return http_status_; }

  /// Attempts made before giving up.
  std::vector<CompletionRecord> attempts;

 private:
  LlmErrorKind kind_;
  int http_status_;
};

enum class AttemptStatus { Ok, Timeout, Transport, HttpStatus };

struct AttemptResult {
  AttemptStatus status = AttemptStatus::Ok;
  int http_status = 200;
  std::string body;  // completion text on success, diagnostic otherwise
  double latency_s = 0.0;
};

/// One transport attempt. Implementations hold no per-request state, so one
/// backend may serve concurrent episodes.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual AttemptResult send(std::string_view prompt, const EndpointConfig& cfg) const = 0;
  virtual BackendKind kind() const = 0;
};

/// Provider-style chat-completion endpoint: POST {base_url}/chat/completions with
/// a single user message; bearer token from the environment variable named in
/// the config (omitted when unset).
class HttpChatBackend final : public ChatBackend {
 public:
  AttemptResult send(std::string_view prompt, const EndpointConfig& cfg) const override;
  BackendKind kind() const override { return BackendKind::Live; }
};

/// Offline stand-in: answers with the greedy queue-aware decision for the
/// observation embedded in the prompt. Latency is a fixed synthetic value.
class MockChatBackend final : public ChatBackend {
 public:
  explicit MockChatBackend(double synthetic_latency_s = 0.25) : latency_s_(synthetic_latency_s) {}
  AttemptResult send(std::string_view prompt, const EndpointConfig& cfg) const override;
  BackendKind kind() const override { return BackendKind::Mock; }

 private:
  double latency_s_;
};

class MalformedPrompt : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Greedy queue-aware DECISIONS block for the prompt's observation.
/// Throws MalformedPrompt when the rules or observation cannot be recovered.
std::string mock_complete(std::string_view prompt);

struct Completion {
  std::string text;
  std::vector<CompletionRecord> records;  // one per attempt, including failed ones
};

/// Request body sent to the chat endpoint.
std::string make_chat_request(std::string_view prompt, const EndpointConfig& cfg);

/// Content of choices[0].message.content; throws LlmError(Malformed).
std::string parse_chat_response(std::string_view body);

class LlmClient {
 public:
  using Sleeper = std::function<void(double seconds)>;

  LlmClient(EndpointConfig cfg, std::shared_ptr<const ChatBackend> backend, Sleeper sleeper = {});

  /// Sends the prompt, retrying failed attempts with exponential backoff
  /// (backoff_initial_s * backoff_factor^n) up to max_retries times. Statuses
  /// 408, 429 and 5xx are retried; other non-success statuses fail at once.
  /// On failure the thrown LlmError carries the attempt records.
  Completion complete(std::string_view prompt) const;

  const EndpointConfig& config() const { return cfg_; }
  BackendKind backend_kind() const { return backend_->kind(); }

 private:
  EndpointConfig cfg_;
  std::shared_ptr<const ChatBackend> backend_;
  Sleeper sleeper_;
};

}  // namespace uavsim
