#include "uavsim/llm_client.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <nlohmann/json.hpp>
#include <thread>

#include "uavsim/policy.hpp"

namespace uavsim {

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // without trailing slash
};

SplitUrl split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw std::invalid_argument("base_url needs a scheme: " + url);
  const auto slash = url.find('/', scheme + 3);
  SplitUrl out;
  out.origin = url.substr(0, slash);
  out.path = slash == std::string::npos ? "" : url.substr(slash);
  while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
  return out;
}

bool retryable_status(int status) { return status == 408 || status == 429 || status >= 500; }

}  // namespace

void validate(const EndpointConfig& cfg) {
  if (!(cfg.timeout_s > 0.0)) throw std::invalid_argument("llm: timeout must be positive");
  if (cfg.max_retries < 0) throw std::invalid_argument("llm: max_retries must be >= 0");
  if (!(cfg.backoff_initial_s >= 0.0) || !(cfg.backoff_factor >= 1.0)) {
    throw std::invalid_argument("llm: backoff must be non-negative with factor >= 1");
  }
  if (cfg.max_response_chars == 0) throw std::invalid_argument("llm: response cap must be positive");
}

std::string_view to_string(BackendKind kind) { return kind == BackendKind::Live ? "live" : "mock"; }

std::string make_chat_request(std::string_view prompt, const EndpointConfig& cfg) {
  json body = {
      {"model", cfg.model_name},
      {"temperature", cfg.temperature},
      {"messages", json::array({{{"role", "user"}, {"content", std::string(prompt)}}})},
  };
  return body.dump();
}

std::string parse_chat_response(std::string_view body) {
  try {
    const json doc = json::parse(body);
    return doc.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw LlmError(LlmErrorKind::Malformed, std::string("unexpected chat response: ") + e.what());
  }
}

AttemptResult HttpChatBackend::send(std::string_view prompt, const EndpointConfig& cfg) const {
  const SplitUrl url = split_url(cfg.base_url);
  httplib::Client client(url.origin);
  const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::duration<double>(cfg.timeout_s));
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);

  httplib::Headers headers;
  if (const char* token = std::getenv(cfg.token_env.c_str()); token != nullptr && *token != '\0') {
    headers.emplace("Authorization", std::string("Bearer ") + token);
  }

  const auto start = Clock::now();
  auto res = client.Post(url.path + "/chat/completions", headers, make_chat_request(prompt, cfg), "application/json");
  AttemptResult out;
  out.latency_s = std::chrono::duration<double>(Clock::now() - start).count();
  if (!res) {
    const httplib::Error err = res.error();
    const bool timed_out = err == httplib::Error::ConnectionTimeout ||
                           (err == httplib::Error::Read && out.latency_s >= 0.95 * cfg.timeout_s);
    out.status = timed_out ? AttemptStatus::Timeout : AttemptStatus::Transport;
    out.http_status = 0;
    out.body = httplib::to_string(err);
    return out;
  }
  out.http_status = res->status;
  if (res->status < 200 || res->status >= 300) {
    out.status = AttemptStatus::HttpStatus;
    out.body = res->body;
    return out;
  }
  out.body = parse_chat_response(res->body);
  return out;
}

AttemptResult MockChatBackend::send(std::string_view prompt, const EndpointConfig&) const {
  AttemptResult out;
  try {
    out.body = mock_complete(prompt);
  } catch (const MalformedPrompt& e) {
    throw LlmError(LlmErrorKind::Malformed, e.what());
  }
  out.latency_s = latency_s_;
  return out;
}

std::string mock_complete(std::string_view prompt) {
  PolicyRules rules;
  Observation obs;
  try {
    rules = parse_rules(prompt);
    obs = extract_observation(prompt);
  } catch (const std::invalid_argument& e) {
    throw MalformedPrompt(std::string("mock backend cannot read prompt: ") + e.what());
  }
  try {
    return serialize_decision(greedy_queue_aware_policy(obs, rules));
  } catch (const std::exception& e) {
    throw MalformedPrompt(std::string("mock backend cannot decide: ") + e.what());
  }
}

LlmClient::LlmClient(EndpointConfig cfg, std::shared_ptr<const ChatBackend> backend, Sleeper sleeper)
    : cfg_(std::move(cfg)), backend_(std::move(backend)), sleeper_(std::move(sleeper)) {
  validate(cfg_);
  if (!backend_) throw std::invalid_argument("llm client needs a backend");
  if (!sleeper_) {
    sleeper_ = [](double s) { std::this_thread::sleep_for(std::chrono::duration<double>(s)); };
  }
}

Completion LlmClient::complete(std::string_view prompt) const {
  if (prompt.empty()) throw std::invalid_argument("prompt must be non-empty");
  Completion out;
  double backoff = cfg_.backoff_initial_s;
  const int attempts = cfg_.max_retries + 1;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    AttemptResult r;
    try {
      r = backend_->send(prompt, cfg_);
    } catch (LlmError& e) {
      e.attempts = out.records;
      e.attempts.push_back({prompt.size(), 0, 0.0, attempt, backend_->kind()});
      throw;
    }
    out.records.push_back({prompt.size(), r.body.size(), std::max(0.0, r.latency_s), attempt, backend_->kind()});

    if (r.status == AttemptStatus::Ok) {
      if (r.body.size() > cfg_.max_response_chars) {
        LlmError e(LlmErrorKind::Malformed, "response exceeds " + std::to_string(cfg_.max_response_chars) + " chars");
        e.attempts = out.records;
        throw e;
      }
      out.text = std::move(r.body);
      return out;
    }

    const bool last = attempt == attempts;
    if (r.status == AttemptStatus::HttpStatus && !retryable_status(r.http_status)) {
      LlmError e(LlmErrorKind::HttpStatus, "chat endpoint returned status " + std::to_string(r.http_status),
                 r.http_status);
      e.attempts = out.records;
      throw e;
    }
    if (last) {
      LlmErrorKind kind = LlmErrorKind::Transport;
      std::string what = "transport failure: " + r.body;
      if (r.status == AttemptStatus::Timeout) {
        kind = LlmErrorKind::TimeoutExhausted;
        what = "timed out on all " + std::to_string(attempts) + " attempts";
      } else if (r.status == AttemptStatus::HttpStatus) {
        kind = LlmErrorKind::HttpStatus;
        what = "chat endpoint returned status " + std::to_string(r.http_status);
      }
      LlmError e(kind, what, r.http_status);
      e.attempts = out.records;
      throw e;
    }
    sleeper_(backoff);
    backoff *= cfg_.backoff_factor;
  }
  throw std::logic_error("unreachable");
}

}  // namespace uavsim
