#pragma once

// Text-generation boundary. ScriptedBackend replays canned completions for
// tests and deterministic sessions; HttpBackend speaks the OpenAI-compatible
// chat-completions protocol for live ones.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "dot/result.hpp"
#include "dot/trace.hpp"

namespace dot {

enum class BackendErrorKind { ScriptExhausted, Transport, Protocol, AuthMissing, Io, BadScript };

inline const char* to_string(BackendErrorKind k) {
  switch (k) {
    case BackendErrorKind::ScriptExhausted: return "ScriptExhausted";
    case BackendErrorKind::Transport: return "Transport";
    case BackendErrorKind::Protocol: return "Protocol";
    case BackendErrorKind::AuthMissing: return "AuthMissing";
    case BackendErrorKind::Io: return "Io";
    case BackendErrorKind::BadScript: return "BadScript";
  }
  return "?";
}

struct BackendError {
  BackendErrorKind kind;
  std::string message;
  std::size_t line = 0;  // BadScript only
};

struct BackendRequest {
  std::string prompt;
  std::vector<std::string> stop_sequences;  // always the three close tokens
  Role role_hint = Role::Proposer;
  int max_tokens = 512;
  double temperature = 0.0;
};

struct TokenUsage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  std::int64_t total_tokens = 0;
};

struct BackendResponse {
  std::string text;
  std::optional<TokenUsage> usage;
  std::int64_t latency_ms = 0;
};

class Backend {
public:
  virtual ~Backend() = default;

  virtual Result<BackendResponse, BackendError> generate(const BackendRequest& request) = 0;

  // Whether one handle may serve several sessions at once. Non-shareable
  // backends gate sessions through try_acquire/release.
  virtual bool shareable() const = 0;
  virtual bool try_acquire() { return true; }
  virtual void release() {}
};

// Deterministic canned backend. In strict mode requests past the end fail;
// otherwise the last step repeats forever.
class ScriptedBackend final : public Backend {
public:
  explicit ScriptedBackend(std::vector<std::string> steps, bool strict = true)
      : steps_(std::move(steps)), strict_(strict) {}

  Result<BackendResponse, BackendError> generate(const BackendRequest&) override {
    if (cursor_ >= steps_.size()) {
      if (strict_ || steps_.empty()) {
        return BackendError{BackendErrorKind::ScriptExhausted,
                            "script has no step " + std::to_string(cursor_), 0};
      }
      return BackendResponse{steps_.back(), std::nullopt, 0};
    }
    return BackendResponse{steps_[cursor_++], std::nullopt, 0};
  }

  bool shareable() const override { return false; }
  bool try_acquire() override { return !in_use_.test_and_set(); }
  void release() override { in_use_.clear(); }

  std::size_t cursor() const { return cursor_; }
  const std::vector<std::string>& steps() const { return steps_; }

private:
  std::vector<std::string> steps_;
  bool strict_;
  std::size_t cursor_ = 0;
  std::atomic_flag in_use_ = ATOMIC_FLAG_INIT;
};

// Script files hold one completion per step, each step terminated by a line
// containing exactly `---`. Trailing content without its terminator is a
// format violation.
inline Result<std::vector<std::string>, BackendError> load_script_steps(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    return BackendError{BackendErrorKind::Io, "cannot open script file: " + path.string(), 0};
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();

  std::vector<std::string> lines;
  for (std::size_t pos = 0; pos < text.size();) {
    const std::size_t eol = text.find('\n', pos);
    std::string line = text.substr(pos, eol == std::string::npos ? std::string::npos : eol - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
    if (eol == std::string::npos) break;
    pos = eol + 1;
  }

  std::vector<std::string> steps;
  std::vector<std::string> pending;
  std::size_t pending_start = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i] == "---") {
      std::string step;
      for (std::size_t k = 0; k < pending.size(); ++k) {
        if (k) step += '\n';
        step += pending[k];
      }
      steps.push_back(std::move(step));
      pending.clear();
    } else {
      if (pending.empty()) pending_start = i;
      pending.push_back(lines[i]);
    }
  }
  for (std::size_t k = 0; k < pending.size(); ++k) {
    if (!detail::trim(pending[k]).empty()) {
      return BackendError{BackendErrorKind::BadScript, "step is missing its --- terminator",
                          pending_start + k + 1};
    }
  }
  return steps;
}

inline Result<std::unique_ptr<ScriptedBackend>, BackendError> load_script(
    const std::filesystem::path& path, bool strict = true) {
  Result<std::vector<std::string>, BackendError> steps = load_script_steps(path);
  if (!steps.ok()) return std::move(steps).error();
  return std::make_unique<ScriptedBackend>(std::move(steps).value(), strict);
}

struct HttpBackendConfig {
  std::string base_url;
  std::string model;
  std::string api_key_env = "DOT_API_KEY";
  int timeout_ms = 60000;
  int retries = 2;
};

// Stand-in for fine-tuning when driving an off-the-shelf model; sent as the
// system message of every request.
inline constexpr std::string_view kFormatInstructionsV1 =
    "You reason in an explicit propose/critique/summarize stream. The prompt ends with an open "
    "role token; complete exactly one block and close it with the matching token. <proposer>: "
    "state one next reasoning step, or a corrected step when the last critique was negative. "
    "<critic>: judge the latest proposition; begin with 'valid' when it holds, otherwise explain "
    "the flaw. <summarizer>: combine the verified steps into the final answer.";

// OpenAI-compatible chat-completions client. Stateless per call, so one
// handle may serve concurrent sessions. Retries transport failures and 5xx
// responses with identical payloads.
class HttpBackend final : public Backend {
public:
  static Result<std::unique_ptr<HttpBackend>, BackendError> create(HttpBackendConfig config) {
    std::string origin, prefix;
    if (!split_url(config.base_url, origin, prefix)) {
      return BackendError{BackendErrorKind::Protocol,
                          "base_url does not parse as an absolute http(s) URL: " + config.base_url,
                          0};
    }
    return std::unique_ptr<HttpBackend>(new HttpBackend(std::move(config), std::move(origin),
                                                        std::move(prefix)));
  }

  Result<BackendResponse, BackendError> generate(const BackendRequest& request) override {
    const char* key = std::getenv(config_.api_key_env.c_str());
    if (key == nullptr || *key == '\0') {
      return BackendError{BackendErrorKind::AuthMissing,
                          "environment variable " + config_.api_key_env + " is not set", 0};
    }

    nlohmann::json body = {
        {"model", config_.model},
        {"messages",
         {{{"role", "system"}, {"content", std::string(kFormatInstructionsV1)}},
          {{"role", "user"}, {"content", request.prompt}}}},
        {"stop", request.stop_sequences},
        {"max_tokens", request.max_tokens},
        {"temperature", request.temperature},
    };
    const std::string payload = body.dump();

    BackendError last{BackendErrorKind::Transport, "no attempt made", 0};
    for (int attempt = 0; attempt <= config_.retries; ++attempt) {
      const auto started = std::chrono::steady_clock::now();
      httplib::Client client(origin_);
      const time_t timeout_s = config_.timeout_ms / 1000;
      const time_t timeout_us = (config_.timeout_ms % 1000) * 1000;
      client.set_connection_timeout(timeout_s, timeout_us);
      client.set_read_timeout(timeout_s, timeout_us);
      client.set_write_timeout(timeout_s, timeout_us);
      httplib::Headers headers = {{"Authorization", std::string("Bearer ") + key}};
      httplib::Result res =
          client.Post(prefix_ + "/chat/completions", headers, payload, "application/json");
      const auto latency = std::chrono::duration_cast<std::chrono::milliseconds>(
                               std::chrono::steady_clock::now() - started)
                               .count();
      if (!res) {
        last = {BackendErrorKind::Transport,
                "request failed: " + httplib::to_string(res.error()), 0};
        continue;
      }
      if (res->status >= 500) {
        last = {BackendErrorKind::Protocol, "server returned " + std::to_string(res->status), 0};
        continue;
      }
      if (res->status < 200 || res->status >= 300) {
        return BackendError{BackendErrorKind::Protocol,
                            "server returned " + std::to_string(res->status), 0};
      }
      nlohmann::json j = nlohmann::json::parse(res->body, nullptr, false);
      if (j.is_discarded() || !j.contains("choices") || !j["choices"].is_array() ||
          j["choices"].empty() || !j["choices"][0].contains("message") ||
          !j["choices"][0]["message"].contains("content") ||
          !j["choices"][0]["message"]["content"].is_string()) {
        return BackendError{BackendErrorKind::Protocol, "unparseable completion payload", 0};
      }
      BackendResponse response;
      response.text = j["choices"][0]["message"]["content"].get<std::string>();
      response.latency_ms = latency;
      if (response.text.empty()) {
        return BackendError{BackendErrorKind::Protocol, "empty completion", 0};
      }
      if (j.contains("usage") && j["usage"].is_object()) {
        TokenUsage usage;
        const nlohmann::json& u = j["usage"];
        if (u.contains("prompt_tokens") && u["prompt_tokens"].is_number()) {
          usage.prompt_tokens = u["prompt_tokens"].get<std::int64_t>();
        }
        if (u.contains("completion_tokens") && u["completion_tokens"].is_number()) {
          usage.completion_tokens = u["completion_tokens"].get<std::int64_t>();
        }
        if (u.contains("total_tokens") && u["total_tokens"].is_number()) {
          usage.total_tokens = u["total_tokens"].get<std::int64_t>();
        }
        response.usage = usage;
      }
      return response;
    }
    return last;
  }

  bool shareable() const override { return true; }

private:
  HttpBackend(HttpBackendConfig config, std::string origin, std::string prefix)
      : config_(std::move(config)), origin_(std::move(origin)), prefix_(std::move(prefix)) {}

  static bool split_url(const std::string& url, std::string& origin, std::string& prefix) {
    const std::string_view view(url);
    std::size_t scheme_end = view.find("://");
    if (scheme_end == std::string_view::npos) return false;
    const std::string_view scheme = view.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https") return false;
    const std::size_t host_start = scheme_end + 3;
    if (host_start >= view.size()) return false;
    const std::size_t path_start = view.find('/', host_start);
    if (path_start == std::string_view::npos) {
      origin = url;
      prefix.clear();
      return true;
    }
    if (path_start == host_start) return false;
    origin = std::string(view.substr(0, path_start));
    prefix = std::string(view.substr(path_start));
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return true;
  }

  HttpBackendConfig config_;
  std::string origin_;
  std::string prefix_;
};

} // namespace dot
