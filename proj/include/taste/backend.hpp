#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "taste/detail/io.hpp"
#include "taste/detail/text.hpp"
#include "taste/error.hpp"
#include "taste/prompt.hpp"

namespace taste {

struct DecodingParams {
  int max_new_tokens = 512;
  double temperature = 0.0;
  double top_p = 1.0;
};

struct BackendConfig {
  std::string endpoint; // e.g. http://localhost:8000/v1/chat/completions
  std::string model;
  DecodingParams decoding;
  double timeout_seconds = 120.0;
  int max_retries = 3;
  std::size_t max_in_flight = 4;
  std::string api_key;
  // Backoff before retry k (1-based) is min(base * 2^(k-1), max).
  double backoff_base_ms = 500.0;
  double backoff_max_ms = 8000.0;

  void validate() const {
    if (!(timeout_seconds > 0.0))
      throw Error(ErrorCode::ConfigError, "timeout must be positive");
    if (max_in_flight < 1)
      throw Error(ErrorCode::ConfigError, "max in-flight must be at least 1");
    if (decoding.temperature < 0.0)
      throw Error(ErrorCode::ConfigError, "temperature must be >= 0");
    if (max_retries < 0)
      throw Error(ErrorCode::ConfigError, "max retries must be >= 0");
  }
};

struct GenerationResult {
  std::string text;
  double latency_ms = 0.0;
  int attempts = 1;
};

/// A text-generating endpoint. Handles are shared across threads; each
/// handle caps its own concurrent requests at max_in_flight().
class Backend {
public:
  explicit Backend(std::size_t max_in_flight)
      : max_in_flight_(std::max<std::size_t>(1, max_in_flight)) {}
  virtual ~Backend() = default;
  Backend(const Backend &) = delete;
  Backend &operator=(const Backend &) = delete;

  GenerationResult generate(const RenderedPrompt &prompt) const {
    Slot slot(*this);
    return do_generate(prompt);
  }

  std::size_t max_in_flight() const { return max_in_flight_; }

  // Highest number of requests observed in flight at once.
  std::size_t peak_in_flight() const {
    std::lock_guard lock(gate_mutex_);
    return peak_;
  }

  virtual std::string identity() const = 0;

protected:
  virtual GenerationResult do_generate(const RenderedPrompt &prompt) const = 0;

private:
  class Slot {
  public:
    explicit Slot(const Backend &b) : b_(b) {
      std::unique_lock lock(b_.gate_mutex_);
      b_.gate_cv_.wait(lock, [&] { return b_.in_flight_ < b_.max_in_flight_; });
      ++b_.in_flight_;
      b_.peak_ = std::max(b_.peak_, b_.in_flight_);
    }
    ~Slot() {
      {
        std::lock_guard lock(b_.gate_mutex_);
        --b_.in_flight_;
      }
      b_.gate_cv_.notify_one();
    }

  private:
    const Backend &b_;
  };

  std::size_t max_in_flight_;
  mutable std::mutex gate_mutex_;
  mutable std::condition_variable gate_cv_;
  mutable std::size_t in_flight_ = 0;
  mutable std::size_t peak_ = 0;
};

/// Runs every prompt through the backend with up to max_in_flight() workers.
/// Results come back index-aligned; a failed item holds its error in-slot.
inline std::vector<Outcome<GenerationResult>>
generate_batch(const Backend &backend, std::span<const RenderedPrompt> prompts) {
  std::vector<std::optional<Outcome<GenerationResult>>> slots(prompts.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next++; i < prompts.size(); i = next++) {
      try {
        slots[i].emplace(backend.generate(prompts[i]));
      } catch (const Error &e) {
        slots[i].emplace(e);
      } catch (const std::exception &e) {
        slots[i].emplace(Error(ErrorCode::TransportError, e.what()));
      }
    }
  };

  const std::size_t n_workers =
      std::min(backend.max_in_flight(), prompts.size());
  {
    std::vector<std::jthread> workers;
    for (std::size_t w = 0; w < n_workers; ++w)
      workers.emplace_back(worker);
  }

  std::vector<Outcome<GenerationResult>> results;
  results.reserve(prompts.size());
  for (auto &slot : slots)
    results.push_back(std::move(*slot));
  return results;
}

// ---------------------------------------------------------------------------
// Chat-completions wire format

/// Request body: the prompt travels byte-identical as one user message.
inline nlohmann::json chat_request_body(const RenderedPrompt &prompt,
                                        const BackendConfig &cfg) {
  return {
      {"model", cfg.model},
      {"messages", nlohmann::json::array(
                       {{{"role", "user"}, {"content", prompt.text}}})},
      {"temperature", cfg.decoding.temperature},
      {"top_p", cfg.decoding.top_p},
      {"max_tokens", cfg.decoding.max_new_tokens},
  };
}

/// Extracts choices[0].message.content.
inline std::string parse_chat_response(const std::string &body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error &e) {
    throw Error(ErrorCode::BadResponse, std::string("response is not JSON: ") + e.what());
  }
  const auto *content = [&]() -> const nlohmann::json * {
    if (!j.is_object() || !j.contains("choices") || !j["choices"].is_array() ||
        j["choices"].empty())
      return nullptr;
    const auto &choice = j["choices"][0];
    if (!choice.is_object() || !choice.contains("message"))
      return nullptr;
    const auto &msg = choice["message"];
    if (!msg.is_object() || !msg.contains("content") || !msg["content"].is_string())
      return nullptr;
    return &msg["content"];
  }();
  if (!content)
    throw Error(ErrorCode::BadResponse, "response lacks choices[0].message.content");
  return content->get<std::string>();
}

struct EndpointUrl {
  std::string scheme_host_port; // "http://host:port"
  std::string path;             // "/v1/chat/completions"
};

inline EndpointUrl split_endpoint(const std::string &url,
                                  const std::string &default_path) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos)
    throw Error(ErrorCode::ConfigError, "endpoint '" + url + "' lacks a scheme");
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos)
    return {url, default_path};
  return {url.substr(0, slash), url.substr(slash)};
}

/// OpenAI-style chat-completions client. Transport failures and 5xx
/// responses are retried with exponential backoff; 4xx responses are not.
class HttpBackend final : public Backend {
public:
  explicit HttpBackend(BackendConfig cfg)
      : Backend(cfg.max_in_flight), cfg_(std::move(cfg)) {
    cfg_.validate();
    url_ = split_endpoint(cfg_.endpoint, "/v1/chat/completions");
  }

  std::string identity() const override {
    return "http:" + cfg_.endpoint + "#" + cfg_.model;
  }

  const BackendConfig &config() const { return cfg_; }

protected:
  GenerationResult do_generate(const RenderedPrompt &prompt) const override {
    const std::string body = chat_request_body(prompt, cfg_).dump(
        -1, ' ', false, nlohmann::json::error_handler_t::replace);
    const auto start = std::chrono::steady_clock::now();
    const int max_attempts = cfg_.max_retries + 1;

    std::optional<Error> last;
    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
      if (attempt > 1)
        sleep_backoff(attempt - 1);

      httplib::Client client(url_.scheme_host_port);
      const auto timeout = std::chrono::duration<double>(cfg_.timeout_seconds);
      const auto timeout_us =
          std::chrono::duration_cast<std::chrono::microseconds>(timeout);
      client.set_connection_timeout(timeout_us);
      client.set_read_timeout(timeout_us);
      client.set_write_timeout(timeout_us);
      httplib::Headers headers;
      if (!cfg_.api_key.empty())
        headers.emplace("Authorization", "Bearer " + cfg_.api_key);

      const auto sent = std::chrono::steady_clock::now();
      auto res = client.Post(url_.path, headers, body, "application/json");
      const auto waited = std::chrono::steady_clock::now() - sent;

      if (!res) {
        const bool timed_out =
            res.error() == httplib::Error::ConnectionTimeout ||
            (res.error() == httplib::Error::Read && waited >= timeout * 0.9);
        last = Error(timed_out ? ErrorCode::Timeout : ErrorCode::TransportError,
                     cfg_.endpoint + ": " + httplib::to_string(res.error()))
                   .with_attempts(attempt);
        continue;
      }
      if (res->status >= 400 && res->status < 500)
        throw Error(ErrorCode::BadStatus, cfg_.endpoint + " returned HTTP " +
                                              std::to_string(res->status))
            .with_status(res->status)
            .with_attempts(attempt);
      if (res->status >= 500 || res->status < 200 || res->status >= 300) {
        last = Error(ErrorCode::BadStatus, cfg_.endpoint + " returned HTTP " +
                                               std::to_string(res->status))
                   .with_status(res->status)
                   .with_attempts(attempt);
        if (res->status >= 500)
          continue;
        throw *last;
      }

      GenerationResult out;
      out.text = parse_chat_response(res->body);
      out.attempts = attempt;
      out.latency_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - start)
                           .count();
      return out;
    }
    throw *last;
  }

private:
  void sleep_backoff(int retry) const {
    double ms = cfg_.backoff_base_ms;
    for (int k = 1; k < retry; ++k)
      ms *= 2.0;
    ms = std::min(ms, cfg_.backoff_max_ms);
    if (ms > 0)
      std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(ms));
  }

  BackendConfig cfg_;
  EndpointUrl url_;
};

// ---------------------------------------------------------------------------
// Scripted mock

struct MockRule {
  // Every substring must occur in the prompt. An empty list matches all.
  std::vector<std::string> match;
  std::string reply;
  // Simulated failure instead of a reply.
  std::optional<ErrorCode> fail;
  int fail_status = 0;
  int delay_ms = 0;
};

/// Deterministic playback backend: the first rule whose substrings all occur
/// in the prompt answers it.
class MockBackend final : public Backend {
public:
  explicit MockBackend(std::vector<MockRule> rules,
                       std::optional<std::string> default_reply = std::nullopt,
                       std::size_t max_in_flight = 8)
      : Backend(max_in_flight), rules_(std::move(rules)),
        default_reply_(std::move(default_reply)) {}

  std::string identity() const override {
    return "mock:" + std::to_string(rules_.size()) + " rules";
  }

  std::size_t calls() const { return calls_.load(); }

protected:
  GenerationResult do_generate(const RenderedPrompt &prompt) const override {
    ++calls_;
    const auto start = std::chrono::steady_clock::now();
    for (const auto &rule : rules_) {
      const bool hit = std::all_of(
          rule.match.begin(), rule.match.end(), [&](const std::string &needle) {
            return prompt.text.find(needle) != std::string::npos;
          });
      if (!hit)
        continue;
      if (rule.delay_ms > 0)
        std::this_thread::sleep_for(std::chrono::milliseconds(rule.delay_ms));
      if (rule.fail) {
        auto err = Error(*rule.fail, "scripted failure").with_attempts(1);
        if (rule.fail_status)
          err.with_status(rule.fail_status);
        throw err;
      }
      return finish(rule.reply, start);
    }
    if (default_reply_)
      return finish(*default_reply_, start);
    throw Error(ErrorCode::NoRuleMatched, "no mock rule matches the prompt");
  }

private:
  static GenerationResult finish(const std::string &text,
                                 std::chrono::steady_clock::time_point start) {
    GenerationResult r;
    r.text = text;
    r.latency_ms = std::chrono::duration<double, std::milli>(
                       std::chrono::steady_clock::now() - start)
                       .count();
    return r;
  }

  std::vector<MockRule> rules_;
  std::optional<std::string> default_reply_;
  mutable std::atomic<std::size_t> calls_{0};
};

namespace mock_detail {

inline MockRule parse_rule(const nlohmann::json &j, const std::string &where) {
  MockRule rule;
  const auto m = j.value("match", nlohmann::json());
  if (m.is_string())
    rule.match.push_back(m.get<std::string>());
  else if (m.is_array())
    rule.match = m.get<std::vector<std::string>>();
  else
    throw Error(ErrorCode::MalformedLine, where + "\"match\" must be a string or array");
  rule.delay_ms = j.value("delay_ms", 0);
  if (j.contains("error")) {
    const auto kind = j["error"].get<std::string>();
    if (kind == "transport") {
      rule.fail = ErrorCode::TransportError;
    } else if (kind == "timeout") {
      rule.fail = ErrorCode::Timeout;
    } else if (kind.rfind("status:", 0) == 0) {
      rule.fail = ErrorCode::BadStatus;
      rule.fail_status = std::stoi(kind.substr(7));
    } else {
      throw Error(ErrorCode::MalformedLine, where + "unknown error kind '" + kind + "'");
    }
  } else if (j.contains("reply") && j["reply"].is_string()) {
    rule.reply = j["reply"].get<std::string>();
  } else {
    throw Error(ErrorCode::MalformedLine, where + "rule needs \"reply\" or \"error\"");
  }
  return rule;
}

} // namespace mock_detail

/// Parses a mock script. Each JSONL line is one of
///   {"match": "substr" | ["a","b"], "reply": "text"}
///   {"match": ..., "error": "transport" | "timeout" | "status:<code>"}
///   {"default": "text"}
/// and may carry "delay_ms".
inline std::unique_ptr<MockBackend>
mock_from_script(std::istream &in, std::size_t max_in_flight = 8) {
  std::vector<MockRule> rules;
  std::optional<std::string> fallback;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty())
      continue;
    const auto where = "mock script line " + std::to_string(lineno) + ": ";
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error &e) {
      throw Error(ErrorCode::MalformedLine, where + e.what()).with_line(lineno);
    }
    if (!j.is_object())
      throw Error(ErrorCode::MalformedLine, where + "expected an object")
          .with_line(lineno);
    try {
      if (j.contains("default")) {
        fallback = j["default"].get<std::string>();
        continue;
      }
      rules.push_back(mock_detail::parse_rule(j, where));
    } catch (Error &e) {
      throw e.with_line(lineno);
    } catch (const std::exception &e) {
      throw Error(ErrorCode::MalformedLine, where + e.what()).with_line(lineno);
    }
  }
  return std::make_unique<MockBackend>(std::move(rules), std::move(fallback),
                                       max_in_flight);
}

inline std::unique_ptr<MockBackend>
mock_from_script(const std::filesystem::path &path, std::size_t max_in_flight = 8) {
  auto in = detail::open_input(path);
  return mock_from_script(in, max_in_flight);
}

} // namespace taste
