#pragma once

// Classifier backend speaking the OpenAI-compatible chat-completions
// protocol: POST {base}/chat/completions, reply in
// choices[0].message.content.

#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "blueprint/classify.hpp"
#include "blueprint/error.hpp"
#include "blueprint/llm_config.hpp"
#include "blueprint/rng.hpp"

namespace blueprint {

/// Audit entry for one chat-completion exchange.
struct CallRecord {
  std::string prompt;
  std::string response;
  int attempts = 1;
  std::chrono::milliseconds latency{0};
  std::string model;
  int status = 0;
  /// Empty for a successful exchange.
  std::string error;
};

struct HttpRequest {
  std::string path;
  std::vector<std::pair<std::string, std::string>> headers;
  std::string body;
  std::chrono::milliseconds timeout{60'000};
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// Sends one HTTP POST. Throws TransportError (status 0, retryable) when no
/// response arrives.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post(const HttpRequest& request) = 0;
};

/// cpp-httplib transport rooted at a base URL such as
/// "http://127.0.0.1:8080/v1". A fresh connection serves every request.
class HttplibTransport final : public Transport {
 public:
  explicit HttplibTransport(std::string_view base_url) {
    auto scheme = base_url.find("://");
    if (scheme == std::string_view::npos)
      throw ConfigError("base URL '" + std::string(base_url) +
                        "' has no scheme");
    auto slash = base_url.find('/', scheme + 3);
    origin_ = std::string(base_url.substr(0, slash));
    if (slash != std::string_view::npos) prefix_ = std::string(base_url.substr(slash));
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    try {
      httplib::Client probe(origin_);
      if (!probe.is_valid()) throw std::invalid_argument("invalid origin");
    } catch (const std::exception& e) {
      throw ConfigError("unusable base URL '" + std::string(base_url) +
                        "': " + e.what());
    }
  }

  HttpResponse post(const HttpRequest& request) override {
    httplib::Client client(origin_);
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(request.timeout);
    auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(
        request.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    for (const auto& [k, v] : request.headers) headers.emplace(k, v);
    auto res = client.Post(prefix_ + request.path, headers, request.body,
                           "application/json");
    if (!res)
      throw TransportError("request to " + origin_ + prefix_ + request.path +
                               " failed: " + httplib::to_string(res.error()),
                           0, true);
    return {res->status, res->body};
  }

 private:
  std::string origin_;
  std::string prefix_;
};

/// Counting admission gate bounding concurrent requests.
class InFlightLimiter {
 public:
  explicit InFlightLimiter(std::size_t limit) : limit_(limit) {}

  void acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return active_ < limit_; });
    ++active_;
  }

  void release() {
    {
      std::lock_guard lock(mu_);
      --active_;
    }
    cv_.notify_one();
  }

  std::size_t limit() const noexcept { return limit_; }

  class Guard {
   public:
    explicit Guard(InFlightLimiter& l) : l_(l) { l_.acquire(); }
    ~Guard() { l_.release(); }
    Guard(const Guard&) = delete;
    Guard& operator=(const Guard&) = delete;

   private:
    InFlightLimiter& l_;
  };

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::size_t limit_;
  std::size_t active_ = 0;
};

struct LlmDecision {
  Decision decision;
  CallRecord record;
};

class LlmClient final : public Backend {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit LlmClient(LlmConfig cfg, std::shared_ptr<Transport> transport = nullptr,
                     Sleeper sleeper = nullptr)
      : cfg_((cfg.validate(), std::move(cfg))),
        transport_(transport ? std::move(transport)
                             : std::make_shared<HttplibTransport>(cfg_.base_url)),
        sleeper_(sleeper ? std::move(sleeper)
                         : Sleeper([](std::chrono::milliseconds d) {
                             std::this_thread::sleep_for(d);
                           })),
        limiter_(cfg_.max_in_flight) {}

  const LlmConfig& config() const noexcept { return cfg_; }

  /// Request body for a user prompt.
  nlohmann::ordered_json request_body(std::string_view prompt) const {
    return {{"model", cfg_.model},
            {"temperature", cfg_.temperature},
            {"messages",
             {{{"role", "system"}, {"content", std::string(kSystemPrompt)}},
              {{"role", "user"}, {"content", std::string(prompt)}}}}};
  }

  /// Nominal delay before retry number `retry` (1-based), without jitter.
  std::chrono::milliseconds nominal_backoff(int retry) const {
    return cfg_.backoff_base * (std::int64_t{1} << std::min(retry - 1, 20));
  }

  /// One chat completion with retries. Returns the reply content and the
  /// success record; every failed attempt is logged when the call fails.
  std::pair<std::string, CallRecord> complete(std::string_view prompt) {
    const auto body = request_body(prompt).dump();
    HttpRequest req{"/chat/completions", headers(), body, cfg_.timeout};
    const auto start = std::chrono::steady_clock::now();
    std::vector<CallRecord> failures;
    for (int attempt = 1;; ++attempt) {
      CallRecord rec;
      rec.prompt = std::string(prompt);
      rec.model = cfg_.model;
      rec.attempts = attempt;
      bool retryable = false;
      std::exception_ptr error;
      try {
        HttpResponse res;
        {
          InFlightLimiter::Guard guard(limiter_);
          ++requests_;
          res = transport_->post(req);
        }
        rec.status = res.status;
        if (res.status == 200) {
          rec.response = parse_content(res.body);
          rec.latency = elapsed(start);
          log(rec);
          return {rec.response, rec};
        }
        rec.response = res.body;
        if (res.status == 401 || res.status == 403)
          throw AuthError("authentication failed (HTTP " +
                              std::to_string(res.status) + ")",
                          res.status);
        retryable = res.status == 408 || res.status == 429 || res.status >= 500;
        throw TransportError("HTTP " + std::to_string(res.status) + ": " +
                                 res.body.substr(0, 200),
                             res.status, retryable);
      } catch (const TransportError& e) {
        rec.error = e.what();
        rec.status = e.status();
        retryable = e.retryable();
        error = std::current_exception();
      }
      rec.latency = elapsed(start);
      failures.push_back(rec);
      if (!retryable || attempt > cfg_.max_retries) {
        for (auto& f : failures) log(std::move(f));
        if (retryable)
          throw TransportError("giving up after " + std::to_string(attempt) +
                                   " attempts: " + rec.error,
                               rec.status, false);
        std::rethrow_exception(error);
      }
      sleeper_(jittered_backoff(attempt));
    }
  }

  LlmDecision classify_call(std::string_view text,
                            std::span<const CandidateLabel> candidates,
                            Mode mode) {
    auto prompt = build_prompt(text, candidates, mode);
    auto [content, record] = complete(prompt);
    Decision d;
    d.raw_output = content;
    d.mode = mode;
    d.candidates_offered = detail::names_of(candidates);
    d.chosen = normalize_label(content, candidates);
    return {std::move(d), std::move(record)};
  }

  Decision classify(std::string_view text,
                    std::span<const CandidateLabel> candidates, Mode mode,
                    const CallContext& ctx) override {
    auto d = classify_call(text, candidates, mode).decision;
    d.level = ctx.level;
    return d;
  }

  MultiLabelDecision classify_multi(std::string_view text,
                                    std::span<const CandidateLabel> candidates,
                                    std::size_t max_labels,
                                    const CallContext&) override {
    if (max_labels < 1 || max_labels > candidates.size())
      throw ConfigError("max labels must lie in 1.." +
                        std::to_string(candidates.size()));
    auto prompt = build_multi_prompt(text, candidates, max_labels);
    auto [content, record] = complete(prompt);
    return normalize_multi(content, candidates, max_labels);
  }

  std::vector<CallRecord> call_log() const {
    std::lock_guard lock(log_mu_);
    return log_;
  }

  /// HTTP requests issued so far, retries included.
  std::size_t requests_sent() const noexcept { return requests_.load(); }

 private:
  std::vector<std::pair<std::string, std::string>> headers() const {
    std::vector<std::pair<std::string, std::string>> h;
    if (!cfg_.api_key.empty()) h.emplace_back("Authorization", "Bearer " + cfg_.api_key);
    if (cfg_.organization) h.emplace_back("OpenAI-Organization", *cfg_.organization);
    return h;
  }

  static std::string parse_content(const std::string& body) {
    try {
      auto j = nlohmann::json::parse(body);
      const auto& content = j.at("choices").at(0).at("message").at("content");
      return content.is_null() ? std::string() : content.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw TransportError(std::string("malformed chat-completion response: ") +
                               e.what(),
                           200, false);
    }
  }

  std::chrono::milliseconds jittered_backoff(int retry) {
    double u;
    {
      std::lock_guard lock(jitter_mu_);
      u = jitter_.uniform01();
    }
    const double factor = 1.0 + cfg_.backoff_jitter * (2.0 * u - 1.0);
    return std::chrono::milliseconds(static_cast<std::int64_t>(
        std::llround(static_cast<double>(nominal_backoff(retry).count()) * factor)));
  }

  static std::chrono::milliseconds elapsed(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - t0);
  }

  void log(CallRecord rec) {
    std::lock_guard lock(log_mu_);
    log_.push_back(std::move(rec));
  }

  LlmConfig cfg_;
  std::shared_ptr<Transport> transport_;
  Sleeper sleeper_;
  InFlightLimiter limiter_;
  mutable std::mutex log_mu_;
  std::vector<CallRecord> log_;
  std::mutex jitter_mu_;
  Rng jitter_{0x5eedULL};
  std::atomic<std::size_t> requests_{0};
};

inline LlmDecision llm_classify(std::string_view text,
                                std::span<const CandidateLabel> candidates,
                                Mode mode, LlmClient& client) {
  return client.classify_call(text, candidates, mode);
}

inline MultiLabelDecision llm_classify_multi(
    std::string_view text, std::span<const CandidateLabel> candidates,
    std::size_t max_labels, LlmClient& client) {
  return client.classify_multi(text, candidates, max_labels, CallContext{});
}

}  // namespace blueprint
