#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <thread>

#include "curator/error.hpp"
#include "httplib.h"

namespace curator::http {

/// A base URL split into the origin httplib connects to and a path prefix.
struct Target {
  std::string origin;       // scheme://host[:port]
  std::string path_prefix;  // "" or "/something", never a trailing slash

  std::string path(std::string_view suffix) const { return path_prefix + std::string(suffix); }
};

inline Target parse_base_url(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos)
    throw Error(ErrorCode::InvalidConfig, "base url '" + std::string(url) + "' lacks a scheme");
  const std::string_view scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https")
    throw Error(ErrorCode::InvalidConfig, "unsupported url scheme '" + std::string(scheme) + "'");
  const auto host_begin = scheme_end + 3;
  const auto slash = url.find('/', host_begin);
  Target t;
  t.origin = std::string(url.substr(0, slash));
  if (t.origin.size() == host_begin) throw Error(ErrorCode::InvalidConfig, "base url '" + std::string(url) + "' lacks a host");
  if (slash != std::string_view::npos) {
    std::string_view prefix = url.substr(slash);
    while (!prefix.empty() && prefix.back() == '/') prefix.remove_suffix(1);
    t.path_prefix = std::string(prefix);
  }
  return t;
}

enum class Jitter { None, Full, Equal };

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds base_delay{500};
  double factor = 2.0;
  Jitter jitter = Jitter::Full;
  bool retry_on_429 = true;
};

/// Delay before retry number `attempt` (0-based): base * factor^attempt, jittered.
inline std::chrono::milliseconds backoff_delay(const RetryPolicy& policy, int attempt, double u01) {
  const double cap = static_cast<double>(policy.base_delay.count()) * std::pow(policy.factor, attempt);
  double ms = cap;
  switch (policy.jitter) {
    case Jitter::None: break;
    case Jitter::Full: ms = cap * u01; break;
    case Jitter::Equal: ms = cap * (0.5 + 0.5 * u01); break;
  }
  return std::chrono::milliseconds(static_cast<std::int64_t>(ms));
}

inline bool is_retryable_status(int status, const RetryPolicy& policy) {
  if (status >= 500) return true;
  return status == 429 && policy.retry_on_429;
}

struct Outcome {
  std::optional<int> status;  // nullopt: transport failure
  std::string body;
  std::string transport_error;
  int attempts = 0;

  bool ok() const { return status && *status == 200; }

  std::string describe() const {
    if (!status) return "transport error: " + transport_error;
    std::string msg = "HTTP " + std::to_string(*status);
    if (!body.empty()) msg += ": " + body.substr(0, 256);
    return msg;
  }
};

struct RequestOptions {
  std::chrono::milliseconds timeout{60000};
  httplib::Headers headers;
  RetryPolicy retry;
  /// Called before every attempt, retries included (attempt index is 0-based).
  std::function<void(int attempt)> on_attempt;
};

namespace detail {

inline double jitter_sample() {
  thread_local std::mt19937_64 engine{std::random_device{}()};
  return std::uniform_real_distribution<double>(0.0, 1.0)(engine);
}

inline void configure(httplib::Client& client, std::chrono::milliseconds timeout) {
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  client.set_keep_alive(false);
}

}  // namespace detail

/// POSTs a JSON body, retrying transport errors and retryable statuses with
/// exponential backoff. Returns the final outcome, successful or not; the
/// caller decides which error a failed outcome maps to.
inline Outcome post_json(const Target& target, std::string_view path_suffix, const std::string& body,
                         const RequestOptions& options) {
  Outcome outcome;
  const std::string path = target.path(path_suffix);
  for (int attempt = 0;; ++attempt) {
    if (options.on_attempt) options.on_attempt(attempt);
    outcome = Outcome{};
    outcome.attempts = attempt + 1;
    bool retryable = false;
    {
      httplib::Client client(target.origin);
      detail::configure(client, options.timeout);
      auto res = client.Post(path, options.headers, body, "application/json");
      if (!res) {
        outcome.transport_error = httplib::to_string(res.error());
        retryable = true;
      } else {
        outcome.status = res->status;
        outcome.body = std::move(res->body);
        if (outcome.ok()) return outcome;
        retryable = is_retryable_status(res->status, options.retry);
      }
    }
    if (!retryable || attempt >= options.retry.max_retries) return outcome;
    std::this_thread::sleep_for(backoff_delay(options.retry, attempt, detail::jitter_sample()));
  }
}

inline void set_bearer(httplib::Headers& headers, const std::string& api_key) {
  if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
}

}  // namespace curator::http
