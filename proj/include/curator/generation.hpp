#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "curator/core.hpp"
#include "curator/http.hpp"
#include "curator/manifest.hpp"
#include "curator/parallel.hpp"
#include "curator/serialization.hpp"

namespace curator {

// ---------------------------------------------------------------------------
// Prompt
// ---------------------------------------------------------------------------

inline constexpr std::string_view kSystemPrompt =
    "You are an molecular and cellular biology expert analyzing gene regulation upon CRISPRi knockdown. First, "
    "provide your reasoning process within <think> </think> tags. Consider relevant pathways (e.g., cell-type "
    "specific biology, ribosome biogenesis, transcription, mitochondrial function, stress response), gene "
    "interactions, and cell-specific context. Then, choose one option from the following and place your choice "
    "within <answer> </answer> tags: 'upregulated', 'downregulated', or 'not differentially expressed'. Example: "
    "<think> [Your reasoning here] </think><answer> [upregulated / downregulated / not differentially expressed] "
    "</answer>";

struct Prompt {
  std::string system;
  std::string user;
};

/// Fields are substituted verbatim, without trimming.
inline Prompt build_prompt(const QueryTuple& q) {
  Prompt p;
  p.system = std::string(kSystemPrompt);
  p.user = "Analyze the regulatory effect of knocking down the " + q.perturbation + " gene on the " + q.gene +
           " gene in a single-cell " + q.cell_type + " cell line using CRISPR interference.";
  return p;
}

// ---------------------------------------------------------------------------
// Configuration and counters
// ---------------------------------------------------------------------------

struct GenerationConfig {
  std::string base_url;
  std::string model;
  std::string api_key;
  std::size_t k = 8;
  SamplingParams greedy_params = SamplingParams::greedy();
  SamplingParams sample_params{1.0, 1.0, 50, std::nullopt};
  std::size_t max_tokens = 4096;
  std::chrono::milliseconds request_timeout{120000};
  int max_retries = 3;
  std::size_t max_in_flight = 8;
  bool logprobs = true;
  /// Some compatible servers reject unknown request fields such as top_k.
  bool send_top_k = true;
  std::chrono::milliseconds backoff_base{500};
};

inline void validate(const GenerationConfig& cfg) {
  if (cfg.base_url.empty()) throw Error(ErrorCode::InvalidConfig, "generation base_url is empty");
  http::parse_base_url(cfg.base_url);
  if (cfg.model.empty()) throw Error(ErrorCode::InvalidConfig, "generation model is empty");
  if (cfg.greedy_params.temperature != 0.0) throw Error(ErrorCode::InvalidConfig, "greedy temperature must be 0");
  validate(cfg.sample_params);
  if (cfg.max_in_flight < 1) throw Error(ErrorCode::InvalidConfig, "max_in_flight must be >= 1");
  if (cfg.max_retries < 0) throw Error(ErrorCode::InvalidConfig, "max_retries must be >= 0");
  if (cfg.max_tokens < 1) throw Error(ErrorCode::InvalidConfig, "max_tokens must be >= 1");
}

struct UsageSnapshot {
  std::uint64_t requests = 0;
  std::uint64_t prompt_tokens = 0;
  std::uint64_t completion_tokens = 0;
  std::uint64_t retried = 0;
  std::uint64_t failed = 0;

  bool operator==(const UsageSnapshot&) const = default;
};

inline Json to_json(const UsageSnapshot& u) {
  return Json{{"requests", u.requests}, {"prompt_tokens", u.prompt_tokens}, {"completion_tokens", u.completion_tokens},
              {"retried", u.retried}, {"failed", u.failed}};
}

/// Monotone counters shared by concurrent requests. `requests` counts every
/// HTTP attempt; `retried` the subset that were retries; `failed` the
/// requests that exhausted their retries or were rejected outright.
class UsageCounters {
 public:
  std::atomic<std::uint64_t> requests{0};
  std::atomic<std::uint64_t> prompt_tokens{0};
  std::atomic<std::uint64_t> completion_tokens{0};
  std::atomic<std::uint64_t> retried{0};
  std::atomic<std::uint64_t> failed{0};

  UsageSnapshot snapshot() const {
    return {requests.load(), prompt_tokens.load(), completion_tokens.load(), retried.load(), failed.load()};
  }
};

// ---------------------------------------------------------------------------
// Client
// ---------------------------------------------------------------------------

struct GeneratedBundle {
  TraceBundle bundle;
  /// The greedy reply lacked log-probabilities although they were requested.
  bool missing_logprobs = false;
};

/// One greedy plus k sampled chat completions per query against an
/// OpenAI-compatible POST {base_url}/v1/chat/completions endpoint.
class GenerationClient {
 public:
  explicit GenerationClient(GenerationConfig cfg) : cfg_(std::move(cfg)) {
    validate(cfg_);
    target_ = http::parse_base_url(cfg_.base_url);
  }

  GeneratedBundle generate_bundle(const QueryTuple& q) {
    validate(q);
    const Prompt prompt = build_prompt(q);
    GeneratedBundle out;
    out.bundle.query = q;
    out.bundle.greedy = complete(prompt, SamplingParams::greedy(), true);
    out.missing_logprobs = cfg_.logprobs && !out.bundle.greedy.token_logprobs;
    out.bundle.samples.reserve(cfg_.k);
    for (std::size_t i = 1; i <= cfg_.k; ++i) {
      SamplingParams params = cfg_.sample_params;
      if (params.seed) params.seed = *params.seed + static_cast<std::int64_t>(i);
      out.bundle.samples.push_back(complete(prompt, params, cfg_.logprobs));
    }
    return out;
  }

  /// Request body for one completion; exposed for inspection in tests.
  Json request_body(const Prompt& prompt, const SamplingParams& params, bool want_logprobs) const {
    Json body = {{"model", cfg_.model},
                 {"messages", Json::array({Json{{"role", "system"}, {"content", prompt.system}},
                                           Json{{"role", "user"}, {"content", prompt.user}}})},
                 {"max_tokens", cfg_.max_tokens},
                 {"temperature", params.temperature}};
    if (!params.is_greedy()) {
      body["top_p"] = params.top_p;
      if (cfg_.send_top_k && params.top_k) body["top_k"] = *params.top_k;
    }
    if (params.seed) body["seed"] = *params.seed;
    if (want_logprobs) body["logprobs"] = true;
    return body;
  }

  const UsageCounters& usage() const { return usage_; }
  const GenerationConfig& config() const { return cfg_; }

 private:
  ReasoningTrace complete(const Prompt& prompt, const SamplingParams& params, bool want_logprobs) {
    http::RequestOptions opts;
    opts.timeout = cfg_.request_timeout;
    opts.retry = {cfg_.max_retries, cfg_.backoff_base, 2.0, http::Jitter::Full, true};
    http::set_bearer(opts.headers, cfg_.api_key);
    opts.on_attempt = [this](int attempt) {
      ++usage_.requests;
      if (attempt > 0) ++usage_.retried;
    };

    const http::Outcome outcome = http::post_json(target_, "/v1/chat/completions", request_body(prompt, params, want_logprobs).dump(), opts);
    if (!outcome.ok()) {
      ++usage_.failed;
      throw Error(ErrorCode::EndpointError, outcome.describe() + " after " + std::to_string(outcome.attempts) + " attempt(s)");
    }
    try {
      return parse_completion(Json::parse(outcome.body), params);
    } catch (const Json::exception& e) {
      ++usage_.failed;
      throw Error(ErrorCode::EndpointError, std::string("malformed completion: ") + e.what());
    } catch (const Error&) {
      ++usage_.failed;
      throw;
    }
  }

  ReasoningTrace parse_completion(const Json& reply, const SamplingParams& params) {
    if (!reply.is_object() || !reply.contains("choices") || !reply["choices"].is_array() || reply["choices"].empty())
      throw Error(ErrorCode::EndpointError, "completion has no choices");
    const Json& choice = reply["choices"][0];
    std::string text;
    if (choice.contains("message") && choice["message"].is_object()) {
      const Json& content = choice["message"].value("content", Json());
      if (content.is_string()) text = content.get<std::string>();
    } else {
      throw Error(ErrorCode::EndpointError, "completion choice has no message");
    }

    std::optional<TokenLogProbs> logprobs;
    std::optional<std::vector<std::string>> tokens;
    if (auto lp = choice.find("logprobs"); lp != choice.end() && lp->is_object()) {
      if (auto content = lp->find("content"); content != lp->end() && content->is_array() && !content->empty()) {
        TokenLogProbs values;
        std::vector<std::string> toks;
        bool have_tokens = true;
        for (const auto& entry : *content) {
          values.push_back(entry.at("logprob").get<double>());
          if (entry.contains("token") && entry["token"].is_string()) {
            toks.push_back(entry["token"].get<std::string>());
          } else {
            have_tokens = false;
          }
        }
        logprobs = std::move(values);
        if (have_tokens) tokens = std::move(toks);
      }
    }

    if (auto usage = reply.find("usage"); usage != reply.end() && usage->is_object()) {
      usage_.prompt_tokens += usage->value("prompt_tokens", std::uint64_t{0});
      usage_.completion_tokens += usage->value("completion_tokens", std::uint64_t{0});
    }
    return ReasoningTrace::from_text(std::move(text), params, std::move(logprobs), std::move(tokens));
  }

  GenerationConfig cfg_;
  http::Target target_;
  UsageCounters usage_;
};

struct GenerationFailure {
  std::string query_id;
  std::string error;
};

struct GenerationReport {
  UsageSnapshot usage;
  std::vector<GenerationFailure> failures;
  std::vector<std::string> missing_logprobs;
  DatasetManifest manifest;
};

/// Generates bundles for every query and writes them in query order.
/// Queries whose requests fail after retries are recorded and skipped.
inline GenerationReport generate_dataset(const GenerationConfig& cfg, std::span<const QueryTuple> queries,
                                         std::ostream& out, std::size_t chunk_size = 256) {
  GenerationClient client(cfg);
  GenerationReport report;

  struct Slot {
    std::optional<GeneratedBundle> bundle;
    std::string error;
  };

  for (std::size_t begin = 0; begin < queries.size(); begin += chunk_size) {
    const std::size_t end = std::min(queries.size(), begin + chunk_size);
    auto slots = parallel_map(end - begin, cfg.max_in_flight, [&](std::size_t i) {
      Slot slot;
      try {
        slot.bundle = client.generate_bundle(queries[begin + i]);
      } catch (const Error& e) {
        slot.error = e.what();
      }
      return slot;
    });
    for (std::size_t i = 0; i < slots.size(); ++i) {
      const QueryTuple& q = queries[begin + i];
      if (!slots[i].bundle) {
        report.failures.push_back({q.id, slots[i].error});
        continue;
      }
      const GeneratedBundle& g = *slots[i].bundle;
      const std::string line = to_jsonl_line(g.bundle);
      out.write(line.data(), static_cast<std::streamsize>(line.size()));
      out.put('\n');
      if (!out) throw Error(ErrorCode::IoError, "write of generated bundles failed");
      if (g.missing_logprobs) report.missing_logprobs.push_back(q.id);
      if (g.bundle.greedy.answer) {
        report.manifest.count(*g.bundle.greedy.answer);
      } else {
        ++report.manifest.rejected;
      }
    }
  }

  report.usage = client.usage().snapshot();
  report.manifest.created_at = utc_timestamp();
  Json failures = Json::array();
  for (const auto& f : report.failures) failures.push_back({{"id", f.query_id}, {"error", f.error}});
  report.manifest.details["failures"] = std::move(failures);
  report.manifest.details["missing_logprobs"] = report.missing_logprobs;
  report.manifest.details["usage"] = to_json(report.usage);
  return report;
}

}  // namespace curator
