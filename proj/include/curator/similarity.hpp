#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "curator/core.hpp"
#include "curator/http.hpp"
#include "curator/serialization.hpp"

namespace curator {

inline double clamp01(double x) {
  if (std::isnan(x)) return 0.0;
  return std::clamp(x, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Lexical cosine
// ---------------------------------------------------------------------------

namespace detail {

// Decodes one UTF-8 code point at s[i], advancing i. Malformed bytes decode
// to themselves (as a Latin-1 code point) so the tokenizer stays total.
inline char32_t next_code_point(std::string_view s, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  auto cont = [&](std::size_t k) -> int {
    if (i + k >= s.size()) return -1;
    const auto b = static_cast<unsigned char>(s[i + k]);
    return (b & 0xC0) == 0x80 ? (b & 0x3F) : -1;
  };
  if (b0 < 0x80) {
    ++i;
    return b0;
  }
  int len = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    ++i;
    return b0;
  }
  for (int k = 1; k < len; ++k) {
    const int c = cont(static_cast<std::size_t>(k));
    if (c < 0) {
      ++i;
      return b0;
    }
    cp = (cp << 6) | static_cast<char32_t>(c);
  }
  i += static_cast<std::size_t>(len);
  return cp;
}

// Whitespace and punctuation that separate words: all ASCII non-alphanumerics,
// Latin-1 punctuation, the General Punctuation block, CJK punctuation, and
// fullwidth ASCII punctuation.
inline bool is_separator(char32_t cp) {
  if (cp < 0x80) {
    const bool alnum = (cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
    return !alnum;
  }
  if (cp <= 0xBF) return cp != 0xAA && cp != 0xB2 && cp != 0xB3 && cp != 0xB5 && cp != 0xB9 && cp != 0xBA;
  if (cp == 0xD7 || cp == 0xF7) return true;
  if (cp == 0x1680 || cp == 0xFEFF) return true;
  if (cp >= 0x2000 && cp <= 0x206F) return true;
  if (cp >= 0x3000 && cp <= 0x303F) return true;
  if ((cp >= 0xFF01 && cp <= 0xFF0F) || (cp >= 0xFF1A && cp <= 0xFF20) || (cp >= 0xFF3B && cp <= 0xFF40) ||
      (cp >= 0xFF5B && cp <= 0xFF65))
    return true;
  return false;
}

}  // namespace detail

/// Term-frequency vector; ordered so every reduction runs in a fixed order.
using TermCounts = std::map<std::string, std::uint64_t, std::less<>>;

/// Lowercases ASCII letters and splits on whitespace and punctuation.
inline TermCounts term_counts(std::string_view text) {
  TermCounts counts;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) {
      ++counts[word];
      word.clear();
    }
  };
  for (std::size_t i = 0; i < text.size();) {
    const std::size_t start = i;
    const char32_t cp = detail::next_code_point(text, i);
    if (detail::is_separator(cp)) {
      flush();
    } else if (cp < 0x80) {
      word.push_back(detail::ascii_lower(static_cast<char>(cp)));
    } else {
      word.append(text.substr(start, i - start));
    }
  }
  flush();
  return counts;
}

/// Cosine of two count vectors. Dot products and norms are exact integers.
inline double cosine(const TermCounts& a, const TermCounts& b) {
  if (a.empty() && b.empty()) return 1.0;
  if (a.empty() || b.empty()) return 0.0;
  std::uint64_t dot = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (ia->first < ib->first) {
      ++ia;
    } else if (ib->first < ia->first) {
      ++ib;
    } else {
      dot += ia->second * ib->second;
      ++ia;
      ++ib;
    }
  }
  std::uint64_t na = 0;
  std::uint64_t nb = 0;
  for (const auto& [_, c] : a) na += c * c;
  for (const auto& [_, c] : b) nb += c * c;
  const double denom = std::sqrt(static_cast<double>(na)) * std::sqrt(static_cast<double>(nb));
  return clamp01(static_cast<double>(dot) / denom);
}

/// Bag-of-words cosine similarity. Empty-vs-empty is 1; empty-vs-nonempty is 0.
inline double lexical_cosine(std::string_view a, std::string_view b) { return cosine(term_counts(a), term_counts(b)); }

/// 1 when both traces parsed to the same class, 0 otherwise.
inline double answer_agreement(const ReasoningTrace& a, const ReasoningTrace& b) {
  if (!a.parsed() || !b.parsed() || !a.answer || !b.answer)
    throw Error(ErrorCode::UnparsedTrace, "answer agreement needs two parsed traces");
  return *a.answer == *b.answer ? 1.0 : 0.0;
}

// ---------------------------------------------------------------------------
// Providers
// ---------------------------------------------------------------------------

/// Scores how similar each candidate trace is to a reference trace (always r0).
/// Implementations must be callable concurrently and return values in [0, 1].
class SimilarityProvider {
 public:
  virtual ~SimilarityProvider() = default;
  virtual std::string_view name() const = 0;
  virtual std::vector<double> score(const ReasoningTrace& reference,
                                    std::span<const ReasoningTrace> candidates) const = 0;
};

class LexicalCosineProvider final : public SimilarityProvider {
 public:
  std::string_view name() const override { return "lexical"; }

  std::vector<double> score(const ReasoningTrace& reference, std::span<const ReasoningTrace> candidates) const override {
    const TermCounts ref = term_counts(reference.text);
    std::vector<double> out;
    out.reserve(candidates.size());
    for (const auto& c : candidates) out.push_back(cosine(ref, term_counts(c.text)));
    return out;
  }
};

class AnswerAgreementProvider final : public SimilarityProvider {
 public:
  std::string_view name() const override { return "answer"; }

  std::vector<double> score(const ReasoningTrace& reference, std::span<const ReasoningTrace> candidates) const override {
    std::vector<double> out;
    out.reserve(candidates.size());
    for (const auto& c : candidates) out.push_back(answer_agreement(reference, c));
    return out;
  }
};

struct RemoteScorerConfig {
  std::string base_url;
  std::string api_key;
  std::chrono::milliseconds timeout{30000};
  int max_retries = 3;
  std::size_t max_batch = 32;
  std::size_t max_in_flight = 8;
  std::chrono::milliseconds backoff_base{250};
};

inline void validate(const RemoteScorerConfig& cfg) {
  if (cfg.base_url.empty()) throw Error(ErrorCode::InvalidConfig, "scorer base_url is empty");
  if (cfg.max_retries < 0) throw Error(ErrorCode::InvalidConfig, "scorer max_retries must be >= 0");
  if (cfg.max_batch < 1) throw Error(ErrorCode::InvalidConfig, "scorer max_batch must be >= 1");
  if (cfg.max_in_flight < 1) throw Error(ErrorCode::InvalidConfig, "scorer max_in_flight must be >= 1");
  http::parse_base_url(cfg.base_url);
}

using TextPair = std::pair<std::string, std::string>;

/// Cross-encoder behind HTTP: POST {base_url}/score with {"pairs":[[a,b],...]},
/// expecting {"scores":[...]} of equal length and order.
class RemoteScorer final : public SimilarityProvider {
 public:
  explicit RemoteScorer(RemoteScorerConfig cfg)
      : cfg_(std::move(cfg)),
        target_((validate(cfg_), http::parse_base_url(cfg_.base_url))),
        in_flight_(std::make_shared<std::counting_semaphore<>>(static_cast<std::ptrdiff_t>(cfg_.max_in_flight))) {}

  std::string_view name() const override { return "remote"; }

  std::vector<double> score(const ReasoningTrace& reference, std::span<const ReasoningTrace> candidates) const override {
    std::vector<TextPair> pairs;
    pairs.reserve(candidates.size());
    for (const auto& c : candidates) pairs.emplace_back(reference.text, c.text);
    return score_pairs(pairs);
  }

  /// Chunks into max_batch-sized requests; results keep input order.
  std::vector<double> score_pairs(std::span<const TextPair> pairs) const {
    if (pairs.empty()) throw Error(ErrorCode::InvalidArgument, "no pairs to score");
    for (const auto& [a, b] : pairs)
      if (a.empty() || b.empty()) throw Error(ErrorCode::InvalidArgument, "pair strings must be non-empty");

    std::vector<double> out;
    out.reserve(pairs.size());
    for (std::size_t begin = 0; begin < pairs.size(); begin += cfg_.max_batch) {
      const std::size_t end = std::min(pairs.size(), begin + cfg_.max_batch);
      auto chunk = post_chunk(pairs.subspan(begin, end - begin));
      out.insert(out.end(), chunk.begin(), chunk.end());
    }
    return out;
  }

  const RemoteScorerConfig& config() const { return cfg_; }

 private:
  std::vector<double> post_chunk(std::span<const TextPair> chunk) const {
    Json body = {{"pairs", Json::array()}};
    for (const auto& [a, b] : chunk) body["pairs"].push_back(Json::array({a, b}));

    http::RequestOptions opts;
    opts.timeout = cfg_.timeout;
    opts.retry = {cfg_.max_retries, cfg_.backoff_base, 2.0, http::Jitter::Equal, false};
    http::set_bearer(opts.headers, cfg_.api_key);

    http::Outcome outcome;
    {
      in_flight_->acquire();
      struct Release {
        std::counting_semaphore<>& s;
        ~Release() { s.release(); }
      } release{*in_flight_};
      outcome = http::post_json(target_, "/score", body.dump(), opts);
    }

    if (!outcome.ok()) {
      const bool exhausted = !outcome.status || http::is_retryable_status(*outcome.status, opts.retry);
      std::string detail = outcome.describe();
      if (outcome.status) {
        try {
          const Json err = Json::parse(outcome.body);
          if (err.is_object() && err.contains("error") && err["error"].is_string()) detail = "HTTP " + std::to_string(*outcome.status) + ": " + err["error"].get<std::string>();
        } catch (const Json::exception&) {
        }
      }
      if (exhausted)
        throw Error(ErrorCode::ServiceUnavailable, cfg_.base_url + " after " + std::to_string(outcome.attempts) + " attempt(s): " + detail);
      throw Error(ErrorCode::ProtocolError, "scorer rejected request: " + detail);
    }

    Json reply;
    try {
      reply = Json::parse(outcome.body);
    } catch (const Json::parse_error&) {
      throw Error(ErrorCode::ProtocolError, "scorer reply is not JSON");
    }
    if (!reply.is_object() || !reply.contains("scores") || !reply["scores"].is_array())
      throw Error(ErrorCode::ProtocolError, "scorer reply lacks a 'scores' array");
    const Json& scores = reply["scores"];
    if (scores.size() != chunk.size())
      throw Error(ErrorCode::ProtocolError, "scorer returned " + std::to_string(scores.size()) + " scores for " +
                                                std::to_string(chunk.size()) + " pairs");
    std::vector<double> out;
    out.reserve(scores.size());
    for (const auto& s : scores) {
      if (!s.is_number()) throw Error(ErrorCode::ProtocolError, "non-numeric score " + s.dump());
      out.push_back(clamp01(s.get<double>()));
    }
    return out;
  }

  RemoteScorerConfig cfg_;
  http::Target target_;
  std::shared_ptr<std::counting_semaphore<>> in_flight_;
};

inline std::vector<double> remote_score_batch(const RemoteScorerConfig& cfg, std::span<const TextPair> pairs) {
  return RemoteScorer(cfg).score_pairs(pairs);
}

}  // namespace curator
