#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "curator/error.hpp"

namespace curator {

// ---------------------------------------------------------------------------
// Class labels
// ---------------------------------------------------------------------------

enum class ClassLabel : std::uint8_t { Up = 0, Down = 1, NonRegulated = 2 };

inline constexpr std::size_t kNumClasses = 3;
inline constexpr std::array<ClassLabel, kNumClasses> kAllClasses = {
    ClassLabel::Up, ClassLabel::Down, ClassLabel::NonRegulated};

constexpr std::size_t index_of(ClassLabel label) { return static_cast<std::size_t>(label); }

/// Canonical serialization string; the same vocabulary the prompt offers.
constexpr std::string_view to_string(ClassLabel label) {
  switch (label) {
    case ClassLabel::Up: return "upregulated";
    case ClassLabel::Down: return "downregulated";
    case ClassLabel::NonRegulated: return "not differentially expressed";
  }
  return "";
}

/// Short column prefix used in CSV headers.
constexpr std::string_view short_name(ClassLabel label) {
  switch (label) {
    case ClassLabel::Up: return "up";
    case ClassLabel::Down: return "down";
    case ClassLabel::NonRegulated: return "nonreg";
  }
  return "";
}

namespace detail {

constexpr bool is_ascii_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

constexpr char ascii_lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && is_ascii_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_ascii_space(s.back())) s.remove_suffix(1);
  return s;
}

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = ascii_lower(c);
  return out;
}

}  // namespace detail

/// Non-throwing variant of parse_class_label.
inline std::optional<ClassLabel> try_parse_class_label(std::string_view s) {
  const std::string norm = detail::to_lower(detail::trim(s));
  if (norm == "upregulated" || norm == "up") return ClassLabel::Up;
  if (norm == "downregulated" || norm == "down") return ClassLabel::Down;
  if (norm == "not differentially expressed" || norm == "non-regulated" || norm == "nonregulated")
    return ClassLabel::NonRegulated;
  return std::nullopt;
}

/// Parses a class label after trimming ASCII whitespace and lowercasing.
/// Accepts the canonical strings and the short aliases up / down / non-regulated.
inline ClassLabel parse_class_label(std::string_view s) {
  if (auto label = try_parse_class_label(s)) return *label;
  throw Error(ErrorCode::UnknownAnswerString, "'" + std::string(s) + "' is not a class label");
}

// ---------------------------------------------------------------------------
// Answer extraction
// ---------------------------------------------------------------------------

enum class ParseStatus : std::uint8_t { Ok, MissingAnswerTag, UnknownAnswerString };

constexpr std::string_view to_string(ParseStatus status) {
  switch (status) {
    case ParseStatus::Ok: return "ok";
    case ParseStatus::MissingAnswerTag: return "missing_answer_tag";
    case ParseStatus::UnknownAnswerString: return "unknown_answer_string";
  }
  return "";
}

struct AnswerParse {
  std::optional<ClassLabel> label;
  ParseStatus status = ParseStatus::MissingAnswerTag;
  /// Byte range of the span content inside the source text (valid when a span was found).
  std::size_t content_begin = 0;
  std::size_t content_end = 0;
};

namespace detail {

// ASCII case-insensitive search for `needle` in `hay` ending at or before `limit`.
inline std::size_t rfind_icase(std::string_view hay, std::string_view needle, std::size_t limit) {
  if (needle.size() > hay.size()) return std::string_view::npos;
  std::size_t start = std::min(limit, hay.size());
  if (start < needle.size()) return std::string_view::npos;
  for (std::size_t pos = start - needle.size() + 1; pos-- > 0;) {
    bool match = true;
    for (std::size_t i = 0; i < needle.size(); ++i) {
      if (ascii_lower(hay[pos + i]) != needle[i]) {
        match = false;
        break;
      }
    }
    if (match) return pos;
  }
  return std::string_view::npos;
}

}  // namespace detail

/// Finds the last well-formed <answer>...</answer> span and parses its content.
///
/// "Last well-formed" is the closing tag that appears last together with the
/// nearest opening tag before it, so a dangling trailing <answer> is ignored
/// and nested openings resolve to the innermost pair. Tags match ASCII
/// case-insensitively. Never throws.
inline AnswerParse extract_answer(std::string_view text) {
  static constexpr std::string_view kOpen = "<answer>";
  static constexpr std::string_view kClose = "</answer>";

  AnswerParse result;
  const std::size_t close = detail::rfind_icase(text, kClose, text.size());
  if (close == std::string_view::npos) return result;
  const std::size_t open = detail::rfind_icase(text, kOpen, close);
  if (open == std::string_view::npos) return result;

  result.content_begin = open + kOpen.size();
  result.content_end = close;
  result.label = try_parse_class_label(text.substr(result.content_begin, close - result.content_begin));
  result.status = result.label ? ParseStatus::Ok : ParseStatus::UnknownAnswerString;
  return result;
}

// ---------------------------------------------------------------------------
// Queries, traces, bundles
// ---------------------------------------------------------------------------

struct QueryTuple {
  std::string id;
  std::string cell_type;
  std::string perturbation;
  std::string gene;
  std::optional<ClassLabel> gold_label;

  bool operator==(const QueryTuple&) const = default;
};

/// Throws InvalidArgument when a required field is empty.
inline void validate(const QueryTuple& q) {
  if (q.id.empty()) throw Error(ErrorCode::InvalidArgument, "query id is empty");
  if (q.cell_type.empty() || q.perturbation.empty() || q.gene.empty())
    throw Error(ErrorCode::InvalidArgument, "query '" + q.id + "' has an empty field");
}

struct SamplingParams {
  double temperature = 0.0;
  double top_p = 1.0;
  std::optional<std::int64_t> top_k;  // nullopt means unlimited
  std::optional<std::int64_t> seed;

  bool is_greedy() const { return temperature == 0.0; }
  bool operator==(const SamplingParams&) const = default;

  static SamplingParams greedy() { return {}; }
};

inline void validate(const SamplingParams& p) {
  if (!(p.temperature >= 0.0)) throw Error(ErrorCode::InvalidConfig, "temperature must be >= 0");
  if (!(p.top_p > 0.0 && p.top_p <= 1.0)) throw Error(ErrorCode::InvalidConfig, "top_p must lie in (0, 1]");
  if (p.top_k && *p.top_k < 1) throw Error(ErrorCode::InvalidConfig, "top_k must be positive");
}

/// Natural-log probabilities of generated tokens, in nats.
using TokenLogProbs = std::vector<double>;

struct ReasoningTrace {
  std::string text;
  std::optional<ClassLabel> answer;
  ParseStatus parse_status = ParseStatus::MissingAnswerTag;
  std::optional<TokenLogProbs> token_logprobs;
  /// Token strings aligned with token_logprobs, when the endpoint returned them.
  std::optional<std::vector<std::string>> tokens;
  SamplingParams sampling;

  bool is_greedy() const { return sampling.is_greedy(); }
  bool parsed() const { return parse_status == ParseStatus::Ok; }
  bool operator==(const ReasoningTrace&) const = default;

  /// Builds a trace whose answer and parse status come from the text.
  static ReasoningTrace from_text(std::string text, SamplingParams sampling,
                                  std::optional<TokenLogProbs> logprobs = std::nullopt,
                                  std::optional<std::vector<std::string>> tokens = std::nullopt) {
    ReasoningTrace trace;
    const AnswerParse parse = extract_answer(text);
    trace.text = std::move(text);
    trace.answer = parse.label;
    trace.parse_status = parse.status;
    trace.token_logprobs = std::move(logprobs);
    trace.tokens = std::move(tokens);
    trace.sampling = sampling;
    return trace;
  }
};

struct TraceBundle {
  QueryTuple query;
  ReasoningTrace greedy;
  std::vector<ReasoningTrace> samples;

  std::size_t k() const { return samples.size(); }
  bool scoreable() const { return !samples.empty() && greedy.parsed(); }
  bool operator==(const TraceBundle&) const = default;
};

// ---------------------------------------------------------------------------
// Scores
// ---------------------------------------------------------------------------

enum class MetricVariant : std::uint8_t { Cocoa, PerplexityOnly, ConsistencyOnly };

constexpr std::string_view to_string(MetricVariant v) {
  switch (v) {
    case MetricVariant::Cocoa: return "cocoa";
    case MetricVariant::PerplexityOnly: return "ppl";
    case MetricVariant::ConsistencyOnly: return "consistency";
  }
  return "";
}

inline MetricVariant parse_metric_variant(std::string_view s) {
  if (s == "cocoa") return MetricVariant::Cocoa;
  if (s == "ppl" || s == "perplexity") return MetricVariant::PerplexityOnly;
  if (s == "consistency") return MetricVariant::ConsistencyOnly;
  throw Error(ErrorCode::InvalidArgument, "unknown metric variant '" + std::string(s) + "'");
}

struct UncertaintyScores {
  std::optional<double> ppl;  // absent only for ConsistencyOnly without log-probs
  double inconsistency = 0.0;
  std::optional<double> cocoa;  // present whenever ppl is
  MetricVariant variant = MetricVariant::Cocoa;

  bool operator==(const UncertaintyScores&) const = default;
};

struct ScoredExample {
  TraceBundle bundle;
  UncertaintyScores scores;

  /// r0's answer. Scored examples always carry a parsed greedy trace.
  ClassLabel predicted_label() const {
    if (!bundle.greedy.answer) throw Error(ErrorCode::UnparsedTrace, "query '" + bundle.query.id + "'");
    return *bundle.greedy.answer;
  }
  const std::string& id() const { return bundle.query.id; }
  bool operator==(const ScoredExample&) const = default;
};

}  // namespace curator
