#pragma once

#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "curator/core.hpp"
#include "curator/manifest.hpp"
#include "curator/parallel.hpp"
#include "curator/serialization.hpp"
#include "curator/similarity.hpp"

namespace curator {

/// Log-probabilities above zero by less than this are accepted as rounding noise.
inline constexpr double kLogProbTolerance = 1e-9;

/// exp of the mean negative log-likelihood over all tokens; always >= 1.
inline double perplexity(std::span<const double> logprobs) {
  if (logprobs.empty()) throw Error(ErrorCode::EmptyLogProbs, "perplexity of an empty token sequence");
  double nll = 0.0;
  for (std::size_t t = 0; t < logprobs.size(); ++t) {
    const double lp = logprobs[t];
    if (std::isnan(lp) || std::isinf(lp))
      throw Error(ErrorCode::InvalidLogProb, "token " + std::to_string(t) + " has non-finite log-probability");
    if (lp > kLogProbTolerance)
      throw Error(ErrorCode::PositiveLogProb, "token " + std::to_string(t) + " has log-probability " + std::to_string(lp));
    nll -= std::min(lp, 0.0);
  }
  return std::max(1.0, std::exp(nll / static_cast<double>(logprobs.size())));
}

/// Which tokens of r0 enter the perplexity.
enum class PerplexityScope {
  FullTrace,   // every generated token (reasoning and answer)
  AnswerSpan,  // only tokens overlapping the final <answer> content; needs token strings
};

inline PerplexityScope parse_perplexity_scope(std::string_view s) {
  if (s == "full") return PerplexityScope::FullTrace;
  if (s == "answer") return PerplexityScope::AnswerSpan;
  throw Error(ErrorCode::InvalidConfig, "unknown perplexity scope '" + std::string(s) + "'");
}

/// Log-probabilities of the tokens whose characters overlap the answer content.
inline TokenLogProbs answer_span_logprobs(const ReasoningTrace& trace) {
  if (!trace.token_logprobs || !trace.tokens)
    throw Error(ErrorCode::MissingLogProbs, "answer-span perplexity needs log-probabilities and token strings");
  const auto& lps = *trace.token_logprobs;
  const auto& toks = *trace.tokens;
  if (lps.size() != toks.size()) throw Error(ErrorCode::InvalidLogProb, "tokens and log-probabilities differ in length");

  std::string joined;
  for (const auto& t : toks) joined += t;
  const AnswerParse span = extract_answer(joined);
  if (span.status == ParseStatus::MissingAnswerTag) throw Error(ErrorCode::UnparsedTrace, "no answer span in tokens");

  TokenLogProbs out;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    const std::size_t begin = pos;
    pos += toks[i].size();
    if (pos > span.content_begin && begin < span.content_end) out.push_back(lps[i]);
  }
  return out;
}

inline double trace_perplexity(const ReasoningTrace& trace, PerplexityScope scope = PerplexityScope::FullTrace) {
  if (scope == PerplexityScope::AnswerSpan) return perplexity(answer_span_logprobs(trace));
  if (!trace.token_logprobs) throw Error(ErrorCode::MissingLogProbs, "trace has no log-probabilities");
  return perplexity(*trace.token_logprobs);
}

/// Mean dissimilarity (1/k) sum(1 - sim(r0, r_i)) over the k samples.
inline double inconsistency(const TraceBundle& bundle, const SimilarityProvider& provider) {
  if (bundle.samples.empty()) throw Error(ErrorCode::NoSamples, "bundle '" + bundle.query.id + "' has no sampled traces");
  const std::vector<double> sims = provider.score(bundle.greedy, bundle.samples);
  if (sims.size() != bundle.samples.size())
    throw Error(ErrorCode::ProtocolError, std::string(provider.name()) + " returned the wrong number of similarities");
  double sum = 0.0;
  for (double s : sims) sum += 1.0 - clamp01(s);
  return clamp01(sum / static_cast<double>(sims.size()));
}

/// Hybrid uncertainty 2 * inconsistency * perplexity; higher is more uncertain.
inline double cocoa(double inconsistency, double ppl) { return 2.0 * inconsistency * ppl; }

inline bool needs_perplexity(MetricVariant v) { return v != MetricVariant::ConsistencyOnly; }

/// The value a filter ranks by under `variant`; nullopt when it was not computed.
inline std::optional<double> ranking_score(const UncertaintyScores& s, MetricVariant variant) {
  switch (variant) {
    case MetricVariant::Cocoa: return s.cocoa;
    case MetricVariant::PerplexityOnly: return s.ppl;
    case MetricVariant::ConsistencyOnly: return s.inconsistency;
  }
  return std::nullopt;
}

struct ScoringOptions {
  MetricVariant variant = MetricVariant::Cocoa;
  PerplexityScope scope = PerplexityScope::FullTrace;
};

inline ScoredExample score_bundle(const TraceBundle& bundle, const SimilarityProvider& provider,
                                  const ScoringOptions& options = {}) {
  if (!bundle.greedy.parsed())
    throw Error(ErrorCode::UnparsedTrace, "greedy trace of '" + bundle.query.id + "' has no parsed answer");
  if (bundle.samples.empty()) throw Error(ErrorCode::NoSamples, "bundle '" + bundle.query.id + "' has no sampled traces");

  ScoredExample out;
  out.bundle = bundle;
  out.scores.variant = options.variant;
  if (needs_perplexity(options.variant)) {
    out.scores.ppl = trace_perplexity(bundle.greedy, options.scope);
  } else if (bundle.greedy.token_logprobs) {
    // Reporting only; a consistency ranking never fails for want of a perplexity.
    try {
      out.scores.ppl = trace_perplexity(bundle.greedy, options.scope);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::MissingLogProbs) throw;
    }
  }
  out.scores.inconsistency = inconsistency(bundle, provider);
  if (out.scores.ppl) out.scores.cocoa = cocoa(out.scores.inconsistency, *out.scores.ppl);
  return out;
}

inline ScoredExample score_bundle(const TraceBundle& bundle, const SimilarityProvider& provider, MetricVariant variant) {
  return score_bundle(bundle, provider, ScoringOptions{variant, PerplexityScope::FullTrace});
}

struct DatasetScoringOptions {
  ScoringOptions scoring;
  std::size_t workers = 1;
  std::size_t chunk_size = 512;  // bundles held in memory at once
};

/// Scores a bundle JSONL stream into a scored JSONL stream.
///
/// Output order equals input order for any worker count. Bundles that cannot
/// be scored (unparsed greedy answer, no samples, unparsed sample under
/// answer agreement) are dropped and tallied under manifest.rejected. A bundle
/// without the log-probabilities its variant needs is a hard error; all such
/// ids are collected and reported once the stream is exhausted.
inline DatasetManifest score_dataset(std::istream& in, std::ostream& out, const SimilarityProvider& provider,
                                     const DatasetScoringOptions& options = {}) {
  DatasetManifest manifest;
  std::map<std::string, std::size_t> rejected_by_reason;
  std::vector<std::string> missing_logprobs;
  std::unordered_set<std::string> seen_ids;

  struct Slot {
    std::optional<ScoredExample> scored;
    std::string rejected_reason;
    bool missing_logprobs = false;
  };

  JsonlReader reader(in);
  std::vector<TraceBundle> chunk;
  std::string line;

  auto flush = [&] {
    auto slots = parallel_map(chunk.size(), options.workers, [&](std::size_t i) {
      Slot slot;
      const TraceBundle& b = chunk[i];
      if (!b.greedy.parsed()) {
        slot.rejected_reason = "unparsed_greedy";
        return slot;
      }
      if (b.samples.empty()) {
        slot.rejected_reason = "no_samples";
        return slot;
      }
      try {
        slot.scored = score_bundle(b, provider, options.scoring);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::MissingLogProbs) {
          slot.missing_logprobs = true;
        } else if (e.code() == ErrorCode::UnparsedTrace) {
          slot.rejected_reason = "unparsed_sample";
        } else {
          throw Error(e.code(), "query '" + b.query.id + "': " + e.message());
        }
      }
      return slot;
    });
    for (std::size_t i = 0; i < slots.size(); ++i) {
      Slot& slot = slots[i];
      if (slot.scored) {
        const std::string encoded = to_jsonl_line(*slot.scored);
        out.write(encoded.data(), static_cast<std::streamsize>(encoded.size()));
        out.put('\n');
        manifest.count(slot.scored->predicted_label());
      } else if (slot.missing_logprobs) {
        missing_logprobs.push_back(chunk[i].query.id);
      } else {
        ++manifest.rejected;
        ++rejected_by_reason[slot.rejected_reason];
      }
    }
    if (!out) throw Error(ErrorCode::IoError, "write of scored output failed");
    chunk.clear();
  };

  while (reader.next(line)) {
    try {
      TraceBundle b = parse_bundle_line(line);
      if (!seen_ids.insert(b.query.id).second) throw Error(ErrorCode::ParseError, "duplicate query id '" + b.query.id + "'");
      chunk.push_back(std::move(b));
    } catch (const Error& e) {
      throw Error(e.code(), "line " + std::to_string(reader.line_number()) + ": " + e.message());
    }
    if (chunk.size() >= options.chunk_size) flush();
  }
  flush();

  if (!missing_logprobs.empty()) {
    std::string ids;
    for (std::size_t i = 0; i < missing_logprobs.size() && i < 20; ++i) ids += (i ? ", " : "") + missing_logprobs[i];
    if (missing_logprobs.size() > 20) ids += ", ... (" + std::to_string(missing_logprobs.size()) + " total)";
    throw Error(ErrorCode::MissingLogProbs,
                "variant '" + std::string(to_string(options.scoring.variant)) + "' needs greedy log-probabilities; missing for: " + ids);
  }

  manifest.created_at = utc_timestamp();
  manifest.details["provider"] = std::string(provider.name());
  manifest.details["variant"] = std::string(to_string(options.scoring.variant));
  manifest.details["perplexity_scope"] = options.scoring.scope == PerplexityScope::FullTrace ? "full" : "answer";
  Json reasons = Json::object();
  for (const auto& [reason, n] : rejected_by_reason) reasons[reason] = n;
  manifest.details["rejected_by_reason"] = std::move(reasons);
  return manifest;
}

}  // namespace curator
