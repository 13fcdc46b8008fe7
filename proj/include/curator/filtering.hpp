#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "curator/core.hpp"
#include "curator/metrics.hpp"
#include "curator/rng.hpp"
#include "curator/uncertainty.hpp"

namespace curator {

enum class FilterStrategy { PerClass, Global, RandomUniform, RandomStratified };

constexpr std::string_view to_string(FilterStrategy s) {
  switch (s) {
    case FilterStrategy::PerClass: return "per-class";
    case FilterStrategy::Global: return "global";
    case FilterStrategy::RandomUniform: return "random";
    case FilterStrategy::RandomStratified: return "random-stratified";
  }
  return "";
}

inline FilterStrategy parse_filter_strategy(std::string_view s) {
  if (s == "per-class") return FilterStrategy::PerClass;
  if (s == "global") return FilterStrategy::Global;
  if (s == "random") return FilterStrategy::RandomUniform;
  if (s == "random-stratified") return FilterStrategy::RandomStratified;
  throw Error(ErrorCode::InvalidArgument, "unknown filter strategy '" + std::string(s) + "'");
}

constexpr bool is_random(FilterStrategy s) {
  return s == FilterStrategy::RandomUniform || s == FilterStrategy::RandomStratified;
}

struct FilterSpec {
  FilterStrategy strategy = FilterStrategy::PerClass;
  double fraction = 0.1;
  MetricVariant ranking_key = MetricVariant::Cocoa;
  std::optional<std::uint64_t> seed;
};

inline void validate(const FilterSpec& spec) {
  if (!(spec.fraction > 0.0 && spec.fraction <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "fraction must lie in (0, 1], got " + format_double(spec.fraction));
  if (is_random(spec.strategy) && !spec.seed) throw Error(ErrorCode::InvalidArgument, "random strategies need a seed");
  if (!is_random(spec.strategy) && spec.seed)
    throw Error(ErrorCode::InvalidArgument, "seed is only meaningful for random strategies");
}

/// floor(fraction * n), at least 1 for a non-empty group. The 1e-9 slack keeps
/// products such as 0.29 * 100 from flooring to 28 through rounding error.
inline std::size_t retention_count(double fraction, std::size_t n) {
  if (n == 0) return 0;
  const auto kept = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
  return std::clamp<std::size_t>(kept, 1, n);
}

namespace detail {

inline double require_score(const ScoredExample& e, MetricVariant key) {
  const auto s = ranking_score(e.scores, key);
  if (!s) throw Error(ErrorCode::MissingScore, "example '" + e.id() + "' has no " + std::string(to_string(key)) + " score");
  if (std::isnan(*s)) throw Error(ErrorCode::MissingScore, "example '" + e.id() + "' has a NaN score");
  return *s;
}

/// Indices sorted ascending by (score, query id).
inline std::vector<std::size_t> rank(std::span<const ScoredExample> scored, std::span<const std::size_t> indices,
                                     MetricVariant key) {
  std::vector<std::pair<double, std::size_t>> keyed;
  keyed.reserve(indices.size());
  for (std::size_t i : indices) keyed.emplace_back(require_score(scored[i], key), i);
  std::sort(keyed.begin(), keyed.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return scored[a.second].id() < scored[b.second].id();
  });
  std::vector<std::size_t> out;
  out.reserve(keyed.size());
  for (const auto& [_, i] : keyed) out.push_back(i);
  return out;
}

inline std::array<std::vector<std::size_t>, kNumClasses> group_by_predicted(std::span<const ScoredExample> scored) {
  std::array<std::vector<std::size_t>, kNumClasses> groups;
  for (std::size_t i = 0; i < scored.size(); ++i) groups[index_of(scored[i].predicted_label())].push_back(i);
  return groups;
}

inline void require_nonempty(std::span<const ScoredExample> scored) {
  if (scored.empty()) throw Error(ErrorCode::EmptyDataset, "nothing to filter");
}

}  // namespace detail

/// Lowest-uncertainty fraction within each predicted class. Returns indices
/// into `scored` in input order.
inline std::vector<std::size_t> select_per_class(std::span<const ScoredExample> scored, double fraction,
                                                 MetricVariant key = MetricVariant::Cocoa) {
  detail::require_nonempty(scored);
  validate(FilterSpec{FilterStrategy::PerClass, fraction, key, std::nullopt});
  std::vector<std::size_t> kept;
  for (const auto& group : detail::group_by_predicted(scored)) {
    const auto ranked = detail::rank(scored, group, key);
    const std::size_t n = retention_count(fraction, group.size());
    kept.insert(kept.end(), ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(n));
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

/// Lowest-uncertainty fraction of the pooled dataset.
inline std::vector<std::size_t> select_global(std::span<const ScoredExample> scored, double fraction,
                                              MetricVariant key = MetricVariant::Cocoa) {
  detail::require_nonempty(scored);
  validate(FilterSpec{FilterStrategy::Global, fraction, key, std::nullopt});
  std::vector<std::size_t> all(scored.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  auto ranked = detail::rank(scored, all, key);
  ranked.resize(retention_count(fraction, scored.size()));
  std::sort(ranked.begin(), ranked.end());
  return ranked;
}

/// Seeded uniform sampling without replacement, pooled or per predicted class.
/// Class c of a stratified draw uses substream (seed, c).
inline std::vector<std::size_t> select_random(std::span<const ScoredExample> scored, double fraction, std::uint64_t seed,
                                              bool stratified) {
  detail::require_nonempty(scored);
  validate(FilterSpec{stratified ? FilterStrategy::RandomStratified : FilterStrategy::RandomUniform, fraction,
                      MetricVariant::Cocoa, seed});
  std::vector<std::size_t> kept;
  if (!stratified) {
    SplitMix64 rng(seed);
    kept = sample_without_replacement(scored.size(), retention_count(fraction, scored.size()), rng);
  } else {
    const auto groups = detail::group_by_predicted(scored);
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      SplitMix64 rng = SplitMix64::substream(seed, c);
      for (std::size_t j : sample_without_replacement(groups[c].size(), retention_count(fraction, groups[c].size()), rng))
        kept.push_back(groups[c][j]);
    }
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

inline std::vector<std::size_t> select(std::span<const ScoredExample> scored, const FilterSpec& spec) {
  validate(spec);
  switch (spec.strategy) {
    case FilterStrategy::PerClass: return select_per_class(scored, spec.fraction, spec.ranking_key);
    case FilterStrategy::Global: return select_global(scored, spec.fraction, spec.ranking_key);
    case FilterStrategy::RandomUniform: return select_random(scored, spec.fraction, *spec.seed, false);
    case FilterStrategy::RandomStratified: return select_random(scored, spec.fraction, *spec.seed, true);
  }
  return {};
}

inline std::vector<ScoredExample> take(std::span<const ScoredExample> scored, std::span<const std::size_t> indices) {
  std::vector<ScoredExample> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(scored[i]);
  return out;
}

inline std::vector<ScoredExample> filter_per_class(std::span<const ScoredExample> scored, double fraction,
                                                   MetricVariant key = MetricVariant::Cocoa) {
  return take(scored, select_per_class(scored, fraction, key));
}

inline std::vector<ScoredExample> filter_global(std::span<const ScoredExample> scored, double fraction,
                                                MetricVariant key = MetricVariant::Cocoa) {
  return take(scored, select_global(scored, fraction, key));
}

inline std::vector<ScoredExample> filter_random(std::span<const ScoredExample> scored, double fraction,
                                                std::uint64_t seed, bool stratified) {
  return take(scored, select_random(scored, fraction, seed, stratified));
}

inline std::vector<ScoredExample> apply_filter(std::span<const ScoredExample> scored, const FilterSpec& spec) {
  return take(scored, select(scored, spec));
}

// ---------------------------------------------------------------------------
// Decile stratification
// ---------------------------------------------------------------------------

/// (gold, predicted) pairs; every example must carry a gold label.
inline std::vector<LabeledPair> labeled_pairs(std::span<const ScoredExample> scored) {
  std::vector<LabeledPair> pairs;
  pairs.reserve(scored.size());
  for (const auto& e : scored) {
    if (!e.bundle.query.gold_label) throw Error(ErrorCode::MissingGoldLabel, "example '" + e.id() + "' has no gold label");
    pairs.push_back({*e.bundle.query.gold_label, e.predicted_label()});
  }
  return pairs;
}

struct DecileBin {
  std::size_t count = 0;
  double mean_score = 0.0;
  ConfusionMatrix confusion;
  std::array<ClassMetrics, kNumClasses> per_class{};
};

struct DecileReport {
  MetricVariant key = MetricVariant::Cocoa;
  std::vector<DecileBin> bins;  // ascending uncertainty
};

/// Sizes of `bins` contiguous bins over n items. Quotas are equal, so the
/// largest-remainder method hands the n mod bins extra items to the first bins.
inline std::vector<std::size_t> equal_count_bin_sizes(std::size_t n, std::size_t bins) {
  std::vector<std::size_t> sizes(bins, n / bins);
  for (std::size_t b = 0; b < n % bins; ++b) ++sizes[b];
  return sizes;
}

inline DecileReport decile_stratify(std::span<const ScoredExample> scored, MetricVariant key = MetricVariant::Cocoa,
                                    std::size_t n_bins = 10) {
  if (scored.size() < n_bins)
    throw Error(ErrorCode::TooFewExamples, "need at least " + std::to_string(n_bins) + " examples, got " + std::to_string(scored.size()));
  const auto pairs = labeled_pairs(scored);

  std::vector<std::size_t> all(scored.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto ranked = detail::rank(scored, all, key);

  DecileReport report;
  report.key = key;
  std::size_t pos = 0;
  for (std::size_t size : equal_count_bin_sizes(scored.size(), n_bins)) {
    DecileBin bin;
    bin.count = size;
    double sum = 0.0;
    for (std::size_t j = pos; j < pos + size; ++j) {
      const std::size_t i = ranked[j];
      sum += detail::require_score(scored[i], key);
      bin.confusion.add(pairs[i].gold, pairs[i].predicted);
    }
    bin.mean_score = sum / static_cast<double>(size);
    for (ClassLabel c : kAllClasses) bin.per_class[index_of(c)] = class_metrics(bin.confusion, c);
    report.bins.push_back(bin);
    pos += size;
  }
  return report;
}

inline std::string decile_csv(const DecileReport& report) {
  std::string out = "bin,count,mean_score";
  for (ClassLabel c : kAllClasses) {
    const std::string p(short_name(c));
    out += "," + p + "_p," + p + "_r," + p + "_f1";
  }
  out += '\n';
  for (std::size_t b = 0; b < report.bins.size(); ++b) {
    const auto& bin = report.bins[b];
    out += std::to_string(b + 1) + "," + std::to_string(bin.count) + "," + format_double(bin.mean_score);
    for (const auto& m : bin.per_class)
      out += "," + format_double(m.precision) + "," + format_double(m.recall) + "," + format_double(m.f1);
    out += '\n';
  }
  return out;
}

}  // namespace curator
