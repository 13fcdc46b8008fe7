#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "curator/filtering.hpp"
#include "curator/metrics.hpp"

namespace curator {

struct SweepRow {
  double fraction = 1.0;
  std::size_t n_retained = 0;
  std::array<ClassMetrics, kNumClasses> per_class{};
  double accuracy = 0.0;
  ConfusionMatrix confusion;
};

/// Filters at each fraction and scores the retained subset against gold labels.
inline std::vector<SweepRow> subset_quality_sweep(std::span<const ScoredExample> scored, std::span<const double> fractions,
                                                  FilterStrategy strategy, MetricVariant key = MetricVariant::Cocoa,
                                                  std::optional<std::uint64_t> seed = std::nullopt) {
  const auto pairs = labeled_pairs(scored);
  std::vector<SweepRow> rows;
  rows.reserve(fractions.size());
  for (double f : fractions) {
    const auto kept = select(scored, FilterSpec{strategy, f, key, is_random(strategy) ? seed : std::nullopt});
    SweepRow row;
    row.fraction = f;
    row.n_retained = kept.size();
    for (std::size_t i : kept) row.confusion.add(pairs[i].gold, pairs[i].predicted);
    for (ClassLabel c : kAllClasses) row.per_class[index_of(c)] = class_metrics(row.confusion, c);
    row.accuracy = accuracy(row.confusion);
    rows.push_back(row);
  }
  return rows;
}

inline std::string sweep_csv(std::span<const SweepRow> rows) {
  std::string out = "fraction,n_retained";
  for (ClassLabel c : kAllClasses) {
    const std::string p(short_name(c));
    out += "," + p + "_p," + p + "_r," + p + "_f1";
  }
  out += ",acc\n";
  for (const auto& row : rows) {
    out += format_double(row.fraction) + "," + std::to_string(row.n_retained);
    for (const auto& m : row.per_class)
      out += "," + format_double(m.precision) + "," + format_double(m.recall) + "," + format_double(m.f1);
    out += "," + format_double(row.accuracy) + "\n";
  }
  return out;
}

}  // namespace curator
