#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "curator/core.hpp"
#include "curator/parallel.hpp"
#include "curator/rng.hpp"
#include "curator/serialization.hpp"

namespace curator {

/// Shortest decimal that round-trips to the same double.
inline std::string format_double(double x) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return ec == std::errc{} ? std::string(buf, end) : std::string("nan");
}

struct LabeledPair {
  ClassLabel gold;
  ClassLabel predicted;
};

/// Counts indexed (gold, predicted).
struct ConfusionMatrix {
  std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> counts{};

  void add(ClassLabel gold, ClassLabel predicted, std::uint64_t n = 1) { counts[index_of(gold)][index_of(predicted)] += n; }
  std::uint64_t at(ClassLabel gold, ClassLabel predicted) const { return counts[index_of(gold)][index_of(predicted)]; }

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (const auto& row : counts)
      for (auto c : row) t += c;
    return t;
  }

  std::uint64_t trace() const {
    std::uint64_t t = 0;
    for (std::size_t i = 0; i < kNumClasses; ++i) t += counts[i][i];
    return t;
  }

  std::uint64_t gold_count(ClassLabel c) const {
    std::uint64_t t = 0;
    for (auto v : counts[index_of(c)]) t += v;
    return t;
  }

  std::uint64_t predicted_count(ClassLabel c) const {
    std::uint64_t t = 0;
    for (const auto& row : counts) t += row[index_of(c)];
    return t;
  }

  bool operator==(const ConfusionMatrix&) const = default;
};

inline ConfusionMatrix confusion(std::span<const LabeledPair> pairs) {
  if (pairs.empty()) throw Error(ErrorCode::EmptyEvalSet, "no labeled pairs to evaluate");
  ConfusionMatrix cm;
  for (const auto& p : pairs) cm.add(p.gold, p.predicted);
  return cm;
}

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Zero denominators yield 0 for the affected metric.
inline ClassMetrics class_metrics(const ConfusionMatrix& cm, ClassLabel c) {
  const double tp = static_cast<double>(cm.at(c, c));
  const double predicted = static_cast<double>(cm.predicted_count(c));
  const double gold = static_cast<double>(cm.gold_count(c));
  ClassMetrics m;
  m.precision = predicted > 0 ? tp / predicted : 0.0;
  m.recall = gold > 0 ? tp / gold : 0.0;
  m.f1 = (m.precision + m.recall) > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

inline double accuracy(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  return total == 0 ? 0.0 : static_cast<double>(cm.trace()) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Named statistics
// ---------------------------------------------------------------------------

struct Statistic {
  enum class Kind { Accuracy, Precision, Recall, F1 } kind = Kind::Accuracy;
  ClassLabel label = ClassLabel::Up;  // ignored for Accuracy

  static Statistic accuracy() { return {}; }
  static Statistic precision(ClassLabel c) { return {Kind::Precision, c}; }
  static Statistic recall(ClassLabel c) { return {Kind::Recall, c}; }
  static Statistic f1(ClassLabel c) { return {Kind::F1, c}; }

  double operator()(const ConfusionMatrix& cm) const {
    if (kind == Kind::Accuracy) return curator::accuracy(cm);
    const ClassMetrics m = class_metrics(cm, label);
    switch (kind) {
      case Kind::Precision: return m.precision;
      case Kind::Recall: return m.recall;
      default: return m.f1;
    }
  }
};

struct Estimate {
  double point = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

inline constexpr std::size_t kDefaultResamples = 5000;

namespace detail {

/// Linear-interpolation percentile of sorted values, q in [0, 1].
inline double percentile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double h = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Sample standard deviation and 95% percentile interval of resampled values.
inline Estimate summarize(double point, std::vector<double> values) {
  Estimate e;
  e.point = point;
  std::sort(values.begin(), values.end());
  if (values.front() == values.back()) {
    e.se = 0.0;
    e.ci_lo = e.ci_hi = values.front();
    return e;
  }
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  e.se = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
  e.ci_lo = percentile_sorted(values, 0.025);
  e.ci_hi = percentile_sorted(values, 0.975);
  return e;
}

/// Pairs grouped by gold class; resampling happens within each group.
struct Strata {
  std::array<std::vector<ClassLabel>, kNumClasses> predicted;

  explicit Strata(std::span<const LabeledPair> pairs) {
    for (const auto& p : pairs) predicted[index_of(p.gold)].push_back(p.predicted);
  }

  ConfusionMatrix resample(std::uint64_t seed, std::uint64_t index) const {
    SplitMix64 rng = SplitMix64::substream(seed, index);
    ConfusionMatrix cm;
    for (ClassLabel gold : kAllClasses) {
      const auto& preds = predicted[index_of(gold)];
      for (std::size_t j = 0; j < preds.size(); ++j) cm.add(gold, preds[rng.below(preds.size())]);
    }
    return cm;
  }
};

}  // namespace detail

/// Stratified bootstrap of one statistic: resamples with replacement within
/// each gold-class stratum. The point estimate is the statistic on the
/// original pairs; resamples supply only the SE and 95% percentile interval.
/// Resample r draws from substream (seed, r), so results never depend on `workers`.
inline Estimate stratified_bootstrap(std::span<const LabeledPair> pairs, const Statistic& statistic,
                                     std::size_t n_resamples = kDefaultResamples, std::uint64_t seed = 0,
                                     std::size_t workers = 1) {
  const ConfusionMatrix original = confusion(pairs);
  if (n_resamples < 1) throw Error(ErrorCode::InvalidArgument, "n_resamples must be >= 1");
  const detail::Strata strata(pairs);
  auto values = parallel_map(n_resamples, workers, [&](std::size_t r) { return statistic(strata.resample(seed, r)); });
  return detail::summarize(statistic(original), std::move(values));
}

struct ClassEstimates {
  Estimate precision;
  Estimate recall;
  Estimate f1;
};

struct EvalReport {
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::size_t n_resamples = 0;
  Estimate accuracy;
  std::array<ClassEstimates, kNumClasses> per_class;
  ConfusionMatrix confusion;
};

/// Point estimates and bootstrap SE / CI for accuracy and every per-class metric,
/// all computed from one shared set of resamples.
inline EvalReport evaluate(std::span<const LabeledPair> pairs, std::size_t n_resamples = kDefaultResamples,
                           std::uint64_t seed = 0, std::size_t workers = 1) {
  EvalReport report;
  report.confusion = confusion(pairs);
  if (n_resamples < 1) throw Error(ErrorCode::InvalidArgument, "n_resamples must be >= 1");
  report.n = pairs.size();
  report.seed = seed;
  report.n_resamples = n_resamples;

  std::vector<Statistic> stats{Statistic::accuracy()};
  for (ClassLabel c : kAllClasses) {
    stats.push_back(Statistic::precision(c));
    stats.push_back(Statistic::recall(c));
    stats.push_back(Statistic::f1(c));
  }

  const detail::Strata strata(pairs);
  auto per_resample = parallel_map(n_resamples, workers, [&](std::size_t r) {
    const ConfusionMatrix cm = strata.resample(seed, r);
    std::vector<double> v;
    v.reserve(stats.size());
    for (const auto& s : stats) v.push_back(s(cm));
    return v;
  });

  std::vector<Estimate> estimates;
  for (std::size_t s = 0; s < stats.size(); ++s) {
    std::vector<double> values;
    values.reserve(n_resamples);
    for (const auto& row : per_resample) values.push_back(row[s]);
    estimates.push_back(detail::summarize(stats[s](report.confusion), std::move(values)));
  }
  report.accuracy = estimates[0];
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    report.per_class[c] = {estimates[1 + 3 * c], estimates[2 + 3 * c], estimates[3 + 3 * c]};
  }
  return report;
}

inline Json to_json(const Estimate& e) {
  return Json{{"point", e.point}, {"se", e.se}, {"ci", Json::array({e.ci_lo, e.ci_hi})}};
}

inline Json to_json(const EvalReport& r) {
  Json per_class = Json::object();
  for (ClassLabel c : kAllClasses) {
    const auto& ce = r.per_class[index_of(c)];
    per_class[std::string(to_string(c))] = {{"precision", to_json(ce.precision)}, {"recall", to_json(ce.recall)}, {"f1", to_json(ce.f1)}};
  }
  return Json{{"n", r.n}, {"seed", r.seed}, {"n_resamples", r.n_resamples}, {"accuracy", to_json(r.accuracy)}, {"per_class", std::move(per_class)}};
}

/// Fixed-width table of point ± SE per class.
inline std::string format_report_table(const EvalReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  os << std::left << std::setw(30) << "class" << std::setw(18) << "precision" << std::setw(18) << "recall" << "f1\n";
  for (ClassLabel c : kAllClasses) {
    const auto& ce = r.per_class[index_of(c)];
    os << std::setw(30) << to_string(c);
    for (const Estimate* e : {&ce.precision, &ce.recall}) {
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(3) << e->point << " ± " << e->se;
      os << std::setw(18 + 1) << cell.str();  // ± is two bytes in UTF-8
    }
    os << ce.f1.point << " ± " << ce.f1.se << '\n';
  }
  os << std::setw(30) << "accuracy" << r.accuracy.point << " ± " << r.accuracy.se << "  (95% CI " << r.accuracy.ci_lo
     << " – " << r.accuracy.ci_hi << ")\n";
  os << "n = " << r.n << ", resamples = " << r.n_resamples << ", seed = " << r.seed << '\n';
  return os.str();
}

}  // namespace curator
