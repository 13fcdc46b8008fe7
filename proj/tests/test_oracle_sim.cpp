#include "support.hpp"

#include <sstream>

using namespace curator;
using namespace curator::testing;

namespace {

std::vector<ScoredExample> simulate_and_score(const SimConfig& cfg) {
  const LexicalCosineProvider lexical;
  std::vector<ScoredExample> out;
  for (const auto& b : simulate_dataset(cfg)) out.push_back(score_bundle(b, lexical, MetricVariant::Cocoa));
  return out;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
  mx /= n, my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

SimConfig calibrated(std::uint64_t seed, double calibration, std::size_t n = 5000) {
  SimConfig cfg;
  cfg.n_examples = n;
  cfg.seed = seed;
  cfg.calibration = calibration;
  return cfg;
}

}  // namespace

TEST(Simulator, SameSeedSameBytes) {
  const auto cfg = calibrated(42, 1.0, 300);
  std::ostringstream a, b, c;
  write_simulated_dataset(cfg, a);
  write_simulated_dataset(cfg, b);
  auto other = cfg;
  other.seed = 43;
  write_simulated_dataset(other, c);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_NE(a.str(), c.str());
}

TEST(Simulator, ExamplesAreIndependentOfDatasetSize) {
  const auto small = simulate_dataset(calibrated(5, 1.0, 10));
  const auto large = simulate_dataset(calibrated(5, 1.0, 50));
  for (std::size_t i = 0; i < small.size(); ++i) EXPECT_EQ(to_jsonl_line(small[i]), to_jsonl_line(large[i]));
}

TEST(Simulator, Validation) {
  auto cfg = calibrated(1, -1.0, 10);
  EXPECT_CURATOR_ERROR(simulate_dataset(cfg), ErrorCode::InvalidConfig);
  cfg = calibrated(1, 1.0, 10);
  cfg.class_prior = {0.5, 0.5, 0.5};
  EXPECT_CURATOR_ERROR(simulate_dataset(cfg), ErrorCode::InvalidConfig);
  cfg.class_prior = {0.2, 0.3, 0.5 + 5e-10};
  EXPECT_NO_THROW(simulate_dataset(cfg));
  cfg.class_scale = {1.0, 0.0, 1.0};
  EXPECT_CURATOR_ERROR(simulate_dataset(cfg), ErrorCode::InvalidConfig);
}

TEST(Simulator, BundlesAreWellFormed) {
  auto cfg = calibrated(3, 1.0, 200);
  cfg.k = 5;
  for (const auto& b : simulate_dataset(cfg)) {
    EXPECT_EQ(b.samples.size(), 5u);
    ASSERT_TRUE(b.greedy.answer.has_value());
    ASSERT_TRUE(b.greedy.token_logprobs.has_value());
    EXPECT_TRUE(b.query.gold_label.has_value());
    EXPECT_GE(perplexity(*b.greedy.token_logprobs), 1.0);
    for (const auto& s : b.samples) EXPECT_TRUE(s.answer.has_value());
  }
}

TEST(Simulator, ClassPriorIsRespected) {
  std::array<std::size_t, kNumClasses> counts{};
  for (const auto& b : simulate_dataset(calibrated(8, 1.0, 20000))) ++counts[index_of(*b.query.gold_label)];
  // Binomial SD at n = 20000, p = 0.1 is about 0.0021; 5 SD bound.
  EXPECT_NEAR(counts[0] / 20000.0, 0.1, 0.011);
  EXPECT_NEAR(counts[1] / 20000.0, 0.1, 0.011);
  EXPECT_NEAR(counts[2] / 20000.0, 0.8, 0.015);
}

TEST(Simulator, UncalibratedScoresCarryNoErrorSignal) {
  const auto scored = simulate_and_score(calibrated(11, 0.0));
  std::vector<double> score, wrong;
  for (const auto& e : scored) {
    score.push_back(*e.scores.cocoa);
    wrong.push_back(e.predicted_label() == *e.bundle.query.gold_label ? 0.0 : 1.0);
  }
  EXPECT_LT(std::abs(pearson(score, wrong)), 0.1);
}

TEST(Simulator, CalibratedDecileAccuracyGap) {
  const auto report = decile_stratify(simulate_and_score(calibrated(11, 1.0)));
  const auto acc = [](const DecileBin& b) { return accuracy(b.confusion); };
  EXPECT_GE(acc(report.bins.front()) - acc(report.bins.back()), 0.15);
}

TEST(Simulator, CalibratedMinorityF1FallsAcrossDeciles) {
  const auto report = decile_stratify(simulate_and_score(calibrated(12, 1.0)));
  for (ClassLabel c : {ClassLabel::Up, ClassLabel::Down})
    EXPECT_GT(report.bins.front().per_class[index_of(c)].f1, report.bins.back().per_class[index_of(c)].f1) << to_string(c);
}

TEST(Simulator, FilteredSubsetBeatsFullSet) {
  const auto scored = simulate_and_score(calibrated(13, 1.0));
  const std::vector<double> fs{0.1, 1.0};
  const auto rows = subset_quality_sweep(scored, fs, FilterStrategy::PerClass);
  EXPECT_GT(rows[0].accuracy, rows[1].accuracy);
}

TEST(Simulator, ClassScaleInflatesPerplexity) {
  auto cfg = calibrated(14, 1.0, 4000);
  cfg.class_scale = {3.0, 1.0, 1.0};
  double up = 0, rest = 0;
  std::size_t n_up = 0, n_rest = 0;
  for (const auto& b : simulate_dataset(cfg)) {
    const double ppl = perplexity(*b.greedy.token_logprobs);
    if (*b.greedy.answer == ClassLabel::Up) up += ppl, ++n_up;
    else rest += ppl, ++n_rest;
  }
  EXPECT_GT(up / n_up, 2.0 * rest / n_rest);
}
