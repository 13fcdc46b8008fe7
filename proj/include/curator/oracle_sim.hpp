#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "curator/core.hpp"
#include "curator/rng.hpp"
#include "curator/serialization.hpp"

namespace curator {

/// Which label selects the class_scale multiplier of an example.
enum class ScaleBasis { Predicted, Gold };

/// Synthetic bundle generator with a known link between a latent difficulty d,
/// answer correctness, and the uncertainty signals the engine measures.
///
/// Per example: gold ~ class_prior; d ~ Beta(alpha, beta) with integer shape
/// parameters; the greedy answer is wrong with probability
/// clamp(calibration * d + (1 - calibration) * E[d], 0, 0.9), so calibration 0
/// keeps the error rate but decouples it from d. The fluency latent (driving
/// r0 perplexity) and consistency latent (driving sample agreement and text
/// drift) are d plus independent noise of the configured spread.
struct SimConfig {
  std::size_t n_examples = 1000;
  std::array<double, kNumClasses> class_prior = {0.1, 0.1, 0.8};  // Up, Down, NonRegulated
  unsigned difficulty_alpha = 2;
  unsigned difficulty_beta = 2;
  double calibration = 1.0;
  std::array<double, kNumClasses> class_scale = {1.0, 1.0, 1.0};
  ScaleBasis scale_basis = ScaleBasis::Predicted;
  std::size_t k = 8;
  std::uint64_t seed = 0;

  double fluency_noise = 0.0;
  double consistency_noise = 0.0;
  /// P(sample disagrees with r0) = disagree_slope * consistency latent.
  double disagree_slope = 0.9;
  /// Perplexity = class scale * (1 + ppl_slope * fluency latent).
  double ppl_slope = 3.0;
  /// Word drift of agreeing samples: text_drift_base + text_drift_slope * latent.
  double text_drift_base = 0.15;
  double text_drift_slope = 0.5;
  std::size_t reasoning_words = 24;

  /// Answer noise and fluency noise independent of each other.
  static SimConfig independent_noise(std::uint64_t seed, std::size_t n = 20000) {
    SimConfig cfg;
    cfg.n_examples = n;
    cfg.seed = seed;
    cfg.fluency_noise = 0.25;
    cfg.consistency_noise = 0.25;
    return cfg;
  }

  /// Minority classes carry three times the perplexity of the majority class.
  static SimConfig class_scale_stress(std::uint64_t seed, std::size_t n = 50000) {
    SimConfig cfg;
    cfg.n_examples = n;
    cfg.seed = seed;
    cfg.class_scale = {3.0, 3.0, 1.0};
    return cfg;
  }
};

inline void validate(const SimConfig& cfg) {
  double total = 0.0;
  for (double p : cfg.class_prior) {
    if (!(p >= 0.0)) throw Error(ErrorCode::InvalidConfig, "class prior entries must be >= 0");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorCode::InvalidConfig, "class prior must sum to 1");
  if (!(cfg.calibration >= 0.0)) throw Error(ErrorCode::InvalidConfig, "calibration must be >= 0");
  for (double s : cfg.class_scale)
    if (!(s > 0.0)) throw Error(ErrorCode::InvalidConfig, "class scales must be positive");
  if (cfg.difficulty_alpha < 1 || cfg.difficulty_beta < 1)
    throw Error(ErrorCode::InvalidConfig, "difficulty shape parameters must be >= 1");
  if (!(cfg.fluency_noise >= 0.0) || !(cfg.consistency_noise >= 0.0))
    throw Error(ErrorCode::InvalidConfig, "noise spreads must be >= 0");
  if (!(cfg.disagree_slope >= 0.0 && cfg.disagree_slope <= 1.0))
    throw Error(ErrorCode::InvalidConfig, "disagree_slope must lie in [0, 1]");
  if (!(cfg.ppl_slope >= 0.0)) throw Error(ErrorCode::InvalidConfig, "ppl_slope must be >= 0");
  if (!(cfg.text_drift_base >= 0.0 && cfg.text_drift_slope >= 0.0 && cfg.text_drift_base + cfg.text_drift_slope <= 1.0))
    throw Error(ErrorCode::InvalidConfig, "text drift must stay within [0, 1]");
  if (cfg.reasoning_words < 1) throw Error(ErrorCode::InvalidConfig, "reasoning_words must be >= 1");
}

namespace detail {

inline constexpr std::array<std::string_view, 48> kSimWords = {
    "ribosome",   "biogenesis", "transcription", "mitochondrial", "stress",     "response",  "pathway",
    "knockdown",  "repression", "activation",    "feedback",      "chromatin",  "promoter",  "enhancer",
    "translation", "splicing",  "proteostasis",  "unfolded",      "protein",    "chaperone", "apoptosis",
    "cycle",      "checkpoint", "metabolism",    "glycolysis",    "oxidative",  "signaling", "kinase",
    "phosphatase", "receptor",  "secretory",     "golgi",         "reticulum",  "lysosome",  "autophagy",
    "interferon", "cytokine",   "hematopoietic", "erythroid",     "leukemia",   "epithelial", "hepatic",
    "compensatory", "upstream", "downstream",    "regulator",     "coexpression", "network"};

inline constexpr std::array<std::string_view, 4> kSimCellTypes = {"K562", "RPE1", "HepG2", "Jurkat"};

// Each word of the vocabulary is a base word plus a numeric suffix, giving
// enough distinct terms that unrelated traces share few words.
inline std::string sim_word(std::uint64_t index) {
  std::string w(kSimWords[index % kSimWords.size()]);
  const std::uint64_t suffix = index / kSimWords.size();
  if (suffix > 0) w += std::to_string(suffix);
  return w;
}

inline constexpr std::uint64_t kSimVocab = kSimWords.size() * 8;

/// Approximately standard normal: Irwin-Hall sum of 12 uniforms, minus 6.
inline double approx_normal(SplitMix64& rng) {
  double s = 0.0;
  for (int i = 0; i < 12; ++i) s += rng.uniform();
  return s - 6.0;
}

/// Beta(a, b) for integer shapes: the a-th smallest of a + b - 1 uniforms.
inline double beta_integer(SplitMix64& rng, unsigned a, unsigned b) {
  std::vector<double> u(a + b - 1);
  for (double& x : u) x = rng.uniform();
  std::nth_element(u.begin(), u.begin() + (a - 1), u.end());
  return u[a - 1];
}

inline ClassLabel other_label(SplitMix64& rng, ClassLabel not_this) {
  const std::size_t pick = static_cast<std::size_t>(rng.below(2));
  std::size_t seen = 0;
  for (ClassLabel c : kAllClasses) {
    if (c == not_this) continue;
    if (seen++ == pick) return c;
  }
  return not_this;
}

inline std::string render_trace(const std::vector<std::string>& words, ClassLabel answer) {
  std::string text = "<think>";
  for (const auto& w : words) {
    text += ' ';
    text += w;
  }
  text += " </think><answer>";
  text += to_string(answer);
  text += "</answer>";
  return text;
}

inline double clamp_unit(double x) { return std::clamp(x, 0.0, 1.0); }

}  // namespace detail

/// Generates one example; fully determined by (cfg.seed, index).
inline TraceBundle simulate_example(const SimConfig& cfg, std::size_t index) {
  SplitMix64 rng = SplitMix64::substream(cfg.seed, index);

  double u = rng.uniform();
  ClassLabel gold = ClassLabel::NonRegulated;
  for (ClassLabel c : kAllClasses) {
    if (u < cfg.class_prior[index_of(c)]) {
      gold = c;
      break;
    }
    u -= cfg.class_prior[index_of(c)];
  }

  const double d = detail::beta_integer(rng, cfg.difficulty_alpha, cfg.difficulty_beta);
  const double mean_d = static_cast<double>(cfg.difficulty_alpha) / (cfg.difficulty_alpha + cfg.difficulty_beta);
  const double p_wrong = std::clamp(cfg.calibration * d + (1.0 - cfg.calibration) * mean_d, 0.0, 0.9);
  const ClassLabel predicted = rng.bernoulli(p_wrong) ? detail::other_label(rng, gold) : gold;

  const double fluency = detail::clamp_unit(d + cfg.fluency_noise * detail::approx_normal(rng));
  const double consistency = detail::clamp_unit(d + cfg.consistency_noise * detail::approx_normal(rng));

  TraceBundle b;
  char id[32];
  std::snprintf(id, sizeof id, "sim-%07zu", index);
  b.query.id = id;
  b.query.cell_type = std::string(detail::kSimCellTypes[rng.below(detail::kSimCellTypes.size())]);
  b.query.perturbation = "GENE" + std::to_string(1000 + rng.below(9000));
  b.query.gene = "GENE" + std::to_string(1000 + rng.below(9000));
  b.query.gold_label = gold;

  std::vector<std::string> words(cfg.reasoning_words);
  for (auto& w : words) w = detail::sim_word(rng.below(detail::kSimVocab));

  // r0 log-probabilities whose exponentiated mean NLL is exactly the target perplexity.
  const ClassLabel scale_label = cfg.scale_basis == ScaleBasis::Predicted ? predicted : gold;
  const double target_ppl = std::max(1.0, cfg.class_scale[index_of(scale_label)] * (1.0 + cfg.ppl_slope * fluency));
  const std::size_t n_tokens = cfg.reasoning_words + 8;
  std::vector<double> weights(n_tokens);
  double weight_sum = 0.0;
  for (double& w : weights) {
    w = 0.5 + rng.uniform();
    weight_sum += w;
  }
  const double total_nll = static_cast<double>(n_tokens) * std::log(target_ppl);
  TokenLogProbs logprobs(n_tokens);
  for (std::size_t t = 0; t < n_tokens; ++t) logprobs[t] = -(total_nll * weights[t] / weight_sum);

  b.greedy = ReasoningTrace::from_text(detail::render_trace(words, predicted), SamplingParams::greedy(), std::move(logprobs));

  const SamplingParams sample_params{1.0, 1.0, 50, std::nullopt};
  const double drift = cfg.text_drift_base + cfg.text_drift_slope * consistency;
  b.samples.reserve(cfg.k);
  for (std::size_t s = 0; s < cfg.k; ++s) {
    const bool agrees = !rng.bernoulli(cfg.disagree_slope * consistency);
    const ClassLabel answer = agrees ? predicted : detail::other_label(rng, predicted);
    const double keep = agrees ? 1.0 - drift : 0.3;
    std::vector<std::string> sample_words = words;
    for (auto& w : sample_words)
      if (!rng.bernoulli(keep)) w = detail::sim_word(rng.below(detail::kSimVocab));
    b.samples.push_back(ReasoningTrace::from_text(detail::render_trace(sample_words, answer), sample_params));
  }
  return b;
}

inline std::vector<TraceBundle> simulate_dataset(const SimConfig& cfg) {
  validate(cfg);
  std::vector<TraceBundle> out;
  out.reserve(cfg.n_examples);
  for (std::size_t i = 0; i < cfg.n_examples; ++i) out.push_back(simulate_example(cfg, i));
  return out;
}

/// Streams the dataset as bundle JSONL without holding it in memory.
inline void write_simulated_dataset(const SimConfig& cfg, std::ostream& out) {
  validate(cfg);
  for (std::size_t i = 0; i < cfg.n_examples; ++i) {
    const std::string line = to_jsonl_line(simulate_example(cfg, i));
    out.write(line.data(), static_cast<std::streamsize>(line.size()));
    out.put('\n');
  }
  if (!out) throw Error(ErrorCode::IoError, "write of simulated dataset failed");
}

}  // namespace curator
