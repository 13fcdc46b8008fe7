#include "curator/cli.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <iostream>
#include <memory>
#include <optional>

#include "curator/curator.hpp"

namespace curator::cli {
namespace {

std::shared_ptr<spdlog::logger> log() {
  static auto logger = [] {
    auto l = spdlog::stderr_color_mt("curator");
    l->set_pattern("curator: %^%l%$: %v");
    return l;
  }();
  return logger;
}

// Flags shared by every subcommand.
struct Common {
  std::string config_path;
  std::string log_level;
  std::string manifest_path;
};

// Values a subcommand collected; only flags given on the command line
// override the configuration.
struct Flags {
  std::string input;
  std::string output = "-";
  std::vector<std::pair<std::string, Json>> overrides;
  std::vector<double> fractions{1.0, 0.2, 0.1, 0.05, 0.01};
  std::size_t bins = 10;
};

template <typename T>
void add_override(CLI::App& app, Flags& flags, const std::string& flag, const std::string& key, const std::string& help) {
  app.add_option_function<T>(flag, [&flags, key](const T& v) { flags.overrides.emplace_back(key, Json(v)); }, help);
}

PipelineConfig resolve(const Common& common, const Flags& flags) {
  PipelineConfig cfg;
  if (!common.config_path.empty()) cfg.merge_file(common.config_path);
  cfg.merge_env();
  for (const auto& [key, value] : flags.overrides) cfg.set(key, value, "command line");
  if (!common.log_level.empty()) cfg.set("log_level", common.log_level, "command line");
  const auto level = spdlog::level::from_str(cfg.log_level());
  if (level == spdlog::level::off && cfg.log_level() != "off")
    throw Error(ErrorCode::InvalidConfig, "unknown log level '" + cfg.log_level() + "'");
  log()->set_level(level);
  return cfg;
}

void finish_manifest(DatasetManifest& m, const std::string& source, const std::string& output, const Common& common,
                     const PipelineConfig& cfg) {
  m.source_path = source;
  m.pipeline_config_hash = cfg.hash();
  if (m.created_at.empty()) m.created_at = utc_timestamp();
  m.details["config"] = cfg.redacted();
  std::string path = common.manifest_path;
  if (path.empty() && output != "-") path = output + ".manifest.json";
  if (path.empty()) {
    log()->info("output is stdout and no --manifest given; manifest not written");
    return;
  }
  write_manifest(m, path);
}

/// Ranking key: explicit setting, else the variant recorded in the file, else cocoa.
MetricVariant ranking_key(const PipelineConfig& cfg, const std::vector<ScoredExample>& scored) {
  if (auto k = cfg.filter_key()) return *k;
  if (!scored.empty()) return scored.front().scores.variant;
  return MetricVariant::Cocoa;
}

Json class_count_json(const std::array<std::size_t, kNumClasses>& counts) {
  Json j = Json::object();
  for (ClassLabel c : kAllClasses) j[std::string(to_string(c))] = counts[index_of(c)];
  return j;
}

// -- commands -----------------------------------------------------------------

int cmd_generate(const Common& common, const Flags& flags) {
  const PipelineConfig cfg = resolve(common, flags);
  std::vector<QueryTuple> queries;
  {
    InputFile in(flags.input);
    try {
      queries = read_jsonl(in.stream(), [](std::string_view line) {
        QueryTuple q = parse_query_line(line);
        validate(q);
        return q;
      });
    } catch (const Error& e) {
      throw Error(e.code(), flags.input + ": " + e.message());
    }
  }
  OutputFile out(flags.output);
  GenerationReport report = generate_dataset(cfg.generation(), queries, out.stream());
  out.close();

  for (const auto& f : report.failures) log()->error("query '{}' failed: {}", f.query_id, f.error);
  if (!report.missing_logprobs.empty())
    log()->warn("{} greedy trace(s) came back without log-probabilities", report.missing_logprobs.size());

  if (flags.output != "-") {
    OutputFile usage(flags.output + ".usage.json");
    usage.stream() << to_json(report.usage).dump(2) << '\n';
    usage.close();
  }
  finish_manifest(report.manifest, flags.input, flags.output, common, cfg);

  log()->info("generated {} of {} bundle(s) with {} request(s)", queries.size() - report.failures.size(), queries.size(),
              report.usage.requests);
  if (report.failures.empty()) return kExitOk;
  return report.failures.size() == queries.size() ? kExitFatal : kExitPartial;
}

int cmd_score(const Common& common, const Flags& flags) {
  const PipelineConfig cfg = resolve(common, flags);
  const std::string provider_name = cfg.provider();
  std::unique_ptr<SimilarityProvider> provider;
  if (provider_name == "lexical") {
    provider = std::make_unique<LexicalCosineProvider>();
  } else if (provider_name == "answer") {
    provider = std::make_unique<AnswerAgreementProvider>();
  } else if (provider_name == "remote") {
    provider = std::make_unique<RemoteScorer>(cfg.scorer());
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown provider '" + provider_name + "' (lexical, answer, remote)");
  }
  const DatasetScoringOptions options = cfg.scoring();

  InputFile in(flags.input);
  OutputFile out(flags.output);
  DatasetManifest m;
  try {
    m = score_dataset(in.stream(), out.stream(), *provider, options);
  } catch (const Error& e) {
    throw Error(e.code(), flags.input + ": " + e.message());
  }
  out.close();
  finish_manifest(m, flags.input, flags.output, common, cfg);
  if (m.rejected > 0) log()->warn("{} bundle(s) could not be scored and were dropped", m.rejected);
  log()->info("scored {} bundle(s)", m.n_examples);
  return kExitOk;
}

int cmd_filter(const Common& common, const Flags& flags) {
  const PipelineConfig cfg = resolve(common, flags);
  const auto scored = read_scored_file(flags.input);
  FilterSpec spec;
  spec.strategy = cfg.filter_strategy();
  spec.fraction = cfg.filter_fraction();
  spec.ranking_key = ranking_key(cfg, scored);
  if (is_random(spec.strategy)) spec.seed = static_cast<std::uint64_t>(cfg.seed());
  validate(spec);

  const auto kept = select(scored, spec);
  OutputFile out(flags.output);
  DatasetManifest m;
  std::array<std::size_t, kNumClasses> pool{};
  for (const auto& e : scored) ++pool[index_of(e.predicted_label())];
  for (std::size_t i : kept) {
    out.write_line(to_jsonl_line(scored[i]));
    m.count(scored[i].predicted_label());
  }
  out.close();

  m.details["strategy"] = std::string(to_string(spec.strategy));
  m.details["fraction"] = spec.fraction;
  m.details["key"] = std::string(to_string(spec.ranking_key));
  if (spec.seed) m.details["seed"] = *spec.seed;
  if (spec.seed) m.details["rng"] = std::string(SplitMix64::kAlgorithm);
  m.details["input_examples"] = scored.size();
  m.details["pool_per_class"] = class_count_json(pool);
  m.details["retained_per_class"] = class_count_json(m.class_counts);
  finish_manifest(m, flags.input, flags.output, common, cfg);
  log()->info("retained {} of {} example(s)", kept.size(), scored.size());
  return kExitOk;
}

int cmd_evaluate(const Common& common, const Flags& flags) {
  const PipelineConfig cfg = resolve(common, flags);
  const auto scored = read_scored_file(flags.input);
  const auto pairs = labeled_pairs(scored);
  const std::size_t resamples = cfg.resamples();
  if (resamples < 2) log()->warn("{} resample(s): standard errors are degenerate (reported as 0)", resamples);
  const auto seed = static_cast<std::uint64_t>(cfg.seed());
  const EvalReport report = evaluate(pairs, resamples, seed, cfg.bootstrap_workers());

  OutputFile out(flags.output);
  out.stream() << to_json(report).dump(2) << '\n';
  out.close();
  // Keep stdout machine-readable when the JSON report goes there.
  (out.is_stdout() ? std::cerr : std::cout) << format_report_table(report);

  DatasetManifest m;
  for (const auto& e : scored) m.count(e.predicted_label());
  m.details["n_resamples"] = resamples;
  m.details["seed"] = seed;
  m.details["rng"] = std::string(SplitMix64::kAlgorithm);
  finish_manifest(m, flags.input, flags.output, common, cfg);
  return kExitOk;
}

int cmd_stratify(const Common& common, const Flags& flags) {
  const PipelineConfig cfg = resolve(common, flags);
  const auto scored = read_scored_file(flags.input);
  const MetricVariant key = ranking_key(cfg, scored);
  const DecileReport report = decile_stratify(scored, key, flags.bins);
  OutputFile out(flags.output);
  out.stream() << decile_csv(report);
  out.close();

  DatasetManifest m;
  for (const auto& e : scored) m.count(e.predicted_label());
  m.details["key"] = std::string(to_string(key));
  m.details["bins"] = flags.bins;
  finish_manifest(m, flags.input, flags.output, common, cfg);
  return kExitOk;
}

int cmd_sweep(const Common& common, const Flags& flags) {
  const PipelineConfig cfg = resolve(common, flags);
  const auto scored = read_scored_file(flags.input);
  const MetricVariant key = ranking_key(cfg, scored);
  const FilterStrategy strategy = cfg.filter_strategy();
  std::optional<std::uint64_t> seed;
  if (is_random(strategy)) seed = static_cast<std::uint64_t>(cfg.seed());
  for (double f : flags.fractions) validate(FilterSpec{strategy, f, key, seed});
  if (scored.empty()) throw Error(ErrorCode::EmptyDataset, flags.input + ": nothing to sweep");

  const auto rows = subset_quality_sweep(scored, flags.fractions, strategy, key, seed);
  OutputFile out(flags.output);
  out.stream() << sweep_csv(rows);
  out.close();

  DatasetManifest m;
  for (const auto& e : scored) m.count(e.predicted_label());
  m.details["strategy"] = std::string(to_string(strategy));
  m.details["key"] = std::string(to_string(key));
  m.details["fractions"] = flags.fractions;
  if (seed) m.details["seed"] = *seed;
  finish_manifest(m, flags.input, flags.output, common, cfg);
  return kExitOk;
}

int cmd_export_sft(const Common& common, const Flags& flags) {
  const PipelineConfig cfg = resolve(common, flags);
  InputFile in(flags.input);
  OutputFile out(flags.output);
  DatasetManifest m;
  std::vector<std::string> skipped;
  JsonlReader reader(in.stream());
  std::string line;
  while (reader.next(line)) {
    TraceBundle b;
    try {
      b = bundle_from_json(parse_json_line(line));
    } catch (const Error& e) {
      throw Error(e.code(), flags.input + ": line " + std::to_string(reader.line_number()) + ": " + e.message());
    }
    if (!b.greedy.parsed()) {
      skipped.push_back(b.query.id);
      ++m.rejected;
      continue;
    }
    const Prompt p = build_prompt(b.query);
    const Json record = {{"messages", Json::array({Json{{"role", "system"}, {"content", p.system}},
                                                   Json{{"role", "user"}, {"content", p.user}},
                                                   Json{{"role", "assistant"}, {"content", b.greedy.text}}})}};
    out.write_line(record.dump());
    m.count(*b.greedy.answer);
  }
  out.close();
  for (const auto& id : skipped) log()->warn("excluded '{}': greedy trace has no parsable answer", id);
  m.details["excluded"] = skipped;
  finish_manifest(m, flags.input, flags.output, common, cfg);
  log()->info("exported {} conversation(s)", m.n_examples);
  return kExitOk;
}

int cmd_simulate(const Common& common, const Flags& flags) {
  const PipelineConfig cfg = resolve(common, flags);
  const SimConfig sim = cfg.simulation();
  validate(sim);
  OutputFile out(flags.output);
  DatasetManifest m;
  for (std::size_t i = 0; i < sim.n_examples; ++i) {
    const TraceBundle b = simulate_example(sim, i);
    out.write_line(to_jsonl_line(b));
    m.count(*b.greedy.answer);
  }
  out.close();
  m.details["seed"] = sim.seed;
  m.details["rng"] = std::string(SplitMix64::kAlgorithm);
  finish_manifest(m, "simulator", flags.output, common, cfg);
  log()->info("simulated {} bundle(s)", sim.n_examples);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Label-free curation of synthetic reasoning datasets", "curator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "curator 0.1.0");

  Common common;
  Flags flags;
  app.add_option("-c,--config", common.config_path, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--log-level", common.log_level, "trace, debug, info, warn, error or off");
  app.add_option("--manifest", common.manifest_path, "manifest path (default: <out>.manifest.json)");

  auto input = [&](CLI::App* sub, const std::string& what) {
    sub->add_option("input", flags.input, what + " (\"-\" for stdin)")->required();
  };
  auto output = [&](CLI::App* sub, bool required) {
    auto* o = sub->add_option("-o,--out", flags.output, "output path (\"-\" for stdout)");
    if (required) o->required();
  };
  auto seed = [&](CLI::App* sub) { add_override<std::int64_t>(*sub, flags, "--seed", "seed", "random seed"); };
  auto key = [&](CLI::App* sub) {
    add_override<std::string>(*sub, flags, "--key", "filter.key", "ranking score: cocoa, ppl or consistency");
  };
  auto strategy = [&](CLI::App* sub) {
    add_override<std::string>(*sub, flags, "--strategy", "filter.strategy", "per-class, global, random or random-stratified");
  };

  auto* generate = app.add_subcommand("generate", "sample one greedy and k stochastic traces per query");
  input(generate, "query JSONL");
  output(generate, true);
  add_override<std::string>(*generate, flags, "--base-url", "llm.base_url", "OpenAI-compatible endpoint");
  add_override<std::string>(*generate, flags, "--model", "llm.model", "model name");
  add_override<std::int64_t>(*generate, flags, "-k,--samples", "llm.k", "stochastic samples per query");
  add_override<std::int64_t>(*generate, flags, "--max-in-flight", "llm.max_in_flight", "concurrent queries");

  auto* score = app.add_subcommand("score", "compute uncertainty scores for trace bundles");
  input(score, "bundle JSONL");
  output(score, true);
  add_override<std::string>(*score, flags, "--provider", "score.provider", "lexical, answer or remote");
  add_override<std::string>(*score, flags, "--variant", "score.variant", "cocoa, ppl or consistency");
  add_override<std::string>(*score, flags, "--ppl-scope", "score.perplexity_scope", "full or answer");
  add_override<std::int64_t>(*score, flags, "-j,--workers", "score.workers", "worker threads");

  auto* filter = app.add_subcommand("filter", "keep the most certain fraction of a scored dataset");
  input(filter, "scored JSONL");
  output(filter, true);
  strategy(filter);
  add_override<double>(*filter, flags, "-f,--fraction", "filter.fraction", "fraction to keep, in (0, 1]");
  seed(filter);
  key(filter);

  auto* eval = app.add_subcommand("evaluate", "per-class metrics with stratified bootstrap errors");
  input(eval, "scored JSONL");
  output(eval, false);
  add_override<std::int64_t>(*eval, flags, "--resamples", "bootstrap.resamples", "bootstrap resamples");
  add_override<std::int64_t>(*eval, flags, "-j,--workers", "bootstrap.workers", "worker threads");
  seed(eval);

  auto* stratify = app.add_subcommand("stratify", "per-class metrics by uncertainty decile");
  input(stratify, "scored JSONL");
  output(stratify, false);
  key(stratify);
  stratify->add_option("--bins", flags.bins, "number of equal-count bins")->check(CLI::PositiveNumber);

  auto* sweep = app.add_subcommand("sweep", "subset quality across retention fractions");
  input(sweep, "scored JSONL");
  output(sweep, false);
  sweep->add_option("--fractions", flags.fractions, "comma-separated fractions")->delimiter(',');
  strategy(sweep);
  key(sweep);
  seed(sweep);

  auto* sft = app.add_subcommand("export-sft", "write chat-format fine-tuning records");
  input(sft, "scored or bundle JSONL");
  output(sft, true);

  auto* simulate = app.add_subcommand("simulate", "write a synthetic labeled bundle dataset");
  output(simulate, true);
  add_override<std::int64_t>(*simulate, flags, "-n,--n", "sim.n", "number of examples");
  add_override<double>(*simulate, flags, "--calibration", "sim.calibration", "coupling of errors to difficulty (>= 0)");
  add_override<std::int64_t>(*simulate, flags, "-k,--samples", "sim.k", "stochastic samples per query");
  seed(simulate);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (generate->parsed()) return cmd_generate(common, flags);
    if (score->parsed()) return cmd_score(common, flags);
    if (filter->parsed()) return cmd_filter(common, flags);
    if (eval->parsed()) return cmd_evaluate(common, flags);
    if (stratify->parsed()) return cmd_stratify(common, flags);
    if (sweep->parsed()) return cmd_sweep(common, flags);
    if (sft->parsed()) return cmd_export_sft(common, flags);
    if (simulate->parsed()) return cmd_simulate(common, flags);
  } catch (const Error& e) {
    log()->error("{}", e.what());
    const bool usage = e.code() == ErrorCode::InvalidArgument || e.code() == ErrorCode::InvalidConfig;
    return usage ? kExitUsage : kExitFatal;
  } catch (const std::exception& e) {
    log()->error("{}", e.what());
    return kExitFatal;
  }
  return kExitUsage;
}

}  // namespace curator::cli
