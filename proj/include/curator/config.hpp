#pragma once

#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "curator/core.hpp"
#include "curator/error.hpp"
#include "curator/filtering.hpp"
#include "curator/generation.hpp"
#include "curator/oracle_sim.hpp"
#include "curator/serialization.hpp"
#include "curator/similarity.hpp"
#include "curator/uncertainty.hpp"

namespace curator {

/// Value kinds a config entry may hold.
enum class ConfigKind { String, OptString, Int, OptInt, Number, Bool, Triple };

struct ConfigEntry {
  std::string_view section;  // empty for top-level keys
  std::string_view key;
  ConfigKind kind;
  bool secret = false;
};

// Defaults live in default_config_json(); this table fixes the accepted keys and their kinds.
inline const std::vector<ConfigEntry>& config_schema() {
  static const std::vector<ConfigEntry> schema = {
      {"", "seed", ConfigKind::Int},
      {"", "log_level", ConfigKind::String},

      {"llm", "base_url", ConfigKind::String},
      {"llm", "model", ConfigKind::String},
      {"llm", "api_key", ConfigKind::String, true},
      {"llm", "k", ConfigKind::Int},
      {"llm", "max_tokens", ConfigKind::Int},
      {"llm", "timeout_ms", ConfigKind::Int},
      {"llm", "max_retries", ConfigKind::Int},
      {"llm", "max_in_flight", ConfigKind::Int},
      {"llm", "logprobs", ConfigKind::Bool},
      {"llm", "send_top_k", ConfigKind::Bool},
      {"llm", "temperature", ConfigKind::Number},
      {"llm", "top_p", ConfigKind::Number},
      {"llm", "top_k", ConfigKind::OptInt},
      {"llm", "sample_seed", ConfigKind::OptInt},

      {"scorer", "base_url", ConfigKind::String},
      {"scorer", "api_key", ConfigKind::String, true},
      {"scorer", "timeout_ms", ConfigKind::Int},
      {"scorer", "max_retries", ConfigKind::Int},
      {"scorer", "max_batch", ConfigKind::Int},
      {"scorer", "max_in_flight", ConfigKind::Int},

      {"score", "provider", ConfigKind::String},
      {"score", "variant", ConfigKind::String},
      {"score", "perplexity_scope", ConfigKind::String},
      {"score", "workers", ConfigKind::Int},

      {"filter", "strategy", ConfigKind::String},
      {"filter", "fraction", ConfigKind::Number},
      {"filter", "key", ConfigKind::OptString},

      {"bootstrap", "resamples", ConfigKind::Int},
      {"bootstrap", "workers", ConfigKind::Int},

      {"sim", "n", ConfigKind::Int},
      {"sim", "calibration", ConfigKind::Number},
      {"sim", "k", ConfigKind::Int},
      {"sim", "class_prior", ConfigKind::Triple},
      {"sim", "class_scale", ConfigKind::Triple},
      {"sim", "fluency_noise", ConfigKind::Number},
      {"sim", "consistency_noise", ConfigKind::Number},
  };
  return schema;
}

inline Json default_config_json() {
  return Json{
      {"seed", 0},
      {"log_level", "info"},
      {"llm",
       {{"base_url", ""}, {"model", ""}, {"api_key", ""}, {"k", 8}, {"max_tokens", 4096}, {"timeout_ms", 120000},
        {"max_retries", 3}, {"max_in_flight", 8}, {"logprobs", true}, {"send_top_k", true}, {"temperature", 1.0},
        {"top_p", 1.0}, {"top_k", 50}, {"sample_seed", nullptr}}},
      {"scorer",
       {{"base_url", ""}, {"api_key", ""}, {"timeout_ms", 30000}, {"max_retries", 3}, {"max_batch", 32},
        {"max_in_flight", 8}}},
      {"score", {{"provider", "lexical"}, {"variant", "cocoa"}, {"perplexity_scope", "full"}, {"workers", 1}}},
      {"filter", {{"strategy", "per-class"}, {"fraction", 0.1}, {"key", nullptr}}},
      {"bootstrap", {{"resamples", 5000}, {"workers", 1}}},
      {"sim",
       {{"n", 1000}, {"calibration", 1.0}, {"k", 8}, {"class_prior", {0.1, 0.1, 0.8}}, {"class_scale", {1.0, 1.0, 1.0}},
        {"fluency_noise", 0.0}, {"consistency_noise", 0.0}}},
  };
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

inline std::optional<std::string> process_env(const std::string& name) {
  if (const char* v = std::getenv(name.c_str())) return std::string(v);
  return std::nullopt;
}

/// Resolved pipeline configuration: defaults, then a JSON file, then
/// CURATOR_<SECTION>_<KEY> environment variables, then explicit overrides.
class PipelineConfig {
 public:
  PipelineConfig() : json_(default_config_json()) {}

  static std::string env_name(const ConfigEntry& e) {
    std::string name = "CURATOR_";
    if (!e.section.empty()) {
      name += e.section;
      name += '_';
    }
    name += e.key;
    for (char& c : name) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return name;
  }

  /// Merges a config document; unknown sections and keys are rejected.
  void merge_json(const Json& doc, std::string_view origin = "config") {
    if (!doc.is_object()) throw Error(ErrorCode::InvalidConfig, std::string(origin) + ": top level must be an object");
    for (const auto& [name, value] : doc.items()) {
      if (const ConfigEntry* e = find("", name)) {
        set(*e, value, origin);
        continue;
      }
      if (!json_.contains(name) || !json_[name].is_object())
        throw Error(ErrorCode::InvalidConfig, std::string(origin) + ": unknown key '" + name + "'");
      if (!value.is_object())
        throw Error(ErrorCode::InvalidConfig, std::string(origin) + ": section '" + name + "' must be an object");
      for (const auto& [key, v] : value.items()) {
        const ConfigEntry* e = find(name, key);
        if (!e) throw Error(ErrorCode::InvalidConfig, std::string(origin) + ": unknown key '" + name + "." + key + "'");
        set(*e, v, origin);
      }
    }
  }

  void merge_file(const std::string& path) {
    InputFile in(path);
    Json doc;
    try {
      doc = Json::parse(in.stream());
    } catch (const Json::parse_error& e) {
      throw Error(ErrorCode::InvalidConfig, path + ": " + e.what());
    }
    merge_json(doc, path);
  }

  void merge_env(const EnvLookup& lookup = process_env) {
    for (const auto& e : config_schema()) {
      const std::string name = env_name(e);
      if (auto raw = lookup(name)) set(e, parse_env_value(e, *raw, name), name);
    }
  }

  /// Sets one value by dotted path ("filter.fraction" or "seed").
  void set(std::string_view path, const Json& value, std::string_view origin = "override") {
    const auto dot = path.find('.');
    const std::string_view section = dot == std::string_view::npos ? std::string_view{} : path.substr(0, dot);
    const std::string_view key = dot == std::string_view::npos ? path : path.substr(dot + 1);
    const ConfigEntry* e = find(section, key);
    if (!e) throw Error(ErrorCode::InvalidConfig, "unknown config key '" + std::string(path) + "'");
    set(*e, value, origin);
  }

  const Json& get(std::string_view section, std::string_view key) const {
    return section.empty() ? json_.at(std::string(key)) : json_.at(std::string(section)).at(std::string(key));
  }

  const Json& json() const { return json_; }

  /// The resolved config without secrets.
  Json redacted() const {
    Json out = json_;
    for (const auto& e : config_schema())
      if (e.secret) out[std::string(e.section)][std::string(e.key)] = get(e.section, e.key).get<std::string>().empty() ? "" : "***";
    return out;
  }

  /// Hash of the canonical resolved config, excluding secrets, as 16 hex digits.
  std::string hash() const {
    Json canonical = json_;
    for (const auto& e : config_schema())
      if (e.secret) canonical[std::string(e.section)].erase(std::string(e.key));
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical.dump())));
    return buf;
  }

  // -- typed views ----------------------------------------------------------

  std::int64_t seed() const { return get("", "seed").get<std::int64_t>(); }
  std::string log_level() const { return get("", "log_level").get<std::string>(); }

  GenerationConfig generation() const {
    GenerationConfig g;
    g.base_url = str("llm", "base_url");
    g.model = str("llm", "model");
    g.api_key = str("llm", "api_key");
    g.k = count("llm", "k", 1);
    g.max_tokens = count("llm", "max_tokens", 1);
    g.request_timeout = std::chrono::milliseconds(count("llm", "timeout_ms", 1));
    g.max_retries = static_cast<int>(count("llm", "max_retries", 0));
    g.max_in_flight = count("llm", "max_in_flight", 1);
    g.logprobs = get("llm", "logprobs").get<bool>();
    g.send_top_k = get("llm", "send_top_k").get<bool>();
    g.sample_params.temperature = get("llm", "temperature").get<double>();
    g.sample_params.top_p = get("llm", "top_p").get<double>();
    const Json& top_k = get("llm", "top_k");
    g.sample_params.top_k = top_k.is_null() ? std::nullopt : std::optional<std::int64_t>(top_k.get<std::int64_t>());
    const Json& seed = get("llm", "sample_seed");
    g.sample_params.seed = seed.is_null() ? std::nullopt : std::optional<std::int64_t>(seed.get<std::int64_t>());
    return g;
  }

  RemoteScorerConfig scorer() const {
    RemoteScorerConfig s;
    s.base_url = str("scorer", "base_url");
    s.api_key = str("scorer", "api_key");
    s.timeout = std::chrono::milliseconds(count("scorer", "timeout_ms", 1));
    s.max_retries = static_cast<int>(count("scorer", "max_retries", 0));
    s.max_batch = count("scorer", "max_batch", 1);
    s.max_in_flight = count("scorer", "max_in_flight", 1);
    return s;
  }

  std::string provider() const { return str("score", "provider"); }

  DatasetScoringOptions scoring() const {
    DatasetScoringOptions o;
    o.scoring.variant = parse_metric_variant(str("score", "variant"));
    o.scoring.scope = parse_perplexity_scope(str("score", "perplexity_scope"));
    o.workers = count("score", "workers", 1);
    return o;
  }

  FilterStrategy filter_strategy() const { return parse_filter_strategy(str("filter", "strategy")); }
  double filter_fraction() const { return get("filter", "fraction").get<double>(); }
  std::optional<MetricVariant> filter_key() const {
    const Json& k = get("filter", "key");
    if (k.is_null()) return std::nullopt;
    return parse_metric_variant(k.get<std::string>());
  }

  std::size_t resamples() const { return count("bootstrap", "resamples", 1); }
  std::size_t bootstrap_workers() const { return count("bootstrap", "workers", 1); }

  SimConfig simulation() const {
    SimConfig s;
    s.n_examples = count("sim", "n", 0);
    s.calibration = get("sim", "calibration").get<double>();
    s.k = count("sim", "k", 1);
    s.class_prior = triple("sim", "class_prior");
    s.class_scale = triple("sim", "class_scale");
    s.fluency_noise = get("sim", "fluency_noise").get<double>();
    s.consistency_noise = get("sim", "consistency_noise").get<double>();
    s.seed = static_cast<std::uint64_t>(seed());
    return s;
  }

 private:
  static const ConfigEntry* find(std::string_view section, std::string_view key) {
    for (const auto& e : config_schema())
      if (e.section == section && e.key == key) return &e;
    return nullptr;
  }

  static std::string dotted(const ConfigEntry& e) {
    return e.section.empty() ? std::string(e.key) : std::string(e.section) + "." + std::string(e.key);
  }

  static bool matches(ConfigKind kind, const Json& v) {
    switch (kind) {
      case ConfigKind::String: return v.is_string();
      case ConfigKind::OptString: return v.is_string() || v.is_null();
      case ConfigKind::Int: return v.is_number_integer();
      case ConfigKind::OptInt: return v.is_number_integer() || v.is_null();
      case ConfigKind::Number: return v.is_number();
      case ConfigKind::Bool: return v.is_boolean();
      case ConfigKind::Triple:
        return v.is_array() && v.size() == kNumClasses &&
               std::all_of(v.begin(), v.end(), [](const Json& x) { return x.is_number(); });
    }
    return false;
  }

  static std::string_view kind_name(ConfigKind kind) {
    switch (kind) {
      case ConfigKind::String: return "a string";
      case ConfigKind::OptString: return "a string or null";
      case ConfigKind::Int: return "an integer";
      case ConfigKind::OptInt: return "an integer or null";
      case ConfigKind::Number: return "a number";
      case ConfigKind::Bool: return "a boolean";
      case ConfigKind::Triple: return "an array of 3 numbers";
    }
    return "";
  }

  void set(const ConfigEntry& e, const Json& value, std::string_view origin) {
    if (!matches(e.kind, value))
      throw Error(ErrorCode::InvalidConfig,
                  std::string(origin) + ": '" + dotted(e) + "' must be " + std::string(kind_name(e.kind)));
    Json stored = value;
    if (e.kind == ConfigKind::Number || e.kind == ConfigKind::Triple) {
      // Store numbers as doubles so 1 and 1.0 hash identically.
      if (e.kind == ConfigKind::Number) {
        stored = value.get<double>();
      } else {
        stored = Json::array();
        for (const auto& x : value) stored.push_back(x.get<double>());
      }
    }
    if (e.section.empty()) {
      json_[std::string(e.key)] = std::move(stored);
    } else {
      json_[std::string(e.section)][std::string(e.key)] = std::move(stored);
    }
  }

  static Json parse_env_value(const ConfigEntry& e, const std::string& raw, const std::string& name) {
    auto bad = [&] {
      return Error(ErrorCode::InvalidConfig, name + "='" + raw + "' is not " + std::string(kind_name(e.kind)));
    };
    auto parse_int = [&](std::string_view s) {
      std::int64_t v = 0;
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc{} || p != s.data() + s.size()) throw bad();
      return v;
    };
    auto parse_num = [&](std::string_view s) {
      s = detail::trim(s);
      double v = 0;
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc{} || p != s.data() + s.size()) throw bad();
      return v;
    };
    const bool null_like = raw.empty() || raw == "null";
    switch (e.kind) {
      case ConfigKind::String: return raw;
      case ConfigKind::OptString: return null_like ? Json(nullptr) : Json(raw);
      case ConfigKind::Int: return parse_int(raw);
      case ConfigKind::OptInt: return null_like ? Json(nullptr) : Json(parse_int(raw));
      case ConfigKind::Number: return parse_num(raw);
      case ConfigKind::Bool: {
        const std::string v = detail::to_lower(raw);
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        throw bad();
      }
      case ConfigKind::Triple: {
        Json arr = Json::array();
        std::string_view rest = raw;
        while (true) {
          const auto comma = rest.find(',');
          arr.push_back(parse_num(rest.substr(0, comma)));
          if (comma == std::string_view::npos) break;
          rest.remove_prefix(comma + 1);
        }
        if (arr.size() != kNumClasses) throw bad();
        return arr;
      }
    }
    throw bad();
  }

  std::string str(std::string_view s, std::string_view k) const { return get(s, k).get<std::string>(); }

  std::size_t count(std::string_view s, std::string_view k, std::int64_t min) const {
    const auto v = get(s, k).get<std::int64_t>();
    if (v < min)
      throw Error(ErrorCode::InvalidConfig, std::string(s) + "." + std::string(k) + " must be >= " + std::to_string(min));
    return static_cast<std::size_t>(v);
  }

  std::array<double, kNumClasses> triple(std::string_view s, std::string_view k) const {
    const Json& v = get(s, k);
    return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
  }

  Json json_;
};

}  // namespace curator
