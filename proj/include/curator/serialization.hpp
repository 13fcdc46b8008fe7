#pragma once

#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <string_view>

#include "curator/core.hpp"
#include "json.hpp"

namespace curator {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Encoding
// ---------------------------------------------------------------------------

inline Json to_json(const QueryTuple& q) {
  Json j = {{"id", q.id}, {"cell_type", q.cell_type}, {"perturbation", q.perturbation}, {"gene", q.gene}};
  if (q.gold_label) j["gold_label"] = std::string(to_string(*q.gold_label));
  return j;
}

inline Json to_json(const SamplingParams& p) {
  Json j = {{"temperature", p.temperature}, {"top_p", p.top_p}};
  j["top_k"] = p.top_k ? Json(*p.top_k) : Json(nullptr);
  if (p.seed) j["seed"] = *p.seed;
  return j;
}

inline Json to_json(const ReasoningTrace& t) {
  Json j = {{"text", t.text}};
  if (t.answer) j["answer"] = std::string(to_string(*t.answer));
  if (t.token_logprobs) j["logprobs"] = *t.token_logprobs;
  if (t.tokens) j["tokens"] = *t.tokens;
  j["sampling"] = to_json(t.sampling);
  return j;
}

inline Json to_json(const TraceBundle& b) {
  Json samples = Json::array();
  for (const auto& s : b.samples) samples.push_back(to_json(s));
  return Json{{"v", kSchemaVersion}, {"query", to_json(b.query)}, {"greedy", to_json(b.greedy)}, {"samples", std::move(samples)}};
}

inline Json to_json(const UncertaintyScores& s) {
  Json j;
  j["ppl"] = s.ppl ? Json(*s.ppl) : Json(nullptr);
  j["inconsistency"] = s.inconsistency;
  j["cocoa"] = s.cocoa ? Json(*s.cocoa) : Json(nullptr);
  j["variant"] = std::string(to_string(s.variant));
  return j;
}

inline Json to_json(const ScoredExample& e) {
  Json j = to_json(e.bundle);
  j["scores"] = to_json(e.scores);
  return j;
}

/// One compact line, no trailing newline.
template <typename T>
std::string to_jsonl_line(const T& value) {
  return to_json(value).dump(-1, ' ', false, Json::error_handler_t::strict);
}

// ---------------------------------------------------------------------------
// Decoding
// ---------------------------------------------------------------------------

namespace detail {

inline const Json& require(const Json& j, std::string_view key) {
  auto it = j.find(key);
  if (it == j.end()) throw Error(ErrorCode::ParseError, "missing field '" + std::string(key) + "'");
  return *it;
}

inline std::string require_string(const Json& j, std::string_view key) {
  const Json& v = require(j, key);
  if (!v.is_string()) throw Error(ErrorCode::ParseError, "field '" + std::string(key) + "' must be a string");
  return v.get<std::string>();
}

inline double require_number(const Json& j, std::string_view key) {
  const Json& v = require(j, key);
  if (!v.is_number()) throw Error(ErrorCode::ParseError, "field '" + std::string(key) + "' must be a number");
  return v.get<double>();
}

inline std::optional<std::int64_t> optional_int(const Json& j, std::string_view key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_number_integer()) throw Error(ErrorCode::ParseError, "field '" + std::string(key) + "' must be an integer");
  return it->get<std::int64_t>();
}

inline ClassLabel label_from_json(const Json& v, std::string_view key) {
  if (!v.is_string()) throw Error(ErrorCode::ParseError, "field '" + std::string(key) + "' must be a string");
  auto label = try_parse_class_label(v.get<std::string>());
  if (!label) throw Error(ErrorCode::ParseError, "field '" + std::string(key) + "' holds unknown label '" + v.get<std::string>() + "'");
  return *label;
}

}  // namespace detail

inline QueryTuple query_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ParseError, "query must be an object");
  QueryTuple q;
  q.id = detail::require_string(j, "id");
  q.cell_type = detail::require_string(j, "cell_type");
  q.perturbation = detail::require_string(j, "perturbation");
  q.gene = detail::require_string(j, "gene");
  if (auto it = j.find("gold_label"); it != j.end() && !it->is_null()) q.gold_label = detail::label_from_json(*it, "gold_label");
  try {
    validate(q);
  } catch (const Error& e) {
    throw Error(ErrorCode::ParseError, e.message());
  }
  return q;
}

inline SamplingParams sampling_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ParseError, "sampling must be an object");
  SamplingParams p;
  p.temperature = detail::require_number(j, "temperature");
  p.top_p = detail::require_number(j, "top_p");
  p.top_k = detail::optional_int(j, "top_k");
  p.seed = detail::optional_int(j, "seed");
  return p;
}

/// When "answer" is present it is trusted; otherwise the parse status is
/// re-derived from the text so failing traces keep their failure reason.
inline ReasoningTrace trace_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ParseError, "trace must be an object");
  ReasoningTrace t;
  t.text = detail::require_string(j, "text");
  if (auto it = j.find("answer"); it != j.end() && !it->is_null()) {
    t.answer = detail::label_from_json(*it, "answer");
    t.parse_status = ParseStatus::Ok;
  } else {
    const AnswerParse parse = extract_answer(t.text);
    t.answer = parse.label;
    t.parse_status = parse.status;
  }
  if (auto it = j.find("logprobs"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw Error(ErrorCode::ParseError, "logprobs must be an array");
    TokenLogProbs lp;
    lp.reserve(it->size());
    for (const auto& v : *it) {
      if (!v.is_number()) throw Error(ErrorCode::ParseError, "logprobs must hold numbers");
      lp.push_back(v.get<double>());
    }
    t.token_logprobs = std::move(lp);
  }
  if (auto it = j.find("tokens"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw Error(ErrorCode::ParseError, "tokens must be an array");
    std::vector<std::string> toks;
    toks.reserve(it->size());
    for (const auto& v : *it) {
      if (!v.is_string()) throw Error(ErrorCode::ParseError, "tokens must hold strings");
      toks.push_back(v.get<std::string>());
    }
    t.tokens = std::move(toks);
  }
  t.sampling = sampling_from_json(detail::require(j, "sampling"));
  return t;
}

inline TraceBundle bundle_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ParseError, "bundle line must be a JSON object");
  const Json& v = detail::require(j, "v");
  if (!v.is_number_integer() || v.get<int>() != kSchemaVersion)
    throw Error(ErrorCode::ParseError, "unsupported schema version " + v.dump());
  TraceBundle b;
  b.query = query_from_json(detail::require(j, "query"));
  b.greedy = trace_from_json(detail::require(j, "greedy"));
  const Json& samples = detail::require(j, "samples");
  if (!samples.is_array()) throw Error(ErrorCode::ParseError, "samples must be an array");
  b.samples.reserve(samples.size());
  for (const auto& s : samples) b.samples.push_back(trace_from_json(s));
  return b;
}

inline UncertaintyScores scores_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ParseError, "scores must be an object");
  UncertaintyScores s;
  if (auto it = j.find("ppl"); it != j.end() && !it->is_null()) s.ppl = detail::require_number(j, "ppl");
  s.inconsistency = detail::require_number(j, "inconsistency");
  if (auto it = j.find("cocoa"); it != j.end() && !it->is_null()) s.cocoa = detail::require_number(j, "cocoa");
  if (auto it = j.find("variant"); it != j.end()) {
    if (!it->is_string()) throw Error(ErrorCode::ParseError, "variant must be a string");
    try {
      s.variant = parse_metric_variant(it->get<std::string>());
    } catch (const Error& e) {
      throw Error(ErrorCode::ParseError, e.message());
    }
  }
  return s;
}

inline ScoredExample scored_from_json(const Json& j) {
  ScoredExample e;
  e.bundle = bundle_from_json(j);
  if (!e.bundle.greedy.parsed())
    throw Error(ErrorCode::ParseError, "scored example '" + e.bundle.query.id + "' has an unparsed greedy trace");
  e.scores = scores_from_json(detail::require(j, "scores"));
  return e;
}

inline Json parse_json_line(std::string_view line) {
  try {
    return Json::parse(line);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

inline TraceBundle parse_bundle_line(std::string_view line) { return bundle_from_json(parse_json_line(line)); }
inline ScoredExample parse_scored_line(std::string_view line) { return scored_from_json(parse_json_line(line)); }
inline QueryTuple parse_query_line(std::string_view line) { return query_from_json(parse_json_line(line)); }

// ---------------------------------------------------------------------------
// Files ("-" means stdin / stdout)
// ---------------------------------------------------------------------------

class InputFile {
 public:
  explicit InputFile(const std::string& path) : path_(path) {
    if (path == "-") {
      stream_ = &std::cin;
    } else {
      owned_ = std::make_unique<std::ifstream>(path, std::ios::binary);
      if (!*owned_) throw Error(ErrorCode::IoError, "cannot open '" + path + "' for reading");
      stream_ = owned_.get();
    }
  }

  std::istream& stream() { return *stream_; }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::unique_ptr<std::ifstream> owned_;
  std::istream* stream_ = nullptr;
};

class OutputFile {
 public:
  explicit OutputFile(const std::string& path) : path_(path) {
    if (path == "-") {
      stream_ = &std::cout;
    } else {
      owned_ = std::make_unique<std::ofstream>(path, std::ios::binary | std::ios::trunc);
      if (!*owned_) throw Error(ErrorCode::IoError, "cannot open '" + path + "' for writing");
      stream_ = owned_.get();
    }
  }

  std::ostream& stream() { return *stream_; }
  const std::string& path() const { return path_; }
  bool is_stdout() const { return path_ == "-"; }

  void write_line(std::string_view line) {
    stream_->write(line.data(), static_cast<std::streamsize>(line.size()));
    stream_->put('\n');
    if (!*stream_) throw Error(ErrorCode::IoError, "write to '" + path_ + "' failed");
  }

  void close() {
    stream_->flush();
    if (!*stream_) throw Error(ErrorCode::IoError, "flush of '" + path_ + "' failed");
    if (owned_) owned_->close();
  }

 private:
  std::string path_;
  std::unique_ptr<std::ofstream> owned_;
  std::ostream* stream_ = nullptr;
};

/// Line-oriented JSONL reader that tracks 1-based line numbers and skips blank lines.
class JsonlReader {
 public:
  explicit JsonlReader(std::istream& in) : in_(in) {}

  bool next(std::string& line) {
    while (std::getline(in_, line)) {
      ++line_no_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!detail::trim(line).empty()) return true;
    }
    if (in_.bad()) throw Error(ErrorCode::IoError, "read failed after line " + std::to_string(line_no_));
    return false;
  }

  std::size_t line_number() const { return line_no_; }

 private:
  std::istream& in_;
  std::size_t line_no_ = 0;
};

/// Parses every line of a JSONL stream with `parse`, prefixing errors with the line number.
template <typename Parse>
auto read_jsonl(std::istream& in, Parse parse) {
  using T = decltype(parse(std::string_view{}));
  std::vector<T> out;
  JsonlReader reader(in);
  std::string line;
  while (reader.next(line)) {
    try {
      out.push_back(parse(line));
    } catch (const Error& e) {
      throw Error(e.code(), "line " + std::to_string(reader.line_number()) + ": " + e.message());
    }
  }
  return out;
}

inline std::vector<ScoredExample> read_scored_file(const std::string& path) {
  InputFile in(path);
  return read_jsonl(in.stream(), parse_scored_line);
}

inline std::vector<TraceBundle> read_bundle_file(const std::string& path) {
  InputFile in(path);
  return read_jsonl(in.stream(), parse_bundle_line);
}

}  // namespace curator
