#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <string>

#include "curator/core.hpp"
#include "curator/serialization.hpp"

namespace curator {

/// Summary written beside every output file. `class_counts` covers accepted
/// examples only; examples that could not be used are tallied in `rejected`.
struct DatasetManifest {
  std::string source_path;
  std::size_t n_examples = 0;
  std::array<std::size_t, kNumClasses> class_counts{};
  std::size_t rejected = 0;
  std::string created_at;
  std::string pipeline_config_hash;
  Json details = Json::object();

  void count(ClassLabel label) {
    ++class_counts[index_of(label)];
    ++n_examples;
  }
};

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline Json to_json(const DatasetManifest& m) {
  Json counts = Json::object();
  for (ClassLabel c : kAllClasses) counts[std::string(to_string(c))] = m.class_counts[index_of(c)];
  Json j = {{"source_path", m.source_path},
            {"n_examples", m.n_examples},
            {"class_counts", std::move(counts)},
            {"rejected", m.rejected},
            {"created_at", m.created_at},
            {"pipeline_config_hash", m.pipeline_config_hash}};
  if (!m.details.empty()) j["details"] = m.details;
  return j;
}

inline DatasetManifest manifest_from_json(const Json& j) {
  DatasetManifest m;
  m.source_path = detail::require_string(j, "source_path");
  m.n_examples = detail::require(j, "n_examples").get<std::size_t>();
  const Json& counts = detail::require(j, "class_counts");
  for (ClassLabel c : kAllClasses) m.class_counts[index_of(c)] = detail::require(counts, to_string(c)).get<std::size_t>();
  m.rejected = detail::require(j, "rejected").get<std::size_t>();
  m.created_at = detail::require_string(j, "created_at");
  m.pipeline_config_hash = detail::require_string(j, "pipeline_config_hash");
  if (auto it = j.find("details"); it != j.end()) m.details = *it;
  return m;
}

inline void write_manifest(const DatasetManifest& m, const std::string& path) {
  OutputFile out(path);
  out.stream() << to_json(m).dump(2) << '\n';
  out.close();
}

}  // namespace curator
