#pragma once

// Random data, temp dirs and a mock HTTP server shared by the unit tests and
// the acceptance runner.

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "curator/curator.hpp"
#include "httplib.h"

namespace curator::testing {

inline std::string random_text(SplitMix64& rng, std::size_t max_words) {
  static const std::vector<std::string> words = {"ribosome", "Kinase", "stress", "ATF4", "gène", "p53", "up", "down",
                                                 "\"quoted\"", "tab\there", "line\nbreak", "λ", "✓", "", "a/b"};
  std::string out;
  const std::size_t n = rng.below(max_words + 1);
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += ' ';
    out += words[rng.below(words.size())];
  }
  return out;
}

inline ReasoningTrace random_trace(SplitMix64& rng, bool greedy, std::size_t index) {
  std::string text = "<think>" + random_text(rng, 12) + "</think>";
  switch (rng.below(4)) {
    case 0: text += "<answer>upregulated</answer>"; break;
    case 1: text += "<answer> Downregulated </answer>"; break;
    case 2: text += "<answer>not differentially expressed</answer>"; break;
    default: text += rng.below(2) ? "<answer>maybe</answer>" : "no tag"; break;
  }
  SamplingParams params = greedy ? SamplingParams::greedy() : SamplingParams{1.0, 1.0, 50, std::nullopt};
  if (!greedy && rng.below(2)) params.top_k.reset();
  if (!greedy && rng.below(2)) params.seed = static_cast<std::int64_t>(index);
  std::optional<TokenLogProbs> lps;
  std::optional<std::vector<std::string>> tokens;
  if (greedy || rng.below(2)) {
    TokenLogProbs v(1 + rng.below(20));
    for (double& x : v) x = -5.0 * rng.uniform();
    if (rng.below(3) == 0) v[0] = 0.0;
    lps = v;
    if (rng.below(2)) {
      std::vector<std::string> t(v.size());
      for (auto& s : t) s = random_text(rng, 1);
      tokens = t;
    }
  }
  return ReasoningTrace::from_text(text, params, lps, tokens);
}

inline TraceBundle random_bundle(SplitMix64& rng, std::size_t index, std::size_t max_k = 8) {
  TraceBundle b;
  b.query.id = "q" + std::to_string(index);
  b.query.cell_type = rng.below(2) ? "K562" : "RPE1 ✓";
  b.query.perturbation = "P" + std::to_string(rng.below(1000));
  b.query.gene = "G\"" + std::to_string(rng.below(1000));
  if (rng.below(4)) b.query.gold_label = kAllClasses[rng.below(3)];
  b.greedy = random_trace(rng, true, index);
  const std::size_t k = rng.below(max_k + 1);
  for (std::size_t i = 0; i < k; ++i) b.samples.push_back(random_trace(rng, false, i));
  return b;
}

/// Scored example with hand-set labels and a cocoa score; inconsistency = score / 2, ppl = 1.
inline ScoredExample make_scored(std::string id, ClassLabel predicted, std::optional<ClassLabel> gold, double score) {
  ScoredExample e;
  e.bundle.query = {std::move(id), "K562", "P", "G", gold};
  e.bundle.greedy = ReasoningTrace::from_text("<answer>" + std::string(to_string(predicted)) + "</answer>",
                                              SamplingParams::greedy(), TokenLogProbs{0.0});
  e.bundle.samples.push_back(e.bundle.greedy);
  e.bundle.samples.back().sampling = {1.0, 1.0, 50, std::nullopt};
  e.scores.ppl = 1.0;
  e.scores.inconsistency = score / 2.0;
  e.scores.cocoa = score;
  e.scores.variant = MetricVariant::Cocoa;
  return e;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

/// Fresh directory removed at scope exit.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("curator-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

struct CapturedRequest {
  std::string path;
  std::string body;
  std::string authorization;
};

/// Local HTTP server on an ephemeral port that records every request.
class MockServer {
 public:
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  MockServer& post(const std::string& path, Handler handler) {
    server_.Post(path, [this, handler](const httplib::Request& req, httplib::Response& res) {
      {
        std::lock_guard lock(mu_);
        requests_.push_back({req.path, req.body, req.get_header_value("Authorization")});
      }
      handler(req, res);
    });
    return *this;
  }

  void start() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~MockServer() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

  std::vector<CapturedRequest> requests() const {
    std::lock_guard lock(mu_);
    return requests_;
  }

  std::size_t count() const {
    std::lock_guard lock(mu_);
    return requests_.size();
  }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  mutable std::mutex mu_;
  std::vector<CapturedRequest> requests_;
};

}  // namespace curator::testing
