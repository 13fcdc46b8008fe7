#include "support.hpp"

using namespace curator;
using namespace curator::testing;

TEST(LexicalCosine, SpecExamples) {
  EXPECT_DOUBLE_EQ(lexical_cosine("gene up", "gene up"), 1.0);
  EXPECT_DOUBLE_EQ(lexical_cosine("", "anything"), 0.0);
  EXPECT_DOUBLE_EQ(lexical_cosine("anything", ""), 0.0);
  EXPECT_DOUBLE_EQ(lexical_cosine("", ""), 1.0);
  EXPECT_DOUBLE_EQ(lexical_cosine("a b", "a c"), 0.5);
}

TEST(LexicalCosine, HandComputedWithRepeats) {
  // (2,1) . (1,1) / (sqrt5 * sqrt2)
  EXPECT_NEAR(lexical_cosine("a a b", "a b"), 3.0 / std::sqrt(10.0), 1e-15);
}

TEST(LexicalCosine, CaseAndPunctuationInsensitive) {
  EXPECT_DOUBLE_EQ(lexical_cosine("Gene, UP!", "gene up"), 1.0);
  EXPECT_DOUBLE_EQ(lexical_cosine("<think>gene</think>", "think gene think"), 1.0);
  EXPECT_DOUBLE_EQ(lexical_cosine("gene\u2014up", "gene up"), 1.0);
  EXPECT_DOUBLE_EQ(lexical_cosine("gene\u3002up\u00a0x", "gene up x"), 1.0);
  EXPECT_DOUBLE_EQ(lexical_cosine("gène", "gène"), 1.0);
  EXPECT_DOUBLE_EQ(lexical_cosine("gène", "gene"), 0.0);
}

TEST(LexicalCosine, OnlySeparatorsCountAsEmpty) {
  EXPECT_DOUBLE_EQ(lexical_cosine("  ,;  ", ""), 1.0);
  EXPECT_DOUBLE_EQ(lexical_cosine("...", "word"), 0.0);
}

TEST(LexicalCosine, SymmetricAndScaleInvariant) {
  SplitMix64 rng(99);
  for (int i = 0; i < 2000; ++i) {
    const std::string a = random_text(rng, 15), b = random_text(rng, 15);
    const double s = lexical_cosine(a, b);
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
    EXPECT_EQ(s, lexical_cosine(b, a));
    EXPECT_NEAR(lexical_cosine(a + " " + a, b + " " + b), s, 1e-12);
  }
}

TEST(LexicalCosine, SelfSimilarityIsOne) {
  SplitMix64 rng(5);
  for (int i = 0; i < 500; ++i) {
    const std::string a = random_text(rng, 10);
    EXPECT_DOUBLE_EQ(lexical_cosine(a, a), 1.0);
  }
}

TEST(LexicalCosine, InvalidUtf8IsTotal) {
  EXPECT_NO_THROW(lexical_cosine("\xff\xfe abc \xc3", "abc \xe2\x82"));
}

TEST(AnswerAgreement, Examples) {
  const auto up = ReasoningTrace::from_text("<answer>up</answer>", SamplingParams::greedy());
  const auto up2 = ReasoningTrace::from_text("<answer>upregulated</answer>", SamplingParams::greedy());
  const auto down = ReasoningTrace::from_text("<answer>down</answer>", SamplingParams::greedy());
  const auto none = ReasoningTrace::from_text("nothing", SamplingParams::greedy());
  EXPECT_EQ(answer_agreement(up, up2), 1.0);
  EXPECT_EQ(answer_agreement(up, down), 0.0);
  EXPECT_CURATOR_ERROR(answer_agreement(up, none), ErrorCode::UnparsedTrace);
}

TEST(Clamp01, Bounds) {
  EXPECT_EQ(clamp01(1.2), 1.0);
  EXPECT_EQ(clamp01(-0.1), 0.0);
  EXPECT_EQ(clamp01(0.3), 0.3);
  EXPECT_EQ(clamp01(std::nan("")), 0.0);
}

// -- remote scorer --------------------------------------------------------------

namespace {

RemoteScorerConfig fast_config(const std::string& url) {
  RemoteScorerConfig cfg;
  cfg.base_url = url;
  cfg.timeout = std::chrono::milliseconds(2000);
  cfg.backoff_base = std::chrono::milliseconds(1);
  return cfg;
}

// Replies with score = index / 1000 where each candidate text is "t<index>".
void index_scores(const httplib::Request& req, httplib::Response& res) {
  const Json body = Json::parse(req.body);
  Json scores = Json::array();
  for (const auto& pair : body["pairs"]) scores.push_back(std::stoi(pair[1].get<std::string>().substr(1)) / 1000.0);
  res.set_content(Json{{"scores", scores}}.dump(), "application/json");
}

std::vector<TextPair> indexed_pairs(std::size_t n) {
  std::vector<TextPair> pairs;
  for (std::size_t i = 0; i < n; ++i) pairs.emplace_back("ref", "t" + std::to_string(i));
  return pairs;
}

}  // namespace

TEST(RemoteScorer, SinglePair) {
  MockServer server;
  server.post("/score", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"scores":[0.9]})", "application/json");
  });
  server.start();
  const std::vector<TextPair> pairs{{"a", "b"}};
  EXPECT_EQ(remote_score_batch(fast_config(server.url()), pairs), std::vector<double>{0.9});
  const auto reqs = server.requests();
  ASSERT_EQ(reqs.size(), 1u);
  EXPECT_EQ(Json::parse(reqs[0].body), Json::parse(R"({"pairs":[["a","b"]]})"));
}

TEST(RemoteScorer, ChunksByMaxBatch) {
  MockServer server;
  server.post("/score", index_scores);
  server.start();
  auto cfg = fast_config(server.url());
  cfg.max_batch = 2;
  const auto scores = remote_score_batch(cfg, indexed_pairs(3));
  EXPECT_EQ(server.count(), 2u);
  EXPECT_EQ(scores, (std::vector<double>{0.0, 0.001, 0.002}));
}

TEST(RemoteScorer, PreservesOrderAcrossChunks) {
  MockServer server;
  server.post("/score", index_scores);
  server.start();
  SplitMix64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    auto cfg = fast_config(server.url());
    cfg.max_batch = 1 + rng.below(7);
    const std::size_t n = 1 + rng.below(40);
    const auto scores = remote_score_batch(cfg, indexed_pairs(n));
    ASSERT_EQ(scores.size(), n);
    for (std::size_t i = 0; i < n; ++i) EXPECT_DOUBLE_EQ(scores[i], i / 1000.0);
  }
}

TEST(RemoteScorer, LengthMismatchIsProtocolError) {
  MockServer server;
  server.post("/score", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"scores":[0.1,0.2]})", "application/json");
  });
  server.start();
  EXPECT_CURATOR_ERROR(remote_score_batch(fast_config(server.url()), indexed_pairs(3)), ErrorCode::ProtocolError);
}

TEST(RemoteScorer, NonNumericScoreIsProtocolError) {
  MockServer server;
  server.post("/score", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"scores":["high"]})", "application/json");
  });
  server.start();
  EXPECT_CURATOR_ERROR(remote_score_batch(fast_config(server.url()), indexed_pairs(1)), ErrorCode::ProtocolError);
}

TEST(RemoteScorer, ClampsOutOfRangeScores) {
  MockServer server;
  server.post("/score", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"scores":[1.2,-0.1]})", "application/json");
  });
  server.start();
  EXPECT_EQ(remote_score_batch(fast_config(server.url()), indexed_pairs(2)), (std::vector<double>{1.0, 0.0}));
}

TEST(RemoteScorer, RetriesServerErrorsThenSucceeds) {
  std::atomic<int> calls{0};
  MockServer server;
  server.post("/score", [&](const httplib::Request& req, httplib::Response& res) {
    if (calls++ < 2) {
      res.status = 503;
      return;
    }
    index_scores(req, res);
  });
  server.start();
  EXPECT_EQ(remote_score_batch(fast_config(server.url()), indexed_pairs(1)).size(), 1u);
  EXPECT_EQ(server.count(), 3u);
}

TEST(RemoteScorer, ExhaustedRetriesAreServiceUnavailable) {
  MockServer server;
  server.post("/score", [](const httplib::Request&, httplib::Response& res) { res.status = 500; });
  server.start();
  auto cfg = fast_config(server.url());
  cfg.max_retries = 2;
  EXPECT_CURATOR_ERROR(remote_score_batch(cfg, indexed_pairs(1)), ErrorCode::ServiceUnavailable);
  EXPECT_EQ(server.count(), 3u);
}

TEST(RemoteScorer, ClientErrorsAreNotRetried) {
  MockServer server;
  server.post("/score", [](const httplib::Request&, httplib::Response& res) {
    res.status = 400;
    res.set_content(R"({"error":"pair too long"})", "application/json");
  });
  server.start();
  try {
    remote_score_batch(fast_config(server.url()), indexed_pairs(1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ProtocolError);
    EXPECT_NE(e.message().find("pair too long"), std::string::npos);
  }
  EXPECT_EQ(server.count(), 1u);
}

TEST(RemoteScorer, DeadEndpointIsServiceUnavailable) {
  auto cfg = fast_config("http://127.0.0.1:1");
  cfg.max_retries = 1;
  EXPECT_CURATOR_ERROR(remote_score_batch(cfg, indexed_pairs(1)), ErrorCode::ServiceUnavailable);
}

TEST(RemoteScorer, SendsBearerTokenAndHonoursPathPrefix) {
  MockServer server;
  server.post("/v2/score", index_scores);
  server.start();
  auto cfg = fast_config(server.url() + "/v2/");
  cfg.api_key = "sk-test";
  remote_score_batch(cfg, indexed_pairs(1));
  const auto reqs = server.requests();
  ASSERT_EQ(reqs.size(), 1u);
  EXPECT_EQ(reqs[0].authorization, "Bearer sk-test");
}

TEST(RemoteScorer, RejectsEmptyInput) {
  auto cfg = fast_config("http://127.0.0.1:1");
  EXPECT_CURATOR_ERROR(remote_score_batch(cfg, {}), ErrorCode::InvalidArgument);
  const std::vector<TextPair> empty_string{{"a", ""}};
  EXPECT_CURATOR_ERROR(remote_score_batch(cfg, empty_string), ErrorCode::InvalidArgument);
}

TEST(RemoteScorer, ReferenceTraceIsAlwaysFirst) {
  MockServer server;
  server.post("/score", [](const httplib::Request& req, httplib::Response& res) {
    Json scores = Json::array();
    for (std::size_t i = 0; i < Json::parse(req.body)["pairs"].size(); ++i) scores.push_back(0.5);
    res.set_content(Json{{"scores", scores}}.dump(), "application/json");
  });
  server.start();
  auto cfg = fast_config(server.url());
  cfg.max_batch = 3;
  RemoteScorer scorer(cfg);
  SplitMix64 rng(8);
  TraceBundle b = random_bundle(rng, 0);
  b.greedy = ReasoningTrace::from_text("<think>r0 text</think><answer>up</answer>", SamplingParams::greedy(), TokenLogProbs{-1.0});
  b.samples.clear();
  for (int i = 0; i < 8; ++i) b.samples.push_back(ReasoningTrace::from_text("sample " + std::to_string(i), {1.0, 1.0, 50, std::nullopt}));
  const auto scored = score_bundle(b, scorer, MetricVariant::Cocoa);
  EXPECT_DOUBLE_EQ(scored.scores.inconsistency, 0.5);
  std::size_t seen = 0;
  for (const auto& r : server.requests()) {
    const Json body = Json::parse(r.body);
    for (const auto& pair : body["pairs"]) {
      EXPECT_EQ(pair[0], b.greedy.text);
      EXPECT_EQ(pair[1], b.samples[seen].text);
      ++seen;
    }
  }
  EXPECT_EQ(seen, 8u);
}
