#include "taste/scorer.hpp"

#include <atomic>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "stub_server.hpp"

using namespace taste;
using testing_support::StubServer;

namespace {

// Stub scoring service: score = hypothesis length / 100, capped at 1.
// Scores above 1 are sent back as-is when `raw` is set.
void install_score_service(StubServer &stub, std::atomic<int> &requests, bool raw = false) {
  stub.server().Get("/health", [](const httplib::Request &, httplib::Response &res) {
    res.set_content(R"({"status":"ok","model":"stub"})", "application/json");
  });
  stub.server().Post("/score", [&requests, raw](const httplib::Request &req, httplib::Response &res) {
    ++requests;
    const auto body = nlohmann::json::parse(req.body);
    nlohmann::json scores = nlohmann::json::array();
    for (const auto &item : body["items"]) {
      const double v = static_cast<double>(item["mt"].get<std::string>().size()) / 100.0;
      scores.push_back(raw ? v : std::min(1.0, v));
    }
    res.set_content(nlohmann::json{{"scores", scores}}.dump(), "application/json");
  });
}

std::vector<ScoreRequestItem> items_of_lengths(const std::vector<int> &lens) {
  std::vector<ScoreRequestItem> out;
  for (int n : lens)
    out.push_back({"src", std::string(static_cast<std::size_t>(n), 'x'), "ref"});
  return out;
}

} // namespace

TEST(Lexical, Extremes) {
  EXPECT_DOUBLE_EQ(lexical_score("The cat sat.", "The cat sat."), 1.0);
  EXPECT_DOUBLE_EQ(lexical_score("The cat sat.", "Thecat  sat."), 1.0); // whitespace ignored
  EXPECT_DOUBLE_EQ(lexical_score("abc", "xyz"), 0.0);
  EXPECT_DOUBLE_EQ(lexical_score("", "abc"), 0.0);
}

TEST(Lexical, HandComputedValue) {
  // Orders 1-2 only (hyp has two characters). n=1: P=1, R=2/3. n=2: P=1, R=1/2.
  // P=1, R=7/12, F(beta=2) = 5PR / (4P + R) = 7/11.
  EXPECT_NEAR(lexical_score("ab", "abc"), 7.0 / 11.0, 1e-12);
}

TEST(Lexical, MonotoneInOverlap) {
  const std::string ref = "the quick brown fox jumps";
  EXPECT_GT(lexical_score("the quick brown fox", ref), lexical_score("the quick", ref));
  EXPECT_GT(lexical_score("the quick", ref), lexical_score("lazy dog", ref));
}

TEST(LexicalScorerTest, BatchAndValidation) {
  LexicalScorer s;
  std::vector<ScoreRequestItem> items = {{"s", "abc", "abc"}, {"s", "ab", "abc"}};
  const auto scores = s.score_batch(items);
  ASSERT_EQ(scores.size(), 2u);
  EXPECT_DOUBLE_EQ(scores[0], 1.0);
  EXPECT_EQ(s.kind(), "lexical");
  EXPECT_THROW(s.score_batch({}), Error);
  std::vector<ScoreRequestItem> empty_hyp = {{"s", "", "abc"}};
  EXPECT_THROW(s.score_batch(empty_hyp), Error);
}

TEST(RemoteScorerTest, HealthAndOrderedScores) {
  StubServer stub;
  std::atomic<int> requests{0};
  install_score_service(stub, requests);
  stub.start();
  RemoteScorer scorer({stub.url(), 5.0, 4, 2});
  EXPECT_EQ(scorer.health()["status"], "ok");
  const auto items = items_of_lengths({10, 50, 20, 90, 30, 70, 40, 60, 80, 5});
  const auto scores = scorer.score_batch(items);
  ASSERT_EQ(scores.size(), items.size());
  for (std::size_t i = 0; i < items.size(); ++i)
    EXPECT_DOUBLE_EQ(scores[i], static_cast<double>(items[i].hypothesis.size()) / 100.0);
  EXPECT_EQ(scorer.requests_sent(), 3u); // 10 items in chunks of 4
  EXPECT_EQ(scorer.kind(), "remote:" + stub.url());
}

TEST(RemoteScorerTest, MemoizationHalvesDuplicateRequests) {
  StubServer stub;
  std::atomic<int> requests{0};
  install_score_service(stub, requests);
  stub.start();
  RemoteScorer scorer({stub.url(), 5.0, 64, 2});
  std::vector<int> lens;
  for (int i = 1; i <= 20; ++i)
    lens.push_back(i);
  for (int i = 1; i <= 20; ++i)
    lens.push_back(i); // every item twice
  const auto items = items_of_lengths(lens);
  const auto scores = scorer.score_batch(items);
  EXPECT_EQ(scorer.items_sent(), items.size() / 2);
  for (std::size_t i = 0; i < 20; ++i)
    EXPECT_EQ(scores[i], scores[i + 20]);

  // A repeated batch is answered from the cache.
  const auto again = scorer.score_batch(items);
  EXPECT_EQ(again, scores);
  EXPECT_EQ(scorer.items_sent(), items.size() / 2);
  EXPECT_EQ(requests.load(), 1);
}

TEST(RemoteScorerTest, OutOfRangeScoreRejected) {
  StubServer stub;
  std::atomic<int> requests{0};
  install_score_service(stub, requests, true);
  stub.start();
  RemoteScorer scorer({stub.url(), 5.0, 64, 2});
  try {
    scorer.score_batch(items_of_lengths({150}));
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::ScoreOutOfRange);
  }
}

TEST(RemoteScorerTest, ServiceErrors) {
  StubServer stub;
  stub.server().Post("/score", [](const httplib::Request &, httplib::Response &res) {
    res.status = 503;
  });
  stub.server().Get("/health", [](const httplib::Request &, httplib::Response &res) {
    res.status = 503;
    res.set_content(R"({"status":"loading"})", "application/json");
  });
  stub.start();
  RemoteScorer scorer({stub.url(), 5.0, 64, 2});
  try {
    scorer.score_batch(items_of_lengths({3}));
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::ScorerUnavailable);
    EXPECT_EQ(e.http_status(), 503);
  }
  EXPECT_THROW(scorer.health(), Error);
}

TEST(RemoteScorerTest, WrongScoreCount) {
  StubServer stub;
  stub.server().Post("/score", [](const httplib::Request &, httplib::Response &res) {
    res.set_content(R"({"scores":[0.5]})", "application/json");
  });
  stub.start();
  RemoteScorer scorer({stub.url(), 5.0, 64, 2});
  EXPECT_THROW(scorer.score_batch(items_of_lengths({3, 4})), Error);
}

TEST(RemoteScorerTest, Unreachable) {
  int port = 0;
  {
    StubServer stub;
    stub.start();
    port = stub.port();
  }
  RemoteScorer scorer({"http://127.0.0.1:" + std::to_string(port), 2.0, 64, 2});
  try {
    scorer.score_batch(items_of_lengths({3}));
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::ScorerUnavailable);
  }
}

TEST(ScorerFactory, Kinds) {
  EXPECT_EQ(make_scorer({})->kind(), "lexical");
  ScorerKind remote;
  remote.type = ScorerKind::Type::RemoteNeural;
  remote.remote.endpoint = "http://127.0.0.1:1";
  EXPECT_EQ(make_scorer(remote)->kind(), "remote:http://127.0.0.1:1");
}
