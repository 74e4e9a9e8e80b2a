#include <gtest/gtest.h>

#include <thread>

#include "baseplace/http_oracle.hpp"

using namespace baseplace;

namespace {

OracleQuery ranking_query(int n, int want) {
  OracleQuery q;
  q.kind = QueryKind::RankCandidates;
  q.want = want;
  for (int i = 0; i < n; ++i) q.options.push_back({i, Vec2(0.1 * i, 0.0), 0.0});
  return q;
}

OracleQuery direction_query() {
  OracleQuery q;
  q.kind = QueryKind::Direction;
  for (int i = 1; i <= 12; ++i) q.options.push_back({i, Vec2::Zero(), deg(30.0 * (i - 1))});
  return q;
}

class ScriptedReplies : public Oracle {
 public:
  explicit ScriptedReplies(std::vector<std::vector<int>> r) : replies_(std::move(r)) {}
  std::string name() const override { return "fixed"; }

 protected:
  OracleReply answer(const OracleQuery&) override { return {replies_.at(next_++), "", false}; }

 private:
  std::vector<std::vector<int>> replies_;
  std::size_t next_ = 0;
};

}  // namespace

TEST(ReplyValidity, StructuralRules) {
  auto q = ranking_query(5, 3);
  EXPECT_TRUE(reply_is_valid(q, {{4, 0, 2}, "", false}));
  EXPECT_FALSE(reply_is_valid(q, {{4, 0}, "", false}));
  EXPECT_FALSE(reply_is_valid(q, {{4, 0, 0}, "", false}));
  EXPECT_FALSE(reply_is_valid(q, {{4, 0, 5}, "", false}));
  EXPECT_FALSE(reply_is_valid(q, {{4, 0, kUncertain}, "", false}));
  auto d = direction_query();
  EXPECT_TRUE(reply_is_valid(d, {{kUncertain}, "", false}));
  EXPECT_TRUE(reply_is_valid(d, {{12}, "", false}));
  EXPECT_FALSE(reply_is_valid(d, {{0}, "", false}));
  EXPECT_FALSE(reply_is_valid(d, {{1, 2}, "", false}));
}

TEST(MajorityVote, StrictModeOnly) {
  EXPECT_EQ(majority_vote({3, 3, 3}), 3);
  EXPECT_EQ(majority_vote({3, 5, 3}), 3);
  EXPECT_EQ(majority_vote({5, 3, 3}), 3);
  EXPECT_FALSE(majority_vote({1, 2, 3}));
  EXPECT_FALSE(majority_vote({kUncertain, kUncertain, 2}));
  EXPECT_EQ(majority_vote({kUncertain, 2, 2}), 2);
}

TEST(OracleBase, RejectsMalformedQueriesAndLogs) {
  ScriptedReplies o(std::vector<std::vector<int>>{{0}});
  OracleQuery empty;
  EXPECT_THROW(o.query(empty), std::invalid_argument);
  EXPECT_THROW(o.query(ranking_query(2, 3)), std::invalid_argument);
  o.query(ranking_query(2, 1));
  ASSERT_EQ(o.log().size(), 1u);
  EXPECT_TRUE(o.log()[0].valid);
  o.clear_log();
  EXPECT_TRUE(o.log().empty());
}

TEST(OracleBase, ValidatedQueryRetriesOnce) {
  ScriptedReplies ok_second({{9}, {1}});
  auto r = ok_second.query_validated(ranking_query(3, 1));
  ASSERT_TRUE(r);
  EXPECT_EQ(r->indices, std::vector<int>{1});
  EXPECT_FALSE(ok_second.log()[0].valid);

  ScriptedReplies never({{9}, {9}, {1}});
  EXPECT_FALSE(never.query_validated(ranking_query(3, 1)));
  EXPECT_EQ(never.log().size(), 2u);
}

TEST(ScriptedOracle, NoiselessRankingSortsByUtility) {
  GroundTruth t;
  t.center = Vec2(0, 0);
  t.keypoint = Vec2(0.2, 0);
  t.direction = 0.0;
  t.half_angle = deg(45);
  ScriptedOracle o(t, {});
  OracleQuery q;
  q.kind = QueryKind::RankCandidates;
  q.want = 4;
  q.options = {{0, Vec2(-0.5, 0), 0}, {1, Vec2(2.0, 0.1), 0}, {2, Vec2(0.9, 0), 0}, {3, Vec2(0.5, 2.0), 0}};
  auto r = o.query(q);
  EXPECT_EQ(r.indices, (std::vector<int>{2, 1, 0, 3}));
  EXPECT_FALSE(r.corrupted);
  EXPECT_EQ(r.raw, "ANSWER: 2, 1, 0, 3");
  EXPECT_NEAR(o.utility(Vec2(0.9, 0)), 10 - 0.7, 1e-12);
}

TEST(ScriptedOracle, DirectionPicksClosestBearing) {
  GroundTruth t;
  t.direction = deg(100);
  ScriptedOracle o(t, {});
  auto r = o.query(direction_query());
  EXPECT_EQ(r.indices, std::vector<int>{4});  // 90 degrees
}

TEST(ScriptedOracle, CorruptionRateMatchesEpsilon) {
  ScriptedOracleConfig c;
  c.noise_epsilon = 0.2;
  c.seed = 11;
  ScriptedOracle o(GroundTruth{}, c);
  int corrupted = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) corrupted += o.query(direction_query()).corrupted;
  EXPECT_NEAR(corrupted / double(n), 0.2, 0.01);
  EXPECT_THROW(ScriptedOracle(GroundTruth{}, ScriptedOracleConfig{1.0}), std::invalid_argument);
}

TEST(ScriptedOracle, MissingCuesRaiseRankingNoise) {
  ScriptedOracleConfig c;
  c.noise_epsilon = 0.05;
  ScriptedOracle o(GroundTruth{}, c);
  EXPECT_DOUBLE_EQ(o.ranking_noise({}), 0.05);
  EXPECT_DOUBLE_EQ(o.ranking_noise({true, false, true}), 0.10);
  EXPECT_DOUBLE_EQ(o.ranking_noise({true, true, false}), 0.30);
  EXPECT_DOUBLE_EQ(o.ranking_noise({true, false, false}), 0.35);
  EXPECT_DOUBLE_EQ(o.ranking_noise({false, false, false}), 0.50);
}

TEST(ScriptedOracle, SameSeedSameAnswers) {
  ScriptedOracleConfig c;
  c.noise_epsilon = 0.3;
  c.seed = 5;
  ScriptedOracle a(GroundTruth{}, c), b(GroundTruth{}, c);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(a.query(ranking_query(20, 3)).indices, b.query(ranking_query(20, 3)).indices);
}

TEST(ParseAnswer, Forms) {
  EXPECT_EQ(parse_answer("ANSWER: 3"), std::vector<int>{3});
  EXPECT_EQ(parse_answer("thinking...\nanswer : 1, 7,2.\n"), (std::vector<int>{1, 7, 2}));
  EXPECT_EQ(parse_answer("ANSWER: 1\nANSWER: 5"), std::vector<int>{5});
  EXPECT_EQ(parse_answer("ANSWER: none"), std::vector<int>{kUncertain});
  EXPECT_EQ(parse_answer("ANSWER: Uncertain."), std::vector<int>{kUncertain});
  EXPECT_EQ(parse_answer("ANSWER: -1"), std::vector<int>{-1});
  EXPECT_FALSE(parse_answer("I pick 3"));
  EXPECT_FALSE(parse_answer("ANSWER: maybe"));
}

TEST(PromptBook, RendersPlaceholders) {
  PromptBook book;
  book.set(QueryKind::RankCandidates, "{instruction} | {count} | {want} | {options} | {want}");
  auto q = ranking_query(3, 2);
  q.instruction = "open it";
  EXPECT_EQ(book.render(q), "open it | 3 | 2 | 0, 1, 2 | 2");
  EXPECT_THROW(book.render(direction_query()), std::runtime_error);
}

TEST(PromptBook, ShippedTemplatesLoad) {
  PromptBook book(std::filesystem::path(BASEPLACE_DATA_DIR) / "prompts");
  auto q = ranking_query(4, 3);
  q.instruction = "Open the cabinet";
  std::string text = book.render(q);
  EXPECT_NE(text.find("Open the cabinet"), std::string::npos);
  EXPECT_EQ(text.find("{"), std::string::npos);
}

TEST(HttpOracle, RejectsBadUrls) {
  EXPECT_THROW(HttpOracle(HttpOracleConfig{"ftp://x/y"}, PromptBook{}), std::invalid_argument);
  EXPECT_THROW(HttpOracle(HttpOracleConfig{"localhost:80"}, PromptBook{}), std::invalid_argument);
}

class LocalServer : public ::testing::Test {
 protected:
  void SetUp() override {
    server.Post("/v1/oracle", [this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lock(mu);
      requests.push_back(nlohmann::json::parse(req.body));
      auth.push_back(req.get_header_value("Authorization"));
      const std::string reply = replies.empty() ? "ANSWER: 0" : replies.front();
      if (!replies.empty()) replies.erase(replies.begin());
      if (reply == "500") {
        res.status = 500;
        return;
      }
      res.set_content(reply, reply.starts_with("{") ? "application/json" : "text/plain");
    });
    port = server.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port, 0);
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
    book.set(QueryKind::RankCandidates, "rank {count}");
    book.set(QueryKind::Direction, "direction");
  }
  void TearDown() override {
    server.stop();
    thread.join();
  }
  HttpOracleConfig config() const {
    HttpOracleConfig c;
    c.url = "http://127.0.0.1:" + std::to_string(port) + "/v1/oracle";
    c.timeout_seconds = 5;
    c.token_env = "BASEPLACE_TEST_TOKEN_UNSET";
    return c;
  }

  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::mutex mu;
  std::vector<nlohmann::json> requests;
  std::vector<std::string> auth;
  std::vector<std::string> replies;
  PromptBook book;
};

TEST_F(LocalServer, SendsSchemaAndParsesJsonReply) {
  replies = {R"({"text": "Reasoning.\nANSWER: 2, 0"})"};
  HttpOracle o(config(), book);
  auto q = ranking_query(3, 2);
  Image img(2, 2);
  q.attachments.push_back({"map", img});
  auto r = o.query(q);
  EXPECT_EQ(r.indices, (std::vector<int>{2, 0}));
  ASSERT_EQ(requests.size(), 1u);
  const auto& j = requests[0];
  EXPECT_EQ(j["schema"], 1);
  EXPECT_EQ(j["kind"], "rank_candidates");
  EXPECT_EQ(j["prompt"], "rank 3");
  EXPECT_EQ(j["want"], 2);
  EXPECT_EQ(j["options"], nlohmann::json::array({0, 1, 2}));
  ASSERT_EQ(j["images"].size(), 1u);
  EXPECT_EQ(j["images"][0]["mime"], "image/png");
  EXPECT_TRUE(j["images"][0]["data"].get<std::string>().starts_with("iVBORw0KGgo"));  // PNG signature
  EXPECT_EQ(auth[0], "");
}

TEST_F(LocalServer, RetriesAfterServerErrorOrGarbage) {
  replies = {"500", "ANSWER: 1"};
  HttpOracle o(config(), book);
  EXPECT_EQ(o.query(ranking_query(3, 1)).indices, std::vector<int>{1});
  replies = {"no idea", "ANSWER: none"};
  EXPECT_EQ(o.query(direction_query()).indices, std::vector<int>{kUncertain});
  replies = {"500", "500"};
  auto r = o.query(ranking_query(3, 1));
  EXPECT_FALSE(reply_is_valid(ranking_query(3, 1), r));
  EXPECT_NE(r.raw.find("http status 500"), std::string::npos);
}

TEST_F(LocalServer, SendsBearerTokenFromEnvironment) {
  ::setenv("BASEPLACE_TEST_TOKEN", "s3cret", 1);
  auto c = config();
  c.token_env = "BASEPLACE_TEST_TOKEN";
  HttpOracle o(c, book);
  o.query(ranking_query(2, 1));
  ::unsetenv("BASEPLACE_TEST_TOKEN");
  EXPECT_EQ(auth.back(), "Bearer s3cret");
}

TEST(HttpOracleTransport, UnreachableServerGivesInvalidReply) {
  PromptBook book;
  book.set(QueryKind::RankCandidates, "x");
  HttpOracleConfig c;
  c.url = "http://127.0.0.1:1/none";
  c.timeout_seconds = 1;
  HttpOracle o(c, book);
  auto r = o.query(ranking_query(2, 1));
  EXPECT_TRUE(r.indices.empty());
  EXPECT_NE(r.raw.find("transport error"), std::string::npos);
}
