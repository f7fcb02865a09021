// Chat-completions client, transcript logging, and record/replay.
#include <atomic>
#include <cstdio>
#include <string>
#include <thread>

#include "doctest.h"
#include "godhs/errors.hpp"
#include "godhs/llm.hpp"
#include "httplib.h"
#include "json.hpp"

using namespace godhs;

namespace {

// Stub chat-completions server; replies are scripted per request index.
class StubServer {
 public:
  explicit StubServer(std::vector<std::string> replies)
      : replies_(std::move(replies)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req,
                                                httplib::Response& res) {
      last_body_ = req.body;
      const size_t i = count_++;
      const std::string& reply =
          replies_[std::min(i, replies_.size() - 1)];
      nlohmann::json j;
      j["choices"] = {{{"message", {{"role", "assistant"},
                                    {"content", reply}}}}};
      res.set_content(j.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~StubServer() {
    server_.stop();
    thread_.join();
  }

  std::string endpoint() const {
    return "http://127.0.0.1:" + std::to_string(port_);
  }
  int requests() const { return count_.load(); }
  std::string last_body() const { return last_body_; }

 private:
  httplib::Server server_;
  std::thread thread_;
  std::vector<std::string> replies_;
  std::atomic<int> count_{0};
  std::string last_body_;
  int port_ = 0;
};

const KnowledgeBase& shipped_kb() {
  static const KnowledgeBase kb = load_kb(GODHS_SOURCE_DIR "/data/kb.json");
  return kb;
}

RankRequest feature_request() {
  RankRequest req;
  req.level = RankLevel::kFeatureRank;
  req.target = "orange";
  req.context = "fridge";
  req.candidates = {"top", "bottom", "sides", "inside"};
  return req;
}

}  // namespace

TEST_CASE("client returns the assistant text and sends temperature zero") {
  StubServer server({"sides, inside"});
  LlmConfig cfg;
  cfg.endpoint = server.endpoint();
  cfg.model = "test-model";
  cfg.timeout_s = 2.0;
  LlmClient client(cfg);
  CHECK(client.complete("hello") == "sides, inside");

  const auto body = nlohmann::json::parse(server.last_body());
  CHECK(body["model"] == "test-model");
  CHECK(body["temperature"] == 0);
  CHECK(body["stream"] == false);
  CHECK(body["messages"][0]["role"] == "user");
  CHECK(body["messages"][0]["content"] == "hello");
}

TEST_CASE("transport failures are reported as transport errors") {
  // Nothing listens on port 9.
  LlmConfig cfg;
  cfg.endpoint = "http://127.0.0.1:9";
  cfg.timeout_s = 0.5;
  LlmClient client(cfg);
  CHECK_THROWS_AS(client.complete("x"), TransportError);

  CHECK_THROWS_AS(
      [] {
        LlmConfig bad;
        bad.endpoint = "not a url";
        LlmClient c(bad);
        c.complete("x");
      }(),
      TransportError);
}

TEST_CASE("malformed completion bodies are transport errors") {
  httplib::Server server;
  server.Post("/v1/chat/completions",
              [](const httplib::Request&, httplib::Response& res) {
                res.set_content("{\"unexpected\": true}", "application/json");
              });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  LlmConfig cfg;
  cfg.endpoint = "http://127.0.0.1:" + std::to_string(port);
  cfg.timeout_s = 2.0;
  LlmClient client(cfg);
  CHECK_THROWS_AS(client.complete("x"), TransportError);

  server.stop();
  t.join();
}

TEST_CASE("llm ranker validates, retries, and records transcripts") {
  const std::string log_path = "llm_test_transcript.jsonl";

  SUBCASE("valid first reply") {
    StubServer server({"Inside, top"});
    LlmConfig cfg;
    cfg.endpoint = server.endpoint();
    cfg.timeout_s = 2.0;
    LlmClient client(cfg);
    TranscriptLog log(log_path);
    LlmRanker ranker(client, shipped_kb(), &log);

    const RankResponse resp = ranker.rank(feature_request());
    CHECK(resp.valid);
    CHECK(resp.retries == 0);
    CHECK(resp.labels == std::vector<std::string>{"inside", "top"});
    CHECK(server.requests() == 1);

    const auto entries = TranscriptLog::read(log_path);
    REQUIRE(entries.size() == 1);
    CHECK(entries[0].level == "feature-rank");
    CHECK(entries[0].raw == "Inside, top");
    CHECK(entries[0].validated == resp.labels);
    CHECK(entries[0].retries == 0);
    CHECK(!entries[0].timestamp.empty());
  }

  SUBCASE("invalid reply consumes retry budget then succeeds") {
    StubServer server({"the fridge interior", "inside"});
    LlmConfig cfg;
    cfg.endpoint = server.endpoint();
    cfg.timeout_s = 2.0;
    cfg.retry_budget = 2;
    LlmClient client(cfg);
    TranscriptLog log(log_path);
    LlmRanker ranker(client, shipped_kb(), &log);

    const RankResponse resp = ranker.rank(feature_request());
    CHECK(resp.valid);
    CHECK(resp.retries == 1);
    CHECK(resp.labels == std::vector<std::string>{"inside"});
    CHECK(server.requests() == 2);
  }

  SUBCASE("budget exhausted falls back to the knowledge base") {
    StubServer server({"gibberish"});
    LlmConfig cfg;
    cfg.endpoint = server.endpoint();
    cfg.timeout_s = 2.0;
    cfg.retry_budget = 2;
    LlmClient client(cfg);
    TranscriptLog log(log_path);
    LlmRanker ranker(client, shipped_kb(), &log);

    const RankResponse resp = ranker.rank(feature_request());
    CHECK_FALSE(resp.valid);
    CHECK(resp.retries == 2);
    CHECK(server.requests() == 3);
    // Knowledge-base order for fridge/orange.
    CHECK(resp.labels == std::vector<std::string>{"sides", "inside"});

    const auto entries = TranscriptLog::read(log_path);
    REQUIRE(entries.size() == 1);
    CHECK(entries[0].validated == resp.labels);
  }

  SUBCASE("unreachable endpoint falls back to the knowledge base") {
    LlmConfig cfg;
    cfg.endpoint = "http://127.0.0.1:9";
    cfg.timeout_s = 0.3;
    LlmClient client(cfg);
    TranscriptLog log(log_path);
    LlmRanker ranker(client, shipped_kb(), &log);

    const RankResponse resp = ranker.rank(feature_request());
    CHECK_FALSE(resp.valid);
    CHECK(resp.labels == std::vector<std::string>{"sides", "inside"});
  }

  SUBCASE("classify level accepts a none reply as an empty subset") {
    StubServer server({"none"});
    LlmConfig cfg;
    cfg.endpoint = server.endpoint();
    cfg.timeout_s = 2.0;
    LlmClient client(cfg);
    LlmRanker ranker(client, shipped_kb(), nullptr);

    RankRequest req;
    req.level = RankLevel::kCarrierClassify;
    req.target = "orange";
    req.candidates = {"wall", "window"};
    const RankResponse resp = ranker.rank(req);
    CHECK(resp.valid);
    CHECK(resp.labels.empty());
  }

  std::remove(log_path.c_str());
}

TEST_CASE("replay serves recorded decisions and flags divergence") {
  const std::string log_path = "llm_replay_transcript.jsonl";
  {
    TranscriptLog log(log_path);
    log.append("feature-rank", "prompt-a", "raw-a", {"sides", "inside"}, 1);
    log.append("carrier-rank", "prompt-b", "raw-b", {"fridge"}, 0);
  }

  ReplayRanker replay(log_path);
  CHECK(replay.remaining() == 2);

  const RankResponse r1 = replay.rank(feature_request());
  CHECK(r1.labels == std::vector<std::string>{"sides", "inside"});
  CHECK(r1.retries == 1);
  CHECK(r1.valid);

  // Wrong level next: divergence.
  CHECK_THROWS_AS(replay.rank(feature_request()), ValidationError);

  ReplayRanker replay2(log_path);
  replay2.rank(feature_request());
  RankRequest carrier;
  carrier.level = RankLevel::kCarrierRank;
  carrier.target = "orange";
  carrier.candidates = {"fridge"};
  const RankResponse r2 = replay2.rank(carrier);
  CHECK(r2.labels == std::vector<std::string>{"fridge"});

  // Exhausted transcript.
  CHECK_THROWS_AS(replay2.rank(carrier), ValidationError);

  CHECK_THROWS_AS(ReplayRanker("no_such_file.jsonl"), ParseError);
  std::remove(log_path.c_str());
}
