#include <gtest/gtest.h>
#include <httplib.h>

#include <atomic>
#include <thread>

#include "coct/backend.hpp"
#include "coct/error.hpp"
#include "coct/retriever.hpp"
#include "coct/concepts.hpp"

using namespace coct;

namespace {

// Local HTTP server on an ephemeral port, stopped on destruction.
class StubServer {
 public:
  StubServer() { port_ = server_.bind_to_any_port("127.0.0.1"); }
  ~StubServer() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }
  httplib::Server& server() { return server_; }
  void start() {
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

LiveConfig fast_config(const std::string& endpoint) {
  LiveConfig c;
  c.endpoint = endpoint;
  c.api_key = "test-key";
  c.timeout = std::chrono::seconds(5);
  c.retry.initial_backoff = std::chrono::milliseconds(1);
  return c;
}

}  // namespace

TEST(LiveBackend, ParsesStubResponseAndSendsAuth) {
  StubServer stub;
  std::string seen_auth, seen_body;
  stub.server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    seen_body = req.body;
    res.set_content(R"({"choices":[{"message":{"role":"assistant","content":"<Question> How are you?"}}]})",
                    "application/json");
  });
  stub.start();

  auto b = make_live_backend(fast_config(stub.endpoint()));
  auto c = b.complete({"stub-model", {{Role::User, "hi"}}});
  EXPECT_EQ(c.content, "<Question> How are you?");
  EXPECT_EQ(seen_auth, "Bearer test-key");
  auto body = nlohmann::json::parse(seen_body);
  EXPECT_EQ(body["model"], "stub-model");
  EXPECT_EQ(body["messages"][0]["content"], "hi");
}

TEST(LiveBackend, RetriesServerErrorsThenFailsWithTransport) {
  StubServer stub;
  std::atomic<int> hits{0};
  stub.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 500;
    res.set_content("boom", "text/plain");
  });
  stub.start();

  auto cfg = fast_config(stub.endpoint());
  cfg.retry.max_attempts = 3;
  auto b = make_live_backend(cfg);
  try {
    b.complete({"m", {{Role::User, "hi"}}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Transport);
  }
  EXPECT_EQ(hits.load(), 3);
}

TEST(LiveBackend, RecoversAfterRateLimit) {
  StubServer stub;
  std::atomic<int> hits{0};
  stub.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    if (++hits == 1) {
      res.status = 429;
      return;
    }
    res.set_content(R"({"choices":[{"message":{"content":"ok"}}]})", "application/json");
  });
  stub.start();
  auto b = make_live_backend(fast_config(stub.endpoint()));
  EXPECT_EQ(b.complete({"m", {{Role::User, "hi"}}}).content, "ok");
  EXPECT_EQ(hits.load(), 2);
}

TEST(LiveBackend, ClientErrorIsProtocolWithoutRetry) {
  StubServer stub;
  std::atomic<int> hits{0};
  stub.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 400;
    res.set_content("bad request", "text/plain");
  });
  stub.start();
  auto b = make_live_backend(fast_config(stub.endpoint()));
  try {
    b.complete({"m", {{Role::User, "hi"}}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Protocol);
  }
  EXPECT_EQ(hits.load(), 1);
}

TEST(LiveBackend, UnreachableEndpointIsTransport) {
  auto cfg = fast_config("http://127.0.0.1:1/v1");
  cfg.retry.max_attempts = 1;
  auto b = make_live_backend(cfg);
  try {
    b.complete({"m", {{Role::User, "hi"}}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Transport);
  }
}

TEST(Retriever, EmbeddingEndpointRanksByCosine) {
  StubServer stub;
  // Two-dimensional embeddings: "Information" points along the query.
  stub.server().Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
    auto body = nlohmann::json::parse(req.body);
    nlohmann::json data = nlohmann::json::array();
    std::size_t i = 0;
    for (const auto& input : body["input"]) {
      auto s = input.get<std::string>();
      bool hit = s == "tell me facts" || s.find("useful information") != std::string::npos;
      data.push_back({{"index", i++}, {"embedding", hit ? std::vector<double>{1, 0} : std::vector<double>{0, 1}}});
    }
    res.set_content(nlohmann::json{{"data", data}}.dump(), "application/json");
  });
  stub.start();
  EmbeddingConfig ec;
  ec.endpoint = stub.endpoint();
  ec.model = "emb";
  auto index = RetrieverIndex::build(builtin_set("esconv-strategy"), ec);
  auto r = retrieve(index, "tell me facts", 1);
  ASSERT_EQ(r.ranked.size(), 1u);
  EXPECT_FALSE(r.fell_back_to_bm25);
  EXPECT_EQ(r.ranked[0].name, "Information");
}

TEST(Retriever, EmbeddingFailureFallsBackToBm25) {
  EmbeddingConfig ec;
  ec.endpoint = "http://127.0.0.1:1/v1";
  ec.timeout = std::chrono::seconds(2);
  auto index = RetrieverIndex::build(builtin_set("esconv-strategy"), ec);
  auto r = retrieve(index, "divulge similar experiences", 1);
  EXPECT_TRUE(r.fell_back_to_bm25);
  EXPECT_FALSE(r.warning.empty());
  EXPECT_EQ(r.ranked[0].name, "Self-disclosure");
}
