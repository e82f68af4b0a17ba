#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "ialp/oracle_http.hpp"

using namespace ialp;
namespace fs = std::filesystem;

namespace {

// Local chat-completion stub; the handler decides status and content.
class StubServer {
 public:
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  explicit StubServer(Handler handler) {
    server_.Post("/v1/chat/completions", std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }

  RemoteEndpoint endpoint() const {
    RemoteEndpoint ep;
    ep.base_url = "http://127.0.0.1:" + std::to_string(port_) + "/v1";
    ep.model = "stub-model";
    ep.backoff = std::chrono::milliseconds(1);
    ep.timeout = std::chrono::milliseconds(2000);
    return ep;
  }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

std::string completion(const std::string& content) {
  return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}
      .dump();
}

std::string read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

OracleError::Kind failure_kind(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const OracleError& e) {
    return e.reason();
  }
  ADD_FAILURE() << "no OracleError thrown";
  return OracleError::Kind::network;
}

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / ("ialp_http_" + std::to_string(::getpid()) + "_" + name);
}

}  // namespace

TEST(ChatBody, WireFormat) {
  const auto j = nlohmann::json::parse(chat_request_body("m", "hello"));
  EXPECT_EQ(j["model"], "m");
  EXPECT_EQ(j["temperature"], 0);
  EXPECT_EQ(j["messages"][0]["role"], "user");
  EXPECT_EQ(j["messages"][0]["content"], "hello");
  EXPECT_EQ(parse_chat_response(completion("x")), "x");
  EXPECT_THROW(parse_chat_response("{}"), OracleError);
  EXPECT_THROW(parse_chat_response("not json"), OracleError);
}

TEST(HttpClient, EchoesStubAnswer) {
  std::string seen_body, seen_auth;
  StubServer stub([&](const httplib::Request& req, httplib::Response& res) {
    seen_body = req.body;
    seen_auth = req.get_header_value("Authorization");
    res.set_content(completion("the user will select a"), "application/json");
  });
  ::setenv("ORACLE_API_KEY", "secret-token", 1);
  HttpChatClient client(stub.endpoint());
  EXPECT_EQ(client.llm_choice("prompt text"), "the user will select a");
  EXPECT_EQ(seen_auth, "Bearer secret-token");
  EXPECT_EQ(nlohmann::json::parse(seen_body)["messages"][0]["content"], "prompt text");
  ::unsetenv("ORACLE_API_KEY");
}

TEST(HttpClient, ServerErrorsExhaustRetries) {
  std::atomic<int> calls{0};
  StubServer stub([&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 500;
  });
  auto ep = stub.endpoint();
  ep.retry_limit = 2;
  HttpChatClient client(ep);
  EXPECT_EQ(failure_kind([&] { client.llm_choice("p"); }), OracleError::Kind::retries_exhausted);
  EXPECT_EQ(calls.load(), 3);
}

TEST(HttpClient, RecoversAfterTransientFailure) {
  std::atomic<int> calls{0};
  StubServer stub([&](const httplib::Request&, httplib::Response& res) {
    if (++calls < 3) {
      res.status = 503;
      return;
    }
    res.set_content(completion("b"), "application/json");
  });
  HttpChatClient client(stub.endpoint());
  EXPECT_EQ(client.llm_choice("p"), "b");
  EXPECT_EQ(calls.load(), 3);
}

TEST(HttpClient, ClientErrorIsNotRetried) {
  std::atomic<int> calls{0};
  StubServer stub([&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 401;
  });
  HttpChatClient client(stub.endpoint());
  EXPECT_EQ(failure_kind([&] { client.llm_choice("p"); }), OracleError::Kind::status);
  EXPECT_EQ(calls.load(), 1);
}

TEST(HttpClient, TimeoutIsDistinct) {
  StubServer stub([&](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(400));
    res.set_content(completion("late"), "application/json");
  });
  auto ep = stub.endpoint();
  ep.timeout = std::chrono::milliseconds(100);
  ep.retry_limit = 1;
  HttpChatClient client(ep);
  EXPECT_EQ(failure_kind([&] { client.llm_choice("p"); }), OracleError::Kind::timeout);
}

TEST(HttpClient, NetworkFailureIsDistinct) {
  RemoteEndpoint ep;
  ep.base_url = "http://127.0.0.1:1/v1";
  ep.retry_limit = 1;
  ep.backoff = std::chrono::milliseconds(1);
  HttpChatClient client(ep);
  EXPECT_EQ(failure_kind([&] { client.llm_choice("p"); }), OracleError::Kind::network);
}

TEST(RecordReplay, TwentyPromptSessionReplaysByteIdentically) {
  StubServer stub([&](const httplib::Request& req, httplib::Response& res) {
    const auto prompt = nlohmann::json::parse(req.body)["messages"][0]["content"].get<std::string>();
    res.set_content(completion("the user will select " + std::string(1, label_letter(prompt.size() % 10)) +
                               " \"quoted\"\n" + prompt.substr(0, 5)),
                    "application/json");
  });
  std::vector<std::string> prompts;
  for (int i = 0; i < 20; ++i) prompts.push_back("prompt number " + std::to_string(i * i));
  prompts[7] = prompts[3];  // a repeated prompt within the session

  const auto recorded = temp_file("recorded.jsonl");
  const auto replayed = temp_file("replayed.jsonl");
  fs::remove(recorded);
  fs::remove(replayed);

  std::vector<std::string> live;
  {
    RecordingSource rec(std::make_shared<HttpChatClient>(stub.endpoint()), recorded);
    for (const auto& p : prompts) live.push_back(rec.respond(p));
  }
  {
    RecordingSource rec(std::make_shared<ReplaySource>(recorded), replayed);
    for (std::size_t i = 0; i < prompts.size(); ++i) EXPECT_EQ(rec.respond(prompts[i]), live[i]);
  }
  EXPECT_EQ(read_all(recorded), read_all(replayed));

  ReplaySource replay(recorded);
  EXPECT_EQ(failure_kind([&] { replay.respond("never recorded"); }),
            OracleError::Kind::replay_miss);
  fs::remove(recorded);
  fs::remove(replayed);
}

TEST(Batch, ResultsKeepPromptOrder) {
  std::atomic<int> in_flight{0}, peak{0};
  StubServer stub([&](const httplib::Request& req, httplib::Response& res) {
    const int now = ++in_flight;
    int old = peak.load();
    while (now > old && !peak.compare_exchange_weak(old, now)) {
    }
    const auto prompt = nlohmann::json::parse(req.body)["messages"][0]["content"].get<std::string>();
    // later prompts answer sooner
    std::this_thread::sleep_for(std::chrono::milliseconds(40 - 3 * std::stoi(prompt)));
    res.set_content(completion("answer " + prompt), "application/json");
    --in_flight;
  });
  HttpChatClient client(stub.endpoint());
  std::vector<std::string> prompts;
  for (int i = 0; i < 10; ++i) prompts.push_back(std::to_string(i));
  const auto out = respond_batch(client, prompts, 4);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(out[i], "answer " + std::to_string(i));
  EXPECT_LE(peak.load(), 4);
}

TEST(Hash, StableAndDistinct) {
  EXPECT_EQ(prompt_hash(""), "cbf29ce484222325");
  EXPECT_EQ(prompt_hash("a"), "af63dc4c8601ec8c");
  EXPECT_NE(prompt_hash("ab"), prompt_hash("ba"));
}
