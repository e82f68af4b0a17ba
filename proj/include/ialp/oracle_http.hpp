#pragma once

// Chat-completion HTTP client for the language-model judge, a JSON-lines
// record/replay fixture, and bounded-concurrency batch querying.

#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <mutex>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "ialp/oracle.hpp"

namespace ialp {

struct RemoteEndpoint {
  std::string base_url;  // e.g. http://localhost:8000/v1
  std::string model;
  std::string api_key_env = "ORACLE_API_KEY";
  std::size_t retry_limit = 3;  // retries after the first attempt
  std::chrono::milliseconds backoff{200};
  std::chrono::milliseconds timeout{30000};
  std::size_t max_in_flight = 4;
};

// JSON body of a single-turn chat completion at temperature 0.
inline std::string chat_request_body(const std::string& model, const std::string& prompt) {
  nlohmann::json body = {
      {"model", model},
      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
      {"temperature", 0}};
  return body.dump();
}

// Content of choices[0].message.content.
inline std::string parse_chat_response(const std::string& body) {
  const auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded()) throw OracleError(OracleError::Kind::status, "response is not JSON");
  try {
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw OracleError(OracleError::Kind::status,
                      std::string("malformed chat completion: ") + e.what());
  }
}

class HttpChatClient : public ResponseSource {
 public:
  explicit HttpChatClient(RemoteEndpoint endpoint) : ep_(std::move(endpoint)) {
    const auto scheme = ep_.base_url.find("://");
    const auto path_start =
        ep_.base_url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    host_ = ep_.base_url.substr(0, path_start);
    prefix_ = path_start == std::string::npos ? "" : ep_.base_url.substr(path_start);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
  }

  std::string respond(const std::string& prompt) override { return llm_choice(prompt); }

  // POST {base}/chat/completions with exponential-backoff retries on
  // connection failures, timeouts, 429 and 5xx.
  std::string llm_choice(const std::string& prompt) const {
    const std::string body = chat_request_body(ep_.model, prompt);
    httplib::Headers headers;
    if (const char* key = std::getenv(ep_.api_key_env.c_str()); key && *key) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    OracleError::Kind last_kind = OracleError::Kind::network;
    std::string last_message;
    for (std::size_t attempt = 0; attempt <= ep_.retry_limit; ++attempt) {
      if (attempt > 0) std::this_thread::sleep_for(ep_.backoff * (1LL << (attempt - 1)));
      httplib::Client client(host_);
      const auto secs = std::chrono::duration_cast<std::chrono::seconds>(ep_.timeout);
      const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(ep_.timeout - secs);
      client.set_connection_timeout(secs.count(), usecs.count());
      client.set_read_timeout(secs.count(), usecs.count());
      client.set_write_timeout(secs.count(), usecs.count());
      const auto start = std::chrono::steady_clock::now();
      auto res = client.Post(prefix_ + "/chat/completions", headers, body, "application/json");
      const auto elapsed = std::chrono::steady_clock::now() - start;
      if (!res) {
        const auto err = res.error();
        const bool timed_out = err == httplib::Error::ConnectionTimeout ||
                               (err == httplib::Error::Read && elapsed >= ep_.timeout);
        last_kind = timed_out ? OracleError::Kind::timeout : OracleError::Kind::network;
        last_message = httplib::to_string(err);
        continue;
      }
      if (res->status >= 200 && res->status < 300) return parse_chat_response(res->body);
      if (res->status == 429 || res->status >= 500) {
        last_kind = OracleError::Kind::retries_exhausted;
        last_message = "HTTP " + std::to_string(res->status);
        continue;
      }
      throw OracleError(OracleError::Kind::status, "HTTP " + std::to_string(res->status));
    }
    throw OracleError(last_kind, "after " + std::to_string(ep_.retry_limit + 1) +
                                     " attempts: " + last_message);
  }

  const RemoteEndpoint& endpoint() const { return ep_; }

 private:
  RemoteEndpoint ep_;
  std::string host_;
  std::string prefix_;
};

// 64-bit FNV-1a of the prompt, lowercase hex.
inline std::string prompt_hash(const std::string& prompt) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : prompt) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Serves responses from a JSON-lines fixture of {prompt_hash, response_text}.
class ReplaySource : public ResponseSource {
 public:
  explicit ReplaySource(const std::filesystem::path& fixture) {
    std::ifstream in(fixture);
    if (!in) throw DataError("cannot open replay fixture '" + fixture.string() + "'");
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      responses_[j.at("prompt_hash").get<std::string>()].push_back(
          j.at("response_text").get<std::string>());
    }
  }

  // Repeated prompts replay their recorded responses in order; the last
  // one is reused once exhausted.
  std::string respond(const std::string& prompt) override {
    std::lock_guard lock(mu_);
    const auto hash = prompt_hash(prompt);
    auto it = responses_.find(hash);
    if (it == responses_.end()) {
      throw OracleError(OracleError::Kind::replay_miss, "no recorded response for " + hash);
    }
    auto& cursor = cursors_[hash];
    const auto& list = it->second;
    return list[std::min(cursor++, list.size() - 1)];
  }

 private:
  std::mutex mu_;
  std::unordered_map<std::string, std::vector<std::string>> responses_;
  std::unordered_map<std::string, std::size_t> cursors_;
};

// Forwards to another source and appends every exchange to a fixture.
class RecordingSource : public ResponseSource {
 public:
  RecordingSource(std::shared_ptr<ResponseSource> inner, const std::filesystem::path& fixture)
      : inner_(std::move(inner)), out_(fixture, std::ios::binary | std::ios::app) {
    if (!out_) throw DataError("cannot write fixture '" + fixture.string() + "'");
  }

  std::string respond(const std::string& prompt) override {
    std::string text = inner_->respond(prompt);
    std::lock_guard lock(mu_);
    nlohmann::json line = {{"prompt_hash", prompt_hash(prompt)}, {"response_text", text}};
    out_ << line.dump() << '\n';
    out_.flush();
    return text;
  }

 private:
  std::shared_ptr<ResponseSource> inner_;
  std::mutex mu_;
  std::ofstream out_;
};

// Queries up to `max_in_flight` prompts concurrently; result i belongs to
// prompt i regardless of completion order.
inline std::vector<std::string> respond_batch(ResponseSource& source,
                                              const std::vector<std::string>& prompts,
                                              std::size_t max_in_flight) {
  std::vector<std::string> out(prompts.size());
  max_in_flight = std::max<std::size_t>(1, max_in_flight);
  for (std::size_t begin = 0; begin < prompts.size(); begin += max_in_flight) {
    const std::size_t end = std::min(prompts.size(), begin + max_in_flight);
    std::vector<std::future<std::string>> pending;
    for (std::size_t i = begin; i < end; ++i) {
      pending.push_back(std::async(std::launch::async,
                                   [&source, &prompts, i] { return source.respond(prompts[i]); }));
    }
    for (std::size_t i = begin; i < end; ++i) out[i] = pending[i - begin].get();
  }
  return out;
}

}  // namespace ialp
