#include "coct/backend.hpp"

#include <openssl/evp.h>

#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <thread>

#include <httplib.h>

#include "coct/error.hpp"
#include "coct/text.hpp"

namespace coct {

using nlohmann::json;

std::string_view to_string(Role role) {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

Role parse_role(std::string_view s) {
  auto r = text::to_lower(text::trim(s));
  if (r == "system") return Role::System;
  if (r == "user") return Role::User;
  if (r == "assistant") return Role::Assistant;
  throw Error(ErrorCode::Schema, "unknown role '" + std::string(s) + "'");
}

void ChatRequest::validate() const {
  if (messages.empty()) {
    throw Error(ErrorCode::InvalidArgument, "chat request has no messages");
  }
  for (std::size_t i = 0; i < messages.size(); ++i) {
    const auto& m = messages[i];
    if (m.role == Role::System && i != 0) {
      throw Error(ErrorCode::InvalidArgument, "system message must be first");
    }
    if (m.role != Role::System && text::trim(m.content).empty()) {
      throw Error(ErrorCode::InvalidArgument,
                  "empty " + std::string(to_string(m.role)) + " message at index " +
                      std::to_string(i));
    }
  }
  if (temperature < 0.0) throw Error(ErrorCode::InvalidArgument, "temperature < 0");
  if (max_tokens <= 0) throw Error(ErrorCode::InvalidArgument, "max_tokens must be positive");
}

// ---------------------------------------------------------------------------

std::string fingerprint(const std::vector<ChatMessage>& messages) {
  std::string canonical;
  for (const auto& m : messages) {
    canonical += to_string(m.role);
    canonical += '\x1f';
    canonical += m.content;
    canonical += '\x1e';
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(canonical.data(), canonical.size(), digest, &len, EVP_sha256(), nullptr);
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

namespace {

std::size_t estimate_words(std::size_t words) { return (words * 13 + 9) / 10; }

// Largest word count whose estimate fits `budget`.
std::size_t words_for_budget(std::size_t budget) { return budget * 10 / 13; }

std::string cut_to_budget(const std::string& content, std::size_t budget) {
  auto words = text::split_ws(content);
  std::size_t keep = std::max<std::size_t>(1, words_for_budget(budget));
  if (keep >= words.size()) return content;
  words.resize(keep);
  return text::join(words, " ");
}

}  // namespace

std::size_t estimate_tokens(std::string_view s) {
  return estimate_words(text::split_ws(s).size());
}

std::size_t estimate_tokens(const std::vector<ChatMessage>& messages) {
  std::size_t total = 0;
  for (const auto& m : messages) total += estimate_tokens(m.content);
  return total;
}

std::vector<ChatMessage> truncate_history(const std::vector<ChatMessage>& messages,
                                          std::size_t budget) {
  if (budget == 0) throw Error(ErrorCode::InvalidArgument, "token budget must be positive");
  if (messages.empty()) return {};

  std::vector<ChatMessage> out;
  std::size_t first = 0;
  std::size_t remaining = budget;
  if (messages.front().role == Role::System) {
    ChatMessage sys = messages.front();
    // The system prompt may use at most half the window.
    if (estimate_tokens(sys.content) > budget / 2) {
      sys.content = cut_to_budget(sys.content, budget / 2);
    }
    remaining -= std::min(remaining, estimate_tokens(sys.content));
    out.push_back(std::move(sys));
    first = 1;
  }
  if (first == messages.size()) return out;

  std::vector<ChatMessage> tail;
  ChatMessage last = messages.back();
  if (estimate_tokens(last.content) > remaining) {
    last.content = cut_to_budget(last.content, remaining);
  }
  remaining -= std::min(remaining, estimate_tokens(last.content));
  tail.push_back(std::move(last));

  for (std::size_t i = messages.size() - 1; i-- > first;) {
    auto cost = estimate_tokens(messages[i].content);
    if (cost > remaining) break;
    remaining -= cost;
    tail.push_back(messages[i]);
  }
  out.insert(out.end(), tail.rbegin(), tail.rend());
  return out;
}

// ---------------------------------------------------------------------------

json to_wire(const ChatRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) {
    messages.push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
  }
  json body = {{"model", request.model},
               {"messages", std::move(messages)},
               {"temperature", request.temperature},
               {"max_tokens", request.max_tokens}};
  if (request.seed) body["seed"] = *request.seed;
  return body;
}

Completion parse_wire_response(std::string_view body) {
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw Error(ErrorCode::Protocol, "response body is not a JSON object");
  }
  const auto choices = j.find("choices");
  if (choices == j.end() || !choices->is_array() || choices->empty()) {
    throw Error(ErrorCode::Protocol, "response has no choices");
  }
  const auto& first = (*choices)[0];
  if (!first.contains("message") || !first["message"].is_object()) {
    throw Error(ErrorCode::Protocol, "choices[0] has no message");
  }
  const auto& content = first["message"].value("content", json());
  if (!content.is_null() && !content.is_string()) {
    throw Error(ErrorCode::Protocol, "choices[0].message.content is not a string");
  }
  Completion out;
  if (content.is_string()) out.content = content.get<std::string>();
  if (text::trim(out.content).empty()) {
    throw Error(ErrorCode::Refusal, "backend returned empty content");
  }
  if (auto u = j.find("usage"); u != j.end() && u->is_object()) {
    out.usage.prompt_tokens = u->value("prompt_tokens", std::size_t{0});
    out.usage.completion_tokens = u->value("completion_tokens", std::size_t{0});
  }
  return out;
}

Completion BackendHandle::complete(const ChatRequest& request) const {
  if (!impl) throw Error(ErrorCode::InvalidArgument, "backend handle is empty");
  request.validate();
  return impl->complete(request);
}

// ---------------------------------------------------------------------------
// Mock

MockScript mock_script_from_json(const json& j) {
  MockScript script;
  try {
    if (auto it = j.find("entries"); it != j.end()) {
      for (const auto& [fp, resp] : it->items()) script.entries[fp] = resp.get<std::string>();
    }
    if (auto it = j.find("conversations"); it != j.end()) {
      for (const auto& conv : *it) {
        std::vector<ChatMessage> messages;
        for (const auto& m : conv.at("messages")) {
          messages.push_back({parse_role(m.at("role").get<std::string>()),
                              m.at("content").get<std::string>()});
        }
        script.add(messages, conv.at("response").get<std::string>());
      }
    }
    if (auto it = j.find("fallback"); it != j.end()) {
      auto kind = text::to_lower(it->at("kind").get<std::string>());
      if (kind == "echo" || kind == "echo-last-user") {
        script.fallback.kind = FallbackKind::EchoLastUser;
      } else if (kind == "fixed") {
        script.fallback.kind = FallbackKind::Fixed;
        script.fallback.text = it->at("text").get<std::string>();
      } else if (kind == "fail") {
        script.fallback.kind = FallbackKind::Fail;
      } else {
        throw Error(ErrorCode::Schema, "unknown mock fallback kind '" + kind + "'");
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Schema, std::string("mock script: ") + e.what());
  }
  return script;
}

json to_json(const MockScript& script) {
  json entries = json::object();
  for (const auto& [fp, resp] : script.entries) entries[fp] = resp;
  json fallback;
  switch (script.fallback.kind) {
    case FallbackKind::EchoLastUser: fallback = {{"kind", "echo"}}; break;
    case FallbackKind::Fixed: fallback = {{"kind", "fixed"}, {"text", script.fallback.text}}; break;
    case FallbackKind::Fail: fallback = {{"kind", "fail"}}; break;
  }
  return {{"entries", std::move(entries)}, {"fallback", std::move(fallback)}};
}

MockScript load_mock_script(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open mock script '" + path + "'");
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::Schema, "mock script '" + path + "' is not JSON");
  return mock_script_from_json(j);
}

Completion MockBackend::complete(const ChatRequest& request) const {
  Completion out;
  auto fp = fingerprint(request);
  if (auto it = script_.entries.find(fp); it != script_.entries.end()) {
    out.content = it->second;
  } else {
    switch (script_.fallback.kind) {
      case FallbackKind::EchoLastUser:
        for (auto m = request.messages.rbegin(); m != request.messages.rend(); ++m) {
          if (m->role == Role::User) {
            out.content = m->content;
            break;
          }
        }
        break;
      case FallbackKind::Fixed:
        out.content = script_.fallback.text;
        break;
      case FallbackKind::Fail:
        throw Error(ErrorCode::MockMiss, "no scripted response for fingerprint " + fp);
    }
  }
  if (text::trim(out.content).empty()) {
    throw Error(ErrorCode::Refusal, "mock returned empty content");
  }
  out.usage.prompt_tokens = estimate_tokens(request.messages);
  out.usage.completion_tokens = estimate_tokens(out.content);
  return out;
}

BackendHandle make_mock_backend(MockScript script, std::size_t token_budget) {
  if (token_budget == 0) throw Error(ErrorCode::InvalidArgument, "token budget must be positive");
  return {std::make_shared<MockBackend>(std::move(script)), token_budget};
}

// ---------------------------------------------------------------------------
// Live

LiveConfig LiveConfig::from_env(LiveConfig base) {
  if (base.endpoint.empty()) {
    if (const char* e = std::getenv("COCT_ENDPOINT")) base.endpoint = e;
  }
  if (base.api_key.empty()) {
    if (const char* k = std::getenv("COCT_API_KEY")) base.api_key = k;
  }
  return base;
}

LiveConfig LiveConfig::from_env() { return from_env(LiveConfig{}); }

ParsedEndpoint parse_endpoint(std::string_view url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) {
    throw Error(ErrorCode::InvalidArgument, "endpoint must include a scheme: '" +
                                                std::string(url) + "'");
  }
  auto path_start = url.find('/', scheme_end + 3);
  ParsedEndpoint out;
  if (path_start == std::string_view::npos) {
    out.base = std::string(url);
  } else {
    out.base = std::string(url.substr(0, path_start));
    out.prefix = std::string(url.substr(path_start));
    while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  }
  return out;
}

namespace {

class Semaphore {
 public:
  explicit Semaphore(std::size_t n) : available_(n) {}
  void acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return available_ > 0; });
    --available_;
  }
  void release() {
    {
      std::lock_guard lock(mu_);
      ++available_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::size_t available_;
};

}  // namespace

class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(LiveConfig config)
      : config_(std::move(config)),
        endpoint_(parse_endpoint(config_.endpoint)),
        slots_(std::max<std::size_t>(1, config_.max_in_flight)) {
    if (config_.retry.max_attempts < 1 || config_.retry.max_attempts > 5) {
      throw Error(ErrorCode::InvalidArgument, "retry max_attempts must be in [1, 5]");
    }
  }

  std::size_t max_in_flight() const override { return config_.max_in_flight; }

  Completion complete(const ChatRequest& request) const override {
    slots_.acquire();
    struct Release {
      Semaphore& s;
      ~Release() { s.release(); }
    } release{slots_};

    const std::string body = to_wire(request).dump();
    const std::string path = endpoint_.prefix + "/chat/completions";
    httplib::Headers headers;
    if (!config_.api_key.empty()) {
      headers.emplace("Authorization", "Bearer " + config_.api_key);
    }

    auto backoff = config_.retry.initial_backoff;
    std::string last_error;
    for (int attempt = 1; attempt <= config_.retry.max_attempts; ++attempt) {
      httplib::Client client(endpoint_.base);
      client.set_connection_timeout(config_.timeout);
      client.set_read_timeout(config_.timeout);
      client.set_write_timeout(config_.timeout);
      auto res = client.Post(path, headers, body, "application/json");
      if (res) {
        if (res->status == 200) return parse_wire_response(res->body);
        last_error = "HTTP " + std::to_string(res->status);
        if (res->status != 429 && res->status < 500) {
          throw Error(ErrorCode::Protocol, last_error + ": " + res->body.substr(0, 200));
        }
      } else {
        last_error = httplib::to_string(res.error());
      }
      if (attempt < config_.retry.max_attempts) {
        std::this_thread::sleep_for(backoff);
        backoff *= 2;
      }
    }
    throw Error(ErrorCode::Transport,
                "request to " + config_.endpoint + " failed after " +
                    std::to_string(config_.retry.max_attempts) + " attempts: " + last_error);
  }

 private:
  LiveConfig config_;
  ParsedEndpoint endpoint_;
  mutable Semaphore slots_;
};

BackendHandle make_live_backend(LiveConfig config, std::size_t token_budget) {
  if (token_budget == 0) throw Error(ErrorCode::InvalidArgument, "token budget must be positive");
  if (config.endpoint.empty()) {
    throw Error(ErrorCode::InvalidArgument, "live backend needs an endpoint (COCT_ENDPOINT)");
  }
  return {std::make_shared<HttpBackend>(std::move(config)), token_budget};
}

}  // namespace coct
