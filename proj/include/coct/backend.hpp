#pragma once

#include <chrono>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace coct {

enum class Role { System, User, Assistant };

std::string_view to_string(Role role);
Role parse_role(std::string_view s);

struct ChatMessage {
  Role role = Role::User;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

using Conversation = std::vector<ChatMessage>;

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_tokens = 512;
  std::optional<long long> seed;

  /// Throws InvalidArgument when the request breaks its invariants.
  void validate() const;
};

struct Usage {
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
};

struct Completion {
  std::string content;
  Usage usage;
};

/// Stable SHA-256 hex digest over the role/content sequence only.
std::string fingerprint(const std::vector<ChatMessage>& messages);
inline std::string fingerprint(const ChatRequest& request) {
  return fingerprint(request.messages);
}

/// ceil(1.3 * whitespace tokens).
std::size_t estimate_tokens(std::string_view text);
std::size_t estimate_tokens(const std::vector<ChatMessage>& messages);

/// Keeps the leading system message and the longest suffix of the remaining
/// messages that fits `budget`. The final message is never dropped; if it
/// alone does not fit, its content is cut to the words that do.
std::vector<ChatMessage> truncate_history(const std::vector<ChatMessage>& messages,
                                          std::size_t budget);

/// nlohmann body for `POST /chat/completions`.
nlohmann::json to_wire(const ChatRequest& request);
/// Reads `choices[0].message.content`; throws Protocol or Refusal.
Completion parse_wire_response(std::string_view body);

// ---------------------------------------------------------------------------

class Backend {
 public:
  virtual ~Backend() = default;
  virtual Completion complete(const ChatRequest& request) const = 0;
  virtual std::size_t max_in_flight() const { return 4; }
};

/// Shareable reference to a backend plus the context window it is driven with.
struct BackendHandle {
  std::shared_ptr<const Backend> impl;
  std::size_t token_budget = 4096;

  Completion complete(const ChatRequest& request) const;
  std::size_t max_in_flight() const { return impl ? impl->max_in_flight() : 1; }
};

// ---------------------------------------------------------------------------
// Scripted mock

enum class FallbackKind { EchoLastUser, Fixed, Fail };

struct MockFallback {
  FallbackKind kind = FallbackKind::Fail;
  std::string text;  // Fixed only
};

struct MockScript {
  std::map<std::string, std::string> entries;  // fingerprint -> response
  MockFallback fallback;

  void add(const std::vector<ChatMessage>& messages, std::string response) {
    entries[fingerprint(messages)] = std::move(response);
  }
};

/// File schema:
/// { "entries": { "<fingerprint>": "response", ... },
///   "conversations": [ { "messages": [{"role","content"}...], "response": str } ],
///   "fallback": { "kind": "echo"|"fixed"|"fail", "text": str? } }
MockScript mock_script_from_json(const nlohmann::json& j);
nlohmann::json to_json(const MockScript& script);
MockScript load_mock_script(const std::string& path);

class MockBackend final : public Backend {
 public:
  explicit MockBackend(MockScript script) : script_(std::move(script)) {}
  Completion complete(const ChatRequest& request) const override;
  std::size_t max_in_flight() const override { return 64; }
  const MockScript& script() const { return script_; }

 private:
  MockScript script_;
};

BackendHandle make_mock_backend(MockScript script, std::size_t token_budget = 4096);

// ---------------------------------------------------------------------------
// Live OpenAI-compatible client

struct RetryPolicy {
  int max_attempts = 3;  // at most 5
  std::chrono::milliseconds initial_backoff{500};
};

struct LiveConfig {
  std::string endpoint;  // e.g. http://localhost:8000/v1
  std::string api_key;
  std::chrono::seconds timeout{60};
  RetryPolicy retry;
  std::size_t max_in_flight = 4;

  /// COCT_ENDPOINT / COCT_API_KEY, used for fields left empty.
  static LiveConfig from_env(LiveConfig base);
  static LiveConfig from_env();
};

class HttpBackend;

BackendHandle make_live_backend(LiveConfig config, std::size_t token_budget = 4096);

/// Splits "http://host:port/prefix" into scheme+authority and path prefix.
struct ParsedEndpoint {
  std::string base;    // scheme://host[:port]
  std::string prefix;  // "" or "/v1"
};
ParsedEndpoint parse_endpoint(std::string_view url);

}  // namespace coct
