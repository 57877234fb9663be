#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "coct/backend.hpp"
#include "coct/concepts.hpp"
#include "coct/strategies.hpp"

namespace coct::corpus {

enum class Speaker { Seeker, Supporter };

std::string_view to_string(Speaker s);
/// Accepts seeker/supporter and the aliases user/assistant.
Speaker parse_speaker(std::string_view s);

struct DialogueTurn {
  Speaker speaker = Speaker::Seeker;
  std::string text;
  std::optional<std::string> emotion;
  std::optional<std::string> strategy;

  bool operator==(const DialogueTurn&) const = default;
};

struct Dialogue {
  std::string id;
  std::optional<std::string> topic;
  std::vector<DialogueTurn> turns;

  bool operator==(const Dialogue&) const = default;
};

/// Throws Schema on a malformed object.
Dialogue dialogue_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Dialogue& d);

struct LineError {
  std::size_t line;  // 1-based
  ErrorCode code;
  std::string message;
};

struct LoadResult {
  std::vector<Dialogue> dialogues;
  std::vector<LineError> errors;
};

/// One dialogue per non-blank line. Bad lines are reported with their line
/// number and skipped; a later line reusing an id is a DuplicateId error.
/// Throws EmptyCorpus when lines exist but none is valid, Io when unreadable.
LoadResult load_jsonl(const std::string& path);
LoadResult parse_jsonl(std::string_view content);

std::string to_jsonl(const std::vector<Dialogue>& dialogues);

struct Sampling {
  enum class Mode { All, LastOnly, EveryKth } mode = Mode::All;
  std::size_t k = 1;

  static Sampling all() { return {}; }
  static Sampling last_only() { return {Mode::LastOnly, 1}; }
  static Sampling every_kth(std::size_t k) { return {Mode::EveryKth, k}; }
  /// "all", "last-only", "every-<k>".
  static Sampling parse(std::string_view s);
};

struct EvalPair {
  std::string dialogue_id;
  std::size_t turn_index = 0;
  std::vector<DialogueTurn> history;
  std::string reference;
  std::optional<std::string> emotion;
  std::optional<std::string> strategy;

  /// Stable id: "<dialogue_id>#<turn_index>".
  std::string example_id() const;
};

/// One pair per `target` turn that has a preceding turn, in dialogue order
/// then turn order; `sampling` thins the per-dialogue list.
std::vector<EvalPair> extract_pairs(const std::vector<Dialogue>& dialogues,
                                    Speaker target = Speaker::Supporter,
                                    Sampling sampling = Sampling::all());

/// History as chat messages (target speaker -> assistant). Trailing agent
/// turns are dropped so the conversation ends on the other speaker.
Conversation to_conversation(const std::vector<DialogueTurn>& history,
                             Speaker agent = Speaker::Supporter);

// ---------------------------------------------------------------------------
// Self-chat simulation

struct SimConfig {
  std::size_t max_rounds = 10;
  std::vector<std::string> stop_markers{"[END]", "goodbye"};
  std::string user_persona = default_persona();
  StrategyKind agent_strategy = StrategyKind::CoCT;
  std::optional<std::string> topic;
  std::string user_model = "default";
  GenerationParams agent_params;

  static std::string default_persona();
  void validate() const;
};

struct SimRecord {
  std::size_t rounds = 0;
  double avg_len = 0.0;
  Dialogue transcript;
  bool error = false;
  std::string error_message;
  std::size_t calls = 0;
};

nlohmann::json to_json(const SimRecord& r);

/// Alternates simulated user and agent turns, starting with the user. The
/// agent answers every user turn; the episode ends after the agent answers a
/// user turn containing a stop marker, or after max_rounds agent turns.
SimRecord simulate(const SimConfig& config, const BackendHandle& agent,
                   const BackendHandle& user, const std::optional<ConceptSet>& set,
                   std::string episode_id = "sim-0");

/// The request the user simulator receives given the transcript so far.
ChatRequest user_simulator_request(const SimConfig& config, const std::vector<DialogueTurn>& turns);

}  // namespace coct::corpus
