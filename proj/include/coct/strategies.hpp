#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "coct/backend.hpp"
#include "coct/concepts.hpp"
#include "coct/error.hpp"
#include "coct/retriever.hpp"

namespace coct {

enum class StrategyKind {
  Direct,
  DirectRefine,
  SelfRefine,
  ECoT,
  SoT,
  ToT,
  PlanAndSolve,
  RAG,
  CSIM,
  CoCT,
  CoCTFree,
};

std::string_view to_string(StrategyKind kind);
/// Case-insensitive; accepts "direct-refine", "self_refine", "coct-free", ...
StrategyKind parse_strategy(std::string_view s);
const std::vector<StrategyKind>& all_strategies();

/// Prompt wording for every strategy. Slots use `{name}` placeholders. The
/// defaults are compiled in; `load_templates` overrides them from a directory
/// of `<field>.txt` files.
struct PromptTemplates {
  std::string coct_system;
  std::string coct_concept_line;
  std::string base_system;
  std::string direct_refine_system;
  std::string direct_refine_marker;
  std::string self_refine_feedback;
  std::string self_refine_refine;
  std::string ecot_system;
  std::string sot_skeleton;
  std::string sot_expand;
  std::string tot_propose;
  std::string tot_improve;
  std::string tot_score;
  std::string plan_request;
  std::string plan_execute;
  std::string rag_system;
  std::string csim_user_turn;
  std::string csim_final_system;

  static PromptTemplates defaults();
  /// Field names understood by load_templates, in declaration order.
  static const std::vector<std::string>& field_names();
};

PromptTemplates load_templates(const std::string& directory, PromptTemplates base = PromptTemplates::defaults());

struct GenerationParams {
  std::string model = "default";
  double temperature = 0.0;
  int max_tokens = 512;
  std::optional<long long> seed;
  TagStyle style = TagStyle::angle();
  int tot_breadth = 3;
  int tot_depth = 2;
  int csim_lookahead = 2;
  std::size_t rag_k = 3;
  std::size_t sot_max_points = 8;
  /// Tokens kept free for system prompt and auxiliary messages.
  std::size_t prompt_reserve = 512;
  PromptTemplates templates = PromptTemplates::defaults();
  std::shared_ptr<const RetrieverIndex> retriever;
};

struct TraceEntry {
  ChatRequest request;
  std::string response;
};

struct StrategyOutcome {
  TaggedUtterance final;
  std::vector<TraceEntry> trace;
  std::size_t call_count = 0;
  StrategyKind strategy = StrategyKind::Direct;
  std::chrono::milliseconds timing{0};
  /// Set when a section could not be extracted and the whole response was used.
  bool extraction_fallback = false;
  std::vector<std::string> warnings;
};

/// Backend failure during generation, carrying the calls that completed.
class GenerationError : public Error {
 public:
  GenerationError(ErrorCode code, const std::string& message, std::vector<TraceEntry> trace)
      : Error(code, message), trace_(std::move(trace)) {}
  const std::vector<TraceEntry>& trace() const { return trace_; }

 private:
  std::vector<TraceEntry> trace_;
};

/// Concept list line, tagging instruction and chain instruction. An empty set
/// (free-concept variant) omits the concept list.
std::string build_coct_prompt(const ConceptSet& set, const TagStyle& style,
                              const PromptTemplates& templates = PromptTemplates::defaults());

/// Number of backend calls the strategy issues for `params`. SoT depends on
/// the skeleton and returns the upper bound 1 + sot_max_points.
std::size_t expected_calls(StrategyKind kind, const GenerationParams& params);

/// Runs one strategy on `history`, which must end with a user message.
StrategyOutcome generate(StrategyKind kind, const Conversation& history,
                         const std::optional<ConceptSet>& set, const BackendHandle& backend,
                         const GenerationParams& params = {});

/// Numbered points ("1. ...", "2) ...") of a skeleton, in order.
std::vector<std::string> parse_skeleton(std::string_view text);
/// Text after the last case-insensitive `marker`, trimmed; nullopt if absent or empty.
std::optional<std::string> extract_after_marker(std::string_view text, std::string_view marker);
/// First integer in `text`, clamped to [1, 10]; 0 when there is none.
int parse_rating(std::string_view text);

}  // namespace coct
