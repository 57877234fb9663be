#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "coct/backend.hpp"

namespace coct::judge {

enum class Verdict { A, B, Tie, Invalid };

std::string_view to_string(Verdict v);

/// Pairwise comparison prompt with the conversation and both responses slotted in.
std::string build_judge_prompt(std::string_view history, std::string_view response_a,
                               std::string_view response_b);

/// Last `JUDGE: [[X]]` marker wins; C means tie; no marker is Invalid.
Verdict parse_verdict(std::string_view judge_output);

struct JudgePair {
  std::string history;  // rendered conversation text
  std::string response_x;
  std::string response_y;
};

enum class PairOutcome { XWins, YWins, Tie, Invalid };

struct PairwiseResult {
  std::size_t win = 0;  // x wins
  std::size_t tie = 0;
  std::size_t lose = 0;  // y wins
  std::size_t invalid = 0;
  double win_rate = 0.0;  // over valid pairs
  double tie_rate = 0.0;
  double lose_rate = 0.0;
  std::vector<PairOutcome> outcomes;  // per pair, input order
};

nlohmann::json to_json(const PairwiseResult& r);

struct JudgeOptions {
  bool debias = true;
  std::string model = "default";
  int max_tokens = 512;
  std::size_t parallelism = 4;
};

/// With debias, each pair is judged in both presentation orders; x wins when
/// it wins both or wins one and ties the other, symmetrically for y, and any
/// other combination is a tie. An Invalid verdict or a backend error makes
/// the pair Invalid.
PairwiseResult run_pairwise(const std::vector<JudgePair>& pairs, const BackendHandle& judge,
                            const JudgeOptions& options = {});

/// The single-message request the judge receives for one presentation order.
ChatRequest judge_request(const JudgePair& pair, bool swapped, const JudgeOptions& options);

}  // namespace coct::judge
