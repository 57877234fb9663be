#include "coct/judge.hpp"

#include <regex>

#include "coct/error.hpp"
#include "coct/parallel.hpp"
#include "coct/text.hpp"

namespace coct::judge {

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::A: return "A";
    case Verdict::B: return "B";
    case Verdict::Tie: return "Tie";
    case Verdict::Invalid: return "Invalid";
  }
  return "Invalid";
}

namespace {

constexpr std::string_view kJudgeTemplate =
    "Please act as an impartial judge and evaluate the quality of the responses provided by "
    "two AI assistants to the user questions. You should choose the assistant that follows the "
    "provided strategy more carefully and precisely to answer the user's last utterance. You "
    "should use your emotional support expertise and knowledge to judge the quality of the "
    "response considering how well the answer follows the provided strategy. Your evaluation "
    "most importantly should consider strategy adherence and then the overall quality, "
    "naturalness, consistency and coherence of the final utterance.\n"
    "\n"
    "Begin your evaluation by comparing the responses of the two assistants and provide a short "
    "explanation. Avoid any position biases and ensure that the order in which the responses "
    "were presented does not influence your decision. Do not allow the length of the responses "
    "to influence your evaluation. Do not favor certain names of the assistants. Be as "
    "objective as possible. After providing your explanation, output your final verdict by "
    "strictly following this format: \"JUDGE: [[A]]\" if assistant A is better, "
    "\"JUDGE: [[B]],\" if assistant B is better, and \"JUDGE: [[C]]\" for a tie.\n"
    "\n"
    "Conversation history:\n"
    "\n"
    "{conversation_history}\n"
    "\n"
    "<|The Start of Assistant A's Response|>\n"
    "\n"
    "{assistant_a_resp}\n"
    "\n"
    "<|The End of Assistant A's Response|>\n"
    "\n"
    "<|The Start of Assistant B's Response|>\n"
    "\n"
    "{assistant_b_resp}\n"
    "\n"
    "<|The End of Assistant B's Response|>";

// Slots are filled in one left-to-right pass so slot-like text inside a
// response is never substituted again.
std::string instantiate(std::string_view history, std::string_view a, std::string_view b) {
  std::string out;
  std::string_view rest = kJudgeTemplate;
  const std::pair<std::string_view, std::string_view> slots[] = {
      {"{conversation_history}", history}, {"{assistant_a_resp}", a}, {"{assistant_b_resp}", b}};
  for (const auto& [slot, value] : slots) {
    auto pos = rest.find(slot);
    out.append(rest.substr(0, pos));
    out.append(value);
    rest = rest.substr(pos + slot.size());
  }
  out.append(rest);
  return out;
}

enum class Side { Win, Lose, Tie, Invalid };

// Outcome for x given the verdict and whether x was presented as B.
Side side_of_x(Verdict v, bool x_is_b) {
  switch (v) {
    case Verdict::A: return x_is_b ? Side::Lose : Side::Win;
    case Verdict::B: return x_is_b ? Side::Win : Side::Lose;
    case Verdict::Tie: return Side::Tie;
    case Verdict::Invalid: return Side::Invalid;
  }
  return Side::Invalid;
}

PairOutcome combine(Side first, Side second) {
  if (first == Side::Invalid || second == Side::Invalid) return PairOutcome::Invalid;
  auto wins = (first == Side::Win) + (second == Side::Win);
  auto loses = (first == Side::Lose) + (second == Side::Lose);
  auto ties = (first == Side::Tie) + (second == Side::Tie);
  if (wins == 2 || (wins == 1 && ties == 1)) return PairOutcome::XWins;
  if (loses == 2 || (loses == 1 && ties == 1)) return PairOutcome::YWins;
  return PairOutcome::Tie;
}

PairOutcome single(Side s) {
  switch (s) {
    case Side::Win: return PairOutcome::XWins;
    case Side::Lose: return PairOutcome::YWins;
    case Side::Tie: return PairOutcome::Tie;
    case Side::Invalid: return PairOutcome::Invalid;
  }
  return PairOutcome::Invalid;
}

}  // namespace

std::string build_judge_prompt(std::string_view history, std::string_view response_a,
                               std::string_view response_b) {
  if (text::trim(history).empty() || text::trim(response_a).empty() ||
      text::trim(response_b).empty()) {
    throw Error(ErrorCode::InvalidArgument, "judge prompt inputs must be non-empty");
  }
  return instantiate(history, response_a, response_b);
}

Verdict parse_verdict(std::string_view judge_output) {
  static const std::regex marker(R"(JUDGE\s*:\s*\[\[\s*([ABCabc])\s*\]\])");
  Verdict last = Verdict::Invalid;
  const std::string s(judge_output);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), marker); it != std::sregex_iterator();
       ++it) {
    switch (std::toupper(static_cast<unsigned char>((*it)[1].str()[0]))) {
      case 'A': last = Verdict::A; break;
      case 'B': last = Verdict::B; break;
      default: last = Verdict::Tie; break;
    }
  }
  return last;
}

ChatRequest judge_request(const JudgePair& pair, bool swapped, const JudgeOptions& options) {
  ChatRequest r;
  r.model = options.model;
  r.temperature = 0.0;
  r.max_tokens = options.max_tokens;
  const auto& a = swapped ? pair.response_y : pair.response_x;
  const auto& b = swapped ? pair.response_x : pair.response_y;
  r.messages.push_back({Role::User, build_judge_prompt(pair.history, a, b)});
  return r;
}

nlohmann::json to_json(const PairwiseResult& r) {
  return {{"win", r.win},           {"tie", r.tie},           {"lose", r.lose},
          {"invalid", r.invalid},   {"win_rate", r.win_rate}, {"tie_rate", r.tie_rate},
          {"lose_rate", r.lose_rate}, {"rate_denominator", "valid_pairs"}};
}

PairwiseResult run_pairwise(const std::vector<JudgePair>& pairs, const BackendHandle& judge,
                            const JudgeOptions& options) {
  if (pairs.empty()) throw Error(ErrorCode::InvalidArgument, "run_pairwise: no pairs");

  auto ask = [&](const JudgePair& pair, bool swapped) {
    try {
      return parse_verdict(judge.complete(judge_request(pair, swapped, options)).content);
    } catch (const Error&) {
      return Verdict::Invalid;
    }
  };

  PairwiseResult result;
  result.outcomes.assign(pairs.size(), PairOutcome::Invalid);
  parallel_for(pairs.size(), options.parallelism, [&](std::size_t i) {
    const auto& pair = pairs[i];
    auto first = side_of_x(ask(pair, false), false);
    if (!options.debias) {
      result.outcomes[i] = single(first);
      return;
    }
    auto second = side_of_x(ask(pair, true), true);
    result.outcomes[i] = combine(first, second);
  });

  for (auto o : result.outcomes) {
    switch (o) {
      case PairOutcome::XWins: ++result.win; break;
      case PairOutcome::YWins: ++result.lose; break;
      case PairOutcome::Tie: ++result.tie; break;
      case PairOutcome::Invalid: ++result.invalid; break;
    }
  }
  const auto valid = result.win + result.tie + result.lose;
  if (valid > 0) {
    const auto v = static_cast<double>(valid);
    result.win_rate = static_cast<double>(result.win) / v;
    result.tie_rate = static_cast<double>(result.tie) / v;
    result.lose_rate = static_cast<double>(result.lose) / v;
  }
  return result;
}

}  // namespace coct::judge
