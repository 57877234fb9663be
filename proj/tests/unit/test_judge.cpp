#include <gtest/gtest.h>

#include <map>
#include <mutex>
#include <random>

#include "coct/error.hpp"
#include "coct/judge.hpp"
#include "test_support.hpp"

using namespace coct;
using namespace coct::judge;

namespace {

std::size_t occurrences(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + 1)) ++n;
  return n;
}

// Slots sit between blank lines inside their delimiters.
std::string slot(const std::string& s, char which) {
  const auto open = std::string("<|The Start of Assistant ") + which + "'s Response|>\n\n";
  const auto close = std::string("\n\n<|The End of Assistant ") + which + "'s Response|>";
  auto a = s.find(open) + open.size();
  return s.substr(a, s.find(close, a) - a);
}

std::string response_a(const ChatRequest& r) { return slot(r.messages.back().content, 'A'); }
std::string response_b(const ChatRequest& r) { return slot(r.messages.back().content, 'B'); }

std::vector<JudgePair> make_pairs(std::size_t n) {
  std::vector<JudgePair> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    pairs.push_back({"user: help " + std::to_string(i), "x reply " + std::to_string(i),
                     "y reply number " + std::to_string(i)});
  }
  return pairs;
}

}  // namespace

TEST(JudgePrompt, TemplateAndDelimiters) {
  auto p = build_judge_prompt("user: I lost my job.", "That is hard.", "Cheer up!");
  EXPECT_EQ(occurrences(p, "The Start of Assistant A's Response"), 1u);
  EXPECT_EQ(occurrences(p, "<|The End of Assistant B's Response|>"), 1u);
  EXPECT_EQ(p.rfind("Please act as an impartial judge", 0), 0u);
  EXPECT_NE(p.find("\"JUDGE: [[A]]\" if assistant A is better, \"JUDGE: [[B]],\" if assistant B is "
                   "better, and \"JUDGE: [[C]]\" for a tie."),
            std::string::npos);
  EXPECT_NE(p.find("Conversation history:\n\nuser: I lost my job.\n\n<|The Start of Assistant A's Response|>"
                   "\n\nThat is hard.\n\n<|The End of Assistant A's Response|>"),
            std::string::npos);
  const std::string end = "<|The End of Assistant B's Response|>";
  EXPECT_EQ(p.substr(p.size() - end.size()), end);
}

TEST(JudgePrompt, SlotTextInsideResponsesIsNotSubstituted) {
  auto p = build_judge_prompt("h", "{assistant_b_resp}", "B");
  EXPECT_EQ(occurrences(p, "{assistant_b_resp}"), 1u);
  EXPECT_THROW(build_judge_prompt("h", " ", "B"), Error);
}

TEST(Verdict, Parsing) {
  EXPECT_EQ(parse_verdict("A is warmer. JUDGE: [[B]]"), Verdict::B);
  EXPECT_EQ(parse_verdict("JUDGE: [[A]]"), Verdict::A);
  EXPECT_EQ(parse_verdict("no marker here"), Verdict::Invalid);
  EXPECT_EQ(parse_verdict("JUDGE: [[A]] ... on reflection JUDGE: [[C]]"), Verdict::Tie);
  EXPECT_EQ(parse_verdict("JUDGE : [[ b ]]"), Verdict::B);
  EXPECT_EQ(parse_verdict("JUDGE: [[B]],"), Verdict::B);
  EXPECT_EQ(parse_verdict("[[A]]"), Verdict::Invalid);
  EXPECT_EQ(parse_verdict("JUDGE: [[D]]"), Verdict::Invalid);
}

TEST(Pairwise, AlwaysAWithDebiasIsAllTies) {
  auto b = coct::testing::fn_backend([](const ChatRequest&) { return "Fine. JUDGE: [[A]]"; });
  auto r = run_pairwise(make_pairs(10), b);
  EXPECT_EQ(r.tie, 10u);
  EXPECT_EQ(r.win + r.lose + r.invalid, 0u);
  EXPECT_DOUBLE_EQ(r.tie_rate, 1.0);
}

TEST(Pairwise, AlwaysAWithoutDebiasFavoursX) {
  auto b = coct::testing::fn_backend([](const ChatRequest&) { return "JUDGE: [[A]]"; });
  JudgeOptions o;
  o.debias = false;
  auto r = run_pairwise(make_pairs(4), b, o);
  EXPECT_EQ(r.win, 4u);
  EXPECT_DOUBLE_EQ(r.win_rate, 1.0);
}

TEST(Pairwise, TieJudgeGivesAllTies) {
  MockScript s;
  s.fallback = {FallbackKind::Fixed, "JUDGE: [[C]]"};
  auto r = run_pairwise(make_pairs(5), make_mock_backend(s));
  EXPECT_EQ(r.tie, 5u);
}

TEST(Pairwise, LongerResponseWinsInBothOrders) {
  auto pairs = make_pairs(6);
  MockScript s;
  // One scripted fingerprint per presentation order.
  for (const auto& p : pairs) {
    for (bool swapped : {false, true}) {
      auto req = judge_request(p, swapped, {});
      bool a_longer = response_a(req).size() > response_b(req).size();
      s.add(req.messages, a_longer ? "JUDGE: [[A]]" : "JUDGE: [[B]]");
    }
  }
  auto r = run_pairwise(pairs, make_mock_backend(s));
  EXPECT_EQ(r.lose, 6u);  // y replies are longer
  for (auto& p : pairs) std::swap(p.response_x, p.response_y);
  EXPECT_EQ(run_pairwise(pairs, make_mock_backend(s)).win, 6u);
}

TEST(Pairwise, SwapAntisymmetryOverRandomScripts) {
  const Verdict choices[] = {Verdict::A, Verdict::B, Verdict::Tie, Verdict::Invalid};
  const char* texts[] = {"JUDGE: [[A]]", "JUDGE: [[B]]", "JUDGE: [[C]]", "cannot decide"};
  std::mt19937 rng(5);
  for (int script = 0; script < 100; ++script) {
    auto pairs = make_pairs(8);
    // Verdict keyed by the (A, B) presentation, fixed for this script.
    std::map<std::pair<std::string, std::string>, int> table;
    for (const auto& p : pairs) {
      table[{p.response_x, p.response_y}] = static_cast<int>(rng() % 4);
      table[{p.response_y, p.response_x}] = static_cast<int>(rng() % 4);
    }
    auto b = coct::testing::fn_backend([&](const ChatRequest& r) -> std::string {
      return texts[table.at({response_a(r), response_b(r)})];
    });
    auto fwd = run_pairwise(pairs, b);
    for (auto& p : pairs) std::swap(p.response_x, p.response_y);
    auto rev = run_pairwise(pairs, b);
    EXPECT_EQ(fwd.win, rev.lose);
    EXPECT_EQ(fwd.lose, rev.win);
    EXPECT_EQ(fwd.tie, rev.tie);
    EXPECT_EQ(fwd.invalid, rev.invalid);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      auto mirrored = fwd.outcomes[i] == PairOutcome::XWins   ? PairOutcome::YWins
                      : fwd.outcomes[i] == PairOutcome::YWins ? PairOutcome::XWins
                                                              : fwd.outcomes[i];
      EXPECT_EQ(rev.outcomes[i], mirrored);
    }
  }
  (void)choices;
}

TEST(Pairwise, CombinationRule) {
  // (first order verdict, swapped order verdict) -> outcome for x.
  struct Case {
    const char* first;
    const char* second;
    PairOutcome expected;
  };
  const Case cases[] = {
      {"JUDGE: [[A]]", "JUDGE: [[B]]", PairOutcome::XWins},
      {"JUDGE: [[A]]", "JUDGE: [[C]]", PairOutcome::XWins},
      {"JUDGE: [[C]]", "JUDGE: [[B]]", PairOutcome::XWins},
      {"JUDGE: [[B]]", "JUDGE: [[A]]", PairOutcome::YWins},
      {"JUDGE: [[C]]", "JUDGE: [[A]]", PairOutcome::YWins},
      {"JUDGE: [[A]]", "JUDGE: [[A]]", PairOutcome::Tie},
      {"JUDGE: [[C]]", "JUDGE: [[C]]", PairOutcome::Tie},
      {"JUDGE: [[A]]", "garbage", PairOutcome::Invalid},
  };
  for (const auto& c : cases) {
    JudgePair p{"h", "x", "y"};
    auto b = coct::testing::fn_backend([&](const ChatRequest& r) -> std::string {
      return response_a(r) == "x" ? c.first : c.second;
    });
    auto r = run_pairwise({p}, b);
    EXPECT_EQ(r.outcomes[0], c.expected) << c.first << " / " << c.second;
  }
}

TEST(Pairwise, BackendErrorsAndRates) {
  std::atomic<int> n{0};
  auto b = coct::testing::fn_backend([&](const ChatRequest& r) -> std::string {
    if (r.messages[0].content.find("help 0") != std::string::npos) throw Error(ErrorCode::Transport, "x");
    ++n;
    return response_a(r).rfind("x", 0) == 0 ? "JUDGE: [[A]]" : "JUDGE: [[B]]";
  });
  auto r = run_pairwise(make_pairs(5), b);
  EXPECT_EQ(r.invalid, 1u);
  EXPECT_EQ(r.win, 4u);
  EXPECT_DOUBLE_EQ(r.win_rate, 1.0);  // rates are over valid pairs
  auto j = to_json(r);
  EXPECT_EQ(j["invalid"], 1);
  EXPECT_EQ(j["rate_denominator"], "valid_pairs");
  EXPECT_THROW(run_pairwise({}, b), Error);
}
