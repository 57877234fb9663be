#include <gtest/gtest.h>

#include <atomic>

#include "coct/corpus.hpp"
#include "coct/error.hpp"
#include "coct/text.hpp"
#include "test_support.hpp"

using namespace coct;
using namespace coct::corpus;

namespace {

std::string line(const std::string& id, const std::vector<std::string>& speakers) {
  nlohmann::json turns = nlohmann::json::array();
  for (std::size_t i = 0; i < speakers.size(); ++i) {
    turns.push_back({{"speaker", speakers[i]}, {"text", "turn " + std::to_string(i)}});
  }
  return nlohmann::json{{"id", id}, {"turns", turns}}.dump();
}

Dialogue dialogue(const std::vector<Speaker>& speakers) {
  Dialogue d{"d", {}, {}};
  for (std::size_t i = 0; i < speakers.size(); ++i) d.turns.push_back({speakers[i], "t" + std::to_string(i), {}, {}});
  return d;
}

std::string words(std::size_t n) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += (i ? " w" : "w") + std::to_string(i);
  return s;
}

SimConfig direct_config(std::size_t max_rounds) {
  SimConfig c;
  c.max_rounds = max_rounds;
  c.agent_strategy = StrategyKind::Direct;
  return c;
}

}  // namespace

TEST(Loader, ValidLines) {
  auto r = parse_jsonl(line("a", {"seeker", "supporter"}) + "\n\n" + line("b", {"user", "assistant", "user"}) + "\n");
  ASSERT_EQ(r.dialogues.size(), 2u);
  EXPECT_TRUE(r.errors.empty());
  EXPECT_EQ(r.dialogues[1].turns[1].speaker, Speaker::Supporter);
  EXPECT_EQ(r.dialogues[1].turns[2].speaker, Speaker::Seeker);
}

TEST(Loader, BadLineReportedWithNumber) {
  auto r = parse_jsonl(line("a", {"seeker", "supporter"}) + "\n{\"id\":\"b\"}\n" + line("c", {"seeker", "supporter"}));
  EXPECT_EQ(r.dialogues.size(), 2u);
  ASSERT_EQ(r.errors.size(), 1u);
  EXPECT_EQ(r.errors[0].line, 2u);
  EXPECT_EQ(r.errors[0].code, ErrorCode::Schema);
  EXPECT_NE(r.errors[0].message.find("turns"), std::string::npos);
}

TEST(Loader, DuplicateIdNamed) {
  auto r = parse_jsonl(line("a", {"seeker", "supporter"}) + "\n" + line("a", {"seeker", "supporter"}));
  ASSERT_EQ(r.errors.size(), 1u);
  EXPECT_EQ(r.errors[0].code, ErrorCode::DuplicateId);
  EXPECT_EQ(r.errors[0].line, 2u);
  EXPECT_NE(r.errors[0].message.find("'a'"), std::string::npos);
}

TEST(Loader, SchemaRules) {
  auto errors_for = [](const std::string& l) {
    try {
      return parse_jsonl(l + "\n" + line("ok", {"seeker", "supporter"})).errors;
    } catch (const Error&) {
      return std::vector<LineError>{};
    }
  };
  EXPECT_EQ(errors_for(R"({"id":"x","turns":[{"speaker":"seeker","text":"hi"}]})").size(), 1u);
  EXPECT_EQ(errors_for(R"({"id":"x","turns":[{"speaker":"seeker","text":"hi"},{"speaker":"bot","text":"yo"}]})").size(), 1u);
  EXPECT_EQ(errors_for(R"({"id":"x","turns":[{"speaker":"seeker","text":"hi"},{"speaker":"supporter","text":"  "}]})").size(), 1u);
  EXPECT_EQ(errors_for(R"({"turns":[]})").size(), 1u);
  EXPECT_EQ(errors_for("not json").size(), 1u);
}

TEST(Loader, FileLevelFailures) {
  try {
    parse_jsonl("garbage\n{}\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyCorpus);
    EXPECT_NE(std::string(e.what()).find("line 1"), std::string::npos);
  }
  EXPECT_TRUE(parse_jsonl("").dialogues.empty());
  try {
    load_jsonl("/nonexistent/corpus.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Io);
  }
}

TEST(Loader, RoundTrip) {
  Dialogue d{"x", "work", {{Speaker::Seeker, "hi", "anxiety", {}}, {Speaker::Supporter, "hello", {}, "Question"}}};
  auto r = parse_jsonl(to_jsonl({d}));
  ASSERT_EQ(r.dialogues.size(), 1u);
  EXPECT_EQ(r.dialogues[0], d);
}

TEST(Pairs, Boundaries) {
  using S = Speaker;
  auto one = extract_pairs({dialogue({S::Seeker, S::Supporter})});
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].history.size(), 1u);
  EXPECT_EQ(one[0].reference, "t1");
  EXPECT_EQ(one[0].example_id(), "d#1");
  EXPECT_TRUE(extract_pairs({dialogue({S::Supporter, S::Seeker})}).empty());
}

TEST(Pairs, SixTurnAlternating) {
  using S = Speaker;
  auto d = dialogue({S::Seeker, S::Supporter, S::Seeker, S::Supporter, S::Seeker, S::Supporter});
  auto all = extract_pairs({d});
  ASSERT_EQ(all.size(), 3u);
  EXPECT_EQ(all[0].turn_index, 1u);
  EXPECT_EQ(all[1].turn_index, 3u);
  EXPECT_EQ(all[2].turn_index, 5u);
  auto last = extract_pairs({d}, Speaker::Supporter, Sampling::last_only());
  ASSERT_EQ(last.size(), 1u);
  EXPECT_EQ(last[0].turn_index, 5u);
  EXPECT_EQ(extract_pairs({d}, Speaker::Supporter, Sampling::every_kth(2)).size(), 2u);
  EXPECT_EQ(extract_pairs({d}, Speaker::Seeker).size(), 2u);
}

TEST(Pairs, CountMatchesSupporterTurnsAfterFirst) {
  std::mt19937 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Dialogue> ds;
    std::size_t expected = 0;
    for (int k = 0; k < 4; ++k) {
      std::vector<Speaker> sp(2 + rng() % 8);
      for (auto& s : sp) s = rng() % 2 ? Speaker::Seeker : Speaker::Supporter;
      for (std::size_t i = 1; i < sp.size(); ++i) expected += sp[i] == Speaker::Supporter;
      auto d = dialogue(sp);
      d.id = "d" + std::to_string(k);
      ds.push_back(d);
    }
    auto pairs = extract_pairs(ds);
    EXPECT_EQ(pairs.size(), expected);
    for (const auto& p : pairs) {
      EXPECT_FALSE(p.history.empty());
      const auto& d = ds[static_cast<std::size_t>(p.dialogue_id[1] - '0')];
      EXPECT_EQ(d.turns[p.turn_index].speaker, Speaker::Supporter);
    }
  }
  EXPECT_EQ(Sampling::parse("every-3").k, 3u);
  EXPECT_THROW(Sampling::parse("every-0"), Error);
  EXPECT_THROW(Sampling::parse("some"), Error);
}

TEST(Pairs, ToConversation) {
  using S = Speaker;
  auto d = dialogue({S::Seeker, S::Supporter, S::Seeker, S::Supporter});
  auto c = to_conversation(d.turns);
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c[1].role, Role::Assistant);
  EXPECT_EQ(c[2].role, Role::User);
}

TEST(Simulation, StopMarkerInThirdUserUtterance) {
  std::atomic<int> user_calls{0};
  auto user = coct::testing::fn_backend([&](const ChatRequest&) -> std::string {
    return ++user_calls == 3 ? "Thanks, that helps. [END]" : "I feel stuck.";
  });
  auto agent = coct::testing::fn_backend([](const ChatRequest&) { return "Tell me more."; });
  auto rec = simulate(direct_config(10), agent, user, std::nullopt);
  EXPECT_FALSE(rec.error);
  EXPECT_EQ(rec.rounds, 3u);
  EXPECT_EQ(rec.calls, 6u);
  ASSERT_EQ(rec.transcript.turns.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(rec.transcript.turns[i].speaker, i % 2 ? Speaker::Supporter : Speaker::Seeker);
  }
}

TEST(Simulation, StopMarkersAreCaseInsensitive) {
  auto user = coct::testing::fn_backend([](const ChatRequest&) { return "OK GOODBYE then"; });
  auto agent = coct::testing::fn_backend([](const ChatRequest&) { return "Take care."; });
  EXPECT_EQ(simulate(direct_config(10), agent, user, std::nullopt).rounds, 1u);
}

TEST(Simulation, CapEnforced) {
  auto user = coct::testing::fn_backend([](const ChatRequest&) { return "go on"; });
  auto agent = coct::testing::fn_backend([](const ChatRequest&) { return "sure"; });
  auto rec = simulate(direct_config(5), agent, user, std::nullopt);
  EXPECT_EQ(rec.rounds, 5u);
  EXPECT_FALSE(rec.error);
  SimConfig bad;
  bad.max_rounds = 0;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Simulation, AverageLength) {
  std::atomic<int> n{0};
  auto user = coct::testing::fn_backend([](const ChatRequest&) { return "hm"; });
  auto agent = coct::testing::fn_backend([&](const ChatRequest&) { return words(static_cast<std::size_t>(4 + 2 * n++)); });
  auto rec = simulate(direct_config(3), agent, user, std::nullopt);
  EXPECT_EQ(rec.rounds, 3u);
  EXPECT_DOUBLE_EQ(rec.avg_len, 6.0);
}

TEST(Simulation, AverageLengthIgnoresTagStyle) {
  auto set = builtin_set("esconv-strategy");
  auto run = [&](TagStyle style) {
    auto user = coct::testing::fn_backend([](const ChatRequest&) { return "hm"; });
    auto agent = coct::testing::fn_backend([style](const ChatRequest&) {
      return style.wrap("Question") + " How was it? " + style.wrap("Information") + " It helps.";
    });
    SimConfig c;
    c.max_rounds = 2;
    c.agent_params.style = style;
    return simulate(c, agent, user, set);
  };
  auto angle = run(TagStyle::angle());
  auto square = run(TagStyle::parse("square"));
  EXPECT_DOUBLE_EQ(angle.avg_len, 5.0);
  EXPECT_DOUBLE_EQ(square.avg_len, angle.avg_len);
}

TEST(Simulation, AgentSeesUserTurnsAndSimulatorSeesPlainAgentText) {
  std::vector<ChatRequest> user_requests;
  std::mutex mu;
  auto user = coct::testing::fn_backend([&](const ChatRequest& r) {
    std::lock_guard lock(mu);
    user_requests.push_back(r);
    return "I lost my keys.";
  });
  auto agent = coct::testing::fn_backend([](const ChatRequest&) { return "<Question> Where did you last see them?"; });
  SimConfig c;
  c.max_rounds = 2;
  c.topic = "daily life";
  auto rec = simulate(c, agent, user, builtin_set("esconv-strategy"));
  ASSERT_EQ(user_requests.size(), 2u);
  EXPECT_NE(user_requests[0].messages[0].content.find("daily life"), std::string::npos);
  EXPECT_EQ(user_requests[1].messages.back().content, "Where did you last see them?");
  EXPECT_EQ(rec.transcript.turns[1].text, "<Question> Where did you last see them?");
}

TEST(Simulation, BackendFailureEndsEpisode) {
  std::atomic<int> n{0};
  auto user = coct::testing::fn_backend([](const ChatRequest&) { return "hey"; });
  auto agent = coct::testing::fn_backend([&](const ChatRequest&) -> std::string {
    if (++n == 2) throw Error(ErrorCode::Transport, "timeout");
    return "one two";
  });
  auto rec = simulate(direct_config(5), agent, user, std::nullopt);
  EXPECT_TRUE(rec.error);
  EXPECT_EQ(rec.rounds, 1u);
  EXPECT_DOUBLE_EQ(rec.avg_len, 2.0);
  EXPECT_NE(rec.error_message.find("timeout"), std::string::npos);
  auto j = to_json(rec);
  EXPECT_EQ(j["error"], true);
  EXPECT_EQ(j["rounds"], 1);
}
