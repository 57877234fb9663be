#include <gtest/gtest.h>

#include <filesystem>

#include "coct/error.hpp"
#include "coct/report.hpp"
#include "test_support.hpp"

using namespace coct;
using namespace coct::report;

namespace {

RunRecord sample_record() {
  auto set = builtin_set("esconv-strategy");
  const std::string raw = "<Question> How long has this been going on? <Information> Sleep helps.";
  StrategyOutcome o;
  o.strategy = StrategyKind::CoCT;
  o.final = parse_tagged(raw, TagStyle::angle(), set, true);
  ChatRequest req{"m", {{Role::System, "sys"}, {Role::User, "I can't sleep."}}};
  o.trace.push_back({req, raw});
  o.call_count = 1;
  return make_record("d1#1", "d1", 1, {{Role::User, "I can't sleep."}}, "How long?", o, "esconv-strategy");
}

}  // namespace

TEST(RunRecords, MakeRecord) {
  auto r = sample_record();
  EXPECT_EQ(r.parse_mode, "tagged");
  EXPECT_EQ(r.strategy, "coct");
  EXPECT_EQ(r.segments.size(), 2u);
  ASSERT_EQ(r.trace.size(), 1u);
  EXPECT_EQ(r.trace[0].fingerprint, fingerprint({{Role::System, "sys"}, {Role::User, "I can't sleep."}}));
  EXPECT_EQ(r.trace[0].messages, 2u);
  EXPECT_FALSE(r.timing_ms);
  EXPECT_TRUE(reproduces_segments(r, builtin_set("esconv-strategy")));
}

TEST(RunRecords, JsonRoundTrip) {
  auto r = sample_record();
  r.warnings = {"w1"};
  r.timing_ms = 12;
  auto back = run_record_from_json(to_json(r));
  EXPECT_EQ(back, r);
  auto j = to_json(r);
  EXPECT_EQ(j["segments"][0]["concept"], "Question");
  EXPECT_TRUE(j["error"].is_null());

  RunRecord failed = r;
  failed.error = "Transport: down";
  failed.segments.clear();
  EXPECT_EQ(run_record_from_json(to_json(failed)), failed);
}

TEST(RunRecords, PlainRecordsReproduce) {
  StrategyOutcome o;
  o.strategy = StrategyKind::Direct;
  o.final = plain_utterance("I hear you.");
  o.trace.push_back({ChatRequest{"m", {{Role::User, "x"}}}, "I hear you."});
  o.call_count = 1;
  auto r = make_record("a#1", "a", 1, {{Role::User, "x"}}, "ref", o, "");
  EXPECT_EQ(r.parse_mode, "plain");
  EXPECT_TRUE(reproduces_segments(r, ConceptSet{}));
}

TEST(RunRecords, JsonlRoundTripAndErrors) {
  std::vector<RunRecord> rs{sample_record(), sample_record()};
  rs[1].id = "d1#3";
  auto bytes = emit(rs, Format::Jsonl);
  EXPECT_EQ(std::count(bytes.begin(), bytes.end(), '\n'), 2);
  EXPECT_EQ(parse_records(bytes), rs);
  EXPECT_EQ(bytes, emit(parse_records(bytes), Format::Jsonl));
  try {
    parse_records(bytes + "{\"id\": 3}\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Schema);
    EXPECT_NE(std::string(e.what()).find("records line 3"), std::string::npos);
  }
  EXPECT_THROW(parse_records("not json\n"), Error);
  try {
    load_records("/nonexistent/records.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Io);
  }
}

TEST(Emit, MatrixCsvShape) {
  analysis::TransitionMatrix m({"Question", "Self-disclosure"});
  m.add("Question", "Self-disclosure", 3);
  m.add("Self-disclosure", "Self-disclosure");
  auto csv = emit(m, Format::Csv);
  EXPECT_EQ(csv, "from\\to,Question,Self-disclosure\nQuestion,0,3\nSelf-disclosure,0,1\n");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);

  auto norm = emit(analysis::normalize(m), Format::Csv);
  EXPECT_EQ(norm, "from\\to,Question,Self-disclosure\nQuestion,0.0000,1.0000\nSelf-disclosure,0.0000,1.0000\n");

  analysis::TransitionMatrix quoted({"a,b"});
  EXPECT_EQ(emit(quoted, Format::Csv), "from\\to,\"a,b\"\n\"a,b\",0\n");
}

TEST(Emit, MetricTable) {
  metrics::MetricReport r;
  r.bleu2 = 1.23456;
  r.rougeL = 10;
  r.distinct2 = 99.99999;
  r.cider = 0.5;
  r.n_examples = 7;
  EXPECT_EQ(emit(r, Format::Markdown, "coct"),
            "| Method | B-2 | R-L | D-2 | CDr |\n|---|---:|---:|---:|---:|\n"
            "| coct | 1.2346 | 10.0000 | 100.0000 | 0.5000 |\n");
  EXPECT_EQ(emit(r, Format::Csv, "coct"), "method,B-2,R-L,D-2,CDr,n_examples\ncoct,1.2346,10.0000,100.0000,0.5000,7\n");
  auto j = nlohmann::json::parse(emit(r, Format::Json));
  EXPECT_EQ(j["bleu2"].get<double>(), 1.23456);  // full precision in JSON
  EXPECT_EQ(emit(r, Format::Json), emit(r, Format::Json));
}

TEST(Emit, UnsupportedCombinations) {
  metrics::MetricReport r;
  EXPECT_THROW(emit(r, Format::Jsonl), Error);
  EXPECT_THROW(emit(std::vector<RunRecord>{}, Format::Csv), Error);
  EXPECT_THROW(emit(analysis::TransitionMatrix{}, Format::Jsonl), Error);
  try {
    parse_format("xlsx");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnsupportedFormat);
  }
  EXPECT_EQ(parse_format("markdown-table"), Format::Markdown);
  EXPECT_EQ(parse_format("MD"), Format::Markdown);
}

TEST(Emit, WriteFileCreatesDirectories) {
  auto dir = coct::testing::scratch_dir("emit");
  auto path = dir + "/nested/deeper/out.csv";
  write_file(path, "a,b\n");
  EXPECT_EQ(coct::testing::read_file(path), "a,b\n");
}

TEST(History, Rendering) {
  EXPECT_EQ(render_history({{Role::User, "hi"}, {Role::Assistant, "hello"}}), "user: hi\nassistant: hello");
  EXPECT_EQ(fixed4(2.0 / 3.0), "0.6667");
}
