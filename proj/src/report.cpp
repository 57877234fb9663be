#include "coct/report.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "coct/error.hpp"
#include "coct/text.hpp"

namespace coct::report {

using nlohmann::json;

json to_json(const RunRecord& r) {
  json history = json::array();
  for (const auto& m : r.history) {
    history.push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
  }
  json segments = json::array();
  for (const auto& s : r.segments) {
    segments.push_back({{"concept", s.label ? json(*s.label) : json(nullptr)}, {"text", s.text}});
  }
  json trace = json::array();
  for (const auto& t : r.trace) {
    trace.push_back({{"fingerprint", t.fingerprint}, {"messages", t.messages}, {"response", t.response}});
  }
  json out = {{"id", r.id},
              {"dialogue_id", r.dialogue_id},
              {"turn_index", r.turn_index},
              {"strategy", r.strategy},
              {"tag_style", std::string(r.style.name())},
              {"parse_mode", r.parse_mode},
              {"concept_set", r.concept_set},
              {"history", std::move(history)},
              {"response", r.response},
              {"segments", std::move(segments)},
              {"reference", r.reference},
              {"trace", std::move(trace)},
              {"call_count", r.call_count},
              {"extraction_fallback", r.extraction_fallback},
              {"warnings", r.warnings},
              {"error", r.error ? json(*r.error) : json(nullptr)}};
  if (r.timing_ms) out["timing_ms"] = *r.timing_ms;
  return out;
}

RunRecord run_record_from_json(const json& j) {
  RunRecord r;
  try {
    r.id = j.at("id").get<std::string>();
    r.dialogue_id = j.value("dialogue_id", std::string());
    r.turn_index = j.value("turn_index", std::size_t{0});
    r.strategy = j.value("strategy", std::string());
    r.style = TagStyle::parse(j.value("tag_style", std::string("angle")));
    r.parse_mode = j.value("parse_mode", std::string("plain"));
    r.concept_set = j.value("concept_set", std::string());
    for (const auto& m : j.value("history", json::array())) {
      r.history.push_back({parse_role(m.at("role").get<std::string>()), m.at("content").get<std::string>()});
    }
    r.response = j.value("response", std::string());
    for (const auto& s : j.value("segments", json::array())) {
      Segment seg;
      if (s.contains("concept") && !s["concept"].is_null()) seg.label = s["concept"].get<std::string>();
      seg.text = s.at("text").get<std::string>();
      r.segments.push_back(std::move(seg));
    }
    r.reference = j.at("reference").get<std::string>();
    for (const auto& t : j.value("trace", json::array())) {
      r.trace.push_back({t.at("fingerprint").get<std::string>(), t.value("messages", std::size_t{0}),
                         t.value("response", std::string())});
    }
    r.call_count = j.value("call_count", r.trace.size());
    r.extraction_fallback = j.value("extraction_fallback", false);
    r.warnings = j.value("warnings", std::vector<std::string>{});
    if (j.contains("error") && !j["error"].is_null()) r.error = j["error"].get<std::string>();
    if (j.contains("timing_ms")) r.timing_ms = j["timing_ms"].get<long long>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Schema, std::string("run record: ") + e.what());
  }
  return r;
}

RunRecord make_record(std::string id, std::string dialogue_id, std::size_t turn_index,
                      const Conversation& history, std::string reference,
                      const StrategyOutcome& outcome, const std::string& concept_set,
                      bool keep_timing) {
  RunRecord r;
  r.id = std::move(id);
  r.dialogue_id = std::move(dialogue_id);
  r.turn_index = turn_index;
  r.strategy = std::string(to_string(outcome.strategy));
  r.style = outcome.final.style;
  const bool tagged =
      outcome.strategy == StrategyKind::CoCT || outcome.strategy == StrategyKind::CoCTFree;
  r.parse_mode = tagged ? "tagged" : "plain";
  r.concept_set = concept_set;
  r.history = history;
  r.response = tagged ? outcome.trace.back().response : strip_tags(outcome.final);
  r.segments = outcome.final.segments;
  r.reference = std::move(reference);
  for (const auto& t : outcome.trace) {
    r.trace.push_back({fingerprint(t.request), t.request.messages.size(), t.response});
  }
  r.call_count = outcome.call_count;
  r.extraction_fallback = outcome.extraction_fallback;
  r.warnings = outcome.warnings;
  if (keep_timing) r.timing_ms = outcome.timing.count();
  return r;
}

bool reproduces_segments(const RunRecord& r, const ConceptSet& set) {
  if (r.error) return r.segments.empty();
  if (r.parse_mode == "tagged") {
    return parse_tagged(r.response, r.style, set, true).segments == r.segments;
  }
  return plain_utterance(r.response, r.style).segments == r.segments;
}

std::vector<RunRecord> parse_records(std::string_view content) {
  std::vector<RunRecord> out;
  std::istringstream in{std::string(content)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw Error(ErrorCode::Schema, "records line " + std::to_string(line_no) + ": invalid JSON");
    }
    try {
      out.push_back(run_record_from_json(j));
    } catch (const Error& e) {
      throw Error(ErrorCode::Schema, "records line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<RunRecord> load_records(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read records '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_records(ss.str());
}

std::string render_history(const std::vector<ChatMessage>& history) {
  std::string out;
  for (const auto& m : history) {
    if (!out.empty()) out += '\n';
    out += to_string(m.role);
    out += ": ";
    out += m.content;
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string_view to_string(Format f) {
  switch (f) {
    case Format::Jsonl: return "jsonl";
    case Format::Json: return "json";
    case Format::Csv: return "csv";
    case Format::Markdown: return "markdown-table";
  }
  return "json";
}

Format parse_format(std::string_view s) {
  auto v = text::to_lower(text::trim(s));
  if (v == "jsonl") return Format::Jsonl;
  if (v == "json") return Format::Json;
  if (v == "csv") return Format::Csv;
  if (v == "markdown-table" || v == "markdown" || v == "md") return Format::Markdown;
  throw Error(ErrorCode::UnsupportedFormat, "unsupported format '" + std::string(s) + "'");
}

std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

namespace {

[[noreturn]] void unsupported(std::string_view what, Format f) {
  throw Error(ErrorCode::UnsupportedFormat,
              std::string(what) + " cannot be emitted as " + std::string(to_string(f)));
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  return "\"" + text::replace_all(s, "\"", "\"\"") + "\"";
}

std::string md_cell(const std::string& s) { return text::replace_all(s, "|", "\\|"); }

template <typename Cell>
std::string matrix_csv(const std::vector<std::string>& labels, Cell cell) {
  std::string out = "from\\to";
  for (const auto& l : labels) out += "," + csv_field(l);
  out += '\n';
  for (std::size_t r = 0; r < labels.size(); ++r) {
    out += csv_field(labels[r]);
    for (std::size_t c = 0; c < labels.size(); ++c) out += "," + cell(r, c);
    out += '\n';
  }
  return out;
}

template <typename Cell>
std::string matrix_markdown(const std::vector<std::string>& labels, Cell cell) {
  std::string out = "| from \\ to |";
  for (const auto& l : labels) out += " " + md_cell(l) + " |";
  out += "\n|---|";
  for (std::size_t i = 0; i < labels.size(); ++i) out += "---:|";
  out += '\n';
  for (std::size_t r = 0; r < labels.size(); ++r) {
    out += "| " + md_cell(labels[r]) + " |";
    for (std::size_t c = 0; c < labels.size(); ++c) out += " " + cell(r, c) + " |";
    out += '\n';
  }
  return out;
}

}  // namespace

std::string emit(const std::vector<RunRecord>& records, Format format) {
  switch (format) {
    case Format::Jsonl: {
      std::string out;
      for (const auto& r : records) out += to_json(r).dump() + "\n";
      return out;
    }
    case Format::Json: {
      json arr = json::array();
      for (const auto& r : records) arr.push_back(to_json(r));
      return arr.dump(2) + "\n";
    }
    default:
      unsupported("run records", format);
  }
}

std::string emit(const metrics::MetricReport& report, Format format, std::string_view method) {
  switch (format) {
    case Format::Json:
      return metrics::to_json(report).dump(2) + "\n";
    case Format::Markdown:
      return "| Method | B-2 | R-L | D-2 | CDr |\n|---|---:|---:|---:|---:|\n| " +
             md_cell(std::string(method)) + " | " + fixed4(report.bleu2) + " | " +
             fixed4(report.rougeL) + " | " + fixed4(report.distinct2) + " | " +
             fixed4(report.cider) + " |\n";
    case Format::Csv:
      return "method,B-2,R-L,D-2,CDr,n_examples\n" + csv_field(std::string(method)) + "," +
             fixed4(report.bleu2) + "," + fixed4(report.rougeL) + "," + fixed4(report.distinct2) +
             "," + fixed4(report.cider) + "," + std::to_string(report.n_examples) + "\n";
    default:
      unsupported("metric report", format);
  }
}

std::string emit(const analysis::TransitionMatrix& m, Format format) {
  auto cell = [&](std::size_t r, std::size_t c) { return std::to_string(m.at(r, c)); };
  switch (format) {
    case Format::Csv:
      return matrix_csv(m.labels(), cell);
    case Format::Markdown:
      return matrix_markdown(m.labels(), cell);
    case Format::Json: {
      json rows = json::array();
      for (std::size_t r = 0; r < m.size(); ++r) {
        json row = json::array();
        for (std::size_t c = 0; c < m.size(); ++c) row.push_back(m.at(r, c));
        rows.push_back(std::move(row));
      }
      return json{{"labels", m.labels()}, {"counts", std::move(rows)}, {"total", m.total()}}.dump(2) +
             "\n";
    }
    default:
      unsupported("transition matrix", format);
  }
}

std::string emit(const analysis::NormalizedMatrix& m, Format format) {
  auto cell = [&](std::size_t r, std::size_t c) { return fixed4(m.rows[r][c]); };
  switch (format) {
    case Format::Csv:
      return matrix_csv(m.labels, cell);
    case Format::Markdown:
      return matrix_markdown(m.labels, cell);
    case Format::Json:
      return json{{"labels", m.labels}, {"rows", m.rows}}.dump(2) + "\n";
    default:
      unsupported("normalized matrix", format);
  }
}

void write_file(const std::string& path, std::string_view bytes) {
  namespace fs = std::filesystem;
  fs::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
  }
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "write failed for '" + path + "'");
}

}  // namespace coct::report
