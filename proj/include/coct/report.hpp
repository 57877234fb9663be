#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "coct/analysis.hpp"
#include "coct/backend.hpp"
#include "coct/concepts.hpp"
#include "coct/metrics.hpp"
#include "coct/strategies.hpp"

namespace coct::report {

struct TraceSummary {
  std::string fingerprint;
  std::size_t messages = 0;
  std::string response;

  bool operator==(const TraceSummary&) const = default;
};

/// One evaluated pair: what was asked, what came back and how it parsed.
struct RunRecord {
  std::string id;
  std::string dialogue_id;
  std::size_t turn_index = 0;
  std::string strategy;
  TagStyle style;
  /// "tagged": segments are parse_tagged(response); "plain": one untagged segment.
  std::string parse_mode = "plain";
  std::string concept_set;  // id of the set used for parsing, empty if none
  std::vector<ChatMessage> history;
  std::string response;
  std::vector<Segment> segments;
  std::string reference;
  std::vector<TraceSummary> trace;
  std::size_t call_count = 0;
  bool extraction_fallback = false;
  std::vector<std::string> warnings;
  std::optional<std::string> error;
  std::optional<long long> timing_ms;

  TaggedUtterance utterance() const { return {segments, style}; }
  bool operator==(const RunRecord&) const = default;
};

nlohmann::json to_json(const RunRecord& r);
RunRecord run_record_from_json(const nlohmann::json& j);

/// Fills a record from a generation outcome. `timing` is only kept when asked,
/// so repeated runs produce identical bytes.
RunRecord make_record(std::string id, std::string dialogue_id, std::size_t turn_index,
                      const Conversation& history, std::string reference,
                      const StrategyOutcome& outcome, const std::string& concept_set,
                      bool keep_timing = false);

/// True when re-parsing the raw response under `set` yields the stored segments.
bool reproduces_segments(const RunRecord& r, const ConceptSet& set);

/// Throws Io when unreadable and Schema (with the line number) on a bad line.
std::vector<RunRecord> load_records(const std::string& path);
std::vector<RunRecord> parse_records(std::string_view content);

/// Renders chat history as "user: ...\nassistant: ..." lines.
std::string render_history(const std::vector<ChatMessage>& history);

enum class Format { Jsonl, Json, Csv, Markdown };

std::string_view to_string(Format f);
Format parse_format(std::string_view s);

std::string emit(const std::vector<RunRecord>& records, Format format);
std::string emit(const metrics::MetricReport& report, Format format,
                 std::string_view method = "run");
std::string emit(const analysis::TransitionMatrix& matrix, Format format);
std::string emit(const analysis::NormalizedMatrix& matrix, Format format);

/// Fixed 4-decimal formatting used in human-facing tables and CSV.
std::string fixed4(double v);

/// Writes bytes to `path`, creating parent directories. Throws Io.
void write_file(const std::string& path, std::string_view bytes);

}  // namespace coct::report
