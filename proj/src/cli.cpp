#include "coct/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include "coct/analysis.hpp"
#include "coct/error.hpp"
#include "coct/judge.hpp"
#include "coct/parallel.hpp"
#include "coct/report.hpp"
#include "coct/retriever.hpp"
#include "coct/text.hpp"

namespace coct::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CliExit {
  int code;
  std::string message;
};

[[noreturn]] void fail(int code, std::string message) { throw CliExit{code, std::move(message)}; }

// Runs `f`, turning library errors into an exit with `code`.
template <typename F>
auto guarded(int code, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    fail(code, e.what());
  }
}

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, std::string_view where) {
  if (!j.is_object()) throw Error(ErrorCode::Schema, std::string(where) + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw Error(ErrorCode::Schema, "unknown key '" + key + "' in " + std::string(where));
    }
  }
}

std::optional<std::string> opt_string(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<std::string>();
}

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// RunConfig

RunConfig run_config_from_json(const json& j) {
  check_keys(j,
             {"backend", "strategy", "concepts", "tag_style", "metrics", "corpus", "out", "report",
              "sampling", "target", "parallelism", "seed", "record_timing", "judge", "simulate"},
             "config");
  RunConfig c;
  try {
    if (j.contains("backend")) {
      const auto& b = j["backend"];
      check_keys(b, {"endpoint", "mock", "model", "token_budget", "timeout_s", "max_attempts", "max_in_flight"},
                 "backend");
      c.backend.endpoint = opt_string(b, "endpoint");
      c.backend.mock = opt_string(b, "mock");
      c.backend.model = b.value("model", c.backend.model);
      c.backend.token_budget = b.value("token_budget", c.backend.token_budget);
      c.backend.timeout_s = b.value("timeout_s", c.backend.timeout_s);
      c.backend.max_attempts = b.value("max_attempts", c.backend.max_attempts);
      c.backend.max_in_flight = b.value("max_in_flight", c.backend.max_in_flight);
    }
    if (j.contains("strategy")) {
      const auto& s = j["strategy"];
      check_keys(s,
                 {"kind", "temperature", "max_tokens", "tot_breadth", "tot_depth", "csim_lookahead",
                  "rag_k", "sot_max_points", "templates"},
                 "strategy");
      if (s.contains("kind")) c.strategy.kind = parse_strategy(s["kind"].get<std::string>());
      c.strategy.temperature = s.value("temperature", c.strategy.temperature);
      c.strategy.max_tokens = s.value("max_tokens", c.strategy.max_tokens);
      c.strategy.tot_breadth = s.value("tot_breadth", c.strategy.tot_breadth);
      c.strategy.tot_depth = s.value("tot_depth", c.strategy.tot_depth);
      c.strategy.csim_lookahead = s.value("csim_lookahead", c.strategy.csim_lookahead);
      c.strategy.rag_k = s.value("rag_k", c.strategy.rag_k);
      c.strategy.sot_max_points = s.value("sot_max_points", c.strategy.sot_max_points);
      c.strategy.templates = opt_string(s, "templates");
    }
    c.concepts = opt_string(j, "concepts");
    if (j.contains("tag_style")) c.tag_style = TagStyle::parse(j["tag_style"].get<std::string>());
    if (j.contains("metrics")) c.metrics = metrics::metric_config_from_json(j["metrics"]);
    c.corpus = opt_string(j, "corpus");
    c.out = opt_string(j, "out");
    c.report = opt_string(j, "report");
    c.sampling = j.value("sampling", c.sampling);
    if (j.contains("target")) c.target = corpus::parse_speaker(j["target"].get<std::string>());
    c.parallelism = j.value("parallelism", c.parallelism);
    if (j.contains("seed") && !j["seed"].is_null()) c.seed = j["seed"].get<long long>();
    c.record_timing = j.value("record_timing", c.record_timing);
    if (j.contains("judge")) {
      const auto& jj = j["judge"];
      check_keys(jj, {"debias", "model"}, "judge");
      c.judge.debias = jj.value("debias", c.judge.debias);
      c.judge.model = opt_string(jj, "model");
    }
    if (j.contains("simulate")) {
      const auto& s = j["simulate"];
      check_keys(s,
                 {"episodes", "max_rounds", "stop_markers", "topics", "persona", "user_model", "user_mock"},
                 "simulate");
      c.simulate.episodes = s.value("episodes", c.simulate.episodes);
      c.simulate.max_rounds = s.value("max_rounds", c.simulate.max_rounds);
      c.simulate.stop_markers = s.value("stop_markers", c.simulate.stop_markers);
      c.simulate.topics = s.value("topics", c.simulate.topics);
      c.simulate.persona = opt_string(s, "persona");
      c.simulate.user_model = opt_string(s, "user_model");
      c.simulate.user_mock = opt_string(s, "user_mock");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Schema, std::string("config: ") + e.what());
  }
  return c;
}

json to_json(const RunConfig& c) {
  auto opt = [](const std::optional<std::string>& s) { return s ? json(*s) : json(nullptr); };
  return {
      {"backend",
       {{"endpoint", opt(c.backend.endpoint)},
        {"mock", opt(c.backend.mock)},
        {"model", c.backend.model},
        {"token_budget", c.backend.token_budget},
        {"timeout_s", c.backend.timeout_s},
        {"max_attempts", c.backend.max_attempts},
        {"max_in_flight", c.backend.max_in_flight}}},
      {"strategy",
       {{"kind", std::string(to_string(c.strategy.kind))},
        {"temperature", c.strategy.temperature},
        {"max_tokens", c.strategy.max_tokens},
        {"tot_breadth", c.strategy.tot_breadth},
        {"tot_depth", c.strategy.tot_depth},
        {"csim_lookahead", c.strategy.csim_lookahead},
        {"rag_k", c.strategy.rag_k},
        {"sot_max_points", c.strategy.sot_max_points},
        {"templates", opt(c.strategy.templates)}}},
      {"concepts", opt(c.concepts)},
      {"tag_style", std::string(c.tag_style.name())},
      {"metrics", metrics::to_json(c.metrics)},
      {"corpus", opt(c.corpus)},
      {"out", opt(c.out)},
      {"report", opt(c.report)},
      {"sampling", c.sampling},
      {"target", std::string(corpus::to_string(c.target))},
      {"parallelism", c.parallelism},
      {"seed", c.seed ? json(*c.seed) : json(nullptr)},
      {"record_timing", c.record_timing},
      {"judge", {{"debias", c.judge.debias}, {"model", opt(c.judge.model)}}},
      {"simulate",
       {{"episodes", c.simulate.episodes},
        {"max_rounds", c.simulate.max_rounds},
        {"stop_markers", c.simulate.stop_markers},
        {"topics", c.simulate.topics},
        {"persona", opt(c.simulate.persona)},
        {"user_model", opt(c.simulate.user_model)},
        {"user_mock", opt(c.simulate.user_mock)}}},
  };
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::NotFound, "config file '" + path + "' not found");
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::Schema, "config file '" + path + "' is not valid JSON");
  return run_config_from_json(j);
}

void RunConfig::validate(bool needs_backend) const {
  auto invalid = [](const std::string& m) { throw Error(ErrorCode::InvalidArgument, m); };
  if (parallelism < 1) invalid("parallelism must be >= 1");
  if (backend.mock && backend.endpoint) {
    invalid("exactly one backend source is allowed: got both a mock script and an endpoint");
  }
  if (needs_backend && !backend.mock && !backend.endpoint && !std::getenv("COCT_ENDPOINT")) {
    invalid("no backend configured: pass --mock PATH or --backend-endpoint URL (or set COCT_ENDPOINT)");
  }
  if (backend.mock && !fs::exists(*backend.mock)) {
    throw Error(ErrorCode::NotFound, "mock script '" + *backend.mock + "' not found");
  }
  if (simulate.user_mock && !fs::exists(*simulate.user_mock)) {
    throw Error(ErrorCode::NotFound, "user mock script '" + *simulate.user_mock + "' not found");
  }
  if (strategy.templates && !fs::is_directory(*strategy.templates)) {
    throw Error(ErrorCode::NotFound, "template directory '" + *strategy.templates + "' not found");
  }
  if (backend.token_budget == 0) invalid("token_budget must be > 0");
  if (backend.max_attempts < 1 || backend.max_attempts > 5) invalid("max_attempts must be in 1..5");
  if (backend.max_in_flight < 1) invalid("max_in_flight must be >= 1");
  if (strategy.max_tokens < 1) invalid("max_tokens must be >= 1");
  if (strategy.tot_breadth < 1 || strategy.tot_depth < 1) invalid("ToT breadth and depth must be >= 1");
  if (strategy.csim_lookahead < 0) invalid("csim_lookahead must be >= 0");
  if (strategy.rag_k < 1) invalid("rag_k must be >= 1");
  if (simulate.episodes < 1) invalid("simulate.episodes must be >= 1");
  if (simulate.max_rounds < 1) invalid("simulate.max_rounds must be >= 1");
  if (simulate.stop_markers.empty()) invalid("simulate.stop_markers must be non-empty");
  corpus::Sampling::parse(sampling);
  metrics.validate();
}

GenerationParams RunConfig::generation_params() const {
  GenerationParams p;
  p.model = backend.model;
  p.temperature = strategy.temperature;
  p.max_tokens = strategy.max_tokens;
  p.seed = seed;
  p.style = tag_style;
  p.tot_breadth = strategy.tot_breadth;
  p.tot_depth = strategy.tot_depth;
  p.csim_lookahead = strategy.csim_lookahead;
  p.rag_k = strategy.rag_k;
  p.sot_max_points = strategy.sot_max_points;
  if (strategy.templates) p.templates = load_templates(*strategy.templates);
  return p;
}

BackendHandle make_backend(const RunConfig& c) {
  if (c.backend.mock) return make_mock_backend(load_mock_script(*c.backend.mock), c.backend.token_budget);
  LiveConfig live;
  live.endpoint = c.backend.endpoint.value_or("");
  live = LiveConfig::from_env(live);
  live.timeout = std::chrono::seconds(c.backend.timeout_s);
  live.retry.max_attempts = c.backend.max_attempts;
  live.max_in_flight = c.backend.max_in_flight;
  return make_live_backend(live, c.backend.token_budget);
}

// ---------------------------------------------------------------------------
// Flags

namespace {

struct SharedFlags {
  std::string config, endpoint, model, mock, strategy, concepts, tag_style, out;
  std::size_t parallelism = 0;
  long long seed = 0;
  std::map<std::string, CLI::Option*> opts;

  bool given(const std::string& name) const {
    auto it = opts.find(name);
    return it != opts.end() && it->second->count() > 0;
  }
};

void add_shared(CLI::App* cmd, SharedFlags& f) {
  f.opts["config"] = cmd->add_option("--config", f.config, "JSON config file");
  f.opts["endpoint"] =
      cmd->add_option("--backend-endpoint", f.endpoint, "OpenAI-compatible base URL, e.g. http://host/v1");
  f.opts["model"] = cmd->add_option("--model", f.model, "Model name sent to the backend");
  f.opts["mock"] = cmd->add_option("--mock", f.mock, "Mock script JSON (replaces the live backend)");
  f.opts["strategy"] = cmd->add_option("--strategy", f.strategy, "Prompting strategy");
  f.opts["concepts"] = cmd->add_option("--concepts", f.concepts, "Builtin concept set id or JSON path");
  f.opts["tag_style"] =
      cmd->add_option("--tag-style", f.tag_style, "angle|caret|hash|at|square|ampersand");
  f.opts["out"] = cmd->add_option("--out", f.out, "Output path");
  f.opts["parallelism"] = cmd->add_option("--parallelism", f.parallelism, "Worker limit (>= 1)");
  f.opts["seed"] = cmd->add_option("--seed", f.seed, "Sampling seed passed to the backend");
}

RunConfig resolve_config(const SharedFlags& f) {
  RunConfig c = f.given("config") ? guarded(kConfigError, [&] { return load_run_config(f.config); })
                                  : RunConfig{};
  guarded(kConfigError, [&] {
    if (f.given("endpoint")) c.backend.endpoint = f.endpoint;
    if (f.given("model")) c.backend.model = f.model;
    if (f.given("mock")) c.backend.mock = f.mock;
    // A flag naming one backend source replaces the other one from the config file.
    if (f.given("endpoint") && !f.given("mock")) c.backend.mock.reset();
    if (f.given("mock") && !f.given("endpoint")) c.backend.endpoint.reset();
    if (f.given("strategy")) c.strategy.kind = parse_strategy(f.strategy);
    if (f.given("concepts")) c.concepts = f.concepts;
    if (f.given("tag_style")) c.tag_style = TagStyle::parse(f.tag_style);
    if (f.given("out")) c.out = f.out;
    if (f.given("parallelism")) c.parallelism = f.parallelism;
    if (f.given("seed")) c.seed = f.seed;
    return 0;
  });
  return c;
}

// ---------------------------------------------------------------------------
// Shared helpers

ConceptSet with_known_aliases(ConceptSet set) {
  if (set.contains("Question") && set.contains("Affirmation and Reassurance")) {
    return set.with_default_aliases();
  }
  return set;
}

std::optional<ConceptSet> concepts_for(const RunConfig& c) {
  if (!c.concepts) return std::nullopt;
  return guarded(kConfigError, [&] { return with_known_aliases(resolve_concept_set(*c.concepts)); });
}

// Concept set and generation parameters for a strategy, checked up front so
// misconfiguration fails before any backend call.
struct StrategySetup {
  std::optional<ConceptSet> set;
  std::string set_ref;
  GenerationParams params;
};

StrategySetup setup_strategy(const RunConfig& c, StrategyKind kind) {
  StrategySetup s;
  s.set = concepts_for(c);
  if (kind == StrategyKind::CoCT && (!s.set || s.set->empty())) {
    fail(kConfigError, "strategy coct needs --concepts (or use coct-free)");
  }
  if (kind == StrategyKind::CoCTFree && s.set) {
    fail(kConfigError, "strategy coct-free does not take --concepts");
  }
  if (kind == StrategyKind::RAG && (!s.set || s.set->empty())) {
    fail(kConfigError, "strategy rag needs --concepts to build its retrieval index");
  }
  if (s.set) s.set_ref = *c.concepts;
  s.params = guarded(kConfigError, [&] { return c.generation_params(); });
  if (kind == StrategyKind::RAG) {
    s.params.retriever = std::make_shared<const RetrieverIndex>(RetrieverIndex::build(*s.set));
  }
  return s;
}

std::vector<report::RunRecord> read_records(const std::string& path) {
  if (!fs::exists(path)) fail(kInputError, "records file '" + path + "' not found");
  return guarded(kInputError, [&] { return report::load_records(path); });
}

void emit_or_print(const std::optional<std::string>& path, std::string_view bytes, std::ostream& out) {
  if (path) {
    guarded(kFailure, [&] {
      report::write_file(*path, bytes);
      return 0;
    });
  } else {
    out << bytes;
  }
}

std::size_t workers_for(const RunConfig& c, const BackendHandle& backend) {
  return std::max<std::size_t>(1, std::min(c.parallelism, backend.max_in_flight()));
}

// ---------------------------------------------------------------------------
// Commands

int cmd_run(RunConfig cfg, const std::optional<std::string>& corpus_arg, const std::string& sampling_arg,
            bool record_timing, Terminal& term) {
  if (corpus_arg) cfg.corpus = corpus_arg;
  if (!sampling_arg.empty()) cfg.sampling = sampling_arg;
  if (record_timing) cfg.record_timing = true;
  guarded(kConfigError, [&] {
    cfg.validate(true);
    return 0;
  });
  if (!cfg.corpus) fail(kConfigError, "no corpus given: pass a corpus path or set \"corpus\" in the config");
  const auto kind = cfg.strategy.kind;
  auto setup = setup_strategy(cfg, kind);

  if (!fs::exists(*cfg.corpus)) fail(kInputError, "corpus '" + *cfg.corpus + "' not found");
  auto loaded = guarded(kInputError, [&] {
    try {
      return corpus::load_jsonl(*cfg.corpus);
    } catch (const Error& e) {
      throw Error(e.code(), "corpus '" + *cfg.corpus + "': " + e.what());
    }
  });
  for (const auto& le : loaded.errors) {
    term.err << "warning: " << *cfg.corpus << ":" << le.line << ": " << le.message << "\n";
  }
  auto pairs = corpus::extract_pairs(loaded.dialogues, cfg.target, corpus::Sampling::parse(cfg.sampling));
  if (pairs.empty()) fail(kInputError, "corpus '" + *cfg.corpus + "' yields no evaluation pairs");

  auto backend = guarded(kConfigError, [&] { return make_backend(cfg); });
  const std::optional<ConceptSet> gen_set = kind == StrategyKind::CoCTFree ? std::nullopt : setup.set;

  std::vector<report::RunRecord> records(pairs.size());
  std::atomic<std::size_t> failures{0};
  parallel_for(pairs.size(), workers_for(cfg, backend), [&](std::size_t i) {
    const auto& p = pairs[i];
    auto history = corpus::to_conversation(p.history, cfg.target);
    try {
      auto outcome = generate(kind, history, gen_set, backend, setup.params);
      records[i] = report::make_record(p.example_id(), p.dialogue_id, p.turn_index, history, p.reference,
                                       outcome, setup.set_ref, cfg.record_timing);
    } catch (const Error& e) {
      report::RunRecord r;
      r.id = p.example_id();
      r.dialogue_id = p.dialogue_id;
      r.turn_index = p.turn_index;
      r.strategy = std::string(to_string(kind));
      r.style = cfg.tag_style;
      r.parse_mode =
          (kind == StrategyKind::CoCT || kind == StrategyKind::CoCTFree) ? "tagged" : "plain";
      r.concept_set = setup.set_ref;
      r.history = history;
      r.reference = p.reference;
      if (const auto* ge = dynamic_cast<const GenerationError*>(&e)) {
        for (const auto& t : ge->trace()) {
          r.trace.push_back({fingerprint(t.request), t.request.messages.size(), t.response});
        }
      }
      r.call_count = r.trace.size();
      r.error = std::string(to_string(e.code())) + ": " + e.what();
      records[i] = std::move(r);
      ++failures;
    }
  });

  emit_or_print(cfg.out, report::emit(records, report::Format::Jsonl), term.out);
  std::size_t calls = 0;
  for (const auto& r : records) calls += r.call_count;
  auto& summary = cfg.out ? term.out : term.err;
  summary << "examples: " << records.size() << "  calls: " << calls << "  failures: " << failures.load()
          << "\n";
  if (failures * 2 > records.size()) {
    fail(kTooManyFailures, std::to_string(failures.load()) + " of " + std::to_string(records.size()) +
                               " generations failed");
  }
  return kOk;
}

int cmd_eval(RunConfig cfg, const std::string& records_path, const std::string& format,
             const std::string& label, Terminal& term) {
  guarded(kConfigError, [&] {
    cfg.validate(false);
    return 0;
  });
  auto fmt = guarded(kConfigError, [&] { return report::parse_format(format); });
  if (fmt == report::Format::Jsonl) fail(kConfigError, "eval output cannot be jsonl");
  auto records = read_records(records_path);
  if (records.empty()) fail(kInputError, "records file '" + records_path + "' is empty");

  std::vector<TaggedUtterance> outputs;
  std::vector<std::string> references;
  std::size_t skipped = 0;
  for (const auto& r : records) {
    if (r.error) {
      ++skipped;
      continue;
    }
    outputs.push_back(r.utterance());
    references.push_back(r.reference);
  }
  if (skipped) term.err << "warning: skipped " << skipped << " errored record(s)\n";
  if (outputs.empty()) fail(kInputError, "records file '" + records_path + "' has no successful generations");

  auto rep = guarded(kFailure, [&] { return metrics::evaluate_run(outputs, references, cfg.metrics); });
  const std::string method = label.empty() ? records.front().strategy : label;
  term.out << report::emit(rep, fmt, method);
  auto json_path = cfg.out ? cfg.out : cfg.report;
  if (json_path) {
    guarded(kFailure, [&] {
      report::write_file(*json_path, report::emit(rep, report::Format::Json, method));
      return 0;
    });
  }
  return kOk;
}

std::string judged_text(const report::RunRecord& r) {
  if (r.error) return {};
  if (r.segments.empty()) return r.response;
  return strip_tags(r.utterance());
}

int cmd_judge(RunConfig cfg, const std::string& path_a, const std::string& path_b, bool no_debias,
              Terminal& term) {
  if (no_debias) cfg.judge.debias = false;
  guarded(kConfigError, [&] {
    cfg.validate(true);
    return 0;
  });
  auto a = read_records(path_a);
  auto b = read_records(path_b);
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < std::max(a.size(), b.size()); ++i) {
    if (i >= n || a[i].id != b[i].id) {
      const std::string ia = i < a.size() ? a[i].id : "<missing>";
      const std::string ib = i < b.size() ? b[i].id : "<missing>";
      fail(kConfigError, "example ids diverge at position " + std::to_string(i) + ": '" + ia + "' vs '" +
                             ib + "'");
    }
  }
  if (n == 0) fail(kInputError, "record files are empty");
  auto backend = guarded(kConfigError, [&] { return make_backend(cfg); });

  std::vector<judge::JudgePair> pairs;
  pairs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    pairs.push_back({report::render_history(a[i].history), judged_text(a[i]), judged_text(b[i])});
  }
  judge::JudgeOptions opts;
  opts.debias = cfg.judge.debias;
  opts.model = cfg.judge.model.value_or(cfg.backend.model);
  opts.max_tokens = cfg.strategy.max_tokens;
  opts.parallelism = workers_for(cfg, backend);
  auto result = judge::run_pairwise(pairs, backend, opts);

  json j = judge::to_json(result);
  j["records_a"] = path_a;
  j["records_b"] = path_b;
  j["debias"] = opts.debias;
  json ids = json::array();
  for (std::size_t i = 0; i < n; ++i) ids.push_back(a[i].id);
  j["example_ids"] = std::move(ids);
  emit_or_print(cfg.out, j.dump(2) + "\n", term.out);
  auto& summary = cfg.out ? term.out : term.err;
  summary << "win " << fixed2(100 * result.win_rate) << "%  tie " << fixed2(100 * result.tie_rate)
          << "%  lose " << fixed2(100 * result.lose_rate) << "%  (invalid " << result.invalid << " of " << n
          << ")\n";
  return kOk;
}

int cmd_analyze(RunConfig cfg, const std::string& records_path, Terminal& term) {
  guarded(kConfigError, [&] {
    cfg.validate(false);
    return 0;
  });
  auto records = read_records(records_path);

  ConceptSet set("observed", {}, SetMode::Open);
  if (cfg.concepts) {
    set = *concepts_for(cfg);
  } else {
    for (const auto& r : records) {
      if (r.concept_set.empty()) continue;
      try {
        set = with_known_aliases(resolve_concept_set(r.concept_set));
      } catch (const Error& e) {
        term.err << "warning: cannot resolve concept set '" << r.concept_set << "': " << e.what() << "\n";
      }
      break;
    }
  }

  std::vector<TaggedUtterance> utterances;
  std::vector<std::string> order;  // dialogue ids, first-seen
  std::map<std::string, std::vector<std::pair<std::size_t, TaggedUtterance>>> by_dialogue;
  for (const auto& r : records) {
    if (r.error || r.parse_mode != "tagged") continue;
    utterances.push_back(r.utterance());
    auto [it, inserted] = by_dialogue.try_emplace(r.dialogue_id);
    if (inserted) order.push_back(r.dialogue_id);
    it->second.emplace_back(r.turn_index, r.utterance());
  }
  std::vector<std::vector<TaggedUtterance>> conversations;
  for (const auto& id : order) {
    auto turns = by_dialogue[id];
    std::stable_sort(turns.begin(), turns.end(),
                     [](const auto& x, const auto& y) { return x.first < y.first; });
    std::vector<TaggedUtterance> conv;
    for (auto& [_, u] : turns) conv.push_back(std::move(u));
    conversations.push_back(std::move(conv));
  }

  auto inner = analysis::inner_transitions(utterances, set);
  auto outer = analysis::outer_transitions(conversations, set);
  const bool staged = analysis::has_stages(set);
  if (staged) {
    inner = inner.reordered(analysis::StageOrdering::from_set(set, inner.labels()).order());
    outer = outer.reordered(analysis::StageOrdering::from_set(set, outer.labels()).order());
  }

  std::ostringstream summary;
  summary << "tagged utterances: " << utterances.size() << "\n";
  summary << "inner transitions: " << inner.total() << "\n";
  summary << "outer transitions: " << outer.total() << "\n";
  json summary_json = {{"tagged_utterances", utterances.size()},
                       {"inner_transitions", inner.total()},
                       {"outer_transitions", outer.total()},
                       {"concept_set", set.id()}};
  if (staged) {
    auto mass = [&](const analysis::TransitionMatrix& m, const char* name) {
      if (m.total() == 0) {
        summary << "upper-triangle mass (" << name << "): n/a (no transitions)\n";
        summary_json[std::string("upper_triangle_mass_") + name] = nullptr;
        return;
      }
      double v = analysis::upper_triangle_mass(m, analysis::StageOrdering(m.labels()));
      summary << "upper-triangle mass (" << name << "): " << report::fixed4(v) << "\n";
      summary_json[std::string("upper_triangle_mass_") + name] = v;
    };
    mass(inner, "inner");
    mass(outer, "outer");
  }

  if (cfg.out) {
    const fs::path dir(*cfg.out);
    guarded(kFailure, [&] {
      report::write_file((dir / "inner.csv").string(), report::emit(inner, report::Format::Csv));
      report::write_file((dir / "outer.csv").string(), report::emit(outer, report::Format::Csv));
      report::write_file((dir / "inner_normalized.csv").string(),
                         report::emit(analysis::normalize(inner), report::Format::Csv));
      report::write_file((dir / "outer_normalized.csv").string(),
                         report::emit(analysis::normalize(outer), report::Format::Csv));
      report::write_file((dir / "summary.json").string(), summary_json.dump(2) + "\n");
      return 0;
    });
    term.out << summary.str();
  } else {
    term.out << summary.str();
    term.out << "\ninner (counts)\n" << report::emit(inner, report::Format::Markdown);
    term.out << "\ninner (row-normalized)\n"
             << report::emit(analysis::normalize(inner), report::Format::Markdown);
    term.out << "\nouter (counts)\n" << report::emit(outer, report::Format::Markdown);
    term.out << "\nouter (row-normalized)\n"
             << report::emit(analysis::normalize(outer), report::Format::Markdown);
  }
  return kOk;
}

// One entry per non-blank line; lines starting with '#' are comments.
std::vector<std::string> read_topics_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(kInputError, "topics file '" + path + "' not found");
  std::vector<std::string> topics;
  std::string line;
  while (std::getline(in, line)) {
    auto t = text::trim(line);
    if (!t.empty() && t.front() != '#') topics.emplace_back(t);
  }
  if (topics.empty()) fail(kInputError, "topics file '" + path + "' has no topics");
  return topics;
}

int cmd_simulate(RunConfig cfg, std::optional<std::size_t> episodes, std::optional<std::size_t> max_rounds,
                 const std::vector<std::string>& topics, const std::optional<std::string>& user_mock,
                 Terminal& term) {
  if (episodes) cfg.simulate.episodes = *episodes;
  if (max_rounds) cfg.simulate.max_rounds = *max_rounds;
  if (!topics.empty()) cfg.simulate.topics = topics;
  if (user_mock) cfg.simulate.user_mock = user_mock;
  guarded(kConfigError, [&] {
    cfg.validate(true);
    return 0;
  });
  const auto kind = cfg.strategy.kind;
  auto setup = setup_strategy(cfg, kind);
  auto agent = guarded(kConfigError, [&] { return make_backend(cfg); });
  auto user = cfg.simulate.user_mock
                  ? guarded(kConfigError,
                            [&] {
                              return make_mock_backend(load_mock_script(*cfg.simulate.user_mock),
                                                       cfg.backend.token_budget);
                            })
                  : agent;
  const std::optional<ConceptSet> gen_set = kind == StrategyKind::CoCTFree ? std::nullopt : setup.set;

  corpus::SimConfig base;
  base.max_rounds = cfg.simulate.max_rounds;
  base.stop_markers = cfg.simulate.stop_markers;
  if (cfg.simulate.persona) base.user_persona = *cfg.simulate.persona;
  base.agent_strategy = kind;
  base.user_model = cfg.simulate.user_model.value_or(cfg.backend.model);
  base.agent_params = setup.params;
  guarded(kConfigError, [&] {
    base.validate();
    return 0;
  });

  const std::size_t n = cfg.simulate.episodes;
  std::vector<corpus::SimRecord> sims(n);
  parallel_for(n, workers_for(cfg, agent), [&](std::size_t i) {
    auto sc = base;
    if (!cfg.simulate.topics.empty()) sc.topic = cfg.simulate.topics[i % cfg.simulate.topics.size()];
    sims[i] = corpus::simulate(sc, agent, user, gen_set, "sim-" + std::to_string(i));
  });

  std::string bytes;
  std::size_t ok = 0;
  double rounds = 0, avg_len = 0;
  for (const auto& s : sims) {
    bytes += corpus::to_json(s).dump() + "\n";
    if (s.error) continue;
    ++ok;
    rounds += static_cast<double>(s.rounds);
    avg_len += s.avg_len;
  }
  emit_or_print(cfg.out, bytes, term.out);
  auto& summary = cfg.out ? term.out : term.err;
  summary << "episodes: " << n << "  errors: " << (n - ok) << "\n";
  if (ok == 0) fail(kTooManyFailures, "all " + std::to_string(n) + " episodes failed");
  summary << "| Method | AvgLen | Rounds |\n|---|---:|---:|\n| " << to_string(kind) << " | "
          << fixed2(avg_len / static_cast<double>(ok)) << " | " << fixed2(rounds / static_cast<double>(ok))
          << " |\n";
  return kOk;
}

void show_utterance(const TaggedUtterance& u, const TagStyle& style, Terminal& term) {
  for (const auto& s : u.segments) {
    term.out << "  ";
    if (s.label) {
      if (term.color) term.out << "\x1b[1;36m";
      term.out << style.wrap(*s.label);
      if (term.color) term.out << "\x1b[0m";
      term.out << " ";
    }
    term.out << s.text << "\n";
  }
}

int cmd_chat(RunConfig cfg, Terminal& term) {
  guarded(kConfigError, [&] {
    cfg.validate(true);
    return 0;
  });
  auto kind = cfg.strategy.kind;
  auto setup = setup_strategy(cfg, kind);
  auto backend = guarded(kConfigError, [&] { return make_backend(cfg); });
  const std::string path = cfg.out.value_or("coct_chat.jsonl");

  corpus::Dialogue transcript;
  transcript.id = "chat-1";
  term.out << "strategy: " << to_string(kind) << "  concepts: " << (setup.set ? setup.set->id() : "none")
           << "\ncommands: /strategy <kind>, /concepts [id|path], /quit\n";

  std::string line;
  while (true) {
    term.out << "> " << std::flush;
    if (!std::getline(term.in, line)) break;
    auto input = std::string(text::trim(line));
    if (input.empty()) continue;

    if (input.front() == '/') {
      auto words = text::split_ws(input);
      const auto& cmd = words.front();
      if (cmd == "/quit" || cmd == "/exit") break;
      if (cmd == "/strategy") {
        if (words.size() != 2) {
          term.out << "! usage: /strategy <kind>\n";
          continue;
        }
        try {
          kind = parse_strategy(words[1]);
          if (kind == StrategyKind::RAG && setup.set && !setup.params.retriever) {
            setup.params.retriever = std::make_shared<const RetrieverIndex>(RetrieverIndex::build(*setup.set));
          }
          term.out << "strategy: " << to_string(kind) << "\n";
        } catch (const Error& e) {
          term.out << "! " << e.what() << "\n";
        }
        continue;
      }
      if (cmd == "/concepts") {
        if (words.size() > 1) {
          auto ref = std::string(text::trim(input.substr(cmd.size())));
          try {
            setup.set = with_known_aliases(resolve_concept_set(ref));
            setup.set_ref = ref;
            setup.params.retriever = std::make_shared<const RetrieverIndex>(RetrieverIndex::build(*setup.set));
          } catch (const Error& e) {
            term.out << "! " << e.what() << "\n";
            continue;
          }
        }
        if (!setup.set) {
          term.out << "no concept set loaded\n";
        } else {
          term.out << setup.set->id() << ":";
          for (const auto& c : setup.set->concepts()) term.out << " " << cfg.tag_style.wrap(c.name);
          term.out << "\n";
        }
        continue;
      }
      term.out << "! unknown command " << cmd << "\n";
      continue;
    }

    Conversation history;
    for (const auto& t : transcript.turns) {
      history.push_back({t.speaker == corpus::Speaker::Seeker ? Role::User : Role::Assistant, t.text});
    }
    history.push_back({Role::User, input});
    std::optional<ConceptSet> gen_set = kind == StrategyKind::CoCTFree ? std::nullopt : setup.set;
    try {
      auto outcome = generate(kind, history, gen_set, backend, setup.params);
      show_utterance(outcome.final, cfg.tag_style, term);
      auto agent_text = render(outcome.final, cfg.tag_style);
      if (text::trim(agent_text).empty()) agent_text = outcome.trace.back().response;
      transcript.turns.push_back({corpus::Speaker::Seeker, input, {}, {}});
      transcript.turns.push_back({corpus::Speaker::Supporter, std::move(agent_text), {}, {}});
    } catch (const Error& e) {
      term.out << "! " << to_string(e.code()) << ": " << e.what() << "\n";
    }
  }

  std::string bytes = transcript.turns.empty() ? std::string() : corpus::to_jsonl({transcript});
  guarded(kFailure, [&] {
    report::write_file(path, bytes);
    return 0;
  });
  term.out << "\ntranscript saved to " << path << " (" << transcript.turns.size() << " turns)\n";
  return kOk;
}

int cmd_concepts_list(const std::optional<std::string>& target, Terminal& term) {
  if (!target) {
    for (const auto& id : builtin_set_ids()) {
      auto set = builtin_set(id);
      term.out << id << "\t" << set.size() << " concepts\t" << to_string(set.concepts().front().kind)
               << (analysis::has_stages(set) ? "\tstaged" : "") << "\n";
    }
    return kOk;
  }
  auto set = guarded(kConfigError, [&] { return resolve_concept_set(*target); });
  term.out << set.id() << " (" << (set.mode() == SetMode::Closed ? "closed" : "open") << ", " << set.size()
           << " concepts)\n";
  for (const auto& c : set.concepts()) {
    term.out << "  " << c.name;
    if (c.stage) term.out << " [" << to_string(*c.stage) << "]";
    if (c.description) term.out << ": " << *c.description;
    term.out << "\n";
  }
  return kOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, Terminal& term) {
  CLI::App app{"Concept-tagged dialogue generation, evaluation and analysis", "coct"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "coct 0.1.0");

  SharedFlags f_run, f_eval, f_judge, f_analyze, f_sim, f_chat;

  auto* run = app.add_subcommand("run", "Generate responses for every evaluation pair of a corpus");
  add_shared(run, f_run);
  std::string run_corpus, run_sampling;
  bool run_timing = false;
  auto* run_corpus_opt = run->add_option("corpus", run_corpus, "Corpus JSONL");
  run->add_option("--sampling", run_sampling, "all | last-only | every-<k>");
  run->add_flag("--record-timing", run_timing, "Store wall-clock timing in records");

  auto* eval = app.add_subcommand("eval", "Score run records against their references");
  add_shared(eval, f_eval);
  std::string eval_records, eval_format = "markdown-table", eval_label;
  eval->add_option("records", eval_records, "Run records JSONL")->required();
  eval->add_option("--format", eval_format, "markdown-table | csv | json (stdout)");
  eval->add_option("--label", eval_label, "Method name for the table row");

  auto* jdg = app.add_subcommand("judge", "Pairwise comparison of two run record files");
  add_shared(jdg, f_judge);
  std::string judge_a, judge_b;
  bool judge_no_debias = false;
  jdg->add_option("records_a", judge_a, "Records for system A")->required();
  jdg->add_option("records_b", judge_b, "Records for system B")->required();
  jdg->add_flag("--no-debias", judge_no_debias, "Judge each pair in one order only");

  auto* analyze = app.add_subcommand("analyze", "Concept transition matrices of run records");
  add_shared(analyze, f_analyze);
  std::string analyze_records;
  analyze->add_option("records", analyze_records, "Run records JSONL")->required();

  auto* sim = app.add_subcommand("simulate", "Simulated-user conversations");
  add_shared(sim, f_sim);
  std::size_t sim_episodes = 0, sim_rounds = 0;
  std::vector<std::string> sim_topics;
  std::string sim_user_mock, sim_topics_file;
  auto* sim_episodes_opt = sim->add_option("--episodes", sim_episodes, "Number of episodes");
  auto* sim_rounds_opt = sim->add_option("--max-rounds", sim_rounds, "Round cap per episode");
  sim->add_option("--topic", sim_topics, "Conversation topic (repeatable, cycled)");
  sim->add_option("--topics-file", sim_topics_file, "File with one topic or seed query per line");
  auto* sim_user_opt = sim->add_option("--user-mock", sim_user_mock, "Mock script for the simulated user");

  auto* chat = app.add_subcommand("chat", "Interactive terminal chat");
  add_shared(chat, f_chat);

  auto* concepts = app.add_subcommand("concepts", "Concept set utilities");
  concepts->require_subcommand(1);
  auto* list = concepts->add_subcommand("list", "List builtin sets, or the members of one set");
  std::string list_target;
  auto* list_target_opt = list->add_option("set", list_target, "Builtin id or JSON path");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, term.out, term.err);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) {
      auto cfg = resolve_config(f_run);
      std::optional<std::string> corpus_arg;
      if (run_corpus_opt->count()) corpus_arg = run_corpus;
      return cmd_run(std::move(cfg), corpus_arg, run_sampling, run_timing, term);
    }
    if (*eval) return cmd_eval(resolve_config(f_eval), eval_records, eval_format, eval_label, term);
    if (*jdg) return cmd_judge(resolve_config(f_judge), judge_a, judge_b, judge_no_debias, term);
    if (*analyze) return cmd_analyze(resolve_config(f_analyze), analyze_records, term);
    if (*sim) {
      std::optional<std::size_t> episodes, rounds;
      std::optional<std::string> user_mock;
      if (sim_episodes_opt->count()) episodes = sim_episodes;
      if (sim_rounds_opt->count()) rounds = sim_rounds;
      if (sim_user_opt->count()) user_mock = sim_user_mock;
      if (!sim_topics_file.empty()) {
        auto more = read_topics_file(sim_topics_file);
        sim_topics.insert(sim_topics.end(), more.begin(), more.end());
      }
      return cmd_simulate(resolve_config(f_sim), episodes, rounds, sim_topics, user_mock, term);
    }
    if (*chat) return cmd_chat(resolve_config(f_chat), term);
    if (*list) {
      std::optional<std::string> target;
      if (list_target_opt->count()) target = list_target;
      return cmd_concepts_list(target, term);
    }
  } catch (const CliExit& e) {
    term.err << "coct: " << e.message << "\n";
    return e.code;
  } catch (const Error& e) {
    term.err << "coct: " << to_string(e.code()) << ": " << e.what() << "\n";
    return kFailure;
  } catch (const std::exception& e) {
    term.err << "coct: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}

}  // namespace coct::cli
