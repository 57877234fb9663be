#include "coct/strategies.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>

#include "coct/parallel.hpp"
#include "coct/text.hpp"

namespace coct {

std::string_view to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::Direct: return "direct";
    case StrategyKind::DirectRefine: return "direct-refine";
    case StrategyKind::SelfRefine: return "self-refine";
    case StrategyKind::ECoT: return "ecot";
    case StrategyKind::SoT: return "sot";
    case StrategyKind::ToT: return "tot";
    case StrategyKind::PlanAndSolve: return "plan-and-solve";
    case StrategyKind::RAG: return "rag";
    case StrategyKind::CSIM: return "csim";
    case StrategyKind::CoCT: return "coct";
    case StrategyKind::CoCTFree: return "coct-free";
  }
  return "direct";
}

const std::vector<StrategyKind>& all_strategies() {
  static const std::vector<StrategyKind> kinds = {
      StrategyKind::Direct, StrategyKind::DirectRefine, StrategyKind::SelfRefine,
      StrategyKind::ECoT,   StrategyKind::SoT,          StrategyKind::ToT,
      StrategyKind::PlanAndSolve, StrategyKind::RAG,    StrategyKind::CSIM,
      StrategyKind::CoCT,   StrategyKind::CoCTFree};
  return kinds;
}

StrategyKind parse_strategy(std::string_view s) {
  std::string key;
  for (char c : text::to_lower(text::trim(s))) {
    if (c != '-' && c != '_' && c != ' ') key += c;
  }
  for (auto kind : all_strategies()) {
    std::string name;
    for (char c : to_string(kind)) {
      if (c != '-') name += c;
    }
    if (name == key) return kind;
  }
  throw Error(ErrorCode::InvalidArgument,
              "unknown strategy '" + std::string(s) +
                  "' (expected direct, direct-refine, self-refine, ecot, sot, tot, "
                  "plan-and-solve, rag, csim, coct, coct-free)");
}

// ---------------------------------------------------------------------------
// Templates

PromptTemplates PromptTemplates::defaults() {
  PromptTemplates t;
  t.coct_concept_line = "'{possible_concepts}',";
  t.coct_system =
      "{concept_line}"
      "At the beginning of each generated response, use tags such as {tag_open}XX{tag_close} "
      "to denote different concepts, then follow the sentence content.\n"
      "Use chain of concepts to denote the concept transitions.";
  t.base_system =
      "You are a supportive conversational partner. Reply to the user's last message.";
  t.direct_refine_system =
      "You are a supportive conversational partner. Reply to the user's last message.\n"
      "First write a draft reply on a line starting with \"Draft:\". Then revise the draft so "
      "that it offers better emotional support, and write the final reply on a line starting "
      "with \"Revised:\".";
  t.direct_refine_marker = "Revised:";
  t.self_refine_feedback =
      "Here is a draft reply to my last message:\n{draft}\n\n"
      "Give brief feedback on how well this draft supports me emotionally and how it could "
      "be improved. Output only the feedback.";
  t.self_refine_refine =
      "Draft reply:\n{draft}\n\nFeedback:\n{feedback}\n\n"
      "Rewrite the reply to my last message using the feedback. Output only the reply.";
  t.ecot_system =
      "You are a supportive conversational partner. Before replying to the user's last "
      "message, identify the user's emotion, then choose a support strategy guided by that "
      "emotion, then write the reply. Use exactly this format:\n"
      "Emotion: <the user's emotion>\n"
      "Strategy: <the support strategy>\n"
      "Response: <your reply>";
  t.sot_skeleton =
      "Write the skeleton of your reply to my last message as a numbered list of 2 to 4 "
      "short points (3 to 5 words each). Output only the skeleton.";
  t.sot_expand =
      "Skeleton of the reply:\n{skeleton}\n\n"
      "Expand point {index} (\"{point}\") into one or two sentences of the reply. Output only "
      "those sentences.";
  t.tot_propose =
      "Propose candidate reply {index} of {breadth} to my last message. Output only the reply.";
  t.tot_improve =
      "Current best reply:\n{partial}\n\n"
      "Propose improved candidate reply {index} of {breadth} that builds on it. Output only "
      "the reply.";
  t.tot_score =
      "Candidate reply:\n{candidate}\n\n"
      "Rate how well this reply answers and supports me on a scale from 1 to 10. Output only "
      "the number.";
  t.plan_request =
      "Before replying to my last message, write a detailed plan listing the sub-goals and "
      "conversational strategies your reply should follow. Output only the plan.";
  t.plan_execute =
      "Plan:\n{plan}\n\n"
      "Carry out the plan step by step and write your reply to my last message. Output only "
      "the reply.";
  t.rag_system =
      "You are a supportive conversational partner. Reply to the user's last message.\n"
      "Candidate strategies retrieved for this conversation:\n{retrieved}\n"
      "Choose the most appropriate strategy and follow it in your reply.";
  t.csim_user_turn =
      "Now play the user. Write the user's most likely next message in reply to the "
      "assistant's last message. Output only that message.";
  t.csim_final_system =
      "You are a supportive conversational partner. Reply to the user's last message.\n"
      "You privately simulated how the conversation might continue:\n{simulation}\n"
      "Use this foresight to write a better reply. Do not mention the simulation.";
  return t;
}

namespace {

std::vector<std::string PromptTemplates::*> field_pointers() {
  return {&PromptTemplates::coct_system,         &PromptTemplates::coct_concept_line,
          &PromptTemplates::base_system,         &PromptTemplates::direct_refine_system,
          &PromptTemplates::direct_refine_marker, &PromptTemplates::self_refine_feedback,
          &PromptTemplates::self_refine_refine,  &PromptTemplates::ecot_system,
          &PromptTemplates::sot_skeleton,        &PromptTemplates::sot_expand,
          &PromptTemplates::tot_propose,         &PromptTemplates::tot_improve,
          &PromptTemplates::tot_score,           &PromptTemplates::plan_request,
          &PromptTemplates::plan_execute,        &PromptTemplates::rag_system,
          &PromptTemplates::csim_user_turn,      &PromptTemplates::csim_final_system};
}

}  // namespace

const std::vector<std::string>& PromptTemplates::field_names() {
  static const std::vector<std::string> names = {
      "coct_system",    "coct_concept_line", "base_system",        "direct_refine_system",
      "direct_refine_marker", "self_refine_feedback", "self_refine_refine", "ecot_system",
      "sot_skeleton",   "sot_expand",        "tot_propose",        "tot_improve",
      "tot_score",      "plan_request",      "plan_execute",       "rag_system",
      "csim_user_turn", "csim_final_system"};
  return names;
}

PromptTemplates load_templates(const std::string& directory, PromptTemplates base) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(directory)) {
    throw Error(ErrorCode::Io, "template directory '" + directory + "' does not exist");
  }
  const auto& names = PromptTemplates::field_names();
  const auto members = field_pointers();
  for (std::size_t i = 0; i < names.size(); ++i) {
    fs::path p = fs::path(directory) / (names[i] + ".txt");
    if (!fs::exists(p)) continue;
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    std::string content = ss.str();
    // A single trailing newline is an editor artifact, not template text.
    if (!content.empty() && content.back() == '\n') content.pop_back();
    base.*members[i] = std::move(content);
  }
  return base;
}

// ---------------------------------------------------------------------------

std::string build_coct_prompt(const ConceptSet& set, const TagStyle& style,
                              const PromptTemplates& templates) {
  std::string concept_line;
  if (!set.empty()) {
    std::vector<std::string> names;
    for (const auto& c : set.concepts()) names.push_back(c.name);
    concept_line = text::replace_all(templates.coct_concept_line, "{possible_concepts}",
                                     text::join(names, ", ")) +
                   "\n";
  }
  std::string out = text::replace_all(templates.coct_system, "{concept_line}", concept_line);
  out = text::replace_all(out, "{tag_open}", std::string(1, style.open));
  out = text::replace_all(out, "{tag_close}", std::string(1, style.close));
  return out;
}

std::size_t expected_calls(StrategyKind kind, const GenerationParams& p) {
  switch (kind) {
    case StrategyKind::Direct:
    case StrategyKind::DirectRefine:
    case StrategyKind::ECoT:
    case StrategyKind::RAG:
    case StrategyKind::CoCT:
    case StrategyKind::CoCTFree:
      return 1;
    case StrategyKind::SelfRefine: return 3;
    case StrategyKind::PlanAndSolve: return 2;
    case StrategyKind::SoT: return 1 + p.sot_max_points;
    case StrategyKind::ToT: return 2 * static_cast<std::size_t>(p.tot_breadth * p.tot_depth);
    case StrategyKind::CSIM: return 2 * static_cast<std::size_t>(p.csim_lookahead) + 1;
  }
  return 1;
}

std::vector<std::string> parse_skeleton(std::string_view input) {
  std::vector<std::string> points;
  std::istringstream in{std::string(input)};
  std::string line;
  while (std::getline(in, line)) {
    auto t = text::trim(line);
    std::size_t i = 0;
    while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) ++i;
    if (i == 0 || i >= t.size() || (t[i] != '.' && t[i] != ')')) continue;
    auto point = text::trim(t.substr(i + 1));
    if (!point.empty()) points.emplace_back(point);
  }
  return points;
}

std::optional<std::string> extract_after_marker(std::string_view input, std::string_view marker) {
  auto lower = text::to_lower(input);
  auto pos = lower.rfind(text::to_lower(marker));
  if (pos == std::string::npos) return std::nullopt;
  auto rest = text::trim(input.substr(pos + marker.size()));
  if (rest.empty()) return std::nullopt;
  return std::string(rest);
}

int parse_rating(std::string_view input) {
  for (std::size_t i = 0; i < input.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(input[i]))) continue;
    long value = 0;
    while (i < input.size() && std::isdigit(static_cast<unsigned char>(input[i])) && value < 1000) {
      value = value * 10 + (input[i] - '0');
      ++i;
    }
    return static_cast<int>(std::clamp<long>(value, 1, 10));
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Generation

namespace {

std::string fill(std::string tmpl, std::initializer_list<std::pair<std::string_view, std::string>> slots) {
  for (const auto& [name, value] : slots) {
    tmpl = text::replace_all(std::move(tmpl), "{" + std::string(name) + "}", value);
  }
  return tmpl;
}

class Runner {
 public:
  Runner(const BackendHandle& backend, const GenerationParams& params,
         std::vector<ChatMessage> context)
      : backend_(backend), params_(params), context_(std::move(context)) {}

  /// [system] + truncated history + extras.
  ChatRequest request(const std::string& system, const std::vector<ChatMessage>& extras = {}) const {
    ChatRequest r;
    r.model = params_.model;
    r.temperature = params_.temperature;
    r.max_tokens = params_.max_tokens;
    r.seed = params_.seed;
    if (!system.empty()) r.messages.push_back({Role::System, system});
    r.messages.insert(r.messages.end(), context_.begin(), context_.end());
    r.messages.insert(r.messages.end(), extras.begin(), extras.end());
    return r;
  }

  std::string call(ChatRequest r) {
    std::string response = invoke(r);
    std::lock_guard lock(mu_);
    trace_.push_back({std::move(r), response});
    return response;
  }

  /// Calls without recording, for fan-out whose trace order is fixed later.
  std::string invoke(const ChatRequest& r) const {
    try {
      return backend_.complete(r).content;
    } catch (const Error& e) {
      throw GenerationError(e.code(), e.what(), snapshot());
    }
  }

  void record(ChatRequest r, std::string response) {
    std::lock_guard lock(mu_);
    trace_.push_back({std::move(r), std::move(response)});
  }

  std::vector<TraceEntry> snapshot() const {
    std::lock_guard lock(mu_);
    return trace_;
  }

  std::vector<TraceEntry> take() {
    std::lock_guard lock(mu_);
    return std::move(trace_);
  }

 private:
  const BackendHandle& backend_;
  const GenerationParams& params_;
  std::vector<ChatMessage> context_;
  mutable std::mutex mu_;
  std::vector<TraceEntry> trace_;
};

std::size_t history_budget(const BackendHandle& backend, const GenerationParams& p) {
  const std::size_t reserve = static_cast<std::size_t>(std::max(p.max_tokens, 0)) + p.prompt_reserve;
  if (backend.token_budget > reserve + 64) return backend.token_budget - reserve;
  return std::max<std::size_t>(backend.token_budget / 2, 1);
}

void check_preconditions(StrategyKind kind, const Conversation& history,
                         const std::optional<ConceptSet>& set, const GenerationParams& p) {
  if (history.empty() || history.back().role != Role::User) {
    throw Error(ErrorCode::InvalidArgument, "history must end with a user turn");
  }
  for (const auto& m : history) {
    if (m.role == Role::System) {
      throw Error(ErrorCode::InvalidArgument, "history must not contain system messages");
    }
  }
  if (kind == StrategyKind::CoCT && (!set || set->empty())) {
    throw Error(ErrorCode::InvalidArgument, "CoCT requires a non-empty concept set");
  }
  if (kind == StrategyKind::CoCTFree && set && !set->empty()) {
    throw Error(ErrorCode::InvalidArgument, "free-concept CoCT does not take a concept set");
  }
  if (kind == StrategyKind::RAG && !p.retriever) {
    throw Error(ErrorCode::InvalidArgument, "RAG requires a retriever index");
  }
  if (kind == StrategyKind::ToT && (p.tot_breadth < 1 || p.tot_depth < 1)) {
    throw Error(ErrorCode::InvalidArgument, "ToT breadth and depth must be >= 1");
  }
  if (kind == StrategyKind::CSIM && p.csim_lookahead < 0) {
    throw Error(ErrorCode::InvalidArgument, "CSIM lookahead must be >= 0");
  }
}

}  // namespace

StrategyOutcome generate(StrategyKind kind, const Conversation& history,
                         const std::optional<ConceptSet>& set, const BackendHandle& backend,
                         const GenerationParams& params) {
  check_preconditions(kind, history, set, params);
  const auto start = std::chrono::steady_clock::now();
  const auto& t = params.templates;

  Runner run(backend, params, truncate_history(history, history_budget(backend, params)));
  StrategyOutcome out;
  out.strategy = kind;
  auto plain = [&](const std::string& s) { return plain_utterance(s, params.style); };

  switch (kind) {
    case StrategyKind::Direct: {
      out.final = plain(run.call(run.request(t.base_system)));
      break;
    }
    case StrategyKind::DirectRefine: {
      auto response = run.call(run.request(t.direct_refine_system));
      auto revised = extract_after_marker(response, t.direct_refine_marker);
      if (!revised) {
        out.extraction_fallback = true;
        out.warnings.push_back("revision marker not found; using the whole response");
      }
      out.final = plain(revised.value_or(response));
      break;
    }
    case StrategyKind::SelfRefine: {
      auto draft = run.call(run.request(t.base_system));
      auto feedback = run.call(run.request(
          t.base_system, {{Role::User, fill(t.self_refine_feedback, {{"draft", draft}})}}));
      auto refined = run.call(run.request(
          t.base_system,
          {{Role::User, fill(t.self_refine_refine, {{"draft", draft}, {"feedback", feedback}})}}));
      out.final = plain(refined);
      break;
    }
    case StrategyKind::ECoT: {
      auto response = run.call(run.request(t.ecot_system));
      auto section = extract_after_marker(response, "Response:");
      if (!section) {
        out.extraction_fallback = true;
        out.warnings.push_back("Response section not found; using the whole response");
      }
      out.final = plain(section.value_or(response));
      break;
    }
    case StrategyKind::SoT: {
      auto skeleton = run.call(run.request(t.base_system, {{Role::User, t.sot_skeleton}}));
      auto points = parse_skeleton(skeleton);
      if (points.size() > params.sot_max_points) points.resize(params.sot_max_points);
      if (points.empty()) {
        out.extraction_fallback = true;
        out.warnings.push_back("skeleton has no numbered points; using it as the reply");
        out.final = plain(skeleton);
        break;
      }
      std::vector<ChatRequest> requests;
      for (std::size_t i = 0; i < points.size(); ++i) {
        requests.push_back(run.request(
            t.base_system, {{Role::User, fill(t.sot_expand, {{"skeleton", skeleton},
                                                             {"index", std::to_string(i + 1)},
                                                             {"point", points[i]}})}}));
      }
      std::vector<std::string> expansions(points.size());
      auto errors = parallel_for(points.size(), backend.max_in_flight(), [&](std::size_t i) {
        expansions[i] = run.invoke(requests[i]);
      });
      // Trace keeps skeleton order regardless of completion order.
      for (std::size_t i = 0; i < points.size(); ++i) {
        if (errors[i]) {
          try {
            std::rethrow_exception(errors[i]);
          } catch (const Error& e) {
            throw GenerationError(e.code(), e.what(), run.snapshot());
          }
        }
        run.record(requests[i], expansions[i]);
      }
      std::vector<std::string> parts;
      for (const auto& e : expansions) parts.emplace_back(text::trim(e));
      out.final = plain(text::join(parts, " "));
      break;
    }
    case StrategyKind::ToT: {
      std::string best;
      const auto breadth = std::to_string(params.tot_breadth);
      for (int depth = 0; depth < params.tot_depth; ++depth) {
        std::vector<std::string> candidates;
        for (int i = 1; i <= params.tot_breadth; ++i) {
          auto prompt = depth == 0
                            ? fill(t.tot_propose, {{"index", std::to_string(i)}, {"breadth", breadth}})
                            : fill(t.tot_improve, {{"partial", best},
                                                   {"index", std::to_string(i)},
                                                   {"breadth", breadth}});
          candidates.push_back(run.call(run.request(t.base_system, {{Role::User, prompt}})));
        }
        int best_score = -1;
        std::size_t best_index = 0;
        for (std::size_t i = 0; i < candidates.size(); ++i) {
          auto rating = parse_rating(run.call(run.request(
              t.base_system,
              {{Role::User, fill(t.tot_score, {{"candidate", candidates[i]}})}})));
          if (rating > best_score) {
            best_score = rating;
            best_index = i;
          }
        }
        best = candidates[best_index];
      }
      out.final = plain(best);
      break;
    }
    case StrategyKind::PlanAndSolve: {
      auto plan = run.call(run.request(t.base_system, {{Role::User, t.plan_request}}));
      out.final = plain(run.call(run.request(
          t.base_system, {{Role::User, fill(t.plan_execute, {{"plan", plan}})}})));
      break;
    }
    case StrategyKind::RAG: {
      const auto& index = *params.retriever;
      auto k = std::min(params.rag_k, index.size());
      std::string retrieved;
      if (k > 0) {
        auto result = retrieve(index, history.back().content, k);
        if (result.fell_back_to_bm25) out.warnings.push_back(result.warning);
        for (const auto& r : result.ranked) {
          auto doc = std::find(index.names().begin(), index.names().end(), r.name);
          retrieved += "- " + r.name + ": " +
                       index.documents()[static_cast<std::size_t>(doc - index.names().begin())] +
                       "\n";
        }
      }
      out.final = plain(run.call(run.request(fill(t.rag_system, {{"retrieved", retrieved}}))));
      break;
    }
    case StrategyKind::CSIM: {
      std::vector<ChatMessage> simulated;
      std::string transcript;
      for (int step = 0; step < params.csim_lookahead; ++step) {
        auto agent = run.call(run.request(t.base_system, simulated));
        simulated.push_back({Role::Assistant, agent});
        auto extras = simulated;
        extras.push_back({Role::User, t.csim_user_turn});
        auto user = run.call(run.request(t.base_system, extras));
        simulated.push_back({Role::User, user});
        transcript += "Assistant: " + agent + "\nUser: " + user + "\n";
      }
      out.final = plain(run.call(
          run.request(fill(t.csim_final_system, {{"simulation", transcript}}))));
      break;
    }
    case StrategyKind::CoCT: {
      auto response = run.call(run.request(build_coct_prompt(*set, params.style, t)));
      out.final = parse_tagged(response, params.style, *set, true);
      break;
    }
    case StrategyKind::CoCTFree: {
      const ConceptSet free_set("free", {}, SetMode::Open);
      auto response = run.call(run.request(build_coct_prompt(free_set, params.style, t)));
      out.final = parse_tagged(response, params.style, free_set, true);
      break;
    }
  }

  out.trace = run.take();
  out.call_count = out.trace.size();
  out.timing = std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::steady_clock::now() - start);
  return out;
}

}  // namespace coct
