#include "coct/corpus.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "coct/error.hpp"
#include "coct/text.hpp"

namespace coct::corpus {

using nlohmann::json;

std::string_view to_string(Speaker s) {
  return s == Speaker::Seeker ? "seeker" : "supporter";
}

Speaker parse_speaker(std::string_view s) {
  auto v = text::to_lower(text::trim(s));
  if (v == "seeker" || v == "user") return Speaker::Seeker;
  if (v == "supporter" || v == "assistant") return Speaker::Supporter;
  throw Error(ErrorCode::Schema, "unknown speaker '" + std::string(s) + "'");
}

namespace {

std::optional<std::string> optional_string(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw Error(ErrorCode::Schema, std::string("\"") + key + "\" must be a string");
  return it->get<std::string>();
}

}  // namespace

Dialogue dialogue_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::Schema, "dialogue must be a JSON object");
  Dialogue d;
  auto id = j.find("id");
  if (id == j.end() || !id->is_string() || id->get<std::string>().empty()) {
    throw Error(ErrorCode::Schema, "missing or empty \"id\"");
  }
  d.id = id->get<std::string>();
  d.topic = optional_string(j, "topic");
  auto turns = j.find("turns");
  if (turns == j.end() || !turns->is_array()) {
    throw Error(ErrorCode::Schema, "missing \"turns\" array");
  }
  if (turns->size() < 2) throw Error(ErrorCode::Schema, "a dialogue needs at least 2 turns");
  for (std::size_t i = 0; i < turns->size(); ++i) {
    const auto& t = (*turns)[i];
    if (!t.is_object() || !t.contains("speaker") || !t["speaker"].is_string() ||
        !t.contains("text") || !t["text"].is_string()) {
      throw Error(ErrorCode::Schema, "turn " + std::to_string(i) + " needs string speaker and text");
    }
    DialogueTurn turn;
    turn.speaker = parse_speaker(t["speaker"].get<std::string>());
    turn.text = t["text"].get<std::string>();
    if (text::trim(turn.text).empty()) {
      throw Error(ErrorCode::Schema, "turn " + std::to_string(i) + " has empty text");
    }
    turn.emotion = optional_string(t, "emotion");
    turn.strategy = optional_string(t, "strategy");
    d.turns.push_back(std::move(turn));
  }
  return d;
}

json to_json(const Dialogue& d) {
  json turns = json::array();
  for (const auto& t : d.turns) {
    json o = {{"speaker", std::string(to_string(t.speaker))}, {"text", t.text}};
    if (t.emotion) o["emotion"] = *t.emotion;
    if (t.strategy) o["strategy"] = *t.strategy;
    turns.push_back(std::move(o));
  }
  json out = {{"id", d.id}, {"turns", std::move(turns)}};
  if (d.topic) out["topic"] = *d.topic;
  return out;
}

LoadResult parse_jsonl(std::string_view content) {
  LoadResult result;
  std::set<std::string> ids;
  std::size_t line_no = 0;
  std::size_t non_blank = 0;
  std::istringstream in{std::string(content)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    ++non_blank;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      result.errors.push_back({line_no, ErrorCode::Schema, "invalid JSON"});
      continue;
    }
    try {
      Dialogue d = dialogue_from_json(j);
      if (!ids.insert(d.id).second) {
        result.errors.push_back({line_no, ErrorCode::DuplicateId, "duplicate id '" + d.id + "'"});
        continue;
      }
      result.dialogues.push_back(std::move(d));
    } catch (const Error& e) {
      result.errors.push_back({line_no, e.code(), e.what()});
    }
  }
  if (non_blank > 0 && result.dialogues.empty()) {
    std::string msg = "no valid dialogues";
    if (!result.errors.empty()) {
      msg += " (line " + std::to_string(result.errors.front().line) + ": " +
             result.errors.front().message + ")";
    }
    throw Error(ErrorCode::EmptyCorpus, msg);
  }
  return result;
}

LoadResult load_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read corpus '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_jsonl(ss.str());
}

std::string to_jsonl(const std::vector<Dialogue>& dialogues) {
  std::string out;
  for (const auto& d : dialogues) {
    out += to_json(d).dump();
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------

Sampling Sampling::parse(std::string_view s) {
  auto v = text::to_lower(text::trim(s));
  if (v == "all") return all();
  if (v == "last-only" || v == "last") return last_only();
  if (v.rfind("every-", 0) == 0) {
    try {
      auto k = std::stoul(v.substr(6));
      if (k >= 1) return every_kth(k);
    } catch (const std::exception&) {
    }
  }
  throw Error(ErrorCode::InvalidArgument,
              "sampling must be all, last-only or every-<k>, got '" + std::string(s) + "'");
}

std::string EvalPair::example_id() const {
  return dialogue_id + "#" + std::to_string(turn_index);
}

std::vector<EvalPair> extract_pairs(const std::vector<Dialogue>& dialogues, Speaker target,
                                    Sampling sampling) {
  std::vector<EvalPair> out;
  for (const auto& d : dialogues) {
    std::vector<std::size_t> qualifying;
    for (std::size_t i = 1; i < d.turns.size(); ++i) {
      if (d.turns[i].speaker == target) qualifying.push_back(i);
    }
    std::vector<std::size_t> chosen;
    switch (sampling.mode) {
      case Sampling::Mode::All:
        chosen = qualifying;
        break;
      case Sampling::Mode::LastOnly:
        if (!qualifying.empty()) chosen.push_back(qualifying.back());
        break;
      case Sampling::Mode::EveryKth:
        for (std::size_t j = 0; j < qualifying.size(); j += std::max<std::size_t>(sampling.k, 1)) {
          chosen.push_back(qualifying[j]);
        }
        break;
    }
    for (auto i : chosen) {
      EvalPair p;
      p.dialogue_id = d.id;
      p.turn_index = i;
      p.history.assign(d.turns.begin(), d.turns.begin() + static_cast<std::ptrdiff_t>(i));
      p.reference = d.turns[i].text;
      p.emotion = d.turns[i].emotion;
      p.strategy = d.turns[i].strategy;
      out.push_back(std::move(p));
    }
  }
  return out;
}

Conversation to_conversation(const std::vector<DialogueTurn>& history, Speaker agent) {
  std::size_t end = history.size();
  while (end > 0 && history[end - 1].speaker == agent) --end;
  Conversation out;
  for (std::size_t i = 0; i < end; ++i) {
    out.push_back({history[i].speaker == agent ? Role::Assistant : Role::User, history[i].text});
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string SimConfig::default_persona() {
  return "You are a person chatting with an AI assistant about {topic}. Write only your own "
         "next message, in one or two natural sentences, the way a real user would. When you "
         "have nothing more you want to talk about, say goodbye and end your message "
         "with [END].";
}

void SimConfig::validate() const {
  if (max_rounds < 1) throw Error(ErrorCode::InvalidArgument, "max_rounds must be >= 1");
  if (stop_markers.empty()) throw Error(ErrorCode::InvalidArgument, "stop_markers must be non-empty");
}

json to_json(const SimRecord& r) {
  json out = {{"id", r.transcript.id},
              {"rounds", r.rounds},
              {"avg_len", r.avg_len},
              {"calls", r.calls},
              {"error", r.error},
              {"transcript", to_json(r.transcript)}};
  if (r.error) out["error_message"] = r.error_message;
  return out;
}

ChatRequest user_simulator_request(const SimConfig& config, const std::vector<DialogueTurn>& turns) {
  const ConceptSet any("view", {}, SetMode::Open);
  ChatRequest r;
  r.model = config.user_model;
  r.temperature = config.agent_params.temperature;
  r.max_tokens = config.agent_params.max_tokens;
  r.seed = config.agent_params.seed;
  r.messages.push_back(
      {Role::System, text::replace_all(config.user_persona, "{topic}",
                                       config.topic.value_or("anything you like"))});
  r.messages.push_back({Role::User, "Start the conversation."});
  // The simulator speaks as the assistant; the agent's turns reach it untagged.
  for (const auto& t : turns) {
    if (t.speaker == Speaker::Seeker) {
      r.messages.push_back({Role::Assistant, t.text});
    } else {
      auto u = parse_tagged(t.text, config.agent_params.style, any, true);
      auto plain = strip_tags(u);
      r.messages.push_back({Role::User, plain.empty() ? t.text : plain});
    }
  }
  return r;
}

SimRecord simulate(const SimConfig& config, const BackendHandle& agent, const BackendHandle& user,
                   const std::optional<ConceptSet>& set, std::string episode_id) {
  config.validate();
  SimRecord rec;
  rec.transcript.id = std::move(episode_id);
  rec.transcript.topic = config.topic;
  auto& turns = rec.transcript.turns;
  std::size_t total_len = 0;

  try {
    while (rec.rounds < config.max_rounds) {
      auto user_text = user.complete(user_simulator_request(config, turns)).content;
      ++rec.calls;
      turns.push_back({Speaker::Seeker, std::string(text::trim(user_text)), {}, {}});
      bool stop = false;
      for (const auto& marker : config.stop_markers) {
        if (text::icontains(user_text, marker)) stop = true;
      }

      Conversation history;
      for (const auto& t : turns) {
        history.push_back({t.speaker == Speaker::Seeker ? Role::User : Role::Assistant, t.text});
      }
      auto outcome = generate(config.agent_strategy, history, set, agent, config.agent_params);
      rec.calls += outcome.call_count;
      total_len += text::split_ws(strip_tags(outcome.final)).size();
      auto agent_text = render(outcome.final, config.agent_params.style);
      if (text::trim(agent_text).empty()) agent_text = outcome.trace.back().response;
      turns.push_back({Speaker::Supporter, std::move(agent_text), {}, {}});
      ++rec.rounds;
      if (stop) break;
    }
  } catch (const GenerationError& e) {
    rec.calls += e.trace().size();
    rec.error = true;
    rec.error_message = e.what();
  } catch (const Error& e) {
    rec.error = true;
    rec.error_message = e.what();
  }
  rec.avg_len = rec.rounds ? static_cast<double>(total_len) / static_cast<double>(rec.rounds) : 0.0;
  return rec;
}

}  // namespace coct::corpus
