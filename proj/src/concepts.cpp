#include "coct/concepts.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "coct/error.hpp"
#include "coct/text.hpp"

namespace coct {

using nlohmann::json;

std::string_view to_string(ConceptKind kind) {
  switch (kind) {
    case ConceptKind::Emotion: return "emotion";
    case ConceptKind::Strategy: return "strategy";
    case ConceptKind::Topic: return "topic";
    case ConceptKind::Custom: return "custom";
  }
  return "custom";
}

ConceptKind parse_concept_kind(std::string_view s) {
  auto t = text::to_lower(text::trim(s));
  if (t == "emotion") return ConceptKind::Emotion;
  if (t == "strategy") return ConceptKind::Strategy;
  if (t == "topic") return ConceptKind::Topic;
  if (t == "custom") return ConceptKind::Custom;
  throw Error(ErrorCode::Schema, "unknown concept kind '" + std::string(s) + "'");
}

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::I: return "I";
    case Stage::II: return "II";
    case Stage::III: return "III";
  }
  return "I";
}

Stage parse_stage(std::string_view s) {
  auto t = std::string(text::trim(s));
  if (t == "I" || t == "1") return Stage::I;
  if (t == "II" || t == "2") return Stage::II;
  if (t == "III" || t == "3") return Stage::III;
  throw Error(ErrorCode::Schema, "unknown stage '" + t + "'");
}

bool is_tag_delimiter(char c) {
  switch (c) {
    case '<': case '>': case '^': case '#': case '@': case '[': case ']': case '&':
      return true;
    default:
      return false;
  }
}

namespace {

void check_concept(const Concept& c) {
  if (text::trim(c.name).empty()) {
    throw Error(ErrorCode::InvalidArgument, "concept name must be non-empty");
  }
  if (text::trim(c.name) != c.name) {
    throw Error(ErrorCode::InvalidArgument,
                "concept name has surrounding whitespace: '" + c.name + "'");
  }
  for (char ch : c.name) {
    if (is_tag_delimiter(ch) || ch == '\n' || ch == '\r') {
      throw Error(ErrorCode::InvalidArgument,
                  "concept name contains a tag delimiter: '" + c.name + "'");
    }
  }
  if (c.stage && c.kind != ConceptKind::Strategy) {
    throw Error(ErrorCode::InvalidArgument,
                "stage is only allowed on strategies: '" + c.name + "'");
  }
}

}  // namespace

ConceptSet::ConceptSet(std::string id, std::vector<Concept> concepts, SetMode mode)
    : id_(std::move(id)), mode_(mode) {
  concepts_.reserve(concepts.size());
  for (auto& c : concepts) {
    check_concept(c);
    if (find(c.name)) {
      throw Error(ErrorCode::InvalidArgument,
                  "duplicate concept name '" + c.name + "' in set '" + id_ + "'");
    }
    concepts_.push_back(std::move(c));
  }
}

const Concept* ConceptSet::find(std::string_view name) const {
  auto key = text::trim(name);
  for (const auto& c : concepts_) {
    if (text::iequals(c.name, key)) return &c;
  }
  if (auto it = aliases_.find(text::to_lower(key)); it != aliases_.end()) {
    for (const auto& c : concepts_) {
      if (text::iequals(c.name, it->second)) return &c;
    }
  }
  return nullptr;
}

ConceptSet ConceptSet::with(Concept added) const {
  ConceptSet out = *this;
  check_concept(added);
  for (const auto& c : concepts_) {
    if (text::iequals(c.name, added.name)) {
      throw Error(ErrorCode::InvalidArgument,
                  "duplicate concept name '" + added.name + "'");
    }
  }
  out.concepts_.push_back(std::move(added));
  return out;
}

ConceptSet ConceptSet::with_mode(SetMode mode) const {
  ConceptSet out = *this;
  out.mode_ = mode;
  return out;
}

ConceptSet ConceptSet::with_alias(std::string_view alias, std::string_view target) const {
  ConceptSet out = *this;
  out.aliases_[text::to_lower(text::trim(alias))] = std::string(text::trim(target));
  return out;
}

ConceptSet ConceptSet::with_default_aliases() const {
  return with_alias("Questioning", "Question")
      .with_alias("Reassurance", "Affirmation and Reassurance");
}

ConceptSet ConceptSet::merged(const ConceptSet& other) const {
  ConceptSet out = *this;
  for (const auto& c : other.concepts_) {
    bool present = std::any_of(out.concepts_.begin(), out.concepts_.end(),
                               [&](const Concept& e) { return text::iequals(e.name, c.name); });
    if (!present) out.concepts_.push_back(c);
  }
  for (const auto& [k, v] : other.aliases_) out.aliases_.emplace(k, v);
  return out;
}

// ---------------------------------------------------------------------------
// Builtin inventories

namespace {

Concept emotion(std::string name) { return {std::move(name), ConceptKind::Emotion, {}, {}}; }

Concept strategy(std::string name, std::string description,
                 std::optional<Stage> stage = std::nullopt) {
  return {std::move(name), ConceptKind::Strategy, std::move(description), stage};
}

Concept topic(std::string name) { return {std::move(name), ConceptKind::Topic, {}, {}}; }

ConceptSet make_builtin(std::string_view id) {
  if (id == "esconv-emotion") {
    return ConceptSet(std::string(id),
                      {emotion("anger"), emotion("anxiety"), emotion("depression"),
                       emotion("disgust"), emotion("fear"), emotion("nervousness"),
                       emotion("sadness"), emotion("shame")},
                      SetMode::Closed);
  }
  if (id == "esconv-strategy") {
    return ConceptSet(
        std::string(id),
        {
            strategy("Question",
                     "Inquiring about problem-related information to help the seeker clarify "
                     "their issues, using open-ended questions for best results and closed "
                     "questions for specific details.",
                     Stage::I),
            strategy("Restatement or Paraphrasing",
                     "A simple, more concise rephrasing of the help-seeker's statements that "
                     "could help them see their situation more clearly.",
                     Stage::I),
            strategy("Reflection of Feelings",
                     "Articulate and describe the help-seeker's feelings.", Stage::II),
            strategy("Self-disclosure",
                     "Divulge similar experiences that you have had or emotions that you share "
                     "with the help-seeker to express your empathy.",
                     Stage::II),
            strategy("Affirmation and Reassurance",
                     "Affirm the help seeker's strengths, motivation, and capabilities and "
                     "provide reassurance and encouragement.",
                     Stage::II),
            strategy("Providing Suggestions",
                     "Provide suggestions about how to change, but be careful to not overstep "
                     "and tell them what to do.",
                     Stage::III),
            strategy("Information",
                     "Provide useful information to the help-seeker, for example with data, "
                     "facts, opinions, resources, or by answering questions.",
                     Stage::III),
            strategy("Others",
                     "Exchange pleasantries and use other support strategies that do not fall "
                     "into the above categories.",
                     Stage::III),
        },
        SetMode::Closed);
  }
  if (id == "dailydialog-emotion") {
    return ConceptSet(std::string(id),
                      {emotion("anger"), emotion("disgust"), emotion("fear"),
                       emotion("happiness"), emotion("sadness"), emotion("surprise"),
                       emotion("no emotion")},
                      SetMode::Closed);
  }
  if (id == "dailydialog-act") {
    return ConceptSet(
        std::string(id),
        {
            strategy("inform",
                     "Provide factual or contextual information that the speaker believes the "
                     "listener may not know or is unaware of."),
            strategy("question",
                     "Seek specific information from the listener, assuming they possess the "
                     "knowledge being requested."),
            strategy("directive",
                     "Express the speaker's intention for the listener to take an action, "
                     "including requests, instructions, or suggestions."),
            strategy("commissive",
                     "Indicate the speaker's commitment to perform certain actions, such as "
                     "accepting or rejecting requests or offers."),
        },
        SetMode::Closed);
  }
  if (id == "cskills-topic") {
    return ConceptSet(std::string(id),
                      {topic("sports"), topic("travel"), topic("art"), topic("music"),
                       topic("technology"), topic("food and drink"), topic("hobbies and crafts"),
                       topic("entertainment"), topic("animal")},
                      SetMode::Closed);
  }
  if (id == "empathetic-emotion-top10") {
    // The first eight are the published top list; "angry" and "lonely" complete it
    // from the dataset's frequency ranking.
    return ConceptSet(std::string(id),
                      {emotion("surprised"), emotion("grateful"), emotion("proud"),
                       emotion("sentimental"), emotion("annoyed"), emotion("excited"),
                       emotion("sad"), emotion("disgusted"), emotion("angry"),
                       emotion("lonely")},
                      SetMode::Closed);
  }
  std::string msg = "unknown concept set '" + std::string(id) + "'; valid ids:";
  for (const auto& v : builtin_set_ids()) msg += " " + v;
  throw Error(ErrorCode::NotFound, msg);
}

}  // namespace

const std::vector<std::string>& builtin_set_ids() {
  static const std::vector<std::string> ids = {
      "esconv-emotion", "esconv-strategy", "dailydialog-emotion",
      "dailydialog-act", "cskills-topic", "empathetic-emotion-top10"};
  return ids;
}

ConceptSet builtin_set(std::string_view id) { return make_builtin(id); }

ConceptSet concept_set_from_json(const json& j) {
  try {
    std::string id = j.at("id").get<std::string>();
    std::string mode_s = text::to_lower(j.value("mode", std::string("closed")));
    SetMode mode;
    if (mode_s == "closed") {
      mode = SetMode::Closed;
    } else if (mode_s == "open") {
      mode = SetMode::Open;
    } else {
      throw Error(ErrorCode::Schema, "mode must be \"closed\" or \"open\"");
    }
    std::vector<Concept> concepts;
    for (const auto& c : j.at("concepts")) {
      Concept item;
      item.name = c.at("name").get<std::string>();
      item.kind = parse_concept_kind(c.value("kind", std::string("custom")));
      if (c.contains("description") && !c["description"].is_null()) {
        item.description = c["description"].get<std::string>();
      }
      if (c.contains("stage") && !c["stage"].is_null()) {
        item.stage = parse_stage(c["stage"].get<std::string>());
      }
      concepts.push_back(std::move(item));
    }
    return ConceptSet(std::move(id), std::move(concepts), mode);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Schema, std::string("concept set: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InvalidArgument) throw Error(ErrorCode::Schema, e.what());
    throw;
  }
}

json to_json(const ConceptSet& set) {
  json concepts = json::array();
  for (const auto& c : set.concepts()) {
    json o = {{"name", c.name}, {"kind", std::string(to_string(c.kind))}};
    if (c.description) o["description"] = *c.description;
    if (c.stage) o["stage"] = std::string(to_string(*c.stage));
    concepts.push_back(std::move(o));
  }
  return {{"id", set.id()},
          {"mode", set.mode() == SetMode::Closed ? "closed" : "open"},
          {"concepts", std::move(concepts)}};
}

ConceptSet load_concept_set(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open concept set file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Schema, "concept set file '" + path + "': " + e.what());
  }
  return concept_set_from_json(j);
}

ConceptSet resolve_concept_set(const std::string& id_or_path) {
  const auto& ids = builtin_set_ids();
  if (std::find(ids.begin(), ids.end(), id_or_path) != ids.end()) {
    return builtin_set(id_or_path);
  }
  if (std::filesystem::exists(id_or_path)) return load_concept_set(id_or_path);
  return builtin_set(id_or_path);  // throws NotFound with the id list
}

// ---------------------------------------------------------------------------
// Tag styles

TagStyle TagStyle::of(TagStyleId id) {
  switch (id) {
    case TagStyleId::Angle: return {id, '<', '>'};
    case TagStyleId::Caret: return {id, '^', '^'};
    case TagStyleId::Hash: return {id, '#', '#'};
    case TagStyleId::At: return {id, '@', '@'};
    case TagStyleId::Square: return {id, '[', ']'};
    case TagStyleId::Ampersand: return {id, '&', '&'};
  }
  return {TagStyleId::Angle, '<', '>'};
}

const std::vector<TagStyle>& TagStyle::all() {
  static const std::vector<TagStyle> styles = {
      of(TagStyleId::Angle), of(TagStyleId::Caret),  of(TagStyleId::Hash),
      of(TagStyleId::At),    of(TagStyleId::Square), of(TagStyleId::Ampersand)};
  return styles;
}

TagStyle TagStyle::parse(std::string_view name) {
  auto n = text::to_lower(text::trim(name));
  for (const auto& s : all()) {
    if (s.name() == n) return s;
  }
  throw Error(ErrorCode::InvalidArgument,
              "unknown tag style '" + std::string(name) +
                  "' (expected angle|caret|hash|at|square|ampersand)");
}

std::string_view TagStyle::name() const {
  switch (id) {
    case TagStyleId::Angle: return "angle";
    case TagStyleId::Caret: return "caret";
    case TagStyleId::Hash: return "hash";
    case TagStyleId::At: return "at";
    case TagStyleId::Square: return "square";
    case TagStyleId::Ampersand: return "ampersand";
  }
  return "angle";
}

std::string TagStyle::wrap(std::string_view concept_name) const {
  std::string out;
  out.reserve(concept_name.size() + 2);
  out += open;
  out += concept_name;
  out += close;
  return out;
}

// ---------------------------------------------------------------------------
// Parsing and rendering

std::vector<std::string> TaggedUtterance::concept_chain() const {
  std::vector<std::string> out;
  for (const auto& s : segments) {
    if (s.label) out.push_back(*s.label);
  }
  return out;
}

TaggedUtterance plain_utterance(std::string text, TagStyle style) {
  TaggedUtterance u;
  u.style = style;
  auto t = std::string(text::trim(text));
  if (!t.empty()) u.segments.push_back({std::nullopt, std::move(t)});
  return u;
}

namespace {

bool valid_tag_name(std::string_view raw, std::size_t max_len) {
  if (raw.size() > max_len) return false;
  auto name = text::trim(raw);
  if (name.empty()) return false;
  for (char c : raw) {
    if (c == '\n' || c == '\r' || is_tag_delimiter(c)) return false;
  }
  return true;
}

}  // namespace

TaggedUtterance parse_tagged(std::string_view input, const TagStyle& style,
                             const ConceptSet& set, ParseOptions options) {
  TaggedUtterance out;
  out.style = style;

  std::optional<std::string> current_concept;
  std::string body;
  std::vector<std::string> custom_seen;  // first spelling of open-mode names

  auto flush = [&] {
    auto t = std::string(text::trim(body));
    if (current_concept || !t.empty()) {
      out.segments.push_back({current_concept, std::move(t)});
    }
    body.clear();
  };

  std::size_t pos = 0;
  while (pos < input.size()) {
    std::size_t open = input.find(style.open, pos);
    if (open == std::string_view::npos) {
      body.append(input.substr(pos));
      break;
    }
    body.append(input.substr(pos, open - pos));
    std::size_t close = input.find(style.close, open + 1);
    if (close == std::string_view::npos) {
      if (!options.lenient) {
        throw Error(ErrorCode::UnclosedTag,
                    "unclosed tag at offset " + std::to_string(open));
      }
      body.append(input.substr(open));
      break;
    }
    auto raw_name = input.substr(open + 1, close - open - 1);
    if (!valid_tag_name(raw_name, options.max_tag_length)) {
      // Not a tag: keep the opener as literal text and rescan after it.
      body.push_back(style.open);
      pos = open + 1;
      continue;
    }
    auto name = text::trim(raw_name);
    std::optional<std::string> resolved;
    if (const Concept* c = set.find(name)) {
      resolved = c->name;
    } else if (set.mode() == SetMode::Open) {
      auto it = std::find_if(custom_seen.begin(), custom_seen.end(),
                             [&](const std::string& s) { return text::iequals(s, name); });
      if (it == custom_seen.end()) {
        custom_seen.emplace_back(name);
        resolved = std::string(name);
      } else {
        resolved = *it;
      }
    } else if (!options.lenient) {
      throw Error(ErrorCode::UnknownConcept,
                  "unknown concept '" + std::string(name) + "' for set '" + set.id() + "'");
    }

    if (resolved) {
      flush();
      current_concept = std::move(resolved);
    } else {
      body.append(input.substr(open, close - open + 1));
    }
    pos = close + 1;
  }
  flush();
  return out;
}

std::string render(const TaggedUtterance& u, const TagStyle& style) {
  std::string out;
  for (std::size_t i = 0; i < u.segments.size(); ++i) {
    const auto& s = u.segments[i];
    if (i) out += ' ';
    if (s.label) {
      out += style.wrap(*s.label);
      out += ' ';
    }
    out += s.text;
  }
  return out;
}

std::string strip_tags(const TaggedUtterance& u) {
  std::string out;
  for (const auto& s : u.segments) {
    auto t = text::trim(s.text);
    if (t.empty()) continue;
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::UnknownConcept: return "UnknownConcept";
    case ViolationKind::EmptyBody: return "EmptyBody";
    case ViolationKind::UntaggedSegment: return "UntaggedSegment";
  }
  return "Unknown";
}

std::vector<Violation> validate(const TaggedUtterance& u, const ConceptSet& set) {
  std::vector<Violation> out;
  for (std::size_t i = 0; i < u.segments.size(); ++i) {
    const auto& s = u.segments[i];
    if (s.label) {
      if (set.mode() == SetMode::Closed && !set.contains(*s.label)) {
        out.push_back({ViolationKind::UnknownConcept, i, *s.label});
      }
      if (text::trim(s.text).empty()) {
        out.push_back({ViolationKind::EmptyBody, i, *s.label});
      }
    } else if (i > 0) {
      out.push_back({ViolationKind::UntaggedSegment, i, s.text});
    }
  }
  return out;
}

ConceptSet register_observed(const ConceptSet& set, const TaggedUtterance& u) {
  ConceptSet out = set;
  for (const auto& s : u.segments) {
    if (s.label && !out.contains(*s.label)) {
      out = out.with({*s.label, ConceptKind::Custom, {}, {}});
    }
  }
  return out;
}

}  // namespace coct
