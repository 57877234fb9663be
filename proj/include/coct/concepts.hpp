#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace coct {

enum class ConceptKind { Emotion, Strategy, Topic, Custom };

/// ESConv support stages: Exploration (I), Comforting (II), Action (III).
enum class Stage { I = 1, II = 2, III = 3 };

std::string_view to_string(ConceptKind kind);
ConceptKind parse_concept_kind(std::string_view s);
std::string_view to_string(Stage stage);
Stage parse_stage(std::string_view s);

struct Concept {
  std::string name;
  ConceptKind kind = ConceptKind::Custom;
  std::optional<std::string> description;
  std::optional<Stage> stage;

  bool operator==(const Concept&) const = default;
};

enum class SetMode { Closed, Open };

/// Ordered inventory of concepts. Names are unique case-insensitively.
/// Closed sets reject unknown tags; open sets accept them as Custom concepts.
class ConceptSet {
 public:
  ConceptSet() = default;
  ConceptSet(std::string id, std::vector<Concept> concepts, SetMode mode);

  const std::string& id() const { return id_; }
  const std::vector<Concept>& concepts() const { return concepts_; }
  SetMode mode() const { return mode_; }
  bool empty() const { return concepts_.empty(); }
  std::size_t size() const { return concepts_.size(); }

  /// Case-insensitive, whitespace-trimmed lookup that also consults aliases.
  const Concept* find(std::string_view name) const;
  bool contains(std::string_view name) const { return find(name) != nullptr; }

  /// Copy with `concept` appended. Throws InvalidArgument on a name clash or
  /// an invalid concept.
  ConceptSet with(Concept c) const;
  ConceptSet with_mode(SetMode mode) const;

  /// Maps `alias` (case-insensitive) onto the canonical `target` name. Aliases
  /// whose target is not in the set are ignored at lookup time.
  ConceptSet with_alias(std::string_view alias, std::string_view target) const;
  /// Enables "Questioning" -> "Question" and "Reassurance" -> "Affirmation and
  /// Reassurance".
  ConceptSet with_default_aliases() const;

  /// Union with another set; concepts of `other` already present are skipped.
  ConceptSet merged(const ConceptSet& other) const;

 private:
  std::string id_;
  std::vector<Concept> concepts_;
  SetMode mode_ = SetMode::Closed;
  std::map<std::string, std::string> aliases_;  // lower(alias) -> canonical
};

/// Ids accepted by builtin_set().
const std::vector<std::string>& builtin_set_ids();

/// Builtin dataset inventories. Throws NotFound listing the valid ids.
ConceptSet builtin_set(std::string_view id);

ConceptSet concept_set_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ConceptSet& set);
ConceptSet load_concept_set(const std::string& path);

/// Resolves a builtin id first, then a JSON file path.
ConceptSet resolve_concept_set(const std::string& id_or_path);

// ---------------------------------------------------------------------------
// Tagged utterances

enum class TagStyleId { Angle, Caret, Hash, At, Square, Ampersand };

struct TagStyle {
  TagStyleId id = TagStyleId::Angle;
  char open = '<';
  char close = '>';

  static TagStyle of(TagStyleId id);
  static TagStyle angle() { return of(TagStyleId::Angle); }
  /// Accepts "angle", "caret", "hash", "at", "square", "ampersand".
  static TagStyle parse(std::string_view name);
  static const std::vector<TagStyle>& all();

  std::string_view name() const;
  std::string wrap(std::string_view concept_name) const;

  bool operator==(const TagStyle&) const = default;
};

/// True if `c` is a delimiter of any supported style.
bool is_tag_delimiter(char c);

struct Segment {
  std::optional<std::string> label;  // concept name; absent: untagged leading text
  std::string text;

  bool operator==(const Segment&) const = default;
};

struct TaggedUtterance {
  std::vector<Segment> segments;
  TagStyle style;

  /// Concept names of the tagged segments, in order.
  std::vector<std::string> concept_chain() const;
  bool operator==(const TaggedUtterance&) const = default;
};

/// Wraps plain text as a single untagged segment.
TaggedUtterance plain_utterance(std::string text, TagStyle style = TagStyle::angle());

struct ParseOptions {
  bool lenient = true;
  /// Longest accepted tag body; longer spans are treated as malformed.
  std::size_t max_tag_length = 64;
};

/// Splits `text` at well-formed tags. Known tags resolve to the canonical
/// concept name; unknown tags are kept (open set), folded into the body
/// (closed + lenient) or rejected (closed + strict, UnknownConcept). An opener
/// without a closer is UnclosedTag in strict mode and literal text otherwise.
TaggedUtterance parse_tagged(std::string_view text, const TagStyle& style,
                             const ConceptSet& set, ParseOptions options = {});

inline TaggedUtterance parse_tagged(std::string_view text, const TagStyle& style,
                                    const ConceptSet& set, bool lenient) {
  return parse_tagged(text, style, set, ParseOptions{lenient});
}

/// `{open}{name}{close} {text}` per segment, joined by one space.
std::string render(const TaggedUtterance& u, const TagStyle& style);
inline std::string render(const TaggedUtterance& u) { return render(u, u.style); }

/// Segment texts joined by one space and trimmed.
std::string strip_tags(const TaggedUtterance& u);

enum class ViolationKind { UnknownConcept, EmptyBody, UntaggedSegment };

struct Violation {
  ViolationKind kind;
  std::size_t index;
  std::string detail;

  bool operator==(const Violation&) const = default;
};

std::string_view to_string(ViolationKind kind);

std::vector<Violation> validate(const TaggedUtterance& u, const ConceptSet& set);

/// Copy of `set` with every concept of `u` that `set` lacks registered as
/// Custom. This is how open-mode parsing grows an inventory.
ConceptSet register_observed(const ConceptSet& set, const TaggedUtterance& u);

}  // namespace coct
