#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "coct/concepts.hpp"

namespace coct::analysis {

/// Square count matrix over concept labels; counts[from][to].
class TransitionMatrix {
 public:
  TransitionMatrix() = default;
  explicit TransitionMatrix(std::vector<std::string> labels);

  const std::vector<std::string>& labels() const { return labels_; }
  std::size_t size() const { return labels_.size(); }
  std::uint64_t total() const { return total_; }

  std::uint64_t at(std::size_t from, std::size_t to) const { return counts_[from * size() + to]; }
  std::uint64_t count(const std::string& from, const std::string& to) const;
  std::optional<std::size_t> index_of(const std::string& label) const;

  /// Adds one transition, appending unseen labels.
  void add(const std::string& from, const std::string& to, std::uint64_t n = 1);
  std::size_t ensure_label(const std::string& label);

  /// Cell-wise sum; labels of `other` missing here are appended.
  void merge(const TransitionMatrix& other);

  /// Rows and columns permuted to `order`, which must be a permutation of labels().
  TransitionMatrix reordered(const std::vector<std::string>& order) const;

  bool operator==(const TransitionMatrix&) const = default;

 private:
  std::vector<std::string> labels_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

/// Row-stochastic view with the matrix labels.
struct NormalizedMatrix {
  std::vector<std::string> labels;
  std::vector<std::vector<double>> rows;
};

/// Consecutive tagged segments within each utterance. Labels are the set's
/// concepts in set order followed by newly observed names in first-seen order.
TransitionMatrix inner_transitions(const std::vector<TaggedUtterance>& utterances,
                                   const ConceptSet& labels = {});

/// Last concept of each agent utterance to the first concept of the next
/// tagged utterance in the same conversation.
TransitionMatrix outer_transitions(const std::vector<std::vector<TaggedUtterance>>& conversations,
                                   const ConceptSet& labels = {});

NormalizedMatrix normalize(const TransitionMatrix& m);

/// Labels ordered stage I, II, III, then unstaged labels, stable within each group.
class StageOrdering {
 public:
  static StageOrdering from_set(const ConceptSet& set, const std::vector<std::string>& labels);
  explicit StageOrdering(std::vector<std::string> order) : order_(std::move(order)) {}
  const std::vector<std::string>& order() const { return order_; }

 private:
  std::vector<std::string> order_;
};

/// Share of transitions strictly above the diagonal after stage reordering.
/// Throws InvalidArgument when the matrix is empty or the ordering is not a
/// permutation of its labels.
double upper_triangle_mass(const TransitionMatrix& m, const StageOrdering& order);

/// True when any concept of `set` carries a stage.
bool has_stages(const ConceptSet& set);

}  // namespace coct::analysis
