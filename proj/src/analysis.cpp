#include "coct/analysis.hpp"

#include <algorithm>

#include "coct/error.hpp"

namespace coct::analysis {

TransitionMatrix::TransitionMatrix(std::vector<std::string> labels) {
  for (auto& l : labels) ensure_label(l);
}

std::optional<std::size_t> TransitionMatrix::index_of(const std::string& label) const {
  auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it == labels_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - labels_.begin());
}

std::uint64_t TransitionMatrix::count(const std::string& from, const std::string& to) const {
  auto f = index_of(from);
  auto t = index_of(to);
  if (!f || !t) return 0;
  return at(*f, *t);
}

std::size_t TransitionMatrix::ensure_label(const std::string& label) {
  if (auto i = index_of(label)) return *i;
  const std::size_t n = labels_.size();
  std::vector<std::uint64_t> grown((n + 1) * (n + 1), 0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) grown[r * (n + 1) + c] = counts_[r * n + c];
  }
  counts_ = std::move(grown);
  labels_.push_back(label);
  return n;
}

void TransitionMatrix::add(const std::string& from, const std::string& to, std::uint64_t n) {
  auto f = ensure_label(from);
  auto t = ensure_label(to);
  counts_[f * size() + t] += n;
  total_ += n;
}

void TransitionMatrix::merge(const TransitionMatrix& other) {
  for (const auto& l : other.labels_) ensure_label(l);
  for (std::size_t r = 0; r < other.size(); ++r) {
    for (std::size_t c = 0; c < other.size(); ++c) {
      if (auto n = other.at(r, c)) add(other.labels_[r], other.labels_[c], n);
    }
  }
}

TransitionMatrix TransitionMatrix::reordered(const std::vector<std::string>& order) const {
  auto sorted_a = order;
  auto sorted_b = labels_;
  std::sort(sorted_a.begin(), sorted_a.end());
  std::sort(sorted_b.begin(), sorted_b.end());
  if (sorted_a != sorted_b) {
    throw Error(ErrorCode::InvalidArgument, "ordering is not a permutation of the matrix labels");
  }
  TransitionMatrix out(order);
  for (std::size_t r = 0; r < size(); ++r) {
    for (std::size_t c = 0; c < size(); ++c) {
      if (auto n = at(r, c)) out.add(labels_[r], labels_[c], n);
    }
  }
  return out;
}

namespace {

TransitionMatrix seeded(const ConceptSet& labels) {
  std::vector<std::string> names;
  for (const auto& c : labels.concepts()) names.push_back(c.name);
  return TransitionMatrix(std::move(names));
}

// Canonical spelling when the set knows the concept, the raw name otherwise.
std::string label_for(const ConceptSet& labels, const std::string& name) {
  if (const auto* c = labels.find(name)) return c->name;
  return name;
}

}  // namespace

TransitionMatrix inner_transitions(const std::vector<TaggedUtterance>& utterances,
                                   const ConceptSet& labels) {
  TransitionMatrix m = seeded(labels);
  for (const auto& u : utterances) {
    auto chain = u.concept_chain();
    for (std::size_t i = 0; i + 1 < chain.size(); ++i) {
      m.add(label_for(labels, chain[i]), label_for(labels, chain[i + 1]));
    }
  }
  return m;
}

TransitionMatrix outer_transitions(const std::vector<std::vector<TaggedUtterance>>& conversations,
                                   const ConceptSet& labels) {
  TransitionMatrix m = seeded(labels);
  for (const auto& conv : conversations) {
    std::optional<std::string> previous_last;
    for (const auto& u : conv) {
      auto chain = u.concept_chain();
      if (chain.empty()) continue;
      if (previous_last) m.add(*previous_last, label_for(labels, chain.front()));
      previous_last = label_for(labels, chain.back());
    }
  }
  return m;
}

NormalizedMatrix normalize(const TransitionMatrix& m) {
  NormalizedMatrix out;
  out.labels = m.labels();
  out.rows.assign(m.size(), std::vector<double>(m.size(), 0.0));
  for (std::size_t r = 0; r < m.size(); ++r) {
    std::uint64_t row_sum = 0;
    for (std::size_t c = 0; c < m.size(); ++c) row_sum += m.at(r, c);
    if (row_sum == 0) continue;
    for (std::size_t c = 0; c < m.size(); ++c) {
      out.rows[r][c] = static_cast<double>(m.at(r, c)) / static_cast<double>(row_sum);
    }
  }
  return out;
}

StageOrdering StageOrdering::from_set(const ConceptSet& set, const std::vector<std::string>& labels) {
  auto rank = [&](const std::string& label) {
    const auto* c = set.find(label);
    return (c && c->stage) ? static_cast<int>(*c->stage) : 4;
  };
  std::vector<std::string> order = labels;
  std::stable_sort(order.begin(), order.end(),
                   [&](const std::string& a, const std::string& b) { return rank(a) < rank(b); });
  return StageOrdering(std::move(order));
}

double upper_triangle_mass(const TransitionMatrix& m, const StageOrdering& order) {
  if (m.total() == 0) throw Error(ErrorCode::InvalidArgument, "matrix has no transitions");
  auto r = m.reordered(order.order());
  std::uint64_t upper = 0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    for (std::size_t j = i + 1; j < r.size(); ++j) upper += r.at(i, j);
  }
  return static_cast<double>(upper) / static_cast<double>(r.total());
}

bool has_stages(const ConceptSet& set) {
  return std::any_of(set.concepts().begin(), set.concepts().end(),
                     [](const Concept& c) { return c.stage.has_value(); });
}

}  // namespace coct::analysis
