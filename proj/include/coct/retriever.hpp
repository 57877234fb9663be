#pragma once

#include <chrono>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "coct/concepts.hpp"

namespace coct {

/// OpenAI-compatible `/embeddings` endpoint used instead of BM25 when set.
struct EmbeddingConfig {
  std::string endpoint;
  std::string model;
  std::string api_key;
  std::chrono::seconds timeout{30};
};

/// One document per concept: its description, or its name when it has none.
class RetrieverIndex {
 public:
  static constexpr double kK1 = 1.2;
  static constexpr double kB = 0.75;

  static RetrieverIndex build(const ConceptSet& set,
                              std::optional<EmbeddingConfig> embedding = std::nullopt);

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<std::string>& documents() const { return documents_; }
  const std::optional<EmbeddingConfig>& embedding() const { return embedding_; }

  /// BM25 score of every document against `query`, in document order.
  std::vector<double> bm25_scores(std::string_view query) const;

 private:
  std::vector<std::string> names_;
  std::vector<std::string> documents_;
  std::vector<std::map<std::string, int>> term_freqs_;
  std::vector<std::size_t> doc_lengths_;
  std::map<std::string, int> doc_freqs_;
  double avg_doc_length_ = 0.0;
  std::optional<EmbeddingConfig> embedding_;
};

struct Retrieved {
  std::string name;
  double score;
};

struct RetrievalResult {
  std::vector<Retrieved> ranked;
  bool fell_back_to_bm25 = false;
  std::string warning;
};

/// Top-k concepts; ties keep concept order. With an embedding endpoint,
/// cosine ranking is used and transport failures fall back to BM25.
RetrievalResult retrieve(const RetrieverIndex& index, std::string_view query, std::size_t k);

}  // namespace coct
