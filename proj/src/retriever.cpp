#include "coct/retriever.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "coct/backend.hpp"
#include "coct/error.hpp"
#include "coct/metrics.hpp"

namespace coct {

using nlohmann::json;

RetrieverIndex RetrieverIndex::build(const ConceptSet& set,
                                     std::optional<EmbeddingConfig> embedding) {
  RetrieverIndex idx;
  idx.embedding_ = std::move(embedding);
  std::size_t total = 0;
  for (const auto& c : set.concepts()) {
    idx.names_.push_back(c.name);
    idx.documents_.push_back(c.description.value_or(c.name));
    auto tokens = metrics::tokenize(idx.documents_.back());
    std::map<std::string, int> tf;
    for (const auto& t : tokens) ++tf[t];
    for (const auto& [term, _] : tf) ++idx.doc_freqs_[term];
    idx.doc_lengths_.push_back(tokens.size());
    total += tokens.size();
    idx.term_freqs_.push_back(std::move(tf));
  }
  if (!idx.names_.empty()) {
    idx.avg_doc_length_ = static_cast<double>(total) / static_cast<double>(idx.names_.size());
  }
  return idx;
}

std::vector<double> RetrieverIndex::bm25_scores(std::string_view query) const {
  std::vector<double> scores(names_.size(), 0.0);
  const auto n = static_cast<double>(names_.size());
  for (const auto& term : metrics::tokenize(query)) {
    auto df_it = doc_freqs_.find(term);
    if (df_it == doc_freqs_.end()) continue;
    const double df = df_it->second;
    const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
    for (std::size_t d = 0; d < names_.size(); ++d) {
      auto tf_it = term_freqs_[d].find(term);
      if (tf_it == term_freqs_[d].end()) continue;
      const double tf = tf_it->second;
      const double norm =
          avg_doc_length_ > 0 ? static_cast<double>(doc_lengths_[d]) / avg_doc_length_ : 1.0;
      scores[d] += idf * tf * (kK1 + 1.0) / (tf + kK1 * (1.0 - kB + kB * norm));
    }
  }
  return scores;
}

namespace {

std::vector<std::vector<double>> fetch_embeddings(const EmbeddingConfig& cfg,
                                                  const std::vector<std::string>& inputs) {
  auto ep = parse_endpoint(cfg.endpoint);
  httplib::Client client(ep.base);
  client.set_connection_timeout(cfg.timeout);
  client.set_read_timeout(cfg.timeout);
  httplib::Headers headers;
  if (!cfg.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg.api_key);
  json body = {{"model", cfg.model}, {"input", inputs}};
  auto res = client.Post(ep.prefix + "/embeddings", headers, body.dump(), "application/json");
  if (!res) throw Error(ErrorCode::Transport, "embedding request failed: " + httplib::to_string(res.error()));
  if (res->status != 200) {
    throw Error(ErrorCode::Transport, "embedding request returned HTTP " + std::to_string(res->status));
  }
  json j = json::parse(res->body, nullptr, false);
  if (j.is_discarded() || !j.contains("data") || !j["data"].is_array() ||
      j["data"].size() != inputs.size()) {
    throw Error(ErrorCode::Protocol, "malformed embedding response");
  }
  std::vector<std::vector<double>> out(inputs.size());
  for (const auto& item : j["data"]) {
    std::size_t i = item.value("index", std::size_t{0});
    if (i >= out.size()) throw Error(ErrorCode::Protocol, "embedding index out of range");
    out[i] = item.at("embedding").get<std::vector<double>>();
  }
  return out;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) return 0.0;
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

RetrievalResult retrieve(const RetrieverIndex& index, std::string_view query, std::size_t k) {
  if (k == 0 || k > index.size()) {
    throw Error(ErrorCode::InvalidArgument, "retrieve: k must be in [1, " +
                                                std::to_string(index.size()) + "]");
  }
  RetrievalResult result;
  std::vector<double> scores;
  if (index.embedding()) {
    try {
      std::vector<std::string> inputs{std::string(query)};
      inputs.insert(inputs.end(), index.documents().begin(), index.documents().end());
      auto vecs = fetch_embeddings(*index.embedding(), inputs);
      for (std::size_t d = 0; d < index.size(); ++d) scores.push_back(cosine(vecs[0], vecs[d + 1]));
    } catch (const Error& e) {
      result.fell_back_to_bm25 = true;
      result.warning = std::string("embedding retrieval failed, using BM25: ") + e.what();
      scores.clear();
    }
  }
  if (scores.empty()) scores = index.bm25_scores(query);

  std::vector<std::size_t> order(index.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  for (std::size_t i = 0; i < k; ++i) {
    result.ranked.push_back({index.names()[order[i]], scores[order[i]]});
  }
  return result;
}

}  // namespace coct
