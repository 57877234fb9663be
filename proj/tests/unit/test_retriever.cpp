#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "coct/concepts.hpp"
#include "coct/error.hpp"
#include "coct/metrics.hpp"
#include "coct/retriever.hpp"

using namespace coct;

namespace {

// Textbook Okapi BM25 written against the raw documents.
std::vector<double> bm25_oracle(const std::vector<std::string>& docs, const std::string& query) {
  std::vector<metrics::Tokens> toks;
  double avg = 0;
  for (const auto& d : docs) {
    toks.push_back(metrics::tokenize(d));
    avg += static_cast<double>(toks.back().size());
  }
  avg /= static_cast<double>(docs.size());
  const double n = static_cast<double>(docs.size());
  std::vector<double> scores(docs.size(), 0.0);
  for (const auto& q : metrics::tokenize(query)) {
    double df = 0;
    for (const auto& t : toks) df += std::count(t.begin(), t.end(), q) > 0 ? 1 : 0;
    if (df == 0) continue;
    const double idf = std::log((n - df + 0.5) / (df + 0.5) + 1.0);
    for (std::size_t d = 0; d < docs.size(); ++d) {
      const double f = static_cast<double>(std::count(toks[d].begin(), toks[d].end(), q));
      const double len = static_cast<double>(toks[d].size());
      scores[d] += idf * f * 2.2 / (f + 1.2 * (0.25 + 0.75 * len / avg));
    }
  }
  return scores;
}

}  // namespace

TEST(Retriever, DivulgeQueryFindsSelfDisclosure) {
  auto set = builtin_set("esconv-strategy");
  auto index = RetrieverIndex::build(set);
  std::vector<std::string> docs;
  for (const auto& c : set.concepts()) docs.push_back(*c.description);
  auto expected = bm25_oracle(docs, "divulge similar experiences");
  auto argmax = std::max_element(expected.begin(), expected.end()) - expected.begin();
  EXPECT_EQ(set.concepts()[static_cast<std::size_t>(argmax)].name, "Self-disclosure");

  auto got = index.bm25_scores("divulge similar experiences");
  ASSERT_EQ(got.size(), expected.size());
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], expected[i], 1e-12);

  auto r = retrieve(index, "divulge similar experiences", 1);
  ASSERT_EQ(r.ranked.size(), 1u);
  EXPECT_EQ(r.ranked[0].name, "Self-disclosure");
  EXPECT_FALSE(r.fell_back_to_bm25);
}

TEST(Retriever, VerbatimDescriptionRanksItsConceptFirst) {
  for (const auto& id : {"esconv-strategy", "dailydialog-act"}) {
    auto set = builtin_set(id);
    auto index = RetrieverIndex::build(set);
    for (const auto& c : set.concepts()) {
      auto r = retrieve(index, *c.description, 1);
      EXPECT_EQ(r.ranked[0].name, c.name) << id;
    }
  }
}

TEST(Retriever, FullKIsPermutation) {
  auto set = builtin_set("esconv-strategy");
  auto index = RetrieverIndex::build(set);
  auto r = retrieve(index, "how do I feel better", index.size());
  std::set<std::string> names;
  for (const auto& x : r.ranked) names.insert(x.name);
  EXPECT_EQ(names.size(), set.size());
  for (std::size_t i = 1; i < r.ranked.size(); ++i) EXPECT_GE(r.ranked[i - 1].score, r.ranked[i].score);
}

TEST(Retriever, TiesKeepConceptOrder) {
  auto set = builtin_set("esconv-strategy");
  auto r = retrieve(RetrieverIndex::build(set), "zzzz", 3);
  EXPECT_EQ(r.ranked[0].name, "Question");
  EXPECT_EQ(r.ranked[1].name, "Restatement or Paraphrasing");
  EXPECT_EQ(r.ranked[2].name, "Reflection of Feelings");
}

TEST(Retriever, NamesStandInForMissingDescriptions) {
  auto index = RetrieverIndex::build(builtin_set("esconv-emotion"));
  EXPECT_EQ(index.documents()[0], "anger");
  EXPECT_EQ(retrieve(index, "so much shame", 1).ranked[0].name, "shame");
}

TEST(Retriever, KOutOfRange) {
  auto index = RetrieverIndex::build(builtin_set("esconv-strategy"));
  EXPECT_THROW(retrieve(index, "q", 0), Error);
  EXPECT_THROW(retrieve(index, "q", index.size() + 1), Error);
}
