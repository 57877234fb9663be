#pragma once

// Brute-force reference implementations of the text metrics. They trade speed
// for directness: n-grams are found by exhaustive scanning, LCS by plain
// recursion, CIDEr vectors are dense over an enumerated vocabulary.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <set>
#include <string>
#include <vector>

namespace oracle {

using Tokens = std::vector<std::string>;
using Gram = std::vector<std::string>;

inline Gram gram_at(const Tokens& t, std::size_t i, std::size_t n) {
  return Gram(t.begin() + static_cast<std::ptrdiff_t>(i), t.begin() + static_cast<std::ptrdiff_t>(i + n));
}

inline std::size_t occurrences(const Tokens& t, const Gram& g) {
  std::size_t c = 0;
  for (std::size_t i = 0; i + g.size() <= t.size(); ++i) {
    if (gram_at(t, i, g.size()) == g) ++c;
  }
  return c;
}

inline std::vector<Gram> distinct_grams(const Tokens& t, std::size_t n) {
  std::vector<Gram> out;
  for (std::size_t i = 0; i + n <= t.size(); ++i) {
    auto g = gram_at(t, i, n);
    if (std::find(out.begin(), out.end(), g) == out.end()) out.push_back(g);
  }
  return out;
}

inline double bleu(const Tokens& cand, const std::vector<Tokens>& refs, std::size_t max_n = 2) {
  double log_mean = 0.0;
  for (std::size_t n = 1; n <= max_n; ++n) {
    if (cand.size() < n) return 0.0;
    std::size_t clipped = 0;
    for (const auto& g : distinct_grams(cand, n)) {
      std::size_t best = 0;
      for (const auto& r : refs) best = std::max(best, occurrences(r, g));
      clipped += std::min(occurrences(cand, g), best);
    }
    if (clipped == 0) return 0.0;
    log_mean += std::log(static_cast<double>(clipped) / static_cast<double>(cand.size() - n + 1)) /
                static_cast<double>(max_n);
  }
  // Closest reference length, shorter on ties.
  std::size_t r = refs.front().size();
  for (const auto& ref : refs) {
    auto d_new = std::abs(static_cast<long>(ref.size()) - static_cast<long>(cand.size()));
    auto d_old = std::abs(static_cast<long>(r) - static_cast<long>(cand.size()));
    if (d_new < d_old || (d_new == d_old && ref.size() < r)) r = ref.size();
  }
  const double c = static_cast<double>(cand.size());
  const double bp = cand.size() > r ? 1.0 : std::exp(1.0 - static_cast<double>(r) / c);
  return bp * std::exp(log_mean);
}

inline std::size_t lcs_recursive(const Tokens& a, const Tokens& b, std::size_t i = 0, std::size_t j = 0) {
  if (i == a.size() || j == b.size()) return 0;
  if (a[i] == b[j]) return 1 + lcs_recursive(a, b, i + 1, j + 1);
  return std::max(lcs_recursive(a, b, i + 1, j), lcs_recursive(a, b, i, j + 1));
}

/// beta < 0 means infinite.
inline double rouge_l(const Tokens& cand, const Tokens& ref, double beta = -1.0) {
  const double l = static_cast<double>(lcs_recursive(cand, ref));
  if (l == 0.0) return 0.0;
  const double r = l / static_cast<double>(ref.size());
  const double p = l / static_cast<double>(cand.size());
  if (beta < 0) return r;
  return (1 + beta * beta) * r * p / (r + beta * beta * p);
}

inline double cider(const std::vector<Tokens>& cands, const std::vector<std::vector<Tokens>>& refs,
                    std::size_t big_n = 4) {
  const double num_examples = static_cast<double>(cands.size());
  double total = 0.0;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    double score_i = 0.0;
    for (std::size_t n = 1; n <= big_n; ++n) {
      // Vocabulary: every n-gram of this candidate and its references.
      std::vector<Gram> vocab = distinct_grams(cands[i], n);
      for (const auto& r : refs[i]) {
        for (auto& g : distinct_grams(r, n)) {
          if (std::find(vocab.begin(), vocab.end(), g) == vocab.end()) vocab.push_back(g);
        }
      }
      std::vector<double> idf(vocab.size());
      for (std::size_t k = 0; k < vocab.size(); ++k) {
        std::size_t df = 0;
        for (const auto& rs : refs) {
          bool in = false;
          for (const auto& r : rs) in = in || occurrences(r, vocab[k]) > 0;
          if (in) ++df;
        }
        idf[k] = std::log(num_examples / static_cast<double>(std::max<std::size_t>(df, 1)));
      }
      auto vec = [&](const Tokens& t) {
        std::vector<double> v(vocab.size());
        for (std::size_t k = 0; k < vocab.size(); ++k) v[k] = static_cast<double>(occurrences(t, vocab[k])) * idf[k];
        return v;
      };
      auto gc = vec(cands[i]);
      double sum = 0.0;
      for (const auto& r : refs[i]) {
        auto gr = vec(r);
        double dot = 0, nc = 0, nr = 0;
        for (std::size_t k = 0; k < vocab.size(); ++k) {
          dot += gc[k] * gr[k];
          nc += gc[k] * gc[k];
          nr += gr[k] * gr[k];
        }
        if (nc > 0 && nr > 0) sum += dot / (std::sqrt(nc) * std::sqrt(nr));
      }
      score_i += (sum / static_cast<double>(refs[i].size())) / static_cast<double>(big_n);
    }
    total += score_i;
  }
  return total / num_examples;
}

inline double distinct2(const std::vector<Tokens>& cands) {
  std::set<std::string> seen;
  std::size_t total = 0;
  for (const auto& c : cands) {
    for (std::size_t i = 0; i + 1 < c.size(); ++i) {
      seen.insert(c[i] + " " + c[i + 1]);
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(seen.size()) / static_cast<double>(total);
}

}  // namespace oracle
