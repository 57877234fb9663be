#include "coct/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "coct/error.hpp"
#include "coct/text.hpp"

namespace coct::metrics {

using nlohmann::json;

namespace {

bool is_space(unsigned char c) { return c == ' ' || (c >= '\t' && c <= '\r'); }
bool is_alpha(unsigned char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool is_punct(unsigned char c) { return c < 0x80 && std::ispunct(c); }

// n-grams keyed by their tokens joined with a unit separator.
using NgramCounts = std::map<std::string, int>;

NgramCounts count_ngrams(const Tokens& tokens, int n) {
  NgramCounts out;
  if (n <= 0 || tokens.size() < static_cast<std::size_t>(n)) return out;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (int k = 1; k < n; ++k) {
      key += '\x1f';
      key += tokens[i + k];
    }
    ++out[key];
  }
  return out;
}

}  // namespace

Tokens tokenize(std::string_view s, TokenizerMode mode) {
  if (mode == TokenizerMode::WhitespaceOnly) return text::split_ws(s);

  Tokens out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (std::size_t i = 0; i < s.size(); ++i) {
    auto c = static_cast<unsigned char>(s[i]);
    if (is_space(c)) {
      flush();
    } else if (c == '\'') {
      bool clitic = !cur.empty() && i + 1 < s.size() &&
                    is_alpha(static_cast<unsigned char>(s[i + 1]));
      flush();
      if (clitic) {
        cur = "'";
      } else {
        out.emplace_back("'");
      }
    } else if (is_punct(c)) {
      flush();
      out.emplace_back(1, static_cast<char>(c));
    } else {
      cur += (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c);
    }
  }
  flush();
  return out;
}

// ---------------------------------------------------------------------------

std::vector<double> MetricConfig::effective_cider_weights() const {
  if (!cider_weights.empty()) return cider_weights;
  return std::vector<double>(static_cast<std::size_t>(std::max(cider_n, 0)),
                             1.0 / static_cast<double>(cider_n));
}

void MetricConfig::validate() const {
  if (cider_n < 1) throw Error(ErrorCode::InvalidArgument, "cider_n must be >= 1");
  auto w = effective_cider_weights();
  if (w.size() != static_cast<std::size_t>(cider_n)) {
    throw Error(ErrorCode::InvalidArgument, "cider_weights must have cider_n entries");
  }
  if (std::abs(std::accumulate(w.begin(), w.end(), 0.0) - 1.0) > 1e-9) {
    throw Error(ErrorCode::InvalidArgument, "cider_weights must sum to 1");
  }
  if (bleu_max_n < 1) throw Error(ErrorCode::InvalidArgument, "bleu_max_n must be >= 1");
  if (!(report_scale > 0)) throw Error(ErrorCode::InvalidArgument, "report_scale must be > 0");
  if (rouge_beta.value && *rouge_beta.value < 0) {
    throw Error(ErrorCode::InvalidArgument, "rouge_beta must be non-negative");
  }
}

json to_json(const MetricConfig& c) {
  return {
      {"cider_n", c.cider_n},
      {"cider_weights", c.effective_cider_weights()},
      {"rouge_beta", c.rouge_beta.value ? json(*c.rouge_beta.value) : json("inf")},
      {"bleu_max_n", c.bleu_max_n},
      {"bleu_smoothing", c.bleu_smoothing},
      {"tokenizer", c.tokenizer == TokenizerMode::WhitespacePunctLower ? "whitespace-punct-lower"
                                                                        : "whitespace-only"},
      {"report_scale", c.report_scale},
      {"score_with_tags", c.score_with_tags},
      {"distinct_per_example", c.distinct_per_example},
  };
}

MetricConfig metric_config_from_json(const json& j) {
  MetricConfig c;
  try {
    c.cider_n = j.value("cider_n", c.cider_n);
    if (j.contains("cider_weights")) c.cider_weights = j["cider_weights"].get<std::vector<double>>();
    if (j.contains("rouge_beta")) {
      const auto& b = j["rouge_beta"];
      if (b.is_null() || (b.is_string() && b.get<std::string>() == "inf")) {
        c.rouge_beta = RougeBeta::infinite();
      } else {
        c.rouge_beta = RougeBeta::finite(b.get<double>());
      }
    }
    c.bleu_max_n = j.value("bleu_max_n", c.bleu_max_n);
    c.bleu_smoothing = j.value("bleu_smoothing", c.bleu_smoothing);
    if (j.contains("tokenizer")) {
      auto t = j["tokenizer"].get<std::string>();
      if (t == "whitespace-punct-lower") {
        c.tokenizer = TokenizerMode::WhitespacePunctLower;
      } else if (t == "whitespace-only") {
        c.tokenizer = TokenizerMode::WhitespaceOnly;
      } else {
        throw Error(ErrorCode::Schema, "unknown tokenizer '" + t + "'");
      }
    }
    c.report_scale = j.value("report_scale", c.report_scale);
    c.score_with_tags = j.value("score_with_tags", c.score_with_tags);
    c.distinct_per_example = j.value("distinct_per_example", c.distinct_per_example);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Schema, std::string("metric config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

double bleu(const Tokens& candidate, const std::vector<Tokens>& references, int max_n,
            bool smoothing) {
  bool any_ref = std::any_of(references.begin(), references.end(),
                             [](const Tokens& r) { return !r.empty(); });
  if (candidate.empty() || !any_ref) {
    throw Error(ErrorCode::EmptyInput, "BLEU needs a non-empty candidate and reference");
  }
  if (max_n < 1) throw Error(ErrorCode::InvalidArgument, "BLEU max_n must be >= 1");

  double log_sum = 0.0;
  const double weight = 1.0 / static_cast<double>(max_n);
  for (int n = 1; n <= max_n; ++n) {
    NgramCounts cand = count_ngrams(candidate, n);
    NgramCounts max_ref;
    for (const auto& ref : references) {
      for (const auto& [k, v] : count_ngrams(ref, n)) {
        auto& slot = max_ref[k];
        slot = std::max(slot, v);
      }
    }
    double clipped = 0.0;
    for (const auto& [k, v] : cand) {
      auto it = max_ref.find(k);
      if (it != max_ref.end()) clipped += std::min(v, it->second);
    }
    double total = candidate.size() >= static_cast<std::size_t>(n)
                       ? static_cast<double>(candidate.size() - n + 1)
                       : 0.0;
    if (smoothing) {
      clipped += 1.0;
      total += 1.0;
    }
    if (clipped == 0.0 || total == 0.0) return 0.0;
    log_sum += weight * std::log(clipped / total);
  }

  const auto c = static_cast<double>(candidate.size());
  double r = -1.0;
  for (const auto& ref : references) {
    if (ref.empty()) continue;
    auto len = static_cast<double>(ref.size());
    if (r < 0 || std::abs(len - c) < std::abs(r - c) ||
        (std::abs(len - c) == std::abs(r - c) && len < r)) {
      r = len;
    }
  }
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum);
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const Tokens& candidate, const Tokens& reference, RougeBeta beta) {
  if (candidate.empty() || reference.empty()) {
    throw Error(ErrorCode::EmptyInput, "ROUGE-L needs non-empty candidate and reference");
  }
  const auto lcs = static_cast<double>(lcs_length(candidate, reference));
  if (lcs == 0.0) return 0.0;
  const double recall = lcs / static_cast<double>(reference.size());
  const double precision = lcs / static_cast<double>(candidate.size());
  if (!beta.value) return recall;
  const double b2 = *beta.value * *beta.value;
  return (1.0 + b2) * recall * precision / (recall + b2 * precision);
}

std::vector<double> cider_per_example(const std::vector<Tokens>& candidates,
                                      const std::vector<std::vector<Tokens>>& references,
                                      const MetricConfig& config) {
  if (candidates.empty()) throw Error(ErrorCode::EmptyCorpus, "CIDEr needs at least one example");
  if (candidates.size() != references.size()) {
    throw Error(ErrorCode::LengthMismatch, "CIDEr candidates/references length mismatch");
  }
  for (const auto& refs : references) {
    if (refs.empty()) throw Error(ErrorCode::EmptyInput, "CIDEr example without references");
  }
  config.validate();
  const auto weights = config.effective_cider_weights();
  const auto n_examples = static_cast<double>(candidates.size());
  std::vector<double> scores(candidates.size(), 0.0);

  for (int n = 1; n <= config.cider_n; ++n) {
    // Document frequency over the reference sets of each example.
    std::map<std::string, int> df;
    std::vector<std::vector<NgramCounts>> ref_counts(references.size());
    for (std::size_t i = 0; i < references.size(); ++i) {
      std::set<std::string> seen;
      for (const auto& ref : references[i]) {
        ref_counts[i].push_back(count_ngrams(ref, n));
        for (const auto& [k, _] : ref_counts[i].back()) seen.insert(k);
      }
      for (const auto& k : seen) ++df[k];
    }
    auto idf = [&](const std::string& k) {
      auto it = df.find(k);
      int d = it == df.end() ? 1 : std::max(it->second, 1);
      return std::log(n_examples / static_cast<double>(d));
    };
    auto weigh = [&](const NgramCounts& counts) {
      std::map<std::string, double> v;
      for (const auto& [k, tf] : counts) v[k] = static_cast<double>(tf) * idf(k);
      return v;
    };
    auto norm = [](const std::map<std::string, double>& v) {
      double s = 0.0;
      for (const auto& [_, x] : v) s += x * x;
      return std::sqrt(s);
    };

    for (std::size_t i = 0; i < candidates.size(); ++i) {
      auto gc = weigh(count_ngrams(candidates[i], n));
      const double nc = norm(gc);
      double sum = 0.0;
      for (const auto& rc : ref_counts[i]) {
        auto gr = weigh(rc);
        const double nr = norm(gr);
        if (nc == 0.0 || nr == 0.0) continue;
        double dot = 0.0;
        for (const auto& [k, x] : gc) {
          if (auto it = gr.find(k); it != gr.end()) dot += x * it->second;
        }
        sum += dot / (nc * nr);
      }
      scores[i] += weights[n - 1] * sum / static_cast<double>(ref_counts[i].size());
    }
  }
  return scores;
}

double cider(const std::vector<Tokens>& candidates,
             const std::vector<std::vector<Tokens>>& references, const MetricConfig& config) {
  auto per = cider_per_example(candidates, references, config);
  double sum = 0.0;
  for (double s : per) sum += s;
  return sum / static_cast<double>(per.size());
}

double distinct2(const std::vector<Tokens>& candidates) {
  if (candidates.empty()) throw Error(ErrorCode::EmptyCorpus, "Distinct-2 needs candidates");
  std::set<std::pair<std::string, std::string>> distinct;
  std::size_t total = 0;
  for (const auto& c : candidates) {
    for (std::size_t i = 0; i + 1 < c.size(); ++i) {
      distinct.emplace(c[i], c[i + 1]);
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(distinct.size()) / static_cast<double>(total);
}

double distinct2_per_example(const std::vector<Tokens>& candidates) {
  if (candidates.empty()) throw Error(ErrorCode::EmptyCorpus, "Distinct-2 needs candidates");
  double sum = 0.0;
  for (const auto& c : candidates) sum += distinct2({c});
  return sum / static_cast<double>(candidates.size());
}

// ---------------------------------------------------------------------------

json to_json(const MetricReport& r) {
  return {{"bleu2", r.bleu2},     {"rougeL", r.rougeL},         {"cider", r.cider},
          {"distinct2", r.distinct2}, {"n_examples", r.n_examples}, {"config", to_json(r.config)}};
}

MetricReport metric_report_from_json(const json& j) {
  MetricReport r;
  try {
    r.bleu2 = j.at("bleu2").get<double>();
    r.rougeL = j.at("rougeL").get<double>();
    r.cider = j.at("cider").get<double>();
    r.distinct2 = j.at("distinct2").get<double>();
    r.n_examples = j.at("n_examples").get<std::size_t>();
    if (j.contains("config")) r.config = metric_config_from_json(j["config"]);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Schema, std::string("metric report: ") + e.what());
  }
  return r;
}

MetricReport evaluate_run(const std::vector<TaggedUtterance>& outputs,
                          const std::vector<std::string>& references,
                          const MetricConfig& config) {
  if (outputs.size() != references.size()) {
    throw Error(ErrorCode::LengthMismatch,
                "evaluate_run: " + std::to_string(outputs.size()) + " outputs vs " +
                    std::to_string(references.size()) + " references");
  }
  if (outputs.empty()) throw Error(ErrorCode::EmptyCorpus, "evaluate_run: no examples");
  config.validate();

  std::vector<Tokens> cands;
  std::vector<std::vector<Tokens>> refs;
  cands.reserve(outputs.size());
  refs.reserve(outputs.size());
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const std::string text = config.score_with_tags ? render(outputs[i]) : strip_tags(outputs[i]);
    cands.push_back(tokenize(text, config.tokenizer));
    refs.push_back({tokenize(references[i], config.tokenizer)});
  }

  double bleu_sum = 0.0;
  double rouge_sum = 0.0;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    if (cands[i].empty() || refs[i][0].empty()) continue;
    bleu_sum += bleu(cands[i], refs[i], config.bleu_max_n, config.bleu_smoothing);
    rouge_sum += rouge_l(cands[i], refs[i][0], config.rouge_beta);
  }
  const auto n = static_cast<double>(cands.size());

  MetricReport report;
  report.config = config;
  report.n_examples = cands.size();
  report.bleu2 = config.report_scale * bleu_sum / n;
  report.rougeL = config.report_scale * rouge_sum / n;
  report.cider = config.report_scale * cider(cands, refs, config);
  report.distinct2 = config.report_scale *
                     (config.distinct_per_example ? distinct2_per_example(cands) : distinct2(cands));
  return report;
}

}  // namespace coct::metrics
