#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "coct/concepts.hpp"

namespace coct::metrics {

using Tokens = std::vector<std::string>;

enum class TokenizerMode { WhitespacePunctLower, WhitespaceOnly };

/// Default mode lowercases ASCII, splits punctuation into standalone tokens
/// and keeps apostrophe clitics attached to the letters that follow
/// ("It's" -> "it", "'s").
Tokens tokenize(std::string_view text, TokenizerMode mode = TokenizerMode::WhitespacePunctLower);

/// ROUGE-L beta; an empty value is the infinite sentinel (F reduces to R).
struct RougeBeta {
  std::optional<double> value;
  static RougeBeta infinite() { return {}; }
  static RougeBeta finite(double b) { return {b}; }
};

struct MetricConfig {
  int cider_n = 4;
  std::vector<double> cider_weights;  // empty: uniform 1/N
  RougeBeta rouge_beta = RougeBeta::infinite();
  int bleu_max_n = 2;
  bool bleu_smoothing = false;
  TokenizerMode tokenizer = TokenizerMode::WhitespacePunctLower;
  double report_scale = 100.0;
  bool score_with_tags = false;
  bool distinct_per_example = false;

  std::vector<double> effective_cider_weights() const;
  /// Throws InvalidArgument on broken invariants.
  void validate() const;
};

nlohmann::json to_json(const MetricConfig& c);
MetricConfig metric_config_from_json(const nlohmann::json& j);

/// Modified n-gram precision BLEU with uniform weights over n = 1..max_n.
double bleu(const Tokens& candidate, const std::vector<Tokens>& references, int max_n = 2,
            bool smoothing = false);
inline double bleu2(const Tokens& candidate, const std::vector<Tokens>& references,
                    bool smoothing = false) {
  return bleu(candidate, references, 2, smoothing);
}

std::size_t lcs_length(const Tokens& a, const Tokens& b);
double rouge_l(const Tokens& candidate, const Tokens& reference,
               RougeBeta beta = RougeBeta::infinite());

/// Corpus mean of per-example CIDEr with idf from the reference sets.
double cider(const std::vector<Tokens>& candidates,
             const std::vector<std::vector<Tokens>>& references, const MetricConfig& config = {});
/// Per-example CIDEr values (same idf), in input order.
std::vector<double> cider_per_example(const std::vector<Tokens>& candidates,
                                      const std::vector<std::vector<Tokens>>& references,
                                      const MetricConfig& config = {});

/// Distinct bigrams / total bigrams across the corpus; 0 when there are none.
double distinct2(const std::vector<Tokens>& candidates);
/// Mean of per-example Distinct-2.
double distinct2_per_example(const std::vector<Tokens>& candidates);

struct MetricReport {
  double bleu2 = 0;
  double rougeL = 0;
  double cider = 0;
  double distinct2 = 0;
  std::size_t n_examples = 0;
  MetricConfig config;
};

nlohmann::json to_json(const MetricReport& r);
MetricReport metric_report_from_json(const nlohmann::json& j);

/// Strips tags (unless `score_with_tags`), tokenizes and scores. BLEU-2 and
/// ROUGE-L are per-example means; CIDEr and Distinct-2 are corpus level.
/// Examples with an empty candidate score 0 on the per-example metrics.
MetricReport evaluate_run(const std::vector<TaggedUtterance>& outputs,
                          const std::vector<std::string>& references,
                          const MetricConfig& config = {});

}  // namespace coct::metrics
