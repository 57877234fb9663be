#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "coct/concepts.hpp"
#include "coct/corpus.hpp"
#include "coct/metrics.hpp"
#include "coct/strategies.hpp"

namespace coct::cli {

/// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kInputError = 3,
  kTooManyFailures = 4,
};

struct BackendConfig {
  std::optional<std::string> endpoint;
  std::optional<std::string> mock;  // mock script path
  std::string model = "default";
  std::size_t token_budget = 4096;
  int timeout_s = 60;
  int max_attempts = 3;
  std::size_t max_in_flight = 4;
};

struct StrategyConfig {
  StrategyKind kind = StrategyKind::CoCT;
  double temperature = 0.0;
  int max_tokens = 512;
  int tot_breadth = 3;
  int tot_depth = 2;
  int csim_lookahead = 2;
  std::size_t rag_k = 3;
  std::size_t sot_max_points = 8;
  std::optional<std::string> templates;  // directory of <field>.txt overrides
};

struct JudgeConfig {
  bool debias = true;
  std::optional<std::string> model;  // defaults to backend.model
};

struct SimulateConfig {
  std::size_t episodes = 5;
  std::size_t max_rounds = 10;
  std::vector<std::string> stop_markers{"[END]", "goodbye"};
  std::vector<std::string> topics;  // cycled over episodes
  std::optional<std::string> persona;
  std::optional<std::string> user_model;
  std::optional<std::string> user_mock;  // separate mock script for the simulated user
};

/// Everything a command needs. Loaded from JSON, then overridden by flags.
struct RunConfig {
  BackendConfig backend;
  StrategyConfig strategy;
  std::optional<std::string> concepts;  // builtin id or file path
  TagStyle tag_style = TagStyle::angle();
  metrics::MetricConfig metrics;
  std::optional<std::string> corpus;
  std::optional<std::string> out;
  std::optional<std::string> report;
  std::string sampling = "all";
  corpus::Speaker target = corpus::Speaker::Supporter;
  std::size_t parallelism = 4;
  std::optional<long long> seed;
  bool record_timing = false;
  JudgeConfig judge;
  SimulateConfig simulate;

  /// Throws InvalidArgument / NotFound. With `needs_backend`, exactly one of
  /// mock, endpoint or COCT_ENDPOINT must be available.
  void validate(bool needs_backend) const;
  GenerationParams generation_params() const;
};

/// Unknown keys are rejected with Schema.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& c);
RunConfig load_run_config(const std::string& path);

/// Builds the backend named by the config: the mock script or the live endpoint.
BackendHandle make_backend(const RunConfig& c);

struct Terminal {
  std::istream& in;
  std::ostream& out;
  std::ostream& err;
  bool color = false;  // ANSI highlighting of tags in chat
};

/// Entry point shared by the executable and the tests. `args` excludes argv[0].
int run_cli(const std::vector<std::string>& args, Terminal& term);

}  // namespace coct::cli
