#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "coct/backend.hpp"
#include "coct/cli.hpp"

namespace coct::testing {

inline std::string data_path(const std::string& name) { return std::string(COCT_TEST_DATA) + "/" + name; }

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Backend answering through a callback; counts calls.
class FnBackend final : public Backend {
 public:
  using Fn = std::function<std::string(const ChatRequest&)>;
  explicit FnBackend(Fn fn, std::size_t in_flight = 8) : fn_(std::move(fn)), in_flight_(in_flight) {}

  Completion complete(const ChatRequest& request) const override {
    ++calls_;
    Completion c;
    c.content = fn_(request);
    return c;
  }
  std::size_t max_in_flight() const override { return in_flight_; }
  std::size_t calls() const { return calls_.load(); }

 private:
  Fn fn_;
  std::size_t in_flight_;
  mutable std::atomic<std::size_t> calls_{0};
};

inline BackendHandle fn_backend(FnBackend::Fn fn, std::size_t token_budget = 4096) {
  BackendHandle h;
  h.impl = std::make_shared<FnBackend>(std::move(fn));
  h.token_budget = token_budget;
  return h;
}

inline const std::string& last_user(const ChatRequest& r) {
  for (auto it = r.messages.rbegin(); it != r.messages.rend(); ++it) {
    if (it->role == Role::User) return it->content;
  }
  static const std::string empty;
  return empty;
}

inline const std::string& system_of(const ChatRequest& r) {
  static const std::string empty;
  return !r.messages.empty() && r.messages.front().role == Role::System ? r.messages.front().content : empty;
}

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

inline CliResult run_cli(const std::vector<std::string>& args, const std::string& input = {}) {
  std::istringstream in(input);
  std::ostringstream out, err;
  cli::Terminal term{in, out, err, false};
  CliResult r;
  r.code = cli::run_cli(args, term);
  r.out = out.str();
  r.err = err.str();
  return r;
}

/// Fresh scratch directory under the build tree.
inline std::string scratch_dir(const std::string& name) {
  static std::atomic<int> counter{0};
  std::string dir = std::string(COCT_TEST_SCRATCH) + "/" + name + "-" + std::to_string(counter++);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace coct::testing
