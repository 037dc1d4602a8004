#pragma once
// Code interpreter tool: sandbox contract, the child-process driver client
// and a rule-table fake.

#include <atomic>
#include <chrono>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "toolstar/toolkit.hpp"

namespace toolstar {

struct ExecLimits {
  int timeout_s = 5;
  int mem_mb = 512;
};

struct ExecResult {
  std::string stdout_text;
  std::string stderr_text;
  bool exit_ok = false;
  bool timed_out = false;
  std::uint64_t wall_ms = 0;

  bool operator==(const ExecResult&) const = default;
};

class Sandbox {
 public:
  virtual ~Sandbox() = default;
  // Throws Error{SandboxUnavailable}; resource violations are reported in
  // the result.
  virtual ExecResult run(const std::string& code, const ExecLimits& limits) = 0;
};

ExecResult execute_code(Sandbox& sandbox, const std::string& code,
                        const ExecLimits& limits = {});

// Spawns `argv --timeout-s N --mem-mb M` per execution, writes the code to
// stdin and reads the JSON record on the last stdout line. The child is
// killed after timeout_s + grace.
class DriverSandbox final : public Sandbox {
 public:
  explicit DriverSandbox(std::vector<std::string> argv,
                         std::chrono::milliseconds grace =
                             std::chrono::milliseconds(2000));
  ExecResult run(const std::string& code, const ExecLimits& limits) override;

 private:
  std::vector<std::string> argv_;
  std::chrono::milliseconds grace_;
};

// Parses one driver result line. Throws Error{SandboxUnavailable}.
ExecResult parse_driver_result(const std::string& line);

// Canned results. A rule matches when the normalized code equals `code`, or
// contains it when `substring` is set. Unmatched code yields a NameError-style
// failure.
class ScriptedSandbox final : public Sandbox {
 public:
  struct Rule {
    std::string code;
    ExecResult result;
    bool substring = false;
  };

  explicit ScriptedSandbox(std::vector<Rule> rules = {});
  void add(Rule rule);
  ExecResult run(const std::string& code, const ExecLimits& limits) override;
  std::uint64_t executions() const { return executions_.load(); }

 private:
  std::mutex mu_;
  std::vector<Rule> rules_;
  std::atomic<std::uint64_t> executions_{0};
};

// Maps execution results to feedback: stdout on success, stderr (is_error)
// on failure, a timeout message when the limit is hit.
class CodeTool final : public Tool {
 public:
  explicit CodeTool(std::shared_ptr<Sandbox> sandbox, ExecLimits limits = {});
  ToolFeedback execute(const ToolRequest& request) override;
  const ExecLimits& limits() const { return limits_; }
  Sandbox& sandbox() { return *sandbox_; }

 private:
  std::shared_ptr<Sandbox> sandbox_;
  ExecLimits limits_;
};

ToolFeedback exec_feedback(const ExecResult& result, const ExecLimits& limits);

// JSON array of {"code","stdout","stderr"?,"exit_ok"?,"timed_out"?,"substring"?}.
// Throws Error{Schema}.
std::vector<ScriptedSandbox::Rule> load_sandbox_table(const std::filesystem::path& path);

}  // namespace toolstar
