#include "toolstar/sandbox.hpp"

#include <json.hpp>

#include "toolstar/process.hpp"
#include "toolstar/serialize.hpp"
#include "toolstar/text.hpp"

namespace toolstar {

using json = nlohmann::json;

ExecResult execute_code(Sandbox& sandbox, const std::string& code,
                        const ExecLimits& limits) {
  return sandbox.run(code, limits);
}

ExecResult parse_driver_result(const std::string& line) {
  try {
    const json j = json::parse(line);
    ExecResult r;
    r.stdout_text = j.at("stdout").get<std::string>();
    r.stderr_text = j.at("stderr").get<std::string>();
    r.exit_ok = j.at("exit_ok").get<bool>();
    r.timed_out = j.at("timed_out").get<bool>();
    r.wall_ms = j.value("wall_ms", std::uint64_t{0});
    if (r.timed_out) r.exit_ok = false;
    return r;
  } catch (const json::exception& e) {
    throw Error(Errc::SandboxUnavailable,
                std::string("malformed driver result: ") + e.what());
  }
}

DriverSandbox::DriverSandbox(std::vector<std::string> argv,
                             std::chrono::milliseconds grace)
    : argv_(std::move(argv)), grace_(grace) {}

ExecResult DriverSandbox::run(const std::string& code,
                              const ExecLimits& limits) {
  std::vector<std::string> argv = argv_;
  argv.insert(argv.end(), {"--timeout-s", std::to_string(limits.timeout_s),
                           "--mem-mb", std::to_string(limits.mem_mb)});
  ProcessResult proc;
  try {
    proc = run_process(argv, code,
                       std::chrono::seconds(limits.timeout_s) + grace_);
  } catch (const Error& e) {
    throw Error(Errc::SandboxUnavailable, e.what());
  }
  if (proc.timed_out) {
    ExecResult r;
    r.timed_out = true;
    r.stderr_text = "TimeoutError: execution exceeded " +
                    std::to_string(limits.timeout_s) + " seconds";
    r.wall_ms = proc.wall_ms;
    return r;
  }
  if (proc.signaled || proc.exit_code != 0) {
    throw Error(Errc::SandboxUnavailable,
                "sandbox driver failed (exit " + std::to_string(proc.exit_code) +
                    "): " + text::trim(proc.err));
  }
  const auto lines = text::split_lines(proc.out);
  for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
    if (!text::is_blank(*it)) return parse_driver_result(*it);
  }
  throw Error(Errc::SandboxUnavailable, "sandbox driver produced no result");
}

ScriptedSandbox::ScriptedSandbox(std::vector<Rule> rules) {
  for (auto& r : rules) add(std::move(r));
}

void ScriptedSandbox::add(Rule rule) {
  rule.code = normalize_payload(TagKind::Python, rule.code);
  std::lock_guard guard(mu_);
  rules_.push_back(std::move(rule));
}

ExecResult ScriptedSandbox::run(const std::string& code, const ExecLimits&) {
  executions_.fetch_add(1);
  const std::string norm = normalize_payload(TagKind::Python, code);
  std::lock_guard guard(mu_);
  for (const auto& r : rules_) {
    if (r.substring ? norm.find(r.code) != std::string::npos : norm == r.code) {
      return r.result;
    }
  }
  ExecResult miss;
  miss.stderr_text =
      "Traceback (most recent call last):\nNameError: no scripted result for "
      "this code";
  return miss;
}

ToolFeedback exec_feedback(const ExecResult& result, const ExecLimits& limits) {
  ToolFeedback fb;
  if (result.timed_out) {
    fb.is_error = true;
    fb.text = "TimeoutError: execution exceeded " +
              std::to_string(limits.timeout_s) + " seconds";
    return fb;
  }
  if (!result.exit_ok) {
    fb.is_error = true;
    std::string err = text::trim(result.stderr_text);
    if (err.empty()) err = "execution failed";
    const std::string out = text::trim(result.stdout_text);
    fb.text = out.empty() ? err : out + "\n" + err;
    return fb;
  }
  std::string out = result.stdout_text;
  while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) {
    out.pop_back();
  }
  fb.text = std::move(out);
  return fb;
}

CodeTool::CodeTool(std::shared_ptr<Sandbox> sandbox, ExecLimits limits)
    : sandbox_(std::move(sandbox)), limits_(limits) {}

ToolFeedback CodeTool::execute(const ToolRequest& request) {
  return exec_feedback(sandbox_->run(request.payload, limits_), limits_);
}

std::vector<ScriptedSandbox::Rule> load_sandbox_table(const std::filesystem::path& path) {
  const json j = read_json(path);
  if (!j.is_array()) throw Error(Errc::Schema, path.string() + ": expected an array");
  std::vector<ScriptedSandbox::Rule> rules;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const json& r = j[i];
    try {
      ScriptedSandbox::Rule rule;
      rule.code = r.at("code").get<std::string>();
      rule.substring = r.value("substring", false);
      rule.result.stdout_text = r.value("stdout", "");
      rule.result.stderr_text = r.value("stderr", "");
      rule.result.exit_ok = r.value("exit_ok", rule.result.stderr_text.empty());
      rule.result.timed_out = r.value("timed_out", false);
      rules.push_back(std::move(rule));
    } catch (const json::exception& e) {
      throw Error(Errc::Schema, path.string() + ": rule " + std::to_string(i) + ": " + e.what());
    }
  }
  return rules;
}

}  // namespace toolstar
