#pragma once
// Inference-time mechanisms: code debugger, tool-use backtracer, reasoning
// chain refiner, and a rollout wrapper that applies them.

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "toolstar/generator.hpp"
#include "toolstar/rollout.hpp"
#include "toolstar/sandbox.hpp"

namespace toolstar {

extern const char* const kDebuggerTemplate;
extern const char* const kRefinerTemplate;
extern const char* const kTruncationNotice;

enum class FailureKind { CodeExecutionError, ToolInvocationFailure, LengthOverflow };

struct FailureEvent {
  FailureKind kind = FailureKind::ToolInvocationFailure;
  std::size_t at_segment = 0;
  std::string detail;
};

struct DebugAttempt {
  std::string original_code;
  std::string error_message;
  std::string revised_code;
  std::size_t attempt_index = 0;
};

struct DebugOutcome {
  // False is the GaveUp outcome; `attempts` then holds max_retries entries.
  bool fixed = false;
  std::string fixed_code;
  ExecResult exec_result;
  std::vector<DebugAttempt> attempts;
};

using CodeRunner = std::function<ExecResult(const std::string& code)>;

// Strips a surrounding ``` fence from model output.
std::string strip_code_fence(const std::string& reply);

DebugOutcome debug_code(const std::string& code, const std::string& error,
                        Generator& llm, const CodeRunner& run,
                        std::size_t max_retries = 3,
                        const std::string& prompt_template = kDebuggerTemplate);

// Offset of the last '\n' strictly before `open_offset`, or 0.
std::size_t backtrace_offset(std::string_view text, std::size_t open_offset);

// Rewind point for a failed call segment (or its result segment) of a
// rendered chain. Throws Error{InvalidSegment}.
std::size_t backtrace_position(const ReasoningChain& chain,
                               const FailureEvent& failed,
                               const TagSet& tags = TagSet::defaults());

struct RefineOptions {
  std::string prompt_template = kRefinerTemplate;
  std::size_t max_chars = 16384;
  std::string notice = kTruncationNotice;
  TagSet tags;
};

struct RefineResult {
  std::string text;
  // False when the fallback truncation was used.
  bool refined = false;
};

// Hard truncation to max_chars with the notice appended, tags repaired.
std::string truncate_with_notice(const std::string& text,
                                 const RefineOptions& options);

// A null or failing refiner falls back to truncate_with_notice.
RefineResult refine_chain(const std::string& question,
                          const std::string& chain_text, Generator* llm,
                          const RefineOptions& options = {});

struct ResiliencePolicies {
  bool debugger = true;
  bool backtracer = true;
  bool refiner = true;
  std::size_t debug_max_retries = 3;
  std::size_t backtrace_limit = 2;
  std::size_t max_refinements = 1;
  std::string debugger_template = kDebuggerTemplate;
  std::string refiner_template = kRefinerTemplate;
  std::string truncation_notice = kTruncationNotice;

  static ResiliencePolicies none();
};

struct ResilienceModels {
  std::shared_ptr<Generator> debugger;
  std::shared_ptr<Generator> refiner;
};

Trajectory robust_rollout(const RolloutInput& input, Generator& generator,
                          ToolRegistry& registry, const RolloutConfig& cfg,
                          const ResiliencePolicies& policies,
                          const ResilienceModels& models = {});

// G robust rollouts with seeds cfg.seed + i, run one after another.
GroupRollout robust_group(const RolloutInput& input, Generator& generator,
                          ToolRegistry& registry, const RolloutConfig& cfg,
                          const ResiliencePolicies& policies,
                          const ResilienceModels& models = {});

}  // namespace toolstar
