#pragma once
// The generate / detect call / invoke / insert feedback loop.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "toolstar/generator.hpp"
#include "toolstar/protocol.hpp"
#include "toolstar/toolkit.hpp"

namespace toolstar {

extern const char* const kDefaultInstruction;
extern const char* const kDefaultBudgetNotice;
extern const char* const kDefaultToolsDisabledNotice;

enum class CacheScope { Rollout, Run };

const char* to_string(CacheScope scope);
CacheScope cache_scope_from_string(std::string_view s);

struct RolloutConfig {
  std::size_t max_tool_calls = 3;
  // Token budget expressed in characters.
  std::size_t max_tokens = 4096;
  std::size_t chars_per_token = 4;
  std::size_t max_chars = 16384;
  std::size_t group_size = 8;
  double temperature = 0.7;
  double top_p = 0.95;
  std::uint64_t seed = 0;
  // Calls answered with the budget notice before the rollout is stopped.
  std::size_t post_budget_calls = 2;
  // Hard cap on generator calls per rollout.
  std::size_t max_turns = 32;
  std::string budget_notice = kDefaultBudgetNotice;
  CacheScope cache_scope = CacheScope::Run;
  // Members of a group run concurrently up to this many threads.
  std::size_t parallelism = 1;
  std::string instruction = kDefaultInstruction;
  std::optional<SearchRouting> search_routing;
  TagSet tags;

  void validate() const;
};

enum class StopReason {
  AnswerEmitted,
  ToolBudgetExhausted,
  LengthExceeded,
  GeneratorEnded
};

const char* to_string(StopReason reason);
StopReason stop_reason_from_string(std::string_view s);

struct ToolCallRecord {
  ToolRequest request;
  ToolFeedback feedback;
  // Offset of the inserted result block in the rendered chain.
  std::size_t offset = 0;
};

struct Intervention {
  std::string kind;  // "debug", "backtrace", "refine", "truncate"
  std::string detail;
  std::size_t offset = 0;

  bool operator==(const Intervention&) const = default;
};

struct Trajectory {
  std::string id;
  std::string question;
  std::string gold;
  ReasoningChain chain;
  std::vector<ToolCallRecord> tool_calls;
  StopReason stop_reason = StopReason::GeneratorEnded;
  std::vector<CharSpan> mask;
  std::vector<TokenLogprob> logprobs;
  std::uint64_t seed = 0;
  std::vector<Intervention> interventions;

  std::string text(const TagSet& tags = TagSet::defaults()) const {
    return render_chain(chain, tags);
  }
};

// Engine-side view of the working text handed to hooks.
struct RolloutState {
  const std::string& text;
  // End of the last engine-inserted block; rewinds never cut below it.
  std::size_t committed;
  std::size_t tool_calls;
};

struct OverflowAction {
  std::string text;
  // False ends the rollout with LengthExceeded after replacing the text.
  bool resume = false;
  // Tool calls after the replacement are answered with a notice.
  bool disable_tools = true;
};

// Extension points used by the resilience wrapper. Defaults do nothing.
class RolloutHooks {
 public:
  virtual ~RolloutHooks() = default;
  // May rewrite feedback (and log) after a tool runs.
  virtual void after_tool(const RolloutState&, const PendingCall&,
                          ToolRequest&, ToolFeedback&,
                          std::vector<Intervention>&) {}
  // Offset to rewind to instead of inserting this feedback.
  virtual std::optional<std::size_t> rewind_after_failure(
      const RolloutState&, const PendingCall&, const ToolFeedback&,
      std::vector<Intervention>&) {
    return std::nullopt;
  }
  virtual std::optional<OverflowAction> on_overflow(
      const RolloutState&, std::vector<Intervention>&) {
    return std::nullopt;
  }
};

struct RolloutInput {
  std::string id;
  std::string question;
  std::string gold;
  // Model text to resume from (hint-based sampling).
  std::string prefix;
};

Trajectory run_rollout(const RolloutInput& input, Generator& generator,
                       ToolRegistry& registry, const RolloutConfig& cfg,
                       RolloutHooks* hooks = nullptr,
                       ToolCache* cache = nullptr);

Trajectory run_rollout(const std::string& query, Generator& generator,
                       ToolRegistry& registry, const RolloutConfig& cfg);

struct GroupRollout {
  std::string query;
  std::vector<Trajectory> members;
  std::vector<double> rewards;
  std::vector<double> advantages;
};

GroupRollout run_group(const RolloutInput& input, Generator& generator,
                       ToolRegistry& registry, const RolloutConfig& cfg,
                       RolloutHooks* hooks = nullptr);

GroupRollout run_group(const std::string& query, Generator& generator,
                       ToolRegistry& registry, const RolloutConfig& cfg);

std::vector<CharSpan> feedback_mask(const Trajectory& traj);

// Text of the trajectory outside / inside the mask.
std::string unmasked_text(const Trajectory& traj,
                          const TagSet& tags = TagSet::defaults());
std::string masked_text(const Trajectory& traj,
                        const TagSet& tags = TagSet::defaults());

// Builds a chain from a text whose engine-inserted regions are known. Falls
// back to one bare segment per unparseable model piece.
ReasoningChain build_chain(const std::string& text,
                           const std::vector<CharSpan>& engine_spans,
                           const TagSet& tags = TagSet::defaults());

// Wraps feedback as a result block, removing tag literals from the body.
std::string format_result_block(const std::string& feedback,
                                const TagSet& tags = TagSet::defaults());

}  // namespace toolstar
