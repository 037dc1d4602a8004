#include "toolstar/resilience.hpp"

#include <algorithm>

#include "toolstar/errors.hpp"
#include "toolstar/text.hpp"

namespace toolstar {

const char* const kDebuggerTemplate =
    "You are a code expert. I need you to debug the following code. Below are "
    "the code originally generated by the model and the error information that "
    "occurred during code execution. Please output ONLY the corrected Python "
    "code, without any explanation or markdown formatting:\n\n**Inputs:**\n\n"
    "**Original Code:**\n{code}\n\n**Execution Error:**\n{error}\n\n"
    "Output the corrected Python code only, without any explanation or "
    "markdown formatting:";

const char* const kRefinerTemplate =
    "You are an expert in response refinement. Given a prompt and its "
    "corresponding response, your task is to compress and restructure the "
    "response by removing redundant, repetitive, or irrelevant content. "
    "Preserve all key information needed to directly and accurately address "
    "the original prompt. Only output your revised response and do not output "
    "anything else.\n**Original Prompt:**\n{prompt}\n**Original Response:**\n"
    "{response}\n**Revised Response:**";

const char* const kTruncationNotice =
    "[Reasoning truncated: the response exceeded the length limit.]";

std::string strip_code_fence(const std::string& reply) {
  std::string s = text::trim(reply);
  if (!text::starts_with(s, "```")) return s;
  const auto nl = s.find('\n');
  if (nl == std::string::npos) return "";
  s.erase(0, nl + 1);
  const auto close = s.rfind("```");
  if (close != std::string::npos) s.erase(close);
  return text::trim(s);
}

DebugOutcome debug_code(const std::string& code, const std::string& error,
                        Generator& llm, const CodeRunner& run,
                        std::size_t max_retries,
                        const std::string& prompt_template) {
  DebugOutcome out;
  std::string current = code;
  std::string err = error;
  for (std::size_t i = 1; i <= max_retries; ++i) {
    DebugAttempt attempt{current, err, {}, i};
    std::string revised;
    try {
      revised = strip_code_fence(complete_prompt(
          llm, text::fill_template(prompt_template,
                                   {{"code", current}, {"error", err}}),
          i));
    } catch (const std::exception& e) {
      attempt.revised_code.clear();
      out.attempts.push_back(std::move(attempt));
      err = e.what();
      continue;
    }
    attempt.revised_code = revised;
    out.attempts.push_back(attempt);
    ExecResult r = run(revised);
    if (r.exit_ok && !r.timed_out) {
      out.fixed = true;
      out.fixed_code = revised;
      out.exec_result = std::move(r);
      return out;
    }
    current = revised;
    err = r.timed_out ? "TimeoutError: execution timed out" : text::trim(r.stderr_text);
    out.exec_result = std::move(r);
  }
  return out;
}

std::size_t backtrace_offset(std::string_view text, std::size_t open_offset) {
  if (open_offset == 0 || text.empty()) return 0;
  const std::size_t limit = std::min(open_offset, text.size());
  const auto nl = text.substr(0, limit).rfind('\n');
  return nl == std::string_view::npos ? 0 : nl;
}

std::size_t backtrace_position(const ReasoningChain& chain,
                               const FailureEvent& failed, const TagSet& tags) {
  if (failed.at_segment >= chain.segments.size()) {
    throw Error(Errc::InvalidSegment,
                "segment " + std::to_string(failed.at_segment) + " out of range");
  }
  std::size_t idx = failed.at_segment;
  const Segment* seg = &chain.segments[idx];
  if (seg->tagged && seg->kind == TagKind::Result && idx > 0) {
    seg = &chain.segments[--idx];
  }
  if (!seg->tagged || !is_tool_call(seg->kind)) {
    throw Error(Errc::InvalidSegment, "segment " + std::to_string(failed.at_segment) +
                                          " is not a tool call");
  }
  ReasoningChain copy = chain;
  reindex_chain(copy, tags);
  return backtrace_offset(render_chain(copy, tags), copy.segments[idx].span.begin);
}

std::string truncate_with_notice(const std::string& text,
                                 const RefineOptions& options) {
  const std::string tail = "\n" + options.notice;
  std::size_t keep =
      options.max_chars > tail.size() ? options.max_chars - tail.size() : 0;
  std::string head = repair_tags(truncate_utf8(text, keep), options.tags);
  while (!head.empty() && text::is_space(head.back())) head.pop_back();
  std::string out = head + tail;
  if (out.size() > options.max_chars) out = truncate_utf8(out, options.max_chars);
  return out;
}

RefineResult refine_chain(const std::string& question,
                          const std::string& chain_text, Generator* llm,
                          const RefineOptions& options) {
  if (llm != nullptr) {
    try {
      std::string revised = text::trim(complete_prompt(
          *llm, text::fill_template(options.prompt_template,
                                    {{"prompt", question}, {"response", chain_text}})));
      revised = repair_tags(revised, options.tags);
      // The refined chain must leave room to continue.
      if (!revised.empty() && revised.size() < options.max_chars) {
        return {revised, true};
      }
    } catch (const std::exception&) {
    }
  }
  return {truncate_with_notice(chain_text, options), false};
}

ResiliencePolicies ResiliencePolicies::none() {
  ResiliencePolicies p;
  p.debugger = false;
  p.backtracer = false;
  p.refiner = false;
  return p;
}

namespace {

class ResilienceHooks final : public RolloutHooks {
 public:
  ResilienceHooks(const RolloutInput& input, ToolRegistry& registry,
                  const RolloutConfig& cfg, const ResiliencePolicies& policies,
                  const ResilienceModels& models)
      : input_(input),
        registry_(registry),
        cfg_(cfg),
        policies_(policies),
        models_(models) {}

  void after_tool(const RolloutState& state, const PendingCall&, ToolRequest& req,
                  ToolFeedback& fb, std::vector<Intervention>& log) override {
    if (!policies_.debugger || !models_.debugger || req.kind != TagKind::Python ||
        !fb.is_error) {
      return;
    }
    CodeRunner runner = [&](const std::string& code) {
      const ToolFeedback r = registry_.invoke(ToolRequest::make(TagKind::Python, code));
      ExecResult e;
      e.exit_ok = !r.is_error;
      (r.is_error ? e.stderr_text : e.stdout_text) = r.text;
      return e;
    };
    const DebugOutcome out = debug_code(req.payload, fb.text, *models_.debugger,
                                        runner, policies_.debug_max_retries,
                                        policies_.debugger_template);
    if (out.fixed) {
      fb = ToolFeedback{};
      fb.text = exec_feedback(out.exec_result, ExecLimits{}).text;
      log.push_back({"debug", "fixed on attempt " +
                                  std::to_string(out.attempts.size()),
                     state.text.size()});
    } else {
      log.push_back({"debug", "gave up after " +
                                  std::to_string(out.attempts.size()) + " attempts",
                     state.text.size()});
    }
  }

  std::optional<std::size_t> rewind_after_failure(
      const RolloutState& state, const PendingCall& call, const ToolFeedback& fb,
      std::vector<Intervention>& log) override {
    if (!policies_.backtracer || backtraces_ >= policies_.backtrace_limit) {
      return std::nullopt;
    }
    if (!fb.is_error && !text::is_blank(fb.text)) return std::nullopt;
    ++backtraces_;
    const std::size_t nl = backtrace_offset(state.text, call.begin_offset);
    // The resume prefix keeps the newline itself.
    const std::size_t resume =
        nl < state.text.size() && state.text[nl] == '\n' ? nl + 1 : 0;
    log.push_back({"backtrace",
                   std::string(to_string(call.kind)) + " call failed: " +
                       (fb.is_error ? fb.text : std::string("empty feedback")),
                   std::max(resume, state.committed)});
    return resume;
  }

  std::optional<OverflowAction> on_overflow(const RolloutState& state,
                                            std::vector<Intervention>& log) override {
    if (!policies_.refiner) return std::nullopt;
    RefineOptions opts;
    opts.prompt_template = policies_.refiner_template;
    opts.max_chars = cfg_.max_chars;
    opts.notice = policies_.truncation_notice;
    opts.tags = cfg_.tags;
    if (refinements_ < policies_.max_refinements) {
      ++refinements_;
      RefineResult r = refine_chain(input_.question, state.text,
                                    models_.refiner.get(), opts);
      log.push_back({r.refined ? "refine" : "truncate",
                     std::to_string(state.text.size()) + " -> " +
                         std::to_string(r.text.size()) + " chars",
                     0});
      return OverflowAction{std::move(r.text), r.refined, true};
    }
    std::string cut = truncate_with_notice(state.text, opts);
    log.push_back({"truncate",
                   std::to_string(state.text.size()) + " -> " +
                       std::to_string(cut.size()) + " chars",
                   0});
    return OverflowAction{std::move(cut), false, true};
  }

 private:
  const RolloutInput& input_;
  ToolRegistry& registry_;
  const RolloutConfig& cfg_;
  const ResiliencePolicies& policies_;
  const ResilienceModels& models_;
  std::size_t backtraces_ = 0;
  std::size_t refinements_ = 0;
};

}  // namespace

Trajectory robust_rollout(const RolloutInput& input, Generator& generator,
                          ToolRegistry& registry, const RolloutConfig& cfg,
                          const ResiliencePolicies& policies,
                          const ResilienceModels& models) {
  ResilienceHooks hooks(input, registry, cfg, policies, models);
  return run_rollout(input, generator, registry, cfg, &hooks);
}

GroupRollout robust_group(const RolloutInput& input, Generator& generator,
                          ToolRegistry& registry, const RolloutConfig& cfg,
                          const ResiliencePolicies& policies,
                          const ResilienceModels& models) {
  cfg.validate();
  GroupRollout g;
  g.query = input.question;
  for (std::size_t i = 0; i < cfg.group_size; ++i) {
    RolloutConfig c = cfg;
    c.seed = cfg.seed + i;
    try {
      g.members.push_back(robust_rollout(input, generator, registry, c, policies, models));
    } catch (const std::exception& e) {
      Trajectory t;
      t.id = input.id;
      t.question = input.question;
      t.gold = input.gold;
      t.seed = c.seed;
      t.interventions.push_back({"error", e.what(), 0});
      g.members.push_back(std::move(t));
    }
  }
  g.rewards.assign(cfg.group_size, 0.0);
  g.advantages.assign(cfg.group_size, 0.0);
  return g;
}

}  // namespace toolstar
