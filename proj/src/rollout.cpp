#include "toolstar/rollout.hpp"

#include <algorithm>
#include <future>
#include <thread>

#include "toolstar/text.hpp"

namespace toolstar {

const char* const kDefaultInstruction =
    "You are a helpful assistant that can solve the given question step by "
    "step with the help of the wikipedia search tool and python interpreter "
    "tool. Given a question, you need to first think about the reasoning "
    "process in the mind and then provide the answer. During thinking, you can "
    "invoke the wikipedia search tool to search and python interpreter tool to "
    "calculate the math problem for fact information about specific topics if "
    "needed. The reasoning process and answer are enclosed within <think> "
    "</think> and <answer> </answer> tags respectively, and the search query "
    "and result are enclosed within <search> </search> and <result> </result> "
    "tags respectively. After receiving the search or python result, you "
    "should continue your reasoning process begin with <think>. For example, "
    "<think> This is the reasoning process. </think> <search> search query "
    "here </search> <result> search result here </result> <think> This is the "
    "reasoning process. </think> <python> python code here </python> <result> "
    "python interpreter result here </result> <think> This is the reasoning "
    "process. </think> <answer> The final answer is \\[ \\boxed{answer here} "
    "\\] </answer>. In the last part of the answer, the final exact answer is "
    "enclosed within \\boxed{} with latex format.";

const char* const kDefaultBudgetNotice =
    "The tool-call budget for this question is exhausted. Continue reasoning "
    "without tools and give the final answer.";

const char* const kDefaultToolsDisabledNotice =
    "Tools are disabled for the rest of this response. Continue reasoning "
    "without tools and give the final answer.";

const char* to_string(CacheScope scope) {
  return scope == CacheScope::Rollout ? "rollout" : "run";
}

CacheScope cache_scope_from_string(std::string_view s) {
  if (s == "rollout") return CacheScope::Rollout;
  if (s == "run") return CacheScope::Run;
  throw Error(Errc::Config, "unknown cache scope: " + std::string(s));
}

void RolloutConfig::validate() const {
  if (max_tool_calls < 1) throw Error(Errc::Config, "max_tool_calls must be >= 1");
  if (group_size < 1) throw Error(Errc::Config, "group_size must be >= 1");
  if (max_chars < 1) throw Error(Errc::Config, "max_chars must be >= 1");
  if (max_turns < 1) throw Error(Errc::Config, "max_turns must be >= 1");
}

const char* to_string(StopReason reason) {
  switch (reason) {
    case StopReason::AnswerEmitted: return "AnswerEmitted";
    case StopReason::ToolBudgetExhausted: return "ToolBudgetExhausted";
    case StopReason::LengthExceeded: return "LengthExceeded";
    case StopReason::GeneratorEnded: return "GeneratorEnded";
  }
  return "GeneratorEnded";
}

StopReason stop_reason_from_string(std::string_view s) {
  for (auto r : {StopReason::AnswerEmitted, StopReason::ToolBudgetExhausted,
                 StopReason::LengthExceeded, StopReason::GeneratorEnded}) {
    if (s == to_string(r)) return r;
  }
  throw Error(Errc::Schema, "unknown stop reason: " + std::string(s));
}

std::string format_result_block(const std::string& feedback,
                                const TagSet& tags) {
  std::string body = feedback;
  for (bool changed = true; changed;) {
    changed = false;
    for (TagKind k : kAllTagKinds) {
      for (const std::string* lit : {&tags.open(k), &tags.close(k)}) {
        for (auto pos = body.find(*lit); pos != std::string::npos;
             pos = body.find(*lit, pos)) {
          body.erase(pos, lit->size());
          changed = true;
        }
      }
    }
  }
  return tags.open(TagKind::Result) + "\n" + body + "\n" +
         tags.close(TagKind::Result);
}

namespace {

bool span_listed(const CharSpan& span, const std::vector<CharSpan>& spans) {
  return std::find(spans.begin(), spans.end(), span) != spans.end();
}

// Appends `piece` (model text) to `chain`, parsed when possible.
void append_model_piece(ReasoningChain& chain, std::string& lead,
                        std::string_view piece, const TagSet& tags) {
  if (piece.empty()) return;
  try {
    ReasoningChain part = parse_chain(piece, tags);
    for (auto& s : part.segments) {
      s.origin = Origin::ModelGenerated;
      s.lead = lead + s.lead;
      lead.clear();
      chain.segments.push_back(std::move(s));
    }
    lead += part.trailing;
  } catch (const ParseError&) {
    Segment s;
    s.kind = TagKind::Think;
    s.tagged = false;
    s.lead = std::move(lead);
    lead.clear();
    s.text = std::string(piece);
    chain.segments.push_back(std::move(s));
  }
}

}  // namespace

ReasoningChain build_chain(const std::string& text,
                           const std::vector<CharSpan>& engine_spans,
                           const TagSet& tags) {
  ReasoningChain chain;
  try {
    chain = parse_chain(text, tags);
    bool consistent = true;
    std::size_t engine_found = 0;
    for (auto& s : chain.segments) {
      const bool engine = span_listed(s.span, engine_spans);
      if (engine) {
        ++engine_found;
        if (!(s.tagged && s.kind == TagKind::Result)) consistent = false;
      }
      s.origin = engine ? Origin::EngineInserted : Origin::ModelGenerated;
    }
    if (consistent && engine_found == engine_spans.size()) return chain;
  } catch (const ParseError&) {
  }

  chain = ReasoningChain{};
  auto spans = engine_spans;
  std::sort(spans.begin(), spans.end(),
            [](const CharSpan& a, const CharSpan& b) { return a.begin < b.begin; });
  std::string lead;
  std::size_t cursor = 0;
  const auto& open = tags.open(TagKind::Result);
  const auto& close = tags.close(TagKind::Result);
  for (const auto& sp : spans) {
    append_model_piece(chain, lead,
                       std::string_view(text).substr(cursor, sp.begin - cursor),
                       tags);
    Segment s;
    s.kind = TagKind::Result;
    s.origin = Origin::EngineInserted;
    s.lead = std::move(lead);
    lead.clear();
    s.text = text.substr(sp.begin + open.size(),
                         sp.size() - open.size() - close.size());
    chain.segments.push_back(std::move(s));
    cursor = sp.end;
  }
  append_model_piece(chain, lead, std::string_view(text).substr(cursor), tags);
  chain.trailing = std::move(lead);
  reindex_chain(chain, tags);
  chain.final_answer = chain_answer(chain);
  return chain;
}

namespace {

class RolloutRun {
 public:
  RolloutRun(const RolloutInput& input, Generator& generator,
             ToolRegistry& registry, const RolloutConfig& cfg,
             RolloutHooks* hooks, ToolCache& cache)
      : input_(input),
        gen_(generator),
        registry_(registry),
        cfg_(cfg),
        hooks_(hooks),
        cache_(cache),
        tags_(cfg.tags) {
    stops_ = {tags_.close(TagKind::Search), tags_.close(TagKind::Python),
              tags_.close(TagKind::Answer)};
  }

  Trajectory run() {
    traj_.id = input_.id;
    traj_.question = input_.question;
    traj_.gold = input_.gold;
    traj_.seed = cfg_.seed;
    text_ = input_.prefix;

    std::optional<StopReason> stop = advance();
    for (std::size_t turn = 0; !stop; ++turn) {
      if (turn >= cfg_.max_turns) {
        stop = StopReason::GeneratorEnded;
        break;
      }
      GenerationRequest req;
      req.instruction = cfg_.instruction;
      req.query = input_.question;
      req.partial = text_;
      req.stop = stops_;
      req.temperature = cfg_.temperature;
      req.top_p = cfg_.top_p;
      req.seed = cfg_.seed;
      req.turn = turn;
      req.max_chars = cfg_.max_chars > text_.size()
                          ? cfg_.max_chars - text_.size() + 1
                          : 1;
      GenerationResult res = gen_.generate(req);
      if (res.text.empty() && res.ended) {
        stop = StopReason::GeneratorEnded;
        break;
      }
      complete_stop(res);
      text_ += res.text;
      traj_.logprobs.insert(traj_.logprobs.end(), res.logprobs.begin(),
                            res.logprobs.end());
      const std::size_t before = engine_.size();
      stop = advance();
      if (!stop && res.ended && engine_.size() == before) {
        stop = StopReason::GeneratorEnded;
      }
    }

    traj_.stop_reason = *stop;
    traj_.chain = build_chain(text_, engine_, tags_);
    traj_.chain.query = input_.question;
    traj_.chain.instruction = cfg_.instruction;
    traj_.mask = feedback_mask(traj_);
    return std::move(traj_);
  }

 private:
  // Servers that strip the stop sequence leave a dangling open tag.
  void complete_stop(GenerationResult& res) const {
    if (res.stop_hit) {
      if (!text::ends_with(res.text, *res.stop_hit)) res.text += *res.stop_hit;
      return;
    }
    if (!res.ended) return;
    const std::string combined = text_ + res.text;
    for (TagKind k : {TagKind::Search, TagKind::Python, TagKind::Answer}) {
      const auto open = combined.rfind(tags_.open(k));
      if (open == std::string::npos || open < text_.size()) continue;
      if (combined.find(tags_.close(k), open) != std::string::npos) continue;
      bool other_after = false;
      for (TagKind o : kAllTagKinds) {
        if (o == k) continue;
        const auto p = combined.find(tags_.open(o), open);
        if (p != std::string::npos) other_after = true;
      }
      if (!other_after) {
        res.text += tags_.close(k);
        res.stop_hit = tags_.close(k);
        return;
      }
    }
  }

  std::size_t committed() const {
    return engine_.empty() ? 0 : engine_.back().end;
  }

  std::size_t insert_block(const std::string& feedback) {
    const std::string block = format_result_block(feedback, tags_);
    const std::size_t at = text_.size();
    text_ += block;
    engine_.push_back({at, text_.size()});
    traj_.logprobs.push_back({block, 0.0, true});
    scan_from_ = text_.size();
    return at;
  }

  std::optional<StopReason> advance() {
    while (true) {
      const auto pending = scan_pending_call(text_, tags_, scan_from_);
      const auto ans_pos = text_.find(tags_.close(TagKind::Answer), scan_from_);
      const std::size_t ans_end =
          ans_pos == std::string::npos
              ? std::string::npos
              : ans_pos + tags_.close(TagKind::Answer).size();
      const bool answer_first =
          ans_end != std::string::npos &&
          (!pending || ans_end <= pending->end_offset);
      if (answer_first) {
        text_.resize(ans_end);
      } else if (pending) {
        text_.resize(pending->end_offset);
      }

      if (text_.size() > cfg_.max_chars) {
        if (!hooks_) return StopReason::LengthExceeded;
        RolloutState state{text_, committed(), traj_.tool_calls.size()};
        auto action = hooks_->on_overflow(state, traj_.interventions);
        if (!action) return StopReason::LengthExceeded;
        replace_text(std::move(action->text));
        if (!action->resume) return StopReason::LengthExceeded;
        tools_disabled_ = tools_disabled_ || action->disable_tools;
        if (text_.find(tags_.close(TagKind::Answer)) != std::string::npos) {
          return StopReason::AnswerEmitted;
        }
        continue;
      }
      if (answer_first) return StopReason::AnswerEmitted;
      if (!pending) return std::nullopt;

      if (tools_disabled_ || traj_.tool_calls.size() >= cfg_.max_tool_calls) {
        if (notices_ >= cfg_.post_budget_calls) {
          return StopReason::ToolBudgetExhausted;
        }
        ++notices_;
        insert_block(tools_disabled_ ? kDefaultToolsDisabledNotice
                                     : cfg_.budget_notice);
        continue;
      }

      ToolRequest req = ToolRequest::make(
          pending->kind, pending->request,
          pending->kind == TagKind::Search ? cfg_.search_routing
                                           : std::nullopt);
      ToolFeedback fb = call_tool(req);
      if (hooks_) {
        RolloutState state{text_, committed(), traj_.tool_calls.size()};
        hooks_->after_tool(state, *pending, req, fb, traj_.interventions);
        if (auto off = hooks_->rewind_after_failure(state, *pending, fb,
                                                    traj_.interventions)) {
          text_.resize(std::clamp(*off, committed(), text_.size()));
          scan_from_ = text_.size();
          return std::nullopt;
        }
      }
      const std::size_t at = insert_block(fb.text);
      traj_.tool_calls.push_back({std::move(req), std::move(fb), at});
    }
  }

  ToolFeedback call_tool(const ToolRequest& req) {
    try {
      return registry_.invoke(req, cache_);
    } catch (const std::exception& e) {
      ToolFeedback fb;
      fb.text = e.what();
      fb.is_error = true;
      return fb;
    }
  }

  // The replacement's result blocks are treated as engine text.
  void replace_text(std::string replacement) {
    text_ = std::move(replacement);
    engine_.clear();
    try {
      const ReasoningChain c = parse_chain(text_, tags_);
      for (const auto& s : c.segments) {
        if (s.tagged && s.kind == TagKind::Result) engine_.push_back(s.span);
      }
    } catch (const ParseError&) {
    }
    traj_.logprobs.clear();
    scan_from_ = text_.size();
  }

  const RolloutInput& input_;
  Generator& gen_;
  ToolRegistry& registry_;
  const RolloutConfig& cfg_;
  RolloutHooks* hooks_;
  ToolCache& cache_;
  const TagSet& tags_;
  std::vector<std::string> stops_;

  Trajectory traj_;
  std::string text_;
  std::vector<CharSpan> engine_;
  std::size_t scan_from_ = 0;
  std::size_t notices_ = 0;
  bool tools_disabled_ = false;
};

}  // namespace

Trajectory run_rollout(const RolloutInput& input, Generator& generator,
                       ToolRegistry& registry, const RolloutConfig& cfg,
                       RolloutHooks* hooks, ToolCache* cache) {
  cfg.validate();
  std::optional<ToolCache> local;
  if (cache == nullptr) {
    if (cfg.cache_scope == CacheScope::Rollout) {
      local.emplace(registry.options().cache_capacity);
      cache = &*local;
    } else {
      cache = &registry.cache();
    }
  }
  return RolloutRun(input, generator, registry, cfg, hooks, *cache).run();
}

Trajectory run_rollout(const std::string& query, Generator& generator,
                       ToolRegistry& registry, const RolloutConfig& cfg) {
  RolloutInput input;
  input.question = query;
  return run_rollout(input, generator, registry, cfg);
}

GroupRollout run_group(const RolloutInput& input, Generator& generator,
                       ToolRegistry& registry, const RolloutConfig& cfg,
                       RolloutHooks* hooks) {
  cfg.validate();
  GroupRollout group;
  group.query = input.question;
  group.members.resize(cfg.group_size);

  auto member = [&](std::size_t i) {
    RolloutConfig c = cfg;
    c.seed = cfg.seed + i;
    try {
      group.members[i] = run_rollout(input, generator, registry, c, hooks);
    } catch (const std::exception& e) {
      Trajectory t;
      t.id = input.id;
      t.question = input.question;
      t.gold = input.gold;
      t.seed = c.seed;
      t.stop_reason = StopReason::GeneratorEnded;
      t.chain.query = input.question;
      t.chain.instruction = c.instruction;
      t.interventions.push_back({"error", e.what(), 0});
      group.members[i] = std::move(t);
    }
  };

  const std::size_t workers = std::max<std::size_t>(1, cfg.parallelism);
  if (workers == 1) {
    for (std::size_t i = 0; i < cfg.group_size; ++i) member(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, cfg.group_size); ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < cfg.group_size; i = next++) member(i);
      });
    }
    for (auto& th : pool) th.join();
  }
  group.rewards.assign(cfg.group_size, 0.0);
  group.advantages.assign(cfg.group_size, 0.0);
  return group;
}

GroupRollout run_group(const std::string& query, Generator& generator,
                       ToolRegistry& registry, const RolloutConfig& cfg) {
  RolloutInput input;
  input.question = query;
  return run_group(input, generator, registry, cfg);
}

std::vector<CharSpan> feedback_mask(const Trajectory& traj) {
  std::vector<CharSpan> spans;
  for (const auto& s : traj.chain.segments) {
    if (s.origin == Origin::EngineInserted) spans.push_back(s.span);
  }
  std::sort(spans.begin(), spans.end(),
            [](const CharSpan& a, const CharSpan& b) { return a.begin < b.begin; });
  return spans;
}

std::string unmasked_text(const Trajectory& traj, const TagSet& tags) {
  const std::string text = traj.text(tags);
  std::string out;
  std::size_t cursor = 0;
  for (const auto& sp : traj.mask) {
    out.append(text, cursor, sp.begin - cursor);
    cursor = sp.end;
  }
  out.append(text, cursor, std::string::npos);
  return out;
}

std::string masked_text(const Trajectory& traj, const TagSet& tags) {
  const std::string text = traj.text(tags);
  std::string out;
  for (const auto& sp : traj.mask) out.append(text, sp.begin, sp.size());
  return out;
}

}  // namespace toolstar
