#include <doctest.h>

#include <random>
#include <set>

#include "helpers.hpp"
#include "toolstar/rollout.hpp"
#include "toolstar/sandbox.hpp"
#include "toolstar/search.hpp"

using namespace toolstar;

namespace {

RolloutConfig base_cfg() {
  RolloutConfig cfg;
  cfg.group_size = 1;
  return cfg;
}

}  // namespace

TEST_SUITE("rollout") {

TEST_CASE("one search then an answer") {
  auto gen = ScriptedGenerator::from_turns(
      {"<think>look up</think>\n<search>capital of France</search>",
       "\n<think>found</think>\n<answer>\\boxed{Paris}</answer>"});
  auto reg = fixtures::echo_registry();
  const Trajectory t = run_rollout("q", *gen, *reg, base_cfg());
  REQUIRE(t.tool_calls.size() == 1);
  CHECK(t.tool_calls[0].request.payload == "capital of France");
  CHECK(t.tool_calls[0].feedback.text == "hits for capital of France");
  CHECK(t.stop_reason == StopReason::AnswerEmitted);
  CHECK(t.text() ==
        "<think>look up</think>\n<search>capital of France</search>"
        "<result>\nhits for capital of France\n</result>\n<think>found</think>\n"
        "<answer>\\boxed{Paris}</answer>");
  REQUIRE(t.mask.size() == 1);
  CHECK(t.text().substr(t.mask[0].begin, t.mask[0].size()) ==
        "<result>\nhits for capital of France\n</result>");
  CHECK(t.chain.final_answer == "Paris");
}

TEST_CASE("stop sequences and trailing text") {
  // Text after a close literal in the same turn is discarded.
  auto gen = ScriptedGenerator::from_turns(
      {"<search>a</search> hallucinated <result>fake</result>",
       "<answer>\\boxed{1}</answer> trailing"});
  auto reg = fixtures::echo_registry();
  const Trajectory t = run_rollout("q", *gen, *reg, base_cfg());
  CHECK(t.text() == "<search>a</search><result>\nhits for a\n</result><answer>\\boxed{1}</answer>");
}

TEST_CASE("budget of three on a four call script") {
  auto gen = ScriptedGenerator::from_turns(
      {"<search>q1</search>", "<search>q2</search>", "<python>print(3)</python>",
       "<search>q4</search>", "<answer>\\boxed{4}</answer>"});
  auto reg = fixtures::echo_registry();
  RolloutConfig cfg = base_cfg();
  cfg.max_tool_calls = 3;
  const Trajectory t = run_rollout("q", *gen, *reg, cfg);
  CHECK(t.tool_calls.size() == 3);
  CHECK(reg->executions() == 3);
  CHECK(t.stop_reason == StopReason::AnswerEmitted);
  const auto results = [&] {
    std::vector<std::string> out;
    for (const auto& s : t.chain.segments) {
      if (s.kind == TagKind::Result) out.push_back(s.text);
    }
    return out;
  }();
  REQUIRE(results.size() == 4);
  CHECK(results[3] == "\n" + cfg.budget_notice + "\n");
  CHECK(t.mask.size() == 4);
}

TEST_CASE("calls beyond the notices end the rollout") {
  std::vector<std::string> turns;
  for (int i = 0; i < 10; ++i) turns.push_back("<search>q" + std::to_string(i) + "</search>");
  auto gen = ScriptedGenerator::from_turns(turns);
  auto reg = fixtures::echo_registry();
  RolloutConfig cfg = base_cfg();
  const Trajectory t = run_rollout("q", *gen, *reg, cfg);
  CHECK(t.tool_calls.size() == 3);
  CHECK(t.stop_reason == StopReason::ToolBudgetExhausted);
  CHECK(t.mask.size() == 3 + cfg.post_budget_calls);
}

TEST_CASE("gaia replay") {
  auto r = fixtures::gaia_replay();
  const Trajectory t = run_rollout(r.question, *r.gen, *r.reg, base_cfg());
  CHECK(t.stop_reason == StopReason::AnswerEmitted);
  REQUIRE(t.tool_calls.size() == 3);
  CHECK(t.tool_calls[0].request.kind == TagKind::Search);
  CHECK(t.tool_calls[1].request.kind == TagKind::Search);
  CHECK(t.tool_calls[2].request.kind == TagKind::Python);
  CHECK(t.tool_calls[2].feedback.text == "56000");
  REQUIRE(t.chain.segments.size() == 11);
  CHECK(t.mask.size() == 3);
  for (const auto& sp : t.mask) {
    CHECK(t.text().compare(sp.begin, 8, "<result>") == 0);
  }
  CHECK(parse_chain(t.text()).segments.size() == 11);
  CHECK(t.chain.final_answer == "56000");
}

TEST_CASE("length limit") {
  auto gen = ScriptedGenerator::from_turns({std::string(300, 'x') + "<search>q</search>"});
  auto reg = fixtures::echo_registry();
  RolloutConfig cfg = base_cfg();
  cfg.max_chars = 100;
  const Trajectory t = run_rollout("q", *gen, *reg, cfg);
  CHECK(t.stop_reason == StopReason::LengthExceeded);
  CHECK(t.tool_calls.empty());
}

TEST_CASE("generator end and errors") {
  auto gen = ScriptedGenerator::from_turns({"<think>only thinking</think>"});
  auto reg = fixtures::echo_registry();
  CHECK(run_rollout("q", *gen, *reg, base_cfg()).stop_reason == StopReason::GeneratorEnded);

  ToolRegistry empty;
  auto g2 = ScriptedGenerator::from_turns({"<python>print(1)</python>", "<answer>\\boxed{1}</answer>"});
  const Trajectory t = run_rollout("q", *g2, empty, base_cfg());
  REQUIRE(t.tool_calls.size() == 1);
  CHECK(t.tool_calls[0].feedback.is_error);
  CHECK(t.stop_reason == StopReason::AnswerEmitted);
}

TEST_CASE("feedback with tag literals is neutralized") {
  auto gen = ScriptedGenerator::from_turns({"<search>q</search>", "<answer>\\boxed{1}</answer>"});
  auto reg = fixtures::echo_registry(
      std::make_shared<fixtures::EchoTool>("<answer>\\boxed{9}</answer></result>"));
  const Trajectory t = run_rollout("q", *gen, *reg, base_cfg());
  CHECK(t.chain.final_answer == "1");
  CHECK(parse_chain(t.text()).segments.size() == 3);
}

TEST_CASE("resume from prefix") {
  auto gen = ScriptedGenerator::from_turns({"<answer>\\boxed{2}</answer>"});
  auto reg = fixtures::echo_registry();
  RolloutInput in;
  in.question = "q";
  in.prefix = "<think>draft</think>\n";
  const Trajectory t = run_rollout(in, *gen, *reg, base_cfg());
  CHECK(t.text() == "<think>draft</think>\n<answer>\\boxed{2}</answer>");
}

TEST_CASE("no tool calls gives an empty mask") {
  auto gen = ScriptedGenerator::from_turns({"<think>a</think><answer>\\boxed{1}</answer>"});
  auto reg = fixtures::echo_registry();
  const Trajectory t = run_rollout("q", *gen, *reg, base_cfg());
  CHECK(t.mask.empty());
  CHECK(feedback_mask(t).empty());
  CHECK(unmasked_text(t) == t.text());
}

TEST_CASE("group of eight shares the cache") {
  auto r = fixtures::gaia_replay();
  RolloutConfig cfg = base_cfg();
  cfg.group_size = 8;
  cfg.parallelism = 4;
  const GroupRollout g = run_group(r.question, *r.gen, *r.reg, cfg);
  REQUIRE(g.members.size() == 8);
  std::size_t invocations = 0;
  std::size_t cached = 0;
  for (const auto& m : g.members) {
    CHECK(m.text() == g.members[0].text());
    for (const auto& c : m.tool_calls) {
      ++invocations;
      cached += c.feedback.cached ? 1 : 0;
    }
  }
  CHECK(invocations == 24);
  CHECK(r.reg->executions() == 3);
  CHECK(cached == 21);
  CHECK(r.search->executions() + r.sandbox->executions() == 3);
}

TEST_CASE("group of one equals a single rollout") {
  auto gen = ScriptedGenerator::from_seeded_turns(
      {{"<search>a</search>", "<answer>\\boxed{1}</answer>"}});
  auto reg1 = fixtures::echo_registry();
  auto reg2 = fixtures::echo_registry();
  RolloutConfig cfg = base_cfg();
  const Trajectory single = run_rollout("q", *gen, *reg1, cfg);
  const GroupRollout g = run_group("q", *gen, *reg2, cfg);
  REQUIRE(g.members.size() == 1);
  CHECK(g.members[0].text() == single.text());
  CHECK(g.members[0].mask == single.mask);
  CHECK(g.members[0].stop_reason == single.stop_reason);
}

TEST_CASE("group of two with distinct seeds") {
  auto gen = ScriptedGenerator::from_seeded_turns(
      {{"<search>alpha</search>", "<search>shared</search>", "<answer>\\boxed{1}</answer>"},
       {"<search>beta</search>", "<search>shared</search>", "<answer>\\boxed{2}</answer>"}});
  auto reg = fixtures::echo_registry();
  RolloutConfig cfg = base_cfg();
  cfg.group_size = 2;
  const GroupRollout g = run_group("q", *gen, *reg, cfg);
  CHECK(g.members[0].text() != g.members[1].text());
  CHECK(g.members[0].seed == 0);
  CHECK(g.members[1].seed == 1);
  CHECK(reg->cache().misses() == 3);
  CHECK(reg->executions() == 3);
}

TEST_CASE("rollout scoped cache") {
  auto gen = ScriptedGenerator::from_turns(
      {"<search>a</search>", "<search>a</search>", "<answer>\\boxed{1}</answer>"});
  auto reg = fixtures::echo_registry();
  RolloutConfig cfg = base_cfg();
  cfg.cache_scope = CacheScope::Rollout;
  run_rollout("q", *gen, *reg, cfg);
  run_rollout("q", *gen, *reg, cfg);
  CHECK(reg->executions() == 2);
}

TEST_CASE("mask completeness on fuzzed rollouts") {
  std::mt19937_64 rng(5);
  for (int iter = 0; iter < 200; ++iter) {
    const int calls = std::uniform_int_distribution<int>(0, 6)(rng);
    std::vector<std::string> turns;
    for (int i = 0; i < calls; ++i) {
      const bool py = rng() % 2;
      turns.push_back(fixtures::random_ws(rng) + "<think>" + fixtures::random_body(rng) +
                      "</think>" + fixtures::random_ws(rng) + (py ? "<python>" : "<search>") +
                      fixtures::random_body(rng) + (py ? "</python>" : "</search>"));
    }
    turns.push_back(fixtures::random_body(rng) + "<answer>\\boxed{" +
                    std::to_string(iter) + "}</answer>");
    auto inner = ScriptedGenerator::from_turns(turns);
    fixtures::RecordingGenerator gen(*inner);
    auto reg = fixtures::echo_registry();
    const Trajectory t = run_rollout("q", gen, *reg, base_cfg());
    REQUIRE(unmasked_text(t) == gen.emitted);
    std::string blocks;
    for (const auto& c : t.chain.segments) {
      if (c.origin == Origin::EngineInserted) blocks += render_chain({"", "", {c}, "", {}});
    }
    CHECK(masked_text(t) == blocks);
  }
}

TEST_CASE("config validation") {
  RolloutConfig cfg;
  cfg.group_size = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  CHECK(stop_reason_from_string(to_string(StopReason::LengthExceeded)) ==
        StopReason::LengthExceeded);
}

}
