// Acceptance runner: one line per criterion, nonzero exit when any fails.

#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "helpers.hpp"
#include "toolstar/evalbench.hpp"
#include "toolstar/resilience.hpp"
#include "toolstar/reward.hpp"
#include "toolstar/rl_math.hpp"
#include "toolstar/script_book.hpp"
#include "toolstar/synthesis.hpp"

using namespace toolstar;
namespace fs = std::filesystem;

namespace {

// Collects failed expectations for one criterion.
struct Check {
  std::vector<std::string> failures;
  std::size_t count = 0;

  void operator()(bool ok, const std::string& what) {
    ++count;
    if (!ok && failures.size() < 5) failures.push_back(what);
    if (!ok && failures.size() >= 5 && failures.back() != "...") failures.push_back("...");
  }
};

struct Criterion {
  std::string name;
  double budget_s;
  std::function<void(Check&)> body;
};

// ---------------------------------------------------------------- reward

void reward_golden(Check& check) {
  RewardConfig cfg;
  const std::vector<double> want = {1, 0, 1, -1, 1, -1, 1.1, -1};
  const auto cases = fixtures::critic_cases();
  check(cases.size() == want.size(), "eight cases");
  for (std::size_t i = 0; i < cases.size() && i < want.size(); ++i) {
    const auto r = score_response(cases[i].response, cases[i].gold, cfg);
    check(r.total == want[i], cases[i].id + " total " + std::to_string(r.total));
    check(r.principle == cases[i].principle, cases[i].id + " principle: " + r.principle);
  }
  auto has = [&](const std::string& id, const std::string& phrase) {
    for (const auto& c : cases) {
      if (c.id == id) {
        return score_response(c.response, c.gold, cfg).principle.find(phrase) !=
               std::string::npos;
      }
    }
    return false;
  };
  check(has("case1p", "single tool usage"), "single tool usage");
  check(has("case4p", "multiple tool usage"), "multiple tool usage");
  check(has("case2n", "not matched"), "not matched");
  check(has("case3n", "over max length"), "over max length");
}

// ---------------------------------------------------------------- rl math

void rl_oracle(Check& check) {
  auto near = [](double a, double b, double tol) { return std::fabs(a - b) <= tol; };
  auto a = group_advantages({1, 0});
  check(near(a[0], 1, 1e-3) && near(a[1], -1, 1e-3), "[1,0]");
  check(std::fabs(a[0] + a[1]) < 1e-9, "[1,0] sum");
  a = group_advantages({1.1, 0, -1, 0});
  const std::vector<double> want = {1.4471, -0.0337, -1.3797, -0.0337};
  for (std::size_t i = 0; i < 4; ++i) check(near(a[i], want[i], 1e-3), "[1.1,0,-1,0] entry");
  check(std::fabs(std::accumulate(a.begin(), a.end(), 0.0)) < 1e-9, "sum to zero");

  TokenLogprobSet s;
  s.new_logprobs = s.old_logprobs = s.ref_logprobs = {-0.3, -1.2, -0.7, -2.0};
  s.mask = {false, false, false, false};
  const auto one = grpo_objective({s, s}, {1, -1});
  check(one.value == 0.0 && one.clip_fraction == 0.0, "ratio-one identity");

  std::mt19937_64 rng(17);
  std::normal_distribution<double> g(-1, 0.5);
  TokenLogprobSet m;
  for (int i = 0; i < 64; ++i) {
    m.new_logprobs.push_back(g(rng));
    m.old_logprobs.push_back(g(rng));
    m.ref_logprobs.push_back(g(rng));
    m.mask.push_back(i % 4 == 1);
  }
  GrpoConfig cfg;
  cfg.kl_beta = 0.02;
  const auto base = grpo_objective({m}, {0.9}, cfg);
  TokenLogprobSet moved = m;
  for (std::size_t i = 0; i < moved.mask.size(); ++i) {
    if (moved.mask[i]) moved.new_logprobs[i] = moved.old_logprobs[i] = moved.ref_logprobs[i] = 42.0;
  }
  const auto after = grpo_objective({moved}, {0.9}, cfg);
  check(std::memcmp(&base.value, &after.value, sizeof(double)) == 0, "masked invariance");

  check(std::fabs(dpo_loss({-3, -3, -3, -3}, 0.3) - std::log(2.0)) < 1e-9, "dpo ln 2");
  check(std::fabs(dpo_loss({-1, -1, -3, -1}, 0.3) - 0.437488) < 1e-6, "dpo worked example");
}

// ---------------------------------------------------------------- protocol

struct Piece {
  std::string ws;
  std::optional<TagKind> kind;
  std::string body;
};

std::vector<Piece> random_pieces(std::mt19937_64& rng) {
  std::vector<Piece> out;
  const std::size_t n = 1 + rng() % 10;
  for (std::size_t i = 0; i < n; ++i) {
    Piece p;
    p.ws = fixtures::random_ws(rng);
    p.body = fixtures::random_body(rng);
    const int k = static_cast<int>(rng() % 6);
    if (k < 5) p.kind = kAllTagKinds[static_cast<std::size_t>(k)];
    out.push_back(std::move(p));
  }
  // At least one tagged segment to mutate.
  out[rng() % out.size()].kind = kAllTagKinds[rng() % 5];
  return out;
}

std::string render_pieces(const std::vector<Piece>& pieces, int drop_open = -1,
                          int drop_close = -1) {
  const TagSet& tags = TagSet::defaults();
  std::string out;
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    const auto& p = pieces[i];
    out += p.ws;
    if (!p.kind) {
      out += p.body;
      continue;
    }
    if (static_cast<int>(i) != drop_open) out += tags.open(*p.kind);
    out += p.body;
    if (static_cast<int>(i) != drop_close) out += tags.close(*p.kind);
  }
  return out;
}

void protocol_fuzz(Check& check) {
  std::mt19937_64 rng(20240601);
  for (int i = 0; i < 10000; ++i) {
    const std::string text = fixtures::random_chain(rng, 16);
    try {
      const ReasoningChain c = parse_chain(text);
      check(render_chain(c) == text, "round trip " + std::to_string(i));
    } catch (const std::exception& e) {
      check(false, std::string("valid chain rejected: ") + e.what());
    }
  }

  const TagSet& tags = TagSet::defaults();
  for (int i = 0; i < 1000; ++i) {
    auto pieces = random_pieces(rng);
    std::string text;
    ViolationCode want;
    ParseErrc want_parse;
    if (i % 2 == 0) {
      std::vector<int> tagged;
      for (std::size_t j = 0; j < pieces.size(); ++j) {
        if (pieces[j].kind) tagged.push_back(static_cast<int>(j));
      }
      const int j = tagged[rng() % tagged.size()];
      text = rng() % 2 ? render_pieces(pieces, j, -1) : render_pieces(pieces, -1, j);
      want = ViolationCode::UnbalancedTag;
      want_parse = ParseErrc::UnbalancedTag;
    } else {
      const TagKind a = kAllTagKinds[rng() % 5];
      TagKind b = kAllTagKinds[rng() % 5];
      while (b == a) b = kAllTagKinds[rng() % 5];
      const std::string crossed = tags.open(a) + "x" + tags.open(b) + "y" + tags.close(a) +
                                  "z" + tags.close(b);
      const std::size_t at = rng() % (pieces.size() + 1);
      text = render_pieces({pieces.begin(), pieces.begin() + static_cast<long>(at)}) + crossed +
             render_pieces({pieces.begin() + static_cast<long>(at), pieces.end()});
      want = ViolationCode::TagOrderViolation;
      want_parse = ParseErrc::Interleaved;
    }
    const FormatReport r = validate_format(text, {});
    check(!r.ok && r.has(want), "mutant " + std::to_string(i) + " code");
    try {
      parse_chain(text);
      check(false, "mutant " + std::to_string(i) + " parsed");
    } catch (const ParseError& e) {
      check(e.kind() == want_parse, "mutant " + std::to_string(i) + " parse kind");
    }
  }
}

// ---------------------------------------------------------------- pipeline

void pipeline_golden(Check& check) {
  const fs::path toy = fixtures::data_dir() / "toy";
  const json oracle = read_json(toy / "oracle.json");
  const auto samples = load_samples(toy / "samples.jsonl");
  check(samples.size() == 50, "50 questions");
  auto book = ScriptBook::load(toy / "script.json");
  auto reg = std::make_shared<ToolRegistry>();
  reg->register_tool(TagKind::Python, std::make_shared<CodeTool>(std::make_shared<ScriptedSandbox>(
                                           load_sandbox_table(toy / "sandbox.json"))));
  reg->register_tool(TagKind::Search,
                     std::make_shared<SearchTool>(
                         std::make_shared<Bm25Index>(load_corpus(toy / "corpus.jsonl")), nullptr));
  const auto a = run_pipeline(samples, *book, *reg, PipelineConfig{});

  std::set<std::pair<std::string, std::string>> got_rej, want_rej;
  for (const auto& r : a.rejections) got_rej.insert({r.id, to_string(r.reason)});
  for (const auto& r : oracle.at("rejections")) {
    want_rej.insert({r.at("id").get<std::string>(), r.at("reason").get<std::string>()});
  }
  check(got_rej == want_rej, "rejections");
  for (const auto& r : a.rejections) {
    check(r.reason != RejectReason::FormatViolation, "no format rejections on toy data");
  }

  std::map<std::string, std::string> cats;
  for (const auto& [id, c] : a.classes.categories) cats[id] = to_string(c);
  check(cats == oracle.at("categories").get<std::map<std::string, std::string>>(), "categories");

  auto ids = [](const Stage& s) {
    std::vector<std::string> v;
    for (const auto& r : s.records) v.push_back(r.sample.id);
    return v;
  };
  check(ids(a.classes.d_text_sub) == oracle.at("d_text_sub").get<std::vector<std::string>>(),
        "d_text_sub");
  check(ids(a.classes.d_tool_sub) == oracle.at("d_tool_sub").get<std::vector<std::string>>(),
        "d_tool_sub");
  std::vector<std::string> rl;
  for (const auto& s : a.classes.d_rl) rl.push_back(s.id);
  check(rl == oracle.at("d_rl").get<std::vector<std::string>>(), "d_rl");

  // Routing by category.
  for (const auto& r : a.classes.d_text_sub.records) {
    const auto c = a.classes.categories.at(r.sample.id);
    check(c == DifficultyCategory::Cat1_DRok_TIRok || c == DifficultyCategory::Cat2_DRok_TIRbad,
          "text subset category");
  }
  for (const auto& r : a.classes.d_tool_sub.records) {
    check(a.classes.categories.at(r.sample.id) == DifficultyCategory::Cat3_DRbad_TIRok,
          "tool subset category");
  }
  std::set<std::string> sft;
  for (const auto& r : a.classes.d_sft.records) sft.insert(r.sample.id);
  for (const auto& id : rl) check(!sft.count(id), "d_sft and d_rl overlap on " + id);
}

// ---------------------------------------------------------------- rollout

void rollout_cache(Check& check) {
  {
    auto gen = ScriptedGenerator::from_turns(
        {"<search>q1</search>", "<search>q2</search>", "<python>print(3)</python>",
         "<search>q4</search>", "<answer>\\boxed{4}</answer>"});
    auto reg = fixtures::echo_registry();
    RolloutConfig cfg;
    const Trajectory t = run_rollout("q", *gen, *reg, cfg);
    check(t.tool_calls.size() == 3, "budget: three calls");
    check(reg->executions() == 3, "budget: three executions");
    check(t.text().find("<result>\n" + cfg.budget_notice + "\n</result>") != std::string::npos,
          "budget notice inserted");
  }

  std::mt19937_64 rng(77);
  for (int iter = 0; iter < 1000; ++iter) {
    const int calls = static_cast<int>(rng() % 7);
    std::vector<std::string> turns;
    for (int i = 0; i < calls; ++i) {
      const bool py = rng() % 2;
      turns.push_back(fixtures::random_ws(rng) + "<think>" + fixtures::random_body(rng) +
                      "</think>" + fixtures::random_ws(rng) + (py ? "<python>" : "<search>") +
                      fixtures::random_body(rng) + (py ? "</python>" : "</search>"));
    }
    turns.push_back(fixtures::random_body(rng) + "<answer>\\boxed{" + std::to_string(iter) +
                    "}</answer>");
    auto inner = ScriptedGenerator::from_turns(turns);
    fixtures::RecordingGenerator gen(*inner);
    auto reg = fixtures::echo_registry(
        std::make_shared<fixtures::EchoTool>("<answer>bait</answer> "));
    const Trajectory t = run_rollout("q", gen, *reg, RolloutConfig{});
    check(unmasked_text(t) == gen.emitted, "mask completeness " + std::to_string(iter));
    for (const auto& sp : t.mask) {
      check(t.text().compare(sp.begin, 8, "<result>") == 0, "mask covers result blocks");
    }
  }

  auto r = fixtures::gaia_replay();
  RolloutConfig cfg;
  cfg.group_size = 8;
  cfg.parallelism = 8;
  const GroupRollout g = run_group(r.question, *r.gen, *r.reg, cfg);
  std::set<std::string> distinct;
  std::size_t cached = 0;
  for (const auto& m : g.members) {
    check(m.text() == g.members[0].text(), "identical chains");
    for (const auto& c : m.tool_calls) {
      distinct.insert(c.request.cache_key());
      cached += c.feedback.cached;
    }
  }
  check(r.reg->executions() == distinct.size(), "each distinct request executed once");
  check(r.search->executions() + r.sandbox->executions() == distinct.size(),
        "tool-side execution count");
  check(cached >= 7 * distinct.size(), "cache hits");
}

// ---------------------------------------------------------------- schedule

class FixedSampler final : public Sampler {
 public:
  std::vector<GroupRollout> sample_groups(std::size_t, std::size_t batch) override {
    return std::vector<GroupRollout>(batch, group());
  }
  std::vector<GroupRollout> sample_candidates(std::size_t, std::size_t k, std::size_t) override {
    return std::vector<GroupRollout>(k, group());
  }

 private:
  static GroupRollout group() {
    GroupRollout g;
    for (const char* a : {"<answer>\\boxed{1}</answer>", "<answer>\\boxed{0}</answer>"}) {
      Trajectory t;
      t.gold = "1";
      t.chain = parse_chain(a);
      g.members.push_back(t);
    }
    return g;
  }
};

void schedule_order(Check& check) {
  RewardConfig rc;
  for (auto [c, s] : std::vector<std::pair<std::size_t, std::size_t>>{{1, 1}, {2, 3}, {1, 0}}) {
    RecordingTrainer trainer;
    FixedSampler sampler;
    SchedulePlan plan;
    plan.cycles = c;
    plan.grpo_steps_per_cycle = s;
    const auto rep = run_schedule(
        trainer, sampler, [&](const Trajectory& t) { return compute_reward(t, t.gold, rc); },
        plan);
    std::vector<std::string> want;
    for (std::size_t i = 0; i < c; ++i) {
      want.insert(want.end(), s, "grpo");
      want.push_back("dpo");
    }
    const std::string tag = "(C=" + std::to_string(c) + ",S=" + std::to_string(s) + ")";
    check(rep.completed, tag + " completed");
    check(trainer.calls == want, tag + " order");
  }
}

// ---------------------------------------------------------------- resilience

void resilience(Check& check) {
  for (const auto& f : fixtures::backtrace_fixtures()) {
    const auto off = backtrace_position(parse_chain(f.text),
                                        {FailureKind::ToolInvocationFailure, f.segment, ""});
    check(off == f.expected, "backtrace fixture offset");
  }
  check(fixtures::backtrace_fixtures().size() == 20, "20 fixtures");

  for (std::size_t cap : {1u, 3u, 5u}) {
    auto fixer = std::make_shared<ScriptedGenerator>(
        [](const GenerationRequest&) -> std::optional<std::string> { return "print(1/0)"; });
    std::size_t runs = 0;
    const auto out = debug_code("print(1/0)", "ZeroDivisionError", *fixer,
                                [&](const std::string&) {
                                  ++runs;
                                  return ExecResult{"", "ZeroDivisionError", false, false, 0};
                                },
                                cap);
    check(!out.fixed && out.attempts.size() == cap && runs == cap, "debug retry cap");
  }

  std::mt19937_64 rng(99);
  for (int i = 0; i < 50; ++i) {
    std::vector<std::string> turns;
    const int calls = static_cast<int>(rng() % 6);
    for (int c = 0; c < calls; ++c) {
      turns.push_back("<think>" + fixtures::random_body(rng) + "</think>\n" +
                      (rng() % 2 ? "<python>print(1/0)</python>" : "<search></search>"));
    }
    turns.push_back(std::string(rng() % 400, 'w') + "<answer>\\boxed{1}</answer>");
    auto g1 = ScriptedGenerator::from_turns(turns);
    auto g2 = ScriptedGenerator::from_turns(turns);
    auto sb = std::make_shared<ScriptedSandbox>();
    auto mk = [&] {
      auto reg = std::make_shared<ToolRegistry>();
      reg->register_tool(TagKind::Python, std::make_shared<CodeTool>(sb));
      reg->register_tool(TagKind::Search, std::make_shared<ScriptedSearchTool>());
      return reg;
    };
    auto r1 = mk();
    auto r2 = mk();
    RolloutConfig cfg;
    cfg.max_chars = 300;
    const Trajectory a = run_rollout({"x", "q", "1", ""}, *g1, *r1, cfg);
    const Trajectory b =
        robust_rollout({"x", "q", "1", ""}, *g2, *r2, cfg, ResiliencePolicies::none(), {g2, g2});
    check(trajectory_to_json(a).dump() == trajectory_to_json(b).dump(), "policies off identical");
  }
}

// ---------------------------------------------------------------- eval

void eval_suite(Check& check) {
  check(std::fabs(token_f1("drifting", "Drifting") - 1.0) < 1e-4, "f1 1.0");
  check(std::fabs(token_f1("the capital of france", "capital france") - 0.6667) < 1e-4, "f1 0.6667");
  check(std::fabs(token_f1("abc", "xyz")) < 1e-4, "f1 0.0");

  auto gen = std::make_shared<ScriptedGenerator>(
      [](const GenerationRequest& r) -> std::optional<std::string> {
        if (r.turn == 0) return "<search>" + r.query + "</search>";
        if (r.turn == 1) return "<answer>\\boxed{" + r.query.substr(0, 1) + "}</answer>";
        return std::nullopt;
      });
  auto reg = fixtures::echo_registry();
  auto ds = [](const std::string& name, int n, int correct) {
    Dataset d;
    d.spec.name = name;
    for (int i = 0; i < n; ++i) {
      d.examples.push_back({name + std::to_string(i),
                            (i < correct ? "1" : "0") + name + std::to_string(i), "1"});
    }
    return d;
  };
  const auto rep = evaluate({ds("A", 10, 8), ds("B", 2, 1)}, *gen, *reg, EvalOptions{});
  check(rep.tool_efficiency && std::fabs(*rep.tool_efficiency - 0.65) < 1e-9, "T_E 0.65");

  const fs::path out = fixtures::scratch_dir("acceptance_demo");
  const auto start = std::chrono::steady_clock::now();
  const auto run = fixtures::cli({"demo", "--out", out.string()});
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  check(run.code == 0, "demo exit code " + std::to_string(run.code) + " " + run.err);
  check(fs::exists(out / "report.json"), "demo report");
  check(secs < 60.0, "demo under 60 s");
  fs::remove_all(out);
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"reward golden suite", 1.0, reward_golden},
      {"rl-math oracle suite", 1.0, rl_oracle},
      {"protocol fuzz suite", 30.0, protocol_fuzz},
      {"pipeline golden run", 10.0, pipeline_golden},
      {"rollout/cache suite", 30.0, rollout_cache},
      {"schedule ordering", 1.0, schedule_order},
      {"resilience suite", 5.0, resilience},
      {"eval suite", 60.0, eval_suite},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Check check;
    const auto start = std::chrono::steady_clock::now();
    try {
      c.body(check);
    } catch (const std::exception& e) {
      check(false, std::string("exception: ") + e.what());
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > c.budget_s) {
      check(false, "runtime " + std::to_string(secs) + " s over " + std::to_string(c.budget_s));
    }
    const bool ok = check.failures.empty();
    failed += ok ? 0 : 1;
    std::ostringstream line;
    line.setf(std::ios::fixed);
    line.precision(3);
    line << (ok ? "PASS" : "FAIL") << "  " << c.name << "  (" << check.count << " checks, "
         << secs << " s)";
    for (const auto& f : check.failures) line << "\n      - " << f;
    std::cout << line.str() << std::endl;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed")
            << std::endl;
  return failed == 0 ? 0 : 1;
}
