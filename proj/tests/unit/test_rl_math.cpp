#include <doctest.h>

#include <cmath>
#include <cstring>
#include <numeric>
#include <random>

#include "helpers.hpp"
#include "toolstar/rl_math.hpp"

using namespace toolstar;

namespace {

TokenLogprobSet uniform_set(std::size_t n, double lp = -0.5) {
  TokenLogprobSet s;
  s.new_logprobs.assign(n, lp);
  s.old_logprobs.assign(n, lp);
  s.ref_logprobs.assign(n, lp);
  s.mask.assign(n, false);
  return s;
}

Candidate cand(const std::string& response, double total) {
  Candidate c;
  c.response = response;
  c.reward.total = total;
  return c;
}

// Every group holds members whose texts encode their reward.
class FakeSampler final : public Sampler {
 public:
  explicit FakeSampler(std::vector<double> rewards) : rewards_(std::move(rewards)) {}
  std::vector<GroupRollout> sample_groups(std::size_t, std::size_t batch) override {
    return std::vector<GroupRollout>(batch, group());
  }
  std::vector<GroupRollout> sample_candidates(std::size_t, std::size_t k, std::size_t) override {
    return std::vector<GroupRollout>(k, group());
  }

 private:
  GroupRollout group() const {
    GroupRollout g;
    g.query = "q";
    for (double r : rewards_) {
      Trajectory t;
      t.id = "q1";
      Segment s;
      s.kind = TagKind::Answer;
      s.text = std::to_string(r);
      t.chain.segments = {s};
      g.members.push_back(t);
    }
    return g;
  }
  std::vector<double> rewards_;
};

RewardBreakdown reward_from_text(const Trajectory& t) {
  RewardBreakdown r;
  r.total = std::stod(t.chain.segments.at(0).text);
  return r;
}

std::vector<std::string> expected_calls(std::size_t c, std::size_t s) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = 0; j < s; ++j) out.push_back("grpo");
    out.push_back("dpo");
  }
  return out;
}

}  // namespace

TEST_SUITE("rl_math") {

TEST_CASE("group advantages") {
  auto a = group_advantages({1, 0});
  CHECK(a[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(a[1] == doctest::Approx(-1.0).epsilon(1e-6));
  a = group_advantages({1.1, 1.1, 1.1});
  for (double v : a) CHECK(v == 0.0);
  a = group_advantages({1.1, 0, -1, 0});
  const std::vector<double> want = {1.4471, -0.0337, -1.3797, -0.0337};
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::fabs(a[i] - want[i]) < 1e-3);
  CHECK(std::fabs(std::accumulate(a.begin(), a.end(), 0.0)) < 1e-9);
  CHECK(group_advantages({}).empty());
  CHECK(group_advantages({3.0}) == std::vector<double>{0.0});
}

TEST_CASE("advantages sum to zero on random groups") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1.1);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> r(8);
    for (auto& x : r) x = u(rng);
    const auto a = group_advantages(r);
    CHECK(std::fabs(std::accumulate(a.begin(), a.end(), 0.0)) < 1e-9);
  }
}

TEST_CASE("ratio one identity") {
  const auto r = grpo_objective({uniform_set(5), uniform_set(5)}, {1, -1});
  CHECK(r.value == 0.0);
  CHECK(r.clip_fraction == 0.0);
  CHECK(r.per_token_terms[0][0] == 1.0);
}

TEST_CASE("clipped ratio two") {
  TokenLogprobSet s = uniform_set(1, -1.0);
  s.new_logprobs[0] = -1.0 + std::log(2.0);
  const auto r = grpo_objective({s}, {1.0});
  CHECK(r.value == doctest::Approx(1.2).epsilon(1e-12));
  CHECK(r.clip_fraction == 1.0);
  // Negative advantage takes the unclipped (more negative) side.
  const auto n = grpo_objective({s}, {-1.0});
  CHECK(n.value == doctest::Approx(-2.0).epsilon(1e-12));
}

TEST_CASE("masked positions do not matter") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(-1.0, 0.3);
  TokenLogprobSet s;
  for (int i = 0; i < 50; ++i) {
    s.new_logprobs.push_back(g(rng));
    s.old_logprobs.push_back(g(rng));
    s.ref_logprobs.push_back(g(rng));
    s.mask.push_back(i % 3 == 0);
  }
  GrpoConfig cfg;
  cfg.kl_beta = 0.04;
  const auto base = grpo_objective({s, s}, {0.7, -0.7}, cfg);
  TokenLogprobSet t = s;
  for (std::size_t i = 0; i < t.mask.size(); ++i) {
    if (!t.mask[i]) continue;
    t.new_logprobs[i] = 5.0 + i;
    t.old_logprobs[i] = -9.0;
    t.ref_logprobs[i] = 3.0;
  }
  const auto moved = grpo_objective({t, t}, {0.7, -0.7}, cfg);
  CHECK(std::memcmp(&base.value, &moved.value, sizeof(double)) == 0);
  CHECK(base.per_token_terms == moved.per_token_terms);
  CHECK(base.clip_fraction == moved.clip_fraction);
}

TEST_CASE("alignment errors") {
  TokenLogprobSet s = uniform_set(3);
  s.mask.pop_back();
  CHECK_THROWS_AS(grpo_objective({s}, {1.0}), Error);
  CHECK_THROWS_AS(grpo_objective({uniform_set(2)}, {1.0, 2.0}), Error);
}

TEST_CASE("logprob set from a rollout") {
  Trajectory t;
  t.logprobs = {{"a", -0.1, false}, {"<result>x</result>", 0.0, true}, {"b", -0.2, false}};
  const auto s = logprob_set_from(t);
  CHECK(s.mask == std::vector<bool>{false, true, false});
  CHECK(s.new_logprobs == s.old_logprobs);
}

TEST_CASE("preference pairs") {
  auto built = build_preference_pairs(
      {{"a", "qa", {cand("x", 1.1), cand("y", 0), cand("z", -1)}},
       {"b", "qb", {cand("x", 1.0), cand("y", 1.0)}},
       {"c", "qc", {cand("x", 1.0), cand("y", 0)}}});
  REQUIRE(built.pairs.size() == 2);
  CHECK(built.skipped == 1);
  CHECK(built.pairs[0].chosen.reward.total == 1.1);
  CHECK(built.pairs[0].rejected.reward.total == -1);
  CHECK(built.pairs[1].chosen.reward.total == 1.0);
  CHECK(built.pairs[1].rejected.reward.total == 0);

  built = build_preference_pairs({{"t", "q", {cand("long answer", 1), cand("short", 1),
                                              cand("bad one", 0), cand("bad", 0)}}});
  REQUIRE(built.pairs.size() == 1);
  CHECK(built.pairs[0].chosen.response == "short");
  CHECK(built.pairs[0].rejected.response == "bad");
}

TEST_CASE("dpo loss") {
  CHECK(std::fabs(dpo_loss({-2, -2, -2, -2}) - std::log(2.0)) < 1e-9);
  const DpoLogprobs ex{-1, -1, -3, -1};
  CHECK(dpo_margin(ex) == doctest::Approx(2.0));
  CHECK(std::fabs(dpo_loss(ex, 0.3) - 0.437488) < 1e-6);
  double prev = dpo_loss({0, 0, 0, 0});
  for (double m = 1; m < 2000; m *= 2) {
    const double cur = dpo_loss({m, 0, 0, 0});
    CHECK(cur < prev);
    CHECK(cur >= 0.0);
    prev = cur;
  }
  CHECK(dpo_loss({5000, 0, 0, 0}) < 1e-12);
  CHECK(std::isfinite(dpo_loss({-5000, 0, 0, 0})));
}

TEST_CASE("schedule ordering") {
  for (auto [c, s] : std::vector<std::pair<std::size_t, std::size_t>>{{1, 1}, {2, 3}, {1, 0}}) {
    RecordingTrainer trainer;
    FakeSampler sampler({1.1, 0, -1});
    SchedulePlan plan;
    plan.cycles = c;
    plan.grpo_steps_per_cycle = s;
    const auto rep = run_schedule(trainer, sampler, reward_from_text, plan);
    CHECK(rep.completed);
    CHECK(trainer.calls == expected_calls(c, s));
    CHECK(rep.calls == expected_calls(c, s));
    CHECK(rep.dpo_pair_counts == std::vector<std::size_t>(c, plan.critic_samples));
  }
}

TEST_CASE("schedule reward means and empty pairs") {
  RecordingTrainer trainer;
  FakeSampler sampler({1.0, 1.0});
  SchedulePlan plan;
  plan.grpo_steps_per_cycle = 2;
  const auto rep = run_schedule(trainer, sampler, reward_from_text, plan);
  CHECK(rep.completed);
  CHECK(rep.grpo_reward_means == std::vector<double>{1.0, 1.0});
  CHECK(rep.dpo_pair_counts == std::vector<std::size_t>{0});
  CHECK(trainer.calls.back() == "dpo");
}

TEST_CASE("trainer failure stops the schedule") {
  RecordingTrainer trainer;
  trainer.fail_at = 2;
  FakeSampler sampler({1.0, 0.0});
  SchedulePlan plan;
  plan.grpo_steps_per_cycle = 3;
  const auto rep = run_schedule(trainer, sampler, reward_from_text, plan);
  CHECK_FALSE(rep.completed);
  CHECK_FALSE(rep.error.empty());
  CHECK(rep.calls == std::vector<std::string>{"grpo", "grpo"});
}

TEST_CASE("rollout sampler feeds the schedule") {
  auto gen = ScriptedGenerator::from_seeded_turns(
      {{"<search>a</search>", "<answer>\\boxed{1}</answer>"},
       {"<answer>\\boxed{2}</answer>"}});
  auto reg = fixtures::echo_registry();
  RolloutConfig rc;
  rc.group_size = 4;
  RolloutSampler sampler({{"q1", "question", "1", ""}}, gen, reg, rc);
  RecordingTrainer trainer;
  SchedulePlan plan;
  plan.cycles = 1;
  plan.grpo_steps_per_cycle = 1;
  plan.critic_samples = 1;
  RewardConfig rw;
  const auto rep = run_schedule(
      trainer, sampler, [&](const Trajectory& t) { return compute_reward(t, t.gold, rw); }, plan);
  CHECK(rep.completed);
  CHECK(rep.grpo_reward_means.at(0) == doctest::Approx(0.5));
  CHECK(rep.dpo_pair_counts.at(0) == 1);
}

TEST_CASE("ipc trainer speaks the line protocol") {
  const auto dir = fixtures::scratch_dir("ipc");
  const auto log = dir / "ops.log";
  {
    IpcTrainer trainer({"python3", fixtures::fake("fake_trainer.py").string(), "--log",
                        log.string()});
    FakeSampler sampler({1.1, 0});
    SchedulePlan plan;
    plan.cycles = 2;
    plan.grpo_steps_per_cycle = 3;
    const auto rep = run_schedule(trainer, sampler, reward_from_text, plan);
    CHECK(rep.completed);
  }
  const std::string ops = read_file(log);
  CHECK(ops ==
        "grpo_step 1\ngrpo_step 1\ngrpo_step 1\ndpo_step 4\n"
        "grpo_step 1\ngrpo_step 1\ngrpo_step 1\ndpo_step 4\n");

  IpcTrainer failing({"python3", fixtures::fake("fake_trainer.py").string(), "--log",
                      (dir / "fail.log").string(), "--fail-at", "1"});
  FakeSampler sampler({1.1, 0});
  SchedulePlan plan;
  plan.grpo_steps_per_cycle = 3;
  const auto rep = run_schedule(failing, sampler, reward_from_text, plan);
  CHECK_FALSE(rep.completed);
  CHECK(rep.error.find("refused") != std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST_CASE("export records") {
  PreferencePair p{"id1", "q", cand("good", 1.1), cand("bad", -1)};
  const json j = json::parse(dpo_record(p));
  CHECK(j.at("chosen").at("reward") == 1.1);
  CHECK(j.at("rejected").at("response") == "bad");
  Trajectory t;
  t.id = "x";
  t.question = "q";
  t.chain = parse_chain("<answer>\\boxed{1}</answer>");
  const json s = json::parse(sft_record("inst", t));
  CHECK(s.at("input") == "inst\n\nq");
  CHECK(s.at("output") == "<answer>\\boxed{1}</answer>");
}

}
