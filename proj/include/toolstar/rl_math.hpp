#pragma once
// GRPO advantages and clipped objective, self-critic preference pairs, DPO
// loss and the interleaved GRPO / DPO schedule.

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "toolstar/process.hpp"
#include "toolstar/reward.hpp"
#include "toolstar/rollout.hpp"

namespace toolstar {

struct GrpoConfig {
  double clip_eps = 0.2;
  double kl_beta = 0.0;
  double adv_eps = 1e-8;
};

// (r - mean) / (population std + adv_eps).
std::vector<double> group_advantages(const std::vector<double>& rewards,
                                     double adv_eps = 1e-8);

struct TokenLogprobSet {
  std::vector<double> new_logprobs;
  std::vector<double> old_logprobs;
  std::vector<double> ref_logprobs;
  // True marks engine-inserted tokens, excluded from every sum.
  std::vector<bool> mask;
};

struct GrpoResult {
  double value = 0.0;
  // Per member, per token; masked positions hold 0.
  std::vector<std::vector<double>> per_token_terms;
  double clip_fraction = 0.0;
};

// Throws Error{Alignment} when list lengths disagree.
GrpoResult grpo_objective(const std::vector<TokenLogprobSet>& members,
                          const std::vector<double>& advantages,
                          const GrpoConfig& cfg = {});

// Builds a member's logprob set from rollout token records; new = old = the
// recorded logprob, ref defaults to the same values.
TokenLogprobSet logprob_set_from(const Trajectory& traj);

struct Candidate {
  std::string response;
  RewardBreakdown reward;
};

struct CandidateGroup {
  std::string id;
  std::string query;
  std::vector<Candidate> candidates;
};

struct PreferencePair {
  std::string id;
  std::string query;
  Candidate chosen;
  Candidate rejected;
};

struct PairBuildResult {
  std::vector<PreferencePair> pairs;
  std::size_t skipped = 0;
};

// Best positive (total >= 1) against worst negative (total < 1); ties go to
// the shorter response. Groups lacking either side are skipped.
PairBuildResult build_preference_pairs(const std::vector<CandidateGroup>& groups);

struct DpoLogprobs {
  double policy_chosen = 0.0;
  double ref_chosen = 0.0;
  double policy_rejected = 0.0;
  double ref_rejected = 0.0;
};

// -log sigmoid(beta * margin), computed as a stable softplus.
double dpo_loss(const DpoLogprobs& lp, double beta = 0.3);
double dpo_margin(const DpoLogprobs& lp);

struct SchedulePlan {
  std::size_t cycles = 1;
  std::size_t grpo_steps_per_cycle = 1;
  std::size_t critic_samples = 4;
  std::size_t candidates_per_query = 4;
  // Questions per GRPO step.
  std::size_t batch_size = 1;
};

class Trainer {
 public:
  virtual ~Trainer() = default;
  // Both throw Error{Trainer} on failure.
  virtual void grpo_step(const std::vector<GroupRollout>& batch) = 0;
  virtual void dpo_step(const std::vector<PreferencePair>& pairs) = 0;
};

// Records call order; optionally fails at a given call index.
class RecordingTrainer final : public Trainer {
 public:
  void grpo_step(const std::vector<GroupRollout>& batch) override;
  void dpo_step(const std::vector<PreferencePair>& pairs) override;

  std::vector<std::string> calls;
  std::vector<std::size_t> batch_sizes;
  std::optional<std::size_t> fail_at;

 private:
  void record(const std::string& name, std::size_t size);
};

// Line-delimited JSON to an external process. Requests:
//   {"op":"grpo_step","groups":[{"query","advantages","rewards","members"}]}
//   {"op":"dpo_step","pairs":[dpo export records]}
// Each is answered with one line {"ok":true} or {"ok":false,"error":"..."}.
class IpcTrainer final : public Trainer {
 public:
  explicit IpcTrainer(std::vector<std::string> argv,
                      std::chrono::milliseconds timeout =
                          std::chrono::milliseconds(600000));
  ~IpcTrainer() override;
  void grpo_step(const std::vector<GroupRollout>& batch) override;
  void dpo_step(const std::vector<PreferencePair>& pairs) override;

 private:
  void send(const std::string& line);
  std::unique_ptr<ChildProcess> child_;
  std::chrono::milliseconds timeout_;
};

class Sampler {
 public:
  virtual ~Sampler() = default;
  // Unrewarded groups for one GRPO step.
  virtual std::vector<GroupRollout> sample_groups(std::size_t step,
                                                  std::size_t batch_size) = 0;
  // k queries with n candidates each for the self-critic phase.
  virtual std::vector<GroupRollout> sample_candidates(std::size_t cycle,
                                                      std::size_t k,
                                                      std::size_t n) = 0;
};

// Samples groups with the rollout engine over a fixed question list.
class RolloutSampler final : public Sampler {
 public:
  RolloutSampler(std::vector<RolloutInput> questions,
                 std::shared_ptr<Generator> generator,
                 std::shared_ptr<ToolRegistry> registry, RolloutConfig cfg,
                 std::uint64_t seed = 0);
  std::vector<GroupRollout> sample_groups(std::size_t step,
                                          std::size_t batch_size) override;
  std::vector<GroupRollout> sample_candidates(std::size_t cycle, std::size_t k,
                                              std::size_t n) override;

 private:
  std::vector<RolloutInput> questions_;
  std::shared_ptr<Generator> generator_;
  std::shared_ptr<ToolRegistry> registry_;
  RolloutConfig cfg_;
  std::uint64_t seed_;
};

using RewardFn = std::function<RewardBreakdown(const Trajectory&)>;

struct ScheduleReport {
  std::vector<std::string> calls;
  std::vector<double> grpo_reward_means;
  std::vector<std::size_t> dpo_pair_counts;
  std::vector<std::size_t> dpo_skipped;
  bool completed = false;
  std::string error;
};

ScheduleReport run_schedule(Trainer& trainer, Sampler& sampler,
                            const RewardFn& reward_fn, const SchedulePlan& plan,
                            const GrpoConfig& grpo = {});

std::string sft_record(const std::string& instruction, const Trajectory& traj,
                       const TagSet& tags = TagSet::defaults());
std::string dpo_record(const PreferencePair& pair);

}  // namespace toolstar
