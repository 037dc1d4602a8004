#include "toolstar/rl_math.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "toolstar/serialize.hpp"

namespace toolstar {

std::vector<double> group_advantages(const std::vector<double>& rewards,
                                     double adv_eps) {
  if (rewards.empty()) return {};
  long double sum = 0;
  for (double r : rewards) sum += r;
  const long double mean = sum / rewards.size();
  long double var = 0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const long double sd = std::sqrt(var / rewards.size());
  std::vector<double> out;
  out.reserve(rewards.size());
  for (double r : rewards) {
    out.push_back(static_cast<double>((r - mean) / (sd + adv_eps)));
  }
  return out;
}

GrpoResult grpo_objective(const std::vector<TokenLogprobSet>& members,
                          const std::vector<double>& advantages,
                          const GrpoConfig& cfg) {
  if (members.size() != advantages.size()) {
    throw Error(Errc::Alignment, "members and advantages differ in length");
  }
  GrpoResult res;
  long double total = 0;
  std::size_t unmasked_all = 0;
  std::size_t clipped = 0;
  for (std::size_t i = 0; i < members.size(); ++i) {
    const auto& m = members[i];
    const std::size_t n = m.new_logprobs.size();
    const bool ref_ok = m.ref_logprobs.empty() || m.ref_logprobs.size() == n;
    if (m.old_logprobs.size() != n || m.mask.size() != n || !ref_ok) {
      throw Error(Errc::Alignment, "logprob lists of member " +
                                       std::to_string(i) + " are misaligned");
    }
    if (cfg.kl_beta > 0 && m.ref_logprobs.size() != n) {
      throw Error(Errc::Alignment, "reference logprobs missing for member " +
                                       std::to_string(i));
    }
    const long double a = advantages[i];
    std::vector<double> terms(n, 0.0);
    long double member_sum = 0;
    std::size_t count = 0;
    for (std::size_t t = 0; t < n; ++t) {
      if (m.mask[t]) continue;
      const long double ratio =
          std::exp(static_cast<long double>(m.new_logprobs[t]) - m.old_logprobs[t]);
      const long double lo = 1.0L - cfg.clip_eps;
      const long double hi = 1.0L + cfg.clip_eps;
      const long double unclipped = ratio * a;
      const long double clipped_term = std::clamp(ratio, lo, hi) * a;
      long double term = std::min(unclipped, clipped_term);
      if (clipped_term < unclipped) ++clipped;
      if (cfg.kl_beta > 0) {
        const long double d =
            static_cast<long double>(m.ref_logprobs[t]) - m.new_logprobs[t];
        term -= cfg.kl_beta * (std::exp(d) - d - 1.0L);
      }
      terms[t] = static_cast<double>(term);
      member_sum += term;
      ++count;
    }
    if (count > 0) total += member_sum / count;
    unmasked_all += count;
    res.per_token_terms.push_back(std::move(terms));
  }
  res.value = members.empty() ? 0.0 : static_cast<double>(total / members.size());
  res.clip_fraction =
      unmasked_all == 0 ? 0.0
                        : static_cast<double>(clipped) / static_cast<double>(unmasked_all);
  return res;
}

TokenLogprobSet logprob_set_from(const Trajectory& traj) {
  TokenLogprobSet s;
  for (const auto& t : traj.logprobs) {
    s.new_logprobs.push_back(t.logprob);
    s.old_logprobs.push_back(t.logprob);
    s.ref_logprobs.push_back(t.logprob);
    s.mask.push_back(t.masked);
  }
  return s;
}

PairBuildResult build_preference_pairs(
    const std::vector<CandidateGroup>& groups) {
  PairBuildResult out;
  for (const auto& g : groups) {
    const Candidate* best = nullptr;
    const Candidate* worst = nullptr;
    for (const auto& c : g.candidates) {
      if (c.reward.total >= 1.0) {
        if (!best || c.reward.total > best->reward.total ||
            (c.reward.total == best->reward.total &&
             c.response.size() < best->response.size())) {
          best = &c;
        }
      } else {
        if (!worst || c.reward.total < worst->reward.total ||
            (c.reward.total == worst->reward.total &&
             c.response.size() < worst->response.size())) {
          worst = &c;
        }
      }
    }
    if (!best || !worst) {
      ++out.skipped;
      continue;
    }
    out.pairs.push_back({g.id, g.query, *best, *worst});
  }
  return out;
}

double dpo_margin(const DpoLogprobs& lp) {
  return (lp.policy_chosen - lp.ref_chosen) -
         (lp.policy_rejected - lp.ref_rejected);
}

double dpo_loss(const DpoLogprobs& lp, double beta) {
  if (!(beta > 0)) throw Error(Errc::Config, "dpo beta must be positive");
  // softplus(-x) = -log sigmoid(x)
  const double x = -beta * dpo_margin(lp);
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

void RecordingTrainer::record(const std::string& name, std::size_t size) {
  if (fail_at && calls.size() == *fail_at) {
    throw Error(Errc::Trainer, "trainer failure injected at call " +
                                   std::to_string(*fail_at));
  }
  calls.push_back(name);
  batch_sizes.push_back(size);
}

void RecordingTrainer::grpo_step(const std::vector<GroupRollout>& batch) {
  record("grpo", batch.size());
}

void RecordingTrainer::dpo_step(const std::vector<PreferencePair>& pairs) {
  record("dpo", pairs.size());
}

IpcTrainer::IpcTrainer(std::vector<std::string> argv,
                       std::chrono::milliseconds timeout)
    : timeout_(timeout) {
  try {
    child_ = std::make_unique<ChildProcess>(argv);
  } catch (const Error& e) {
    throw Error(Errc::Trainer, e.what());
  }
}

IpcTrainer::~IpcTrainer() = default;

void IpcTrainer::send(const std::string& line) {
  try {
    child_->write_line(line);
  } catch (const Error& e) {
    throw Error(Errc::Trainer, e.what());
  }
  const auto reply = child_->read_line(timeout_);
  if (!reply) throw Error(Errc::Trainer, "trainer process did not reply");
  try {
    const json j = json::parse(*reply);
    if (!j.value("ok", false)) {
      throw Error(Errc::Trainer, "trainer error: " + j.value("error", *reply));
    }
  } catch (const json::exception&) {
    throw Error(Errc::Trainer, "malformed trainer reply: " + *reply);
  }
}

void IpcTrainer::grpo_step(const std::vector<GroupRollout>& batch) {
  json groups = json::array();
  for (const auto& g : batch) {
    json members = json::array();
    for (const auto& m : g.members) members.push_back(trajectory_to_json(m));
    groups.push_back({{"query", g.query},
                      {"rewards", g.rewards},
                      {"advantages", g.advantages},
                      {"members", std::move(members)}});
  }
  send(json{{"op", "grpo_step"}, {"groups", std::move(groups)}}.dump());
}

void IpcTrainer::dpo_step(const std::vector<PreferencePair>& pairs) {
  json arr = json::array();
  for (const auto& p : pairs) arr.push_back(json::parse(dpo_record(p)));
  send(json{{"op", "dpo_step"}, {"pairs", std::move(arr)}}.dump());
}

RolloutSampler::RolloutSampler(std::vector<RolloutInput> questions,
                               std::shared_ptr<Generator> generator,
                               std::shared_ptr<ToolRegistry> registry,
                               RolloutConfig cfg, std::uint64_t seed)
    : questions_(std::move(questions)),
      generator_(std::move(generator)),
      registry_(std::move(registry)),
      cfg_(std::move(cfg)),
      seed_(seed) {
  if (questions_.empty()) throw Error(Errc::EmptyInput, "no questions to sample");
}

std::vector<GroupRollout> RolloutSampler::sample_groups(std::size_t step,
                                                        std::size_t batch_size) {
  std::vector<GroupRollout> out;
  for (std::size_t b = 0; b < batch_size; ++b) {
    const auto& q = questions_[(step * batch_size + b) % questions_.size()];
    RolloutConfig c = cfg_;
    c.seed = seed_ + step * 1000003ULL + b * c.group_size;
    out.push_back(run_group(q, *generator_, *registry_, c));
  }
  return out;
}

std::vector<GroupRollout> RolloutSampler::sample_candidates(std::size_t cycle,
                                                            std::size_t k,
                                                            std::size_t n) {
  std::vector<std::size_t> order(questions_.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed_ ^ (0x9E3779B97F4A7C15ULL * (cycle + 1)));
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(std::min(k, order.size()));
  std::vector<GroupRollout> out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    RolloutConfig c = cfg_;
    c.group_size = std::max<std::size_t>(1, n);
    c.seed = seed_ + 7919ULL * (cycle + 1) + i * c.group_size;
    out.push_back(run_group(questions_[order[i]], *generator_, *registry_, c));
  }
  return out;
}

ScheduleReport run_schedule(Trainer& trainer, Sampler& sampler,
                            const RewardFn& reward_fn, const SchedulePlan& plan,
                            const GrpoConfig& grpo) {
  ScheduleReport report;
  std::size_t step = 0;
  try {
    for (std::size_t c = 0; c < plan.cycles; ++c) {
      for (std::size_t s = 0; s < plan.grpo_steps_per_cycle; ++s, ++step) {
        auto batch = sampler.sample_groups(step, plan.batch_size);
        long double sum = 0;
        std::size_t n = 0;
        for (auto& g : batch) {
          g.rewards.clear();
          for (const auto& m : g.members) {
            g.rewards.push_back(reward_fn(m).total);
            sum += g.rewards.back();
            ++n;
          }
          g.advantages = group_advantages(g.rewards, grpo.adv_eps);
        }
        report.grpo_reward_means.push_back(n == 0 ? 0.0 : static_cast<double>(sum / n));
        trainer.grpo_step(batch);
        report.calls.push_back("grpo");
      }
      auto sampled = sampler.sample_candidates(c, plan.critic_samples,
                                               plan.candidates_per_query);
      std::vector<CandidateGroup> groups;
      for (const auto& g : sampled) {
        CandidateGroup cg;
        cg.query = g.query;
        for (const auto& m : g.members) {
          if (cg.id.empty()) cg.id = m.id;
          cg.candidates.push_back({m.text(), reward_fn(m)});
        }
        groups.push_back(std::move(cg));
      }
      auto built = build_preference_pairs(groups);
      report.dpo_pair_counts.push_back(built.pairs.size());
      report.dpo_skipped.push_back(built.skipped);
      trainer.dpo_step(built.pairs);
      report.calls.push_back("dpo");
    }
    report.completed = true;
  } catch (const std::exception& e) {
    report.error = e.what();
  }
  return report;
}

std::string sft_record(const std::string& instruction, const Trajectory& traj,
                       const TagSet& tags) {
  json j = {{"id", traj.id},
            {"input", instruction.empty() ? traj.question
                                          : instruction + "\n\n" + traj.question},
            {"output", traj.text(tags)}};
  return j.dump();
}

std::string dpo_record(const PreferencePair& pair) {
  auto side = [](const Candidate& c) {
    return json{{"response", c.response},
                {"reward", c.reward.total},
                {"principle", c.reward.principle}};
  };
  json j = {{"id", pair.id},
            {"question", pair.query},
            {"chosen", side(pair.chosen)},
            {"rejected", side(pair.rejected)}};
  return j.dump();
}

}  // namespace toolstar
