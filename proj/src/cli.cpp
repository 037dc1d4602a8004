#include "toolstar/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "toolstar/config.hpp"
#include "toolstar/errors.hpp"
#include "toolstar/evalbench.hpp"
#include "toolstar/resilience.hpp"
#include "toolstar/reward.hpp"
#include "toolstar/rl_math.hpp"
#include "toolstar/rollout.hpp"
#include "toolstar/sandbox.hpp"
#include "toolstar/script_book.hpp"
#include "toolstar/search.hpp"
#include "toolstar/serialize.hpp"
#include "toolstar/synthesis.hpp"

#ifndef TOOLSTAR_DATA_DIR
#define TOOLSTAR_DATA_DIR "data"
#endif

namespace fs = std::filesystem;

namespace toolstar {

fs::path default_data_dir() {
  if (const char* v = std::getenv("TOOLSTAR_DATA_DIR"); v && *v) return v;
  return TOOLSTAR_DATA_DIR;
}

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

EngineConfig engine_config(const std::string& path) {
  EngineConfig c = path.empty() ? EngineConfig{} : load_config(path);
  c.sync_tags();
  apply_env_overrides(c);
  return c;
}

std::shared_ptr<Generator> make_generator(const EngineConfig& cfg,
                                          const std::string& script) {
  if (!script.empty()) {
    auto book = ScriptBook::load(script);
    book->set_hint_markers(
        {cfg.hints.verification_hint_template, cfg.hints.reflection_hint_template});
    return book;
  }
  return std::make_shared<ChatCompletionClient>(cfg.llm, make_http_client());
}

std::shared_ptr<ToolRegistry> make_registry(const EngineConfig& cfg,
                                            const std::string& sandbox_table,
                                            std::string corpus) {
  auto reg = std::make_shared<ToolRegistry>(cfg.registry);
  std::shared_ptr<Sandbox> sandbox;
  if (!sandbox_table.empty()) {
    sandbox = std::make_shared<ScriptedSandbox>(load_sandbox_table(sandbox_table));
  } else if (!cfg.sandbox.driver.empty()) {
    sandbox = std::make_shared<DriverSandbox>(cfg.sandbox.driver);
  }
  if (sandbox) {
    reg->register_tool(TagKind::Python,
                       std::make_shared<CodeTool>(sandbox, cfg.sandbox.limits));
  }
  if (corpus.empty()) corpus = cfg.paths.corpus;
  std::shared_ptr<const Bm25Index> local;
  if (!corpus.empty()) local = std::make_shared<Bm25Index>(load_corpus(corpus));
  std::shared_ptr<WebSearchClient> web;
  std::shared_ptr<PageFetcher> fetcher;
  if (!cfg.search.web_url.empty()) {
    auto http = make_http_client();
    web = std::make_shared<WebSearchClient>(cfg.search.web_url, cfg.search.api_key,
                                            http, cfg.search.retry);
    fetcher = std::make_shared<HttpPageFetcher>(http, cfg.search.retry.timeout);
  }
  if (local || web) {
    reg->register_tool(TagKind::Search, std::make_shared<SearchTool>(
                                            local, web, cfg.search.options, fetcher));
  }
  return reg;
}

std::vector<RolloutInput> read_questions(const std::string& path) {
  std::vector<RolloutInput> out;
  std::size_t line = 0;
  for (const auto& j : read_jsonl(path)) {
    ++line;
    if (!j.contains("question")) {
      throw SchemaError(line, "missing \"question\"");
    }
    RolloutInput in;
    in.id = j.contains("id") ? (j["id"].is_string() ? j["id"].get<std::string>()
                                                    : j["id"].dump())
                             : std::to_string(line);
    in.question = j["question"].get<std::string>();
    if (j.contains("answer")) {
      in.gold = j["answer"].is_string() ? j["answer"].get<std::string>() : j["answer"].dump();
    } else if (j.contains("gold")) {
      in.gold = j["gold"].is_string() ? j["gold"].get<std::string>() : j["gold"].dump();
    }
    out.push_back(std::move(in));
  }
  return out;
}

void emit_lines(const std::vector<json>& lines, const std::string& out_path,
                std::ostream& out) {
  if (!out_path.empty()) {
    write_jsonl(out_path, lines);
    return;
  }
  for (const auto& l : lines) out << l.dump() << "\n";
}

ResilienceModels resilience_models(const std::shared_ptr<Generator>& gen) {
  return ResilienceModels{gen, gen};
}

// ---- subcommands --------------------------------------------------------

struct CommonOpts {
  std::string config;
  std::string script;
  std::string sandbox;
  std::string corpus;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool engine) {
  cmd->add_option("--config", o.config, "Engine config file (TOML)")->check(CLI::ExistingFile);
  if (!engine) return;
  cmd->add_option("--script", o.script,
                  "Scripted generator file; the configured LLM endpoint is used otherwise")
      ->check(CLI::ExistingFile);
  cmd->add_option("--sandbox", o.sandbox,
                  "Code result table; the configured sandbox driver is used otherwise")
      ->check(CLI::ExistingFile);
  cmd->add_option("--corpus", o.corpus, "Local search corpus (JSONL file or directory)")
      ->check(CLI::ExistingPath);
  cmd->add_option("--seed", o.seed, "Base seed for sampling and hint placement");
}

EngineConfig config_with_seed(const CommonOpts& o) {
  EngineConfig cfg = engine_config(o.config);
  if (o.seed) {
    cfg.rollout.seed = *o.seed;
    cfg.hints.seed = *o.seed;
  }
  return cfg;
}

// Without --dump only the sections are listed.
int cmd_config(const CommonOpts& o, bool dump, std::ostream& out) {
  const EngineConfig cfg = engine_config(o.config);
  const std::string text = config_to_toml(cfg);
  if (dump) {
    out << text;
    return 0;
  }
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.front() == '[') out << line << "\n";
  }
  return 0;
}

json pipeline_summary(const PipelineArtifacts& a) {
  json cats = json::object();
  for (const auto& [id, c] : a.classes.categories) cats[id] = to_string(c);
  return {{"d_tool_p", a.d_tool_p.records.size()},
          {"d_tool_h", a.d_tool_h.records.size()},
          {"d_tool_v1", a.d_tool_v1.records.size()},
          {"d_tool_v2", a.d_tool_v2.records.size()},
          {"rejections", a.rejections.size()},
          {"d_text_sub", a.classes.d_text_sub.records.size()},
          {"d_tool_sub", a.classes.d_tool_sub.records.size()},
          {"d_sft", a.classes.d_sft.records.size()},
          {"d_rl", a.classes.d_rl.size()}};
}

int cmd_synthesize(const CommonOpts& o, const std::string& samples_path,
                   const std::string& out_dir, bool fresh, std::ostream& out) {
  EngineConfig cfg = config_with_seed(o);
  const auto samples = load_samples(samples_path);
  auto gen = make_generator(cfg, o.script);
  auto reg = make_registry(cfg, o.sandbox, o.corpus);
  fs::create_directories(out_dir);
  if (fresh) {
    for (const char* n : {"d_tool_p", "d_text_v2", "d_tool_h"}) {
      fs::remove(fs::path(out_dir) / (std::string(n) + ".jsonl"));
    }
  }
  const auto a = run_pipeline(samples, *gen, *reg, cfg.pipeline(), fs::path(out_dir));
  out << pipeline_summary(a).dump(2) << "\n";
  return 0;
}

int cmd_normalize(const CommonOpts& o, const std::string& in, const std::string& out_dir,
                  std::optional<std::size_t> beta, std::ostream& out) {
  EngineConfig cfg = engine_config(o.config);
  if (beta) cfg.normalization.beta = *beta;
  const Stage v1 = read_stage(in, "d_tool_v1", cfg.tags);
  const auto res = normalize_quality(v1, cfg.normalization, cfg.tags);
  fs::create_directories(out_dir);
  write_stage(fs::path(out_dir) / "d_tool_v2.jsonl", res.kept);
  write_json(fs::path(out_dir) / "rejections.json", rejections_to_json(res.rejections));
  out << json(res.kept.stats).dump(2) << "\n";
  return 0;
}

int cmd_classify(const CommonOpts& o, const std::string& tool, const std::string& direct,
                 const std::string& out_dir, std::ostream& out) {
  const EngineConfig cfg = engine_config(o.config);
  const Stage v2 = read_stage(tool, "d_tool_v2", cfg.tags);
  const Stage d = read_stage(direct, "d_text_v2", cfg.tags);
  const auto res = classify_difficulty(v2, d, cfg.synthesis_metric);
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  write_stage(dir / "d_text_sub.jsonl", res.d_text_sub);
  write_stage(dir / "d_tool_sub.jsonl", res.d_tool_sub);
  write_stage(dir / "d_sft.jsonl", res.d_sft);
  std::vector<json> rl;
  for (const auto& s : res.d_rl) rl.push_back(sample_to_json(s));
  write_jsonl(dir / "d_rl.jsonl", rl);
  json cats = json::object();
  for (const auto& [id, c] : res.categories) cats[id] = to_string(c);
  write_json(dir / "categories.json", cats);
  out << json{{"d_text_sub", res.d_text_sub.records.size()},
              {"d_tool_sub", res.d_tool_sub.records.size()},
              {"d_sft", res.d_sft.records.size()},
              {"d_rl", res.d_rl.size()}}
             .dump(2)
      << "\n";
  return 0;
}

json reward_line(const Trajectory& t, const RewardBreakdown& r) {
  json j = reward_to_json(r);
  j["id"] = t.id;
  return j;
}

int cmd_rollout(const CommonOpts& o, const std::string& question, const std::string& in,
                bool group, bool robust, std::optional<std::size_t> group_size,
                const std::string& out_path, std::ostream& out) {
  EngineConfig cfg = config_with_seed(o);
  if (group_size) cfg.rollout.group_size = *group_size;
  std::vector<RolloutInput> inputs;
  if (!question.empty()) inputs.push_back({"q1", question, "", ""});
  if (!in.empty()) {
    auto more = read_questions(in);
    inputs.insert(inputs.end(), more.begin(), more.end());
  }
  if (inputs.empty()) throw UsageError("rollout needs --question or --in");
  auto gen = make_generator(cfg, o.script);
  auto reg = make_registry(cfg, o.sandbox, o.corpus);
  const ResiliencePolicies policies = robust ? cfg.resilience : ResiliencePolicies::none();
  const ResilienceModels models = robust ? resilience_models(gen) : ResilienceModels{};
  std::vector<json> lines;
  for (const auto& input : inputs) {
    if (!group) {
      const Trajectory t = robust ? robust_rollout(input, *gen, *reg, cfg.rollout, policies, models)
                                  : run_rollout(input, *gen, *reg, cfg.rollout);
      json j = trajectory_to_json(t);
      j["text"] = t.text(cfg.tags);
      if (!input.gold.empty()) j["reward"] = reward_to_json(compute_reward(t, input.gold, cfg.reward));
      lines.push_back(std::move(j));
      continue;
    }
    GroupRollout g = robust ? robust_group(input, *gen, *reg, cfg.rollout, policies, models)
                            : run_group(input, *gen, *reg, cfg.rollout);
    for (std::size_t i = 0; i < g.members.size(); ++i) {
      g.rewards[i] = input.gold.empty()
                         ? 0.0
                         : compute_reward(g.members[i], input.gold, cfg.reward).total;
    }
    g.advantages = group_advantages(g.rewards, cfg.grpo.adv_eps);
    json members = json::array();
    for (const auto& m : g.members) members.push_back(trajectory_to_json(m));
    lines.push_back({{"id", input.id},
                     {"query", g.query},
                     {"rewards", g.rewards},
                     {"advantages", g.advantages},
                     {"members", std::move(members)}});
  }
  emit_lines(lines, out_path, out);
  return 0;
}

int cmd_reward(const CommonOpts& o, const std::string& in, const std::string& gold_path,
               std::optional<std::string> metric, const std::string& out_path,
               std::ostream& out) {
  EngineConfig cfg = engine_config(o.config);
  if (metric) cfg.reward.metric = accuracy_metric_from_string(*metric);
  std::map<std::string, std::string> gold;
  for (auto& [id, a] : read_gold(gold_path)) gold[id] = a;
  std::unique_ptr<LlmJudge> judge;
  if (cfg.reward.metric == AccuracyMetric::ExternalJudge) {
    judge = std::make_unique<LlmJudge>(make_generator(cfg, o.script));
  }
  std::vector<json> lines;
  std::size_t line = 0;
  for (const auto& j : read_jsonl(in)) {
    ++line;
    const Trajectory t = trajectory_from_json(j, cfg.tags);
    std::string g;
    if (auto it = gold.find(t.id); it != gold.end()) {
      g = it->second;
    } else if (!t.gold.empty()) {
      g = t.gold;
    } else {
      throw SchemaError(line, "no gold answer for id " + t.id);
    }
    lines.push_back(reward_line(t, compute_reward(t, g, cfg.reward, judge.get())));
  }
  emit_lines(lines, out_path, out);
  return 0;
}

int cmd_schedule(const CommonOpts& o, const std::string& questions,
                 const std::string& trainer_kind, const std::vector<std::string>& trainer_cmd,
                 std::optional<std::size_t> cycles, std::optional<std::size_t> steps,
                 const std::string& out_path, std::ostream& out) {
  EngineConfig cfg = config_with_seed(o);
  if (cycles) cfg.schedule.cycles = *cycles;
  if (steps) cfg.schedule.grpo_steps_per_cycle = *steps;
  auto gen = make_generator(cfg, o.script);
  auto reg = make_registry(cfg, o.sandbox, o.corpus);
  RolloutSampler sampler(read_questions(questions), gen, reg, cfg.rollout, cfg.rollout.seed);
  const RewardConfig rc = cfg.reward;
  RewardFn reward = [rc](const Trajectory& t) { return compute_reward(t, t.gold, rc); };
  std::unique_ptr<Trainer> trainer;
  if (trainer_kind == "fake") {
    trainer = std::make_unique<RecordingTrainer>();
  } else if (trainer_kind == "ipc") {
    if (trainer_cmd.empty()) throw UsageError("--trainer ipc needs --trainer-cmd");
    trainer = std::make_unique<IpcTrainer>(trainer_cmd);
  } else {
    throw UsageError("unknown trainer " + trainer_kind);
  }
  const ScheduleReport rep = run_schedule(*trainer, sampler, reward, cfg.schedule, cfg.grpo);
  json j = {{"calls", rep.calls},
            {"grpo_reward_means", rep.grpo_reward_means},
            {"dpo_pair_counts", rep.dpo_pair_counts},
            {"dpo_skipped", rep.dpo_skipped},
            {"completed", rep.completed},
            {"error", rep.error}};
  if (!out_path.empty()) write_json(out_path, j);
  out << j.dump(2) << "\n";
  if (!rep.completed) throw Error(Errc::Trainer, rep.error);
  return 0;
}

// name=path[:kind[:metric]]
DatasetSpec parse_dataset(const std::string& arg, std::optional<std::size_t> limit) {
  const auto eq = arg.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw UsageError("--dataset expects name=path[:kind[:metric]], got " + arg);
  }
  DatasetSpec s;
  s.name = arg.substr(0, eq);
  std::vector<std::string> parts;
  std::string rest = arg.substr(eq + 1);
  for (std::size_t p; (p = rest.find(':')) != std::string::npos;) {
    parts.push_back(rest.substr(0, p));
    rest.erase(0, p + 1);
  }
  parts.push_back(rest);
  s.path = parts[0];
  if (parts.size() > 1 && !parts[1].empty()) s.task_kind = task_kind_from_string(parts[1]);
  if (parts.size() > 2 && !parts[2].empty()) s.metric = accuracy_metric_from_string(parts[2]);
  s.limit = limit;
  return s;
}

int cmd_eval(const CommonOpts& o, const std::vector<std::string>& datasets,
             std::optional<std::size_t> limit, bool robust, const std::string& out_path,
             bool table, std::ostream& out) {
  EngineConfig cfg = config_with_seed(o);
  std::vector<DatasetSpec> specs;
  for (const auto& d : datasets) specs.push_back(parse_dataset(d, limit));
  auto gen = make_generator(cfg, o.script);
  auto reg = make_registry(cfg, o.sandbox, o.corpus);
  EvalOptions opts;
  opts.rollout = cfg.rollout;
  if (robust) {
    opts.policies = cfg.resilience;
    opts.models = resilience_models(gen);
  }
  std::unique_ptr<LlmJudge> judge;
  if (!o.script.empty() || !cfg.llm.url.empty()) {
    judge = std::make_unique<LlmJudge>(gen);
    opts.judge = judge.get();
  }
  const EvalReport rep = evaluate(specs, *gen, *reg, opts);
  const json j = report_to_json(rep);
  if (!out_path.empty()) write_json(out_path, j);
  if (table) {
    out << report_to_table(rep);
  } else {
    out << j.dump(2) << "\n";
  }
  return 0;
}

int cmd_demo(const std::string& data, const std::string& out_dir, std::ostream& out) {
  const fs::path root = data.empty() ? default_data_dir() : fs::path(data);
  const fs::path toy = root / "toy";
  const fs::path critic = root / "critic_cases";
  const fs::path dir(out_dir);
  fs::create_directories(dir / "pipeline");
  for (const auto& e : fs::directory_iterator(dir / "pipeline")) fs::remove(e.path());

  EngineConfig cfg;
  cfg.sync_tags();
  cfg.paths.corpus = (toy / "corpus.jsonl").string();
  auto book = ScriptBook::load(toy / "script.json");
  std::shared_ptr<Generator> gen = book;
  auto reg = make_registry(cfg, (toy / "sandbox.json").string(), "");

  out << "== synthesis\n";
  const auto samples = load_samples(toy / "samples.jsonl");
  const auto a = run_pipeline(samples, *gen, *reg, cfg.pipeline(), dir / "pipeline");
  const json pipe = pipeline_summary(a);
  out << pipe.dump() << "\n";

  out << "== reward\n";
  std::map<std::string, std::string> gold;
  for (auto& [id, g] : read_gold(critic / "gold.jsonl")) gold[id] = g;
  std::vector<json> rewards;
  for (const auto& j : read_jsonl(critic / "traj.jsonl")) {
    const Trajectory t = trajectory_from_json(j, cfg.tags);
    const auto r = compute_reward(t, gold.at(t.id), cfg.reward);
    rewards.push_back(reward_line(t, r));
    out << t.id << " " << r.total << "\n";
  }
  write_jsonl(dir / "critic_rewards.jsonl", rewards);

  out << "== group rollout\n";
  const auto questions = read_questions((toy / "eval_math.jsonl").string());
  RolloutConfig rc = cfg.rollout;
  rc.group_size = 8;
  GroupRollout g = run_group(questions.front(), *gen, *reg, rc);
  for (std::size_t i = 0; i < g.members.size(); ++i) {
    g.rewards[i] = compute_reward(g.members[i], questions.front().gold, cfg.reward).total;
  }
  g.advantages = group_advantages(g.rewards, cfg.grpo.adv_eps);
  out << "rewards " << json(g.rewards).dump() << "\n";

  out << "== schedule\n";
  auto shared_reg = reg;
  RolloutSampler sampler(questions, gen, shared_reg, cfg.rollout, 0);
  RecordingTrainer trainer;
  SchedulePlan plan = cfg.schedule;
  plan.cycles = 2;
  plan.grpo_steps_per_cycle = 3;
  const RewardConfig rwc = cfg.reward;
  const ScheduleReport sched = run_schedule(
      trainer, sampler, [rwc](const Trajectory& t) { return compute_reward(t, t.gold, rwc); },
      plan, cfg.grpo);
  out << json(sched.calls).dump() << "\n";
  if (!sched.completed) throw Error(Errc::Trainer, sched.error);

  out << "== eval\n";
  std::vector<DatasetSpec> specs{
      {"toy-math", toy / "eval_math.jsonl", TaskKind::Computational, std::nullopt, std::nullopt},
      {"toy-qa", toy / "eval_qa.jsonl", TaskKind::KnowledgeIntensive, std::nullopt,
       std::nullopt}};
  EvalOptions opts;
  opts.rollout = cfg.rollout;
  opts.policies = cfg.resilience;
  opts.models = resilience_models(gen);
  const EvalReport rep = evaluate(specs, *gen, *reg, opts);
  const std::string table = report_to_table(rep);
  out << table;

  json report = {{"pipeline", pipe},
                 {"critic_rewards", rewards},
                 {"group", {{"rewards", g.rewards}, {"advantages", g.advantages}}},
                 {"schedule", {{"calls", sched.calls},
                               {"grpo_reward_means", sched.grpo_reward_means},
                               {"dpo_pair_counts", sched.dpo_pair_counts}}},
                 {"eval", report_to_json(rep)}};
  write_json(dir / "report.json", report);
  write_file(dir / "report.txt", table);
  out << "report: " << (dir / "report.json").string() << "\n";
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"toolstar: tool-integrated reasoning engine"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  CommonOpts common;

  auto* config = app.add_subcommand("config", "Print the effective engine configuration");
  bool dump = false;
  add_common(config, common, false);
  config->add_flag("--dump", dump, "Dump the configuration as TOML");

  auto* synth = app.add_subcommand("synthesize", "Run the data synthesis pipeline");
  std::string samples, out_dir = "out";
  bool fresh = false;
  add_common(synth, common, true);
  synth->add_option("--samples", samples, "Raw samples JSONL")->required()->check(CLI::ExistingFile);
  synth->add_option("--out", out_dir, "Output directory for stage files");
  synth->add_flag("--fresh", fresh, "Ignore stage files from a previous run");

  auto* norm = app.add_subcommand("normalize", "Quality normalization of a tool-use stage");
  std::string norm_in;
  std::optional<std::size_t> beta;
  add_common(norm, common, false);
  norm->add_option("--in", norm_in, "Stage JSONL (d_tool_v1)")->required()->check(CLI::ExistingFile);
  norm->add_option("--out", out_dir, "Output directory");
  norm->add_option("--beta", beta, "Maximum tool calls per response");

  auto* cls = app.add_subcommand("classify", "Difficulty-aware classification");
  std::string cls_tool, cls_direct;
  add_common(cls, common, false);
  cls->add_option("--tool", cls_tool, "Normalized tool stage (d_tool_v2)")->required()->check(CLI::ExistingFile);
  cls->add_option("--direct", cls_direct, "Direct-reasoning stage (d_text_v2)")->required()->check(CLI::ExistingFile);
  cls->add_option("--out", out_dir, "Output directory");

  auto* roll = app.add_subcommand("rollout", "Run single or group rollouts");
  std::string question, roll_in, roll_out;
  bool group = false, robust = false;
  std::optional<std::size_t> group_size;
  add_common(roll, common, true);
  roll->add_option("--question", question, "A single question");
  roll->add_option("--in", roll_in, "Questions JSONL {id, question, answer?}")->check(CLI::ExistingFile);
  roll->add_flag("--group", group, "Sample a group per question");
  roll->add_option("--group-size", group_size, "Group size");
  roll->add_flag("--robust", robust, "Enable debugger, backtracer and refiner");
  roll->add_option("--out", roll_out, "Output JSONL (stdout otherwise)");

  auto* rew = app.add_subcommand("reward", "Score trajectories with the hierarchical reward");
  std::string rew_in, rew_gold, rew_out;
  std::optional<std::string> metric;
  add_common(rew, common, false);
  rew->add_option("--in", rew_in, "Trajectory JSONL")->required()->check(CLI::ExistingFile);
  rew->add_option("--gold", rew_gold, "Gold JSONL {id, answer}")->required()->check(CLI::ExistingFile);
  rew->add_option("--metric", metric, "em | f1 | judge");
  rew->add_option("--script", common.script, "Scripted judge")->check(CLI::ExistingFile);
  rew->add_option("--out", rew_out, "Output JSONL (stdout otherwise)");

  auto* sched = app.add_subcommand("schedule", "Run the GRPO / self-critic DPO schedule");
  std::string sched_q, trainer_kind = "fake", sched_out;
  std::vector<std::string> trainer_cmd;
  std::optional<std::size_t> cycles, steps;
  add_common(sched, common, true);
  sched->add_option("--questions", sched_q, "Questions JSONL {id, question, answer}")
      ->required()->check(CLI::ExistingFile);
  sched->add_option("--trainer", trainer_kind, "fake | ipc")->check(CLI::IsMember({"fake", "ipc"}));
  sched->add_option("--trainer-cmd", trainer_cmd, "Trainer command for --trainer ipc")
      ->expected(1, -1);
  sched->add_option("--cycles", cycles, "Number of cycles C");
  sched->add_option("--steps", steps, "GRPO steps per cycle S");
  sched->add_option("--out", sched_out, "Report JSON");

  auto* ev = app.add_subcommand("eval", "Evaluate on QA / math datasets");
  std::vector<std::string> datasets;
  std::optional<std::size_t> limit;
  std::string ev_out;
  bool table = false, ev_robust = false;
  add_common(ev, common, true);
  ev->add_option("--dataset", datasets,
                 "name=path[:computational|knowledge[:em|f1|judge]] (repeatable)")
      ->required();
  ev->add_option("--limit", limit, "Examples per dataset");
  ev->add_flag("--robust", ev_robust, "Enable inference-time mechanisms");
  ev->add_option("--out", ev_out, "Report JSON");
  ev->add_flag("--table", table, "Print a text table instead of JSON");

  auto* demo = app.add_subcommand("demo", "End-to-end run on bundled toy data, no network");
  std::string demo_data, demo_out = "demo_out";
  demo->add_option("--data", demo_data, "Bundled data directory")->check(CLI::ExistingDirectory);
  demo->add_option("--out", demo_out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    const CLI::App* target = &app;
    for (const auto* sub : app.get_subcommands()) target = sub;
    out << target->help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    const CLI::App* target = &app;
    for (const auto* sub : app.get_subcommands()) target = sub;
    err << "error: " << e.what() << "\n" << target->help();
    return 1;
  }

  try {
    if (config->parsed()) return cmd_config(common, dump, out);
    if (synth->parsed()) return cmd_synthesize(common, samples, out_dir, fresh, out);
    if (norm->parsed()) return cmd_normalize(common, norm_in, out_dir, beta, out);
    if (cls->parsed()) return cmd_classify(common, cls_tool, cls_direct, out_dir, out);
    if (roll->parsed()) {
      return cmd_rollout(common, question, roll_in, group, robust, group_size, roll_out, out);
    }
    if (rew->parsed()) return cmd_reward(common, rew_in, rew_gold, metric, rew_out, out);
    if (sched->parsed()) {
      return cmd_schedule(common, sched_q, trainer_kind, trainer_cmd, cycles, steps,
                          sched_out, out);
    }
    if (ev->parsed()) return cmd_eval(common, datasets, limit, ev_robust, ev_out, table, out);
    if (demo->parsed()) return cmd_demo(demo_data, demo_out, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  err << app.help();
  return 1;
}

}  // namespace toolstar
