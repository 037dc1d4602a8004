#include "toolstar/synthesis.hpp"

#include <algorithm>
#include <cctype>
#include <random>
#include <set>

#include "toolstar/text.hpp"

namespace toolstar {

const char* to_string(SampleKind kind) {
  return kind == SampleKind::ExistingTIR ? "tir" : "text";
}

const char* to_string(HintMode mode) {
  return mode == HintMode::AnswerReflection ? "reflection" : "verification";
}

const char* const kDefaultVerificationHint =
    "Let me verify this step using a tool.";
const char* const kDefaultReflectionHint =
    "Let me double-check the answer with a tool.";
const char* const kDirectInstruction =
    "A conversation between User and Assistant. The user asks a question, and "
    "the Assistant solves it step by step in natural language without using "
    "any tools, and puts the final answer within \\boxed{}.";

namespace {

std::string json_string(const json& v) {
  return v.is_string() ? v.get<std::string>() : v.dump();
}

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
}

bool is_correct(const Trajectory& t, AccuracyMetric metric) {
  const auto pred = chain_answer(t.chain);
  if (!pred) return false;
  return accuracy(*pred, t.gold, metric) >= 1.0;
}

std::size_t count_calls(const ReasoningChain& chain) {
  std::size_t n = 0;
  for (const auto& s : chain.segments) {
    if (s.tagged && is_tool_call(s.kind) && s.origin == Origin::ModelGenerated) ++n;
  }
  return n;
}

RolloutInput input_of(const RawSample& s) {
  return RolloutInput{s.id, s.question, s.gold, {}};
}

Trajectory trajectory_from_text(const RawSample& s, const std::string& text,
                                const TagSet& tags) {
  json j = {{"id", s.id}, {"question", s.question}, {"gold", s.gold},
            {"response", text}};
  return trajectory_from_json(j, tags);
}

}  // namespace

RawSample sample_from_json(const json& j) {
  RawSample s;
  s.id = json_string(j.at("id"));
  s.question = j.at("question").get<std::string>();
  if (j.contains("gold")) {
    s.gold = json_string(j["gold"]);
  } else {
    s.gold = json_string(j.at("answer"));
  }
  s.source = j.value("source", "");
  const std::string kind = j.value("kind", "text");
  if (kind == "tir") {
    s.kind = SampleKind::ExistingTIR;
  } else if (kind == "text") {
    s.kind = SampleKind::LanguageOnly;
  } else {
    throw Error(Errc::Schema, "unknown sample kind " + kind);
  }
  if (j.contains("response")) s.response = j["response"].get<std::string>();
  return s;
}

json sample_to_json(const RawSample& s) {
  json j = {{"id", s.id},
            {"question", s.question},
            {"gold", s.gold},
            {"source", s.source},
            {"kind", to_string(s.kind)}};
  if (s.response) j["response"] = *s.response;
  return j;
}

std::vector<RawSample> load_samples(const std::filesystem::path& path) {
  std::vector<RawSample> out;
  std::set<std::string> seen;
  const auto records = read_jsonl(path);
  // Line numbers count non-blank records; files are written without gaps.
  for (std::size_t i = 0; i < records.size(); ++i) {
    try {
      out.push_back(sample_from_json(records[i]));
    } catch (const json::exception& e) {
      throw SchemaError(i + 1, e.what());
    } catch (const Error& e) {
      throw SchemaError(i + 1, e.what());
    }
    if (!seen.insert(out.back().id).second) {
      throw SchemaError(i + 1, "duplicate id " + out.back().id);
    }
  }
  return out;
}

std::optional<HintSite> insert_hint(const std::string& chain_text,
                                    const HintConfig& hcfg, HintMode mode,
                                    const TagSet& tags) {
  if (mode == HintMode::LogicalVerification) {
    const std::string lower = text::to_lower(chain_text);
    struct Hit {
      std::size_t pos;
      std::size_t len;
    };
    std::vector<Hit> hits;
    for (const auto& marker : hcfg.uncertainty_markers) {
      if (marker.empty()) continue;
      const std::string m = text::to_lower(marker);
      for (auto p = lower.find(m); p != std::string::npos; p = lower.find(m, p + 1)) {
        const bool left = p == 0 || !is_word_char(lower[p - 1]);
        const bool right =
            p + m.size() >= lower.size() || !is_word_char(lower[p + m.size()]);
        if (left && right) hits.push_back({p, m.size()});
      }
    }
    if (hits.empty()) return std::nullopt;
    std::sort(hits.begin(), hits.end(),
              [](const Hit& a, const Hit& b) { return a.pos < b.pos; });
    std::mt19937_64 rng(hcfg.seed);
    const Hit h = hits[rng() % hits.size()];
    HintSite site;
    site.mode = mode;
    site.hinted_prefix =
        chain_text.substr(0, h.pos) + hcfg.verification_hint_template;
    site.t_h = site.hinted_prefix.size();
    return site;
  }

  // Reflection: the answer block becomes prose so generation can go on.
  std::string body = chain_text;
  for (const std::string* lit :
       {&tags.open(TagKind::Answer), &tags.close(TagKind::Answer)}) {
    for (auto p = body.find(*lit); p != std::string::npos; p = body.find(*lit, p)) {
      body.erase(p, lit->size());
    }
  }
  static constexpr std::string_view kBoxed = "\\boxed{";
  const auto start = body.rfind(kBoxed);
  if (start == std::string::npos || !extract_boxed(body.substr(start))) {
    return std::nullopt;
  }
  std::size_t end = start + kBoxed.size();
  for (int depth = 1; end < body.size() && depth > 0; ++end) {
    if (body[end] == '{') ++depth;
    if (body[end] == '}') --depth;
  }
  const auto nl = body.find('\n', end);
  end = nl == std::string::npos ? body.size() : nl;
  std::string head = body.substr(0, end);
  while (!head.empty() && text::is_space(head.back())) head.pop_back();
  HintSite site;
  site.mode = mode;
  site.hinted_prefix = head + "\n" + hcfg.reflection_hint_template;
  site.t_h = site.hinted_prefix.size();
  return site;
}

json stage_record_to_json(const StageRecord& r) {
  json j = trajectory_to_json(r.traj);
  j["source"] = r.sample.source;
  j["kind"] = to_string(r.sample.kind);
  j["stage"] = r.stage;
  j["attempt"] = r.attempt;
  j["correct"] = r.correct;
  if (r.category) j["category"] = *r.category;
  return j;
}

StageRecord stage_record_from_json(const json& j, const TagSet& tags) {
  StageRecord r;
  r.traj = trajectory_from_json(j, tags);
  r.sample.id = r.traj.id;
  r.sample.question = r.traj.question;
  r.sample.gold = r.traj.gold;
  r.sample.source = j.value("source", "");
  r.sample.kind = j.value("kind", "text") == "tir" ? SampleKind::ExistingTIR
                                                   : SampleKind::LanguageOnly;
  r.stage = j.value("stage", "");
  r.attempt = j.value("attempt", std::size_t{0});
  r.correct = j.value("correct", false);
  if (j.contains("category")) r.category = j["category"].get<std::string>();
  return r;
}

Stage sample_tir(const std::vector<RawSample>& samples, Generator& generator,
                 ToolRegistry& registry, const SynthesisConfig& cfg) {
  Stage stage;
  stage.name = "d_tool_p";
  stage.stats = {{"attempts", 0}, {"kept", 0}, {"filtered", 0}, {"errors", 0}};
  for (const auto& s : samples) {
    if (s.kind != SampleKind::LanguageOnly) continue;
    for (std::size_t a = 0; a < cfg.attempts; ++a) {
      ++stage.stats["attempts"];
      RolloutConfig rc = cfg.rollout;
      rc.seed = cfg.rollout.seed + a;
      Trajectory t;
      try {
        t = run_rollout(input_of(s), generator, registry, rc);
      } catch (const std::exception&) {
        ++stage.stats["errors"];
        continue;
      }
      if (!is_correct(t, cfg.metric)) {
        ++stage.stats["filtered"];
        continue;
      }
      ++stage.stats["kept"];
      stage.records.push_back({s, std::move(t), stage.name, std::nullopt, a, true});
    }
  }
  return stage;
}

Stage direct_pass(const std::vector<RawSample>& samples, Generator& generator,
                  const SynthesisConfig& cfg) {
  Stage stage;
  stage.name = "d_text_v2";
  stage.stats = {{"correct", 0}, {"incorrect", 0}, {"errors", 0}};
  ToolRegistry no_tools;
  RolloutConfig rc = cfg.rollout;
  rc.instruction = cfg.direct_instruction;
  rc.cache_scope = CacheScope::Rollout;
  for (const auto& s : samples) {
    StageRecord r;
    r.sample = s;
    r.stage = stage.name;
    try {
      r.traj = run_rollout(input_of(s), generator, no_tools, rc);
      r.correct = is_correct(r.traj, cfg.metric);
    } catch (const std::exception&) {
      ++stage.stats["errors"];
      r.traj.id = s.id;
      r.traj.question = s.question;
      r.traj.gold = s.gold;
      r.correct = false;
    }
    ++stage.stats[r.correct ? "correct" : "incorrect"];
    stage.records.push_back(std::move(r));
  }
  return stage;
}

Stage sample_hint_based(const Stage& direct, Generator& generator,
                        ToolRegistry& registry, const HintConfig& hcfg,
                        const SynthesisConfig& cfg) {
  Stage stage;
  stage.name = "d_tool_h";
  stage.stats = {{"no_site", 0}, {"kept", 0}, {"filtered", 0}, {"errors", 0}};
  const TagSet& tags = cfg.rollout.tags;
  for (const auto& d : direct.records) {
    if (d.sample.kind != SampleKind::LanguageOnly) continue;
    const std::string trace = d.traj.text(tags);
    std::optional<HintSite> site;
    for (HintMode mode : hcfg.modes) {
      site = insert_hint(trace, hcfg, mode, tags);
      if (site) break;
    }
    if (!site) {
      ++stage.stats["no_site"];
      continue;
    }
    RolloutInput in = input_of(d.sample);
    in.prefix = site->hinted_prefix;
    Trajectory t;
    try {
      t = run_rollout(in, generator, registry, cfg.rollout);
    } catch (const std::exception&) {
      ++stage.stats["errors"];
      continue;
    }
    if (t.tool_calls.empty() || !is_correct(t, cfg.metric)) {
      ++stage.stats["filtered"];
      continue;
    }
    ++stage.stats["kept"];
    t.interventions.push_back({"hint", to_string(site->mode), site->t_h});
    stage.records.push_back({d.sample, std::move(t), stage.name, std::nullopt, 0, true});
  }
  return stage;
}

const char* to_string(RejectReason reason) {
  switch (reason) {
    case RejectReason::FormatViolation: return "FormatViolation";
    case RejectReason::FrequencyExceeded: return "FrequencyExceeded";
    case RejectReason::DuplicateToolCall: return "DuplicateToolCall";
  }
  return "FormatViolation";
}

NormalizationResult normalize_quality(const Stage& stage,
                                      const NormalizationConfig& ncfg,
                                      const TagSet& tags) {
  if (ncfg.beta < 1) throw Error(Errc::Config, "beta must be >= 1");
  NormalizationResult res;
  res.kept.name = "d_tool_v2";
  res.kept.stats = {{"kept", 0},
                    {to_string(RejectReason::FormatViolation), 0},
                    {to_string(RejectReason::FrequencyExceeded), 0},
                    {to_string(RejectReason::DuplicateToolCall), 0}};
  for (const auto& rec : stage.records) {
    const std::string original = rec.traj.text(tags);
    std::string canon = original;
    if (ncfg.format_canon) {
      for (const auto& [from, to] : ncfg.aliases) {
        if (from.empty()) continue;
        for (auto p = canon.find(from); p != std::string::npos;
             p = canon.find(from, p + to.size())) {
          canon.replace(p, from.size(), to);
        }
      }
    }

    auto reject = [&](RejectReason why, std::string detail) {
      ++res.kept.stats[to_string(why)];
      res.rejections.push_back({rec.sample.id, why, std::move(detail)});
    };

    ReasoningChain chain;
    try {
      chain = parse_chain(canon, tags);
    } catch (const ParseError& e) {
      if (ncfg.format_canon) {
        reject(RejectReason::FormatViolation, e.what());
        continue;
      }
      chain = rec.traj.chain;
    }
    const std::size_t calls = count_calls(chain);
    if (calls > ncfg.beta) {
      reject(RejectReason::FrequencyExceeded,
             std::to_string(calls) + " tool calls exceed " + std::to_string(ncfg.beta));
      continue;
    }
    if (ncfg.dedup) {
      std::set<std::string> seen;
      std::optional<std::string> dup;
      for (const auto& s : chain.segments) {
        if (!s.tagged || !is_tool_call(s.kind)) continue;
        const std::string key = ToolRequest::make(s.kind, s.text).cache_key();
        if (!seen.insert(key).second) {
          dup = std::string(to_string(s.kind)) + " request repeated: " +
                normalize_payload(s.kind, s.text);
          break;
        }
      }
      if (dup) {
        reject(RejectReason::DuplicateToolCall, *dup);
        continue;
      }
    }
    StageRecord kept = rec;
    kept.stage = res.kept.name;
    if (canon != original) {
      Trajectory t = trajectory_from_text(rec.sample, canon, tags);
      t.seed = rec.traj.seed;
      t.stop_reason = rec.traj.stop_reason;
      t.interventions = rec.traj.interventions;
      kept.traj = std::move(t);
    }
    ++res.kept.stats["kept"];
    res.kept.records.push_back(std::move(kept));
  }
  return res;
}

Stage merge_v1(const Stage& prompted, const Stage& hinted,
               const std::vector<RawSample>& samples, const TagSet& tags) {
  Stage out;
  out.name = "d_tool_v1";
  std::set<std::pair<std::string, std::string>> seen;
  auto add = [&](StageRecord r, const char* origin) {
    const std::string text = r.traj.text(tags);
    if (!seen.insert({r.sample.id, text}).second) {
      ++out.stats["duplicates"];
      return;
    }
    r.stage = out.name;
    ++out.stats[origin];
    out.records.push_back(std::move(r));
  };
  out.stats = {{"prompted", 0}, {"hinted", 0}, {"seed", 0}, {"duplicates", 0}};
  for (const auto& r : prompted.records) add(r, "prompted");
  for (const auto& r : hinted.records) add(r, "hinted");
  for (const auto& s : samples) {
    if (s.kind != SampleKind::ExistingTIR || !s.response) continue;
    StageRecord r;
    r.sample = s;
    r.traj = trajectory_from_text(s, *s.response, tags);
    r.correct = is_correct(r.traj, AccuracyMetric::ExactMatchNormalized);
    add(std::move(r), "seed");
  }
  // Stable order by id keeps the stage independent of sampling order.
  std::stable_sort(out.records.begin(), out.records.end(),
                   [](const StageRecord& a, const StageRecord& b) {
                     return a.sample.id < b.sample.id;
                   });
  return out;
}

const char* to_string(DifficultyCategory c) {
  switch (c) {
    case DifficultyCategory::Cat1_DRok_TIRok: return "Cat1_DRok_TIRok";
    case DifficultyCategory::Cat2_DRok_TIRbad: return "Cat2_DRok_TIRbad";
    case DifficultyCategory::Cat3_DRbad_TIRok: return "Cat3_DRbad_TIRok";
    case DifficultyCategory::Cat4_DRbad_TIRbad: return "Cat4_DRbad_TIRbad";
  }
  return "Cat4_DRbad_TIRbad";
}

ClassificationResult classify_difficulty(const Stage& v2_tool,
                                         const Stage& direct,
                                         AccuracyMetric metric) {
  std::map<std::string, const StageRecord*> verdicts;
  for (const auto& d : direct.records) verdicts[d.sample.id] = &d;

  std::map<std::string, const StageRecord*> best_tool;
  for (const auto& r : v2_tool.records) {
    if (!verdicts.count(r.sample.id)) {
      throw Error(Errc::MissingDirectVerdict,
                  "no direct-reasoning verdict for id " + r.sample.id);
    }
    if (!is_correct(r.traj, metric)) continue;
    auto& slot = best_tool[r.sample.id];
    if (!slot || count_calls(r.traj.chain) < count_calls(slot->traj.chain)) {
      slot = &r;
    }
  }

  ClassificationResult res;
  res.d_text_sub.name = "d_text_sub";
  res.d_tool_sub.name = "d_tool_sub";
  res.d_sft.name = "d_sft";
  for (const auto& [id, d] : verdicts) {
    const bool dr = d->correct;
    const auto tool = best_tool.find(id);
    const bool tir = tool != best_tool.end();
    DifficultyCategory cat;
    if (dr) {
      cat = tir ? DifficultyCategory::Cat1_DRok_TIRok
                : DifficultyCategory::Cat2_DRok_TIRbad;
    } else {
      cat = tir ? DifficultyCategory::Cat3_DRbad_TIRok
                : DifficultyCategory::Cat4_DRbad_TIRbad;
    }
    res.categories[id] = cat;
    if (dr) {
      StageRecord r = *d;
      r.stage = res.d_text_sub.name;
      r.category = to_string(cat);
      res.d_text_sub.records.push_back(r);
      r.stage = res.d_sft.name;
      res.d_sft.records.push_back(std::move(r));
    } else if (tir) {
      StageRecord r = *tool->second;
      r.stage = res.d_tool_sub.name;
      r.category = to_string(cat);
      res.d_tool_sub.records.push_back(r);
      r.stage = res.d_sft.name;
      res.d_sft.records.push_back(std::move(r));
    } else {
      res.d_rl.push_back(d->sample);
    }
    ++res.d_sft.stats[to_string(cat)];
  }
  res.d_text_sub.stats["records"] = res.d_text_sub.records.size();
  res.d_tool_sub.stats["records"] = res.d_tool_sub.records.size();
  return res;
}

void write_stage(const std::filesystem::path& path, const Stage& stage) {
  std::vector<json> lines;
  for (const auto& r : stage.records) lines.push_back(stage_record_to_json(r));
  write_jsonl(path, lines);
}

Stage read_stage(const std::filesystem::path& path, const std::string& name,
                 const TagSet& tags) {
  Stage s;
  s.name = name;
  for (const auto& j : read_jsonl(path)) s.records.push_back(stage_record_from_json(j, tags));
  return s;
}

json rejections_to_json(const std::vector<Rejection>& rejections) {
  json arr = json::array();
  for (const auto& r : rejections) {
    arr.push_back({{"id", r.id}, {"reason", to_string(r.reason)}, {"detail", r.detail}});
  }
  return arr;
}

PipelineArtifacts run_pipeline(const std::vector<RawSample>& samples,
                               Generator& generator, ToolRegistry& registry,
                               const PipelineConfig& cfg,
                               const std::optional<std::filesystem::path>& out_dir) {
  const TagSet& tags = cfg.synthesis.rollout.tags;
  auto stage_file = [&](const std::string& name) {
    return *out_dir / (name + ".jsonl");
  };
  auto cached = [&](const std::string& name) -> std::optional<Stage> {
    if (!out_dir || !std::filesystem::exists(stage_file(name))) return std::nullopt;
    return read_stage(stage_file(name), name, tags);
  };
  auto persist = [&](const Stage& s) {
    if (out_dir) write_stage(stage_file(s.name), s);
  };

  PipelineArtifacts a;
  if (auto s = cached("d_tool_p")) {
    a.d_tool_p = std::move(*s);
  } else {
    a.d_tool_p = sample_tir(samples, generator, registry, cfg.synthesis);
    persist(a.d_tool_p);
  }
  if (auto s = cached("d_text_v2")) {
    a.d_text_v2 = std::move(*s);
  } else {
    a.d_text_v2 = direct_pass(samples, generator, cfg.synthesis);
    persist(a.d_text_v2);
  }
  if (auto s = cached("d_tool_h")) {
    a.d_tool_h = std::move(*s);
  } else {
    a.d_tool_h = sample_hint_based(a.d_text_v2, generator, registry, cfg.hints,
                                   cfg.synthesis);
    persist(a.d_tool_h);
  }
  a.d_tool_v1 = merge_v1(a.d_tool_p, a.d_tool_h, samples, tags);
  persist(a.d_tool_v1);
  auto norm = normalize_quality(a.d_tool_v1, cfg.normalization, tags);
  a.d_tool_v2 = std::move(norm.kept);
  a.rejections = std::move(norm.rejections);
  persist(a.d_tool_v2);
  a.classes = classify_difficulty(a.d_tool_v2, a.d_text_v2, cfg.synthesis.metric);
  persist(a.classes.d_text_sub);
  persist(a.classes.d_tool_sub);
  persist(a.classes.d_sft);
  if (out_dir) {
    std::vector<json> rl;
    for (const auto& s : a.classes.d_rl) rl.push_back(sample_to_json(s));
    write_jsonl(*out_dir / "d_rl.jsonl", rl);
    json cats = json::object();
    for (const auto& [id, c] : a.classes.categories) cats[id] = to_string(c);
    json stats = {{"d_tool_p", a.d_tool_p.stats},
                  {"d_text_v2", a.d_text_v2.stats},
                  {"d_tool_h", a.d_tool_h.stats},
                  {"d_tool_v1", a.d_tool_v1.stats},
                  {"d_tool_v2", a.d_tool_v2.stats},
                  {"rejections", rejections_to_json(a.rejections)},
                  {"categories", std::move(cats)},
                  {"sizes",
                   {{"d_text_sub", a.classes.d_text_sub.records.size()},
                    {"d_tool_sub", a.classes.d_tool_sub.records.size()},
                    {"d_sft", a.classes.d_sft.records.size()},
                    {"d_rl", a.classes.d_rl.size()}}}};
    write_json(*out_dir / "stats.json", stats);
  }
  return a;
}

}  // namespace toolstar
