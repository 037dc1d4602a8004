#pragma once
// Tool-use data synthesis: TIR prompting, hint-based sampling, quality
// normalization and difficulty-aware classification.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "toolstar/reward.hpp"
#include "toolstar/rollout.hpp"
#include "toolstar/serialize.hpp"

namespace toolstar {

enum class SampleKind { LanguageOnly, ExistingTIR };

const char* to_string(SampleKind kind);

struct RawSample {
  std::string id;
  std::string question;
  std::string gold;
  std::string source;
  SampleKind kind = SampleKind::LanguageOnly;
  // Tool-integrated trace carried by ExistingTIR samples.
  std::optional<std::string> response;
};

// {"id","question","gold"|"answer","source","kind","response"?}
RawSample sample_from_json(const json& j);
json sample_to_json(const RawSample& s);
// Throws SchemaError with the line number.
std::vector<RawSample> load_samples(const std::filesystem::path& path);

enum class HintMode { LogicalVerification, AnswerReflection };

const char* to_string(HintMode mode);

extern const char* const kDefaultVerificationHint;
extern const char* const kDefaultReflectionHint;

struct HintConfig {
  std::vector<std::string> uncertainty_markers{"maybe", "wait", "not sure"};
  std::string verification_hint_template = kDefaultVerificationHint;
  std::string reflection_hint_template = kDefaultReflectionHint;
  std::uint64_t seed = 0;
  // Tried in order; the first mode with a site is used.
  std::vector<HintMode> modes{HintMode::LogicalVerification,
                              HintMode::AnswerReflection};
};

struct HintSite {
  std::string hinted_prefix;
  // End offset of the inserted hint inside hinted_prefix.
  std::size_t t_h = 0;
  HintMode mode = HintMode::LogicalVerification;
};

// nullopt is the NoSite outcome.
std::optional<HintSite> insert_hint(const std::string& chain_text,
                                    const HintConfig& hcfg, HintMode mode,
                                    const TagSet& tags = TagSet::defaults());

struct StageRecord {
  RawSample sample;
  Trajectory traj;
  std::string stage;
  std::optional<std::string> category;
  std::size_t attempt = 0;
  bool correct = false;
};

json stage_record_to_json(const StageRecord& r);
StageRecord stage_record_from_json(const json& j,
                                   const TagSet& tags = TagSet::defaults());

struct Stage {
  std::string name;
  std::vector<StageRecord> records;
  std::map<std::string, std::size_t> stats;
};

extern const char* const kDirectInstruction;

struct SynthesisConfig {
  std::size_t attempts = 3;
  AccuracyMetric metric = AccuracyMetric::ExactMatchNormalized;
  RolloutConfig rollout;
  std::string direct_instruction = kDirectInstruction;
};

Stage sample_tir(const std::vector<RawSample>& samples, Generator& generator,
                 ToolRegistry& registry, const SynthesisConfig& cfg);

// Language-only pass: one tool-free generation per question.
Stage direct_pass(const std::vector<RawSample>& samples, Generator& generator,
                  const SynthesisConfig& cfg);

// Resumes TIR generation from hinted direct traces; keeps correct records
// with at least one tool call.
Stage sample_hint_based(const Stage& direct, Generator& generator,
                        ToolRegistry& registry, const HintConfig& hcfg,
                        const SynthesisConfig& cfg);

enum class RejectReason { FormatViolation, FrequencyExceeded, DuplicateToolCall };

const char* to_string(RejectReason reason);

struct NormalizationConfig {
  std::size_t beta = 5;
  bool dedup = true;
  bool format_canon = true;
  // Alternate literals rewritten to the configured vocabulary.
  std::vector<std::pair<std::string, std::string>> aliases{
      {"<code>", "<python>"},
      {"</code>", "</python>"},
      {"<information>", "<result>"},
      {"</information>", "</result>"}};
};

struct Rejection {
  std::string id;
  RejectReason reason;
  std::string detail;
};

struct NormalizationResult {
  Stage kept;
  std::vector<Rejection> rejections;
};

NormalizationResult normalize_quality(const Stage& stage,
                                      const NormalizationConfig& ncfg,
                                      const TagSet& tags = TagSet::defaults());

// Union by id of prompting, hint-based and seed records; identical
// (id, response) pairs are kept once.
Stage merge_v1(const Stage& prompted, const Stage& hinted,
               const std::vector<RawSample>& samples,
               const TagSet& tags = TagSet::defaults());

enum class DifficultyCategory {
  Cat1_DRok_TIRok,
  Cat2_DRok_TIRbad,
  Cat3_DRbad_TIRok,
  Cat4_DRbad_TIRbad
};

const char* to_string(DifficultyCategory c);

struct ClassificationResult {
  std::map<std::string, DifficultyCategory> categories;
  Stage d_text_sub;
  Stage d_tool_sub;
  Stage d_sft;
  std::vector<RawSample> d_rl;
};

// `direct` holds one record per question with its verdict in `correct`.
// Throws Error{MissingDirectVerdict} when a tool record has no verdict.
ClassificationResult classify_difficulty(const Stage& v2_tool,
                                         const Stage& direct,
                                         AccuracyMetric metric =
                                             AccuracyMetric::ExactMatchNormalized);

struct PipelineConfig {
  SynthesisConfig synthesis;
  HintConfig hints;
  NormalizationConfig normalization;
};

struct PipelineArtifacts {
  Stage d_tool_p;
  Stage d_tool_h;
  Stage d_tool_v1;
  Stage d_tool_v2;
  Stage d_text_v2;
  std::vector<Rejection> rejections;
  ClassificationResult classes;
};

// Runs the three steps. With `out_dir`, every stage is written as JSONL
// (plus stats.json) and stages already on disk are loaded instead of
// recomputed.
PipelineArtifacts run_pipeline(const std::vector<RawSample>& samples,
                               Generator& generator, ToolRegistry& registry,
                               const PipelineConfig& cfg,
                               const std::optional<std::filesystem::path>& out_dir =
                                   std::nullopt);

void write_stage(const std::filesystem::path& path, const Stage& stage);
Stage read_stage(const std::filesystem::path& path, const std::string& name,
                 const TagSet& tags = TagSet::defaults());
json rejections_to_json(const std::vector<Rejection>& rejections);

}  // namespace toolstar
