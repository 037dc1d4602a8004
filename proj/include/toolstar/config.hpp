#pragma once
// Engine configuration: one TOML file, secrets overridable from the
// environment.

#include <filesystem>
#include <string>
#include <vector>

#include "toolstar/generator.hpp"
#include "toolstar/resilience.hpp"
#include "toolstar/reward.hpp"
#include "toolstar/rl_math.hpp"
#include "toolstar/rollout.hpp"
#include "toolstar/sandbox.hpp"
#include "toolstar/search.hpp"
#include "toolstar/synthesis.hpp"

namespace toolstar {

struct SearchEndpointConfig {
  std::string web_url;
  std::string api_key;
  SearchToolOptions options;
  RetryPolicy retry;
};

struct SandboxConfig {
  // Driver command; empty means no real sandbox is configured.
  std::vector<std::string> driver;
  ExecLimits limits;
};

struct PathsConfig {
  std::string data_dir;
  std::string corpus;
  std::string out_dir = "out";
};

struct EngineConfig {
  TagSet tags;
  RolloutConfig rollout;
  RewardConfig reward;
  NormalizationConfig normalization;
  HintConfig hints;
  std::size_t synthesis_attempts = 3;
  AccuracyMetric synthesis_metric = AccuracyMetric::ExactMatchNormalized;
  ResiliencePolicies resilience;
  GrpoConfig grpo;
  double dpo_beta = 0.3;
  SchedulePlan schedule;
  ChatClientOptions llm;
  SearchEndpointConfig search;
  SandboxConfig sandbox;
  RegistryOptions registry;
  PathsConfig paths;

  // Copies the tag vocabulary into the nested configs.
  void sync_tags();
  SynthesisConfig synthesis() const;
  PipelineConfig pipeline() const;
};

extern const char* const kLlmKeyEnv;
extern const char* const kSearchKeyEnv;

// Throws Error{Config} on malformed input or wrongly typed keys.
EngineConfig config_from_toml(std::string_view toml_text);
EngineConfig load_config(const std::filesystem::path& file);
std::string config_to_toml(const EngineConfig& cfg);

// Overrides API keys from TOOLSTAR_LLM_API_KEY / TOOLSTAR_SEARCH_API_KEY.
void apply_env_overrides(EngineConfig& cfg);

bool operator==(const EngineConfig& a, const EngineConfig& b);

}  // namespace toolstar
