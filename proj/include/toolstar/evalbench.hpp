#pragma once
// Benchmark harness: datasets, scoring, tool-use efficiency, reports.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "toolstar/resilience.hpp"
#include "toolstar/reward.hpp"
#include "toolstar/rollout.hpp"
#include "toolstar/serialize.hpp"

namespace toolstar {

enum class TaskKind { Computational, KnowledgeIntensive };

const char* to_string(TaskKind kind);
TaskKind task_kind_from_string(std::string_view s);

struct DatasetSpec {
  std::string name;
  std::filesystem::path path;
  TaskKind task_kind = TaskKind::Computational;
  // Unset means the default for task_kind.
  std::optional<AccuracyMetric> metric;
  std::optional<std::size_t> limit;

  AccuracyMetric effective_metric() const;
};

AccuracyMetric default_metric(TaskKind kind);

struct EvalExample {
  std::string id;
  std::string question;
  std::string answer;
};

// Throws Error{SchemaError} naming the offending line.
std::vector<EvalExample> load_dataset(const DatasetSpec& spec);

struct ExampleResult {
  std::string id;
  std::string prediction;
  double score = 0.0;
  std::size_t tool_calls = 0;
  std::string stop_reason;
  std::optional<std::string> error;
};

struct DatasetReport {
  std::string name;
  std::string metric;
  std::size_t n = 0;
  double score = 0.0;
  // S_i: runs that used at least one tool. T_i^c: correct among them.
  std::size_t tool_runs = 0;
  std::size_t tool_correct = 0;
  std::map<std::size_t, std::size_t> tool_call_histogram;
  double cache_hit_rate = 0.0;
  std::map<std::string, std::size_t> intervention_counts;
  std::size_t failures = 0;
  std::vector<ExampleResult> examples;
};

struct EvalReport {
  std::vector<DatasetReport> datasets;
  double mean_score = 0.0;
  // Unset when no dataset has a tool-using run.
  std::optional<double> tool_efficiency;
};

struct EvalOptions {
  RolloutConfig rollout;
  ResiliencePolicies policies = ResiliencePolicies::none();
  ResilienceModels models;
  // Required for the judge metric.
  Judge* judge = nullptr;
  // Score at or above which a run counts as correct for T_E.
  double correct_threshold = 0.5;
  bool keep_examples = true;
};

// Datasets given in memory.
struct Dataset {
  DatasetSpec spec;
  std::vector<EvalExample> examples;
};

// Throws Error{EmptyInput} for an empty list. Per-example failures score 0.
EvalReport evaluate(const std::vector<Dataset>& datasets, Generator& generator,
                    ToolRegistry& registry, const EvalOptions& options);

EvalReport evaluate(const std::vector<DatasetSpec>& specs, Generator& generator,
                    ToolRegistry& registry, const EvalOptions& options);

json report_to_json(const EvalReport& report);
std::string report_to_table(const EvalReport& report);

}  // namespace toolstar
