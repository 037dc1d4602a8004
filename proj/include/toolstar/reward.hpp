#pragma once
// Hierarchical reward, answer metrics and tool-use efficiency.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "toolstar/generator.hpp"
#include "toolstar/protocol.hpp"
#include "toolstar/rollout.hpp"

namespace toolstar {

enum class AccuracyMetric { ExactMatchNormalized, TokenF1, ExternalJudge };

const char* to_string(AccuracyMetric metric);
AccuracyMetric accuracy_metric_from_string(std::string_view s);

class Judge {
 public:
  virtual ~Judge() = default;
  // True when `pred` answers `question` with the meaning of `gold`.
  virtual bool judge(const std::string& question, const std::string& pred,
                     const std::string& gold) = 0;
};

extern const char* const kDefaultJudgeTemplate;

// Asks a chat model for a yes/no verdict.
class LlmJudge final : public Judge {
 public:
  explicit LlmJudge(std::shared_ptr<Generator> llm,
                    std::string prompt_template = kDefaultJudgeTemplate);
  bool judge(const std::string& question, const std::string& pred,
             const std::string& gold) override;

 private:
  std::shared_ptr<Generator> llm_;
  std::string template_;
};

struct RewardConfig {
  double r_m = 0.1;
  AccuracyMetric metric = AccuracyMetric::ExactMatchNormalized;
  FormatLimits limits;
  TagSet tags;
};

struct RewardBreakdown {
  bool format_ok = false;
  double accuracy = 0.0;
  double bonus = 0.0;
  double total = -1.0;
  std::string principle;
  std::vector<Violation> violations;
};

// Lowercase, strip LaTeX wrappers, whitespace and punctuation; numbers
// compare by value ("56,000" == "56000", "\frac{1}{2}" == "0.5").
bool exact_match(const std::string& pred, const std::string& gold);
std::string normalize_answer(const std::string& s);
std::optional<double> parse_number(const std::string& s);

// Lowercase, punctuation removed, whitespace tokens; 0 when either side is
// empty.
double token_f1(const std::string& pred, const std::string& gold);

// Throws Error{JudgeUnavailable} for ExternalJudge without a judge.
double accuracy(const std::string& pred, const std::string& gold,
                AccuracyMetric metric, Judge* judge = nullptr,
                const std::string& question = {});

// r_M when the model text holds both a search and a python call.
double multi_tool_bonus(const ReasoningChain& chain, const RewardConfig& cfg);
double multi_tool_bonus(const Trajectory& traj, const RewardConfig& cfg);

RewardBreakdown compute_reward(const Trajectory& traj, const std::string& gold,
                               const RewardConfig& cfg,
                               Judge* judge = nullptr);

// Scores a raw model output.
RewardBreakdown score_response(const std::string& response,
                               const std::string& gold,
                               const RewardConfig& cfg, Judge* judge = nullptr,
                               const std::string& question = {});

struct DatasetTally {
  std::size_t correct = 0;
  std::size_t total = 0;
};

// Mean over datasets of correct / total. Throws Error{EmptyInput} for an
// empty list and Error{Config} when a total is zero.
double tool_efficiency(const std::vector<DatasetTally>& per_dataset);

}  // namespace toolstar
