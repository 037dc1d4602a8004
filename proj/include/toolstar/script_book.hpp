#pragma once
// File-driven scripted generator used by the CLI, the demo and tests.
//
// {
//   "questions": {
//     "<question>": {
//       "direct": "<tool-free response>",
//       "tir": [["turn 0", "turn 1"], ...],     // chosen by seed % size
//       "hint": ["turn 0", ...]                 // when the partial holds a hint
//     }
//   },
//   "prompts": [{"contains": "...", "replies": ["...", ...]}]
// }
//
// Requests without an instruction are auxiliary prompts (debugger, refiner,
// judge, summarizer); the first rule whose `contains` occurs in the prompt
// answers with replies[(seed - 1) % size] (seed 0 picks the first reply).

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "toolstar/generator.hpp"
#include "toolstar/serialize.hpp"

namespace toolstar {

struct ScriptEntry {
  std::optional<std::string> direct;
  std::vector<std::vector<std::string>> tir;
  std::vector<std::string> hint;
};

struct PromptRule {
  std::string contains;
  std::vector<std::string> replies;
};

class ScriptBook final : public Generator {
 public:
  ScriptBook() = default;
  ScriptBook(std::map<std::string, ScriptEntry> entries,
             std::vector<PromptRule> prompts);

  // Throws Error{Schema}.
  static ScriptBook from_json(const json& j);
  static std::shared_ptr<ScriptBook> load(const std::filesystem::path& path);

  // Instruction that selects the `direct` response.
  void set_direct_instruction(std::string s) { direct_instruction_ = std::move(s); }
  // Substrings of the partial output that select the `hint` turns.
  void set_hint_markers(std::vector<std::string> m) { hint_markers_ = std::move(m); }

  GenerationResult generate(const GenerationRequest& request) override;

  const std::map<std::string, ScriptEntry>& entries() const { return entries_; }

 private:
  std::optional<std::string> reply(const GenerationRequest& request) const;

  std::map<std::string, ScriptEntry> entries_;
  std::vector<PromptRule> prompts_;
  std::string direct_instruction_;
  std::vector<std::string> hint_markers_;
};

}  // namespace toolstar
