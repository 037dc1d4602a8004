#pragma once
// Generator client contract: anything that continues a partial model output
// given stop sequences. Scripted fakes and an HTTP chat-completion client
// implement it.

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "toolstar/http.hpp"

namespace toolstar {

struct TokenLogprob {
  std::string token;
  double logprob = 0.0;
  bool masked = false;

  bool operator==(const TokenLogprob&) const = default;
};

struct GenerationRequest {
  std::string instruction;
  std::string query;
  // Model output produced so far (continuation target).
  std::string partial;
  std::vector<std::string> stop;
  double temperature = 0.7;
  double top_p = 0.95;
  std::uint64_t seed = 0;
  // Index of this call within one rollout.
  std::size_t turn = 0;
  std::optional<std::size_t> max_chars;
};

struct GenerationResult {
  std::string text;
  // The stop sequence that ended generation, when the backend reports it.
  std::optional<std::string> stop_hit;
  // True when the backend has nothing further to emit (EOS or script end).
  bool ended = false;
  std::vector<TokenLogprob> logprobs;
};

class Generator {
 public:
  virtual ~Generator() = default;
  // Throws Error{Generator} on backend failure.
  virtual GenerationResult generate(const GenerationRequest& request) = 0;
};

// Cuts `text` after the earliest stop sequence it contains.
GenerationResult apply_stops(std::string text,
                             const std::vector<std::string>& stops);

// Deterministic generator driven by a callback; nullopt ends generation.
class ScriptedGenerator final : public Generator {
 public:
  using Script =
      std::function<std::optional<std::string>(const GenerationRequest&)>;

  explicit ScriptedGenerator(Script script);
  // Same turn list for every seed; turn i answers call i.
  static std::shared_ptr<ScriptedGenerator> from_turns(
      std::vector<std::string> turns);
  // Turn lists chosen by seed modulo the number of lists.
  static std::shared_ptr<ScriptedGenerator> from_seeded_turns(
      std::vector<std::vector<std::string>> turns_by_seed);

  GenerationResult generate(const GenerationRequest& request) override;

 private:
  Script script_;
};

struct ChatClientOptions {
  std::string url = "http://127.0.0.1:8000/v1/chat/completions";
  std::string model = "tool-star";
  std::string api_key;
  std::chrono::milliseconds timeout{60000};
  int max_retries = 2;
  bool request_logprobs = false;
};

// OpenAI-style chat-completion endpoint. A non-empty partial output is sent
// as a trailing assistant message with `continue_final_message` set.
class ChatCompletionClient final : public Generator {
 public:
  ChatCompletionClient(ChatClientOptions options,
                       std::shared_ptr<HttpClient> http);

  GenerationResult generate(const GenerationRequest& request) override;

 private:
  ChatClientOptions options_;
  std::shared_ptr<HttpClient> http_;
};

// One-shot prompt completion helper for auxiliary models (summarizer,
// debugger, refiner, judge).
std::string complete_prompt(Generator& llm, const std::string& prompt,
                            std::uint64_t seed = 0);

}  // namespace toolstar
