#include "toolstar/generator.hpp"

#include <json.hpp>
#include <thread>

#include "toolstar/errors.hpp"

namespace toolstar {

using json = nlohmann::json;

GenerationResult apply_stops(std::string text,
                             const std::vector<std::string>& stops) {
  GenerationResult out;
  std::size_t best = std::string::npos;
  const std::string* hit = nullptr;
  for (const auto& s : stops) {
    if (s.empty()) continue;
    const auto pos = text.find(s);
    if (pos != std::string::npos && (best == std::string::npos || pos < best)) {
      best = pos;
      hit = &s;
    }
  }
  if (hit != nullptr) {
    text.resize(best + hit->size());
    out.stop_hit = *hit;
  }
  out.text = std::move(text);
  return out;
}

ScriptedGenerator::ScriptedGenerator(Script script)
    : script_(std::move(script)) {}

std::shared_ptr<ScriptedGenerator> ScriptedGenerator::from_turns(
    std::vector<std::string> turns) {
  return std::make_shared<ScriptedGenerator>(
      [turns = std::move(turns)](
          const GenerationRequest& r) -> std::optional<std::string> {
        if (r.turn >= turns.size()) return std::nullopt;
        return turns[r.turn];
      });
}

std::shared_ptr<ScriptedGenerator> ScriptedGenerator::from_seeded_turns(
    std::vector<std::vector<std::string>> turns_by_seed) {
  return std::make_shared<ScriptedGenerator>(
      [turns = std::move(turns_by_seed)](
          const GenerationRequest& r) -> std::optional<std::string> {
        if (turns.empty()) return std::nullopt;
        const auto& list = turns[r.seed % turns.size()];
        if (r.turn >= list.size()) return std::nullopt;
        return list[r.turn];
      });
}

GenerationResult ScriptedGenerator::generate(const GenerationRequest& request) {
  auto text = script_(request);
  if (!text) {
    GenerationResult done;
    done.ended = true;
    return done;
  }
  return apply_stops(std::move(*text), request.stop);
}

ChatCompletionClient::ChatCompletionClient(ChatClientOptions options,
                                           std::shared_ptr<HttpClient> http)
    : options_(std::move(options)), http_(std::move(http)) {}

GenerationResult ChatCompletionClient::generate(
    const GenerationRequest& request) {
  json messages = json::array();
  if (!request.instruction.empty()) {
    messages.push_back({{"role", "system"}, {"content", request.instruction}});
  }
  messages.push_back({{"role", "user"}, {"content", request.query}});
  json body = {{"model", options_.model},
               {"messages", messages},
               {"temperature", request.temperature},
               {"top_p", request.top_p},
               {"seed", request.seed}};
  if (!request.stop.empty()) body["stop"] = request.stop;
  if (!request.partial.empty()) {
    body["messages"].push_back(
        {{"role", "assistant"}, {"content", request.partial}});
    body["continue_final_message"] = true;
    body["add_generation_prompt"] = false;
  }
  if (options_.request_logprobs) body["logprobs"] = true;

  HttpHeaders headers;
  if (!options_.api_key.empty()) {
    headers.emplace("Authorization", "Bearer " + options_.api_key);
  }

  HttpResponse res;
  for (int attempt = 0;; ++attempt) {
    try {
      res = http_->post(options_.url, body.dump(), "application/json",
                        headers, options_.timeout);
      if (res.status == 200) break;
      if (res.status != 429 && res.status < 500) {
        throw Error(Errc::Generator,
                    "generator returned status " + std::to_string(res.status));
      }
    } catch (const Error& e) {
      if (e.code() != Errc::Network) throw;
    }
    if (attempt >= options_.max_retries) {
      throw Error(Errc::Generator, "generator endpoint unavailable");
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(200 << attempt));
  }

  GenerationResult out;
  try {
    const json reply = json::parse(res.body);
    const json& choice = reply.at("choices").at(0);
    out.text = choice.at("message").value("content", std::string{});
    const std::string finish = choice.value("finish_reason", std::string{});
    if (choice.contains("stop_reason") && choice["stop_reason"].is_string()) {
      out.stop_hit = choice["stop_reason"].get<std::string>();
    }
    out.ended = finish == "stop" && !out.stop_hit;
    if (choice.contains("logprobs") && choice["logprobs"].is_object()) {
      for (const auto& t : choice["logprobs"].value("content", json::array())) {
        out.logprobs.push_back(
            {t.value("token", std::string{}), t.value("logprob", 0.0), false});
      }
    }
  } catch (const json::exception& e) {
    throw Error(Errc::Generator,
                std::string("malformed generator response: ") + e.what());
  }
  return out;
}

std::string complete_prompt(Generator& llm, const std::string& prompt,
                            std::uint64_t seed) {
  GenerationRequest req;
  req.query = prompt;
  req.seed = seed;
  return llm.generate(req).text;
}

}  // namespace toolstar
