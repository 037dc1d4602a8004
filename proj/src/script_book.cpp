#include "toolstar/script_book.hpp"

#include "toolstar/errors.hpp"
#include "toolstar/synthesis.hpp"

namespace toolstar {

ScriptBook::ScriptBook(std::map<std::string, ScriptEntry> entries,
                       std::vector<PromptRule> prompts)
    : entries_(std::move(entries)),
      prompts_(std::move(prompts)),
      direct_instruction_(kDirectInstruction),
      hint_markers_{kDefaultVerificationHint, kDefaultReflectionHint} {}

namespace {

std::vector<std::string> string_list(const json& j, const std::string& what) {
  if (!j.is_array()) throw Error(Errc::Schema, what + " must be an array");
  std::vector<std::string> out;
  for (const auto& e : j) {
    if (!e.is_string()) throw Error(Errc::Schema, what + " must hold strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

}  // namespace

ScriptBook ScriptBook::from_json(const json& j) {
  if (!j.is_object()) throw Error(Errc::Schema, "script must be an object");
  std::map<std::string, ScriptEntry> entries;
  if (j.contains("questions")) {
    for (const auto& [q, v] : j.at("questions").items()) {
      const std::string where = "script entry \"" + q + "\"";
      ScriptEntry e;
      if (v.contains("direct")) {
        if (!v.at("direct").is_string()) {
          throw Error(Errc::Schema, where + ": direct must be a string");
        }
        e.direct = v.at("direct").get<std::string>();
      }
      if (v.contains("tir")) {
        const json& t = v.at("tir");
        if (!t.is_array()) throw Error(Errc::Schema, where + ": tir must be an array");
        // A flat list of strings is one turn list.
        if (!t.empty() && t.front().is_string()) {
          e.tir.push_back(string_list(t, where + ": tir"));
        } else {
          for (const auto& turns : t) e.tir.push_back(string_list(turns, where + ": tir"));
        }
      }
      if (v.contains("hint")) e.hint = string_list(v.at("hint"), where + ": hint");
      entries.emplace(q, std::move(e));
    }
  }
  std::vector<PromptRule> prompts;
  if (j.contains("prompts")) {
    for (const auto& r : j.at("prompts")) {
      PromptRule rule;
      rule.contains = r.value("contains", "");
      if (r.contains("reply")) {
        rule.replies.push_back(r.at("reply").get<std::string>());
      } else {
        rule.replies = string_list(r.at("replies"), "prompt rule replies");
      }
      if (rule.replies.empty()) throw Error(Errc::Schema, "prompt rule without replies");
      prompts.push_back(std::move(rule));
    }
  }
  return ScriptBook(std::move(entries), std::move(prompts));
}

std::shared_ptr<ScriptBook> ScriptBook::load(const std::filesystem::path& path) {
  return std::make_shared<ScriptBook>(from_json(read_json(path)));
}

std::optional<std::string> ScriptBook::reply(const GenerationRequest& r) const {
  if (r.instruction.empty()) {
    for (const auto& rule : prompts_) {
      if (r.query.find(rule.contains) == std::string::npos) continue;
      const std::size_t i = r.seed == 0 ? 0 : (r.seed - 1) % rule.replies.size();
      return rule.replies[i];
    }
    return std::nullopt;
  }
  const auto it = entries_.find(r.query);
  if (it == entries_.end()) return std::nullopt;
  const ScriptEntry& e = it->second;
  if (r.instruction == direct_instruction_) {
    if (r.turn == 0 && e.direct) return e.direct;
    return std::nullopt;
  }
  for (const auto& m : hint_markers_) {
    if (!m.empty() && r.partial.find(m) != std::string::npos) {
      if (r.turn < e.hint.size()) return e.hint[r.turn];
      return std::nullopt;
    }
  }
  if (e.tir.empty()) return std::nullopt;
  const auto& turns = e.tir[r.seed % e.tir.size()];
  if (r.turn < turns.size()) return turns[r.turn];
  return std::nullopt;
}

GenerationResult ScriptBook::generate(const GenerationRequest& request) {
  auto text = reply(request);
  if (!text) {
    GenerationResult done;
    done.ended = true;
    return done;
  }
  GenerationResult out = apply_stops(std::move(*text), request.stop);
  // A scripted answer block ends the script.
  if (!out.stop_hit && request.instruction.empty()) out.ended = true;
  return out;
}

}  // namespace toolstar
