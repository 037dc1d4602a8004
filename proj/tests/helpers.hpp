#pragma once
// Shared fixtures for the unit and acceptance binaries.

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "toolstar/cli.hpp"
#include "toolstar/generator.hpp"
#include "toolstar/protocol.hpp"
#include "toolstar/rollout.hpp"
#include "toolstar/sandbox.hpp"
#include "toolstar/search.hpp"
#include "toolstar/serialize.hpp"
#include "toolstar/toolkit.hpp"

namespace fixtures {

namespace fs = std::filesystem;
using namespace toolstar;

inline fs::path data_dir() { return fs::path(TOOLSTAR_DATA_DIR); }
inline fs::path test_dir() { return fs::path(TOOLSTAR_TEST_DIR); }
inline fs::path fake(const std::string& name) {
  return test_dir() / "fakes" / name;
}

inline fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() /
                     ("toolstar_test_" + name + "_" +
                      std::to_string(std::random_device{}()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

struct CriticCase {
  std::string id;
  std::string question;
  std::string response;
  std::string gold;
  double total = 0.0;
  std::string principle;
};

inline std::vector<CriticCase> critic_cases() {
  const fs::path dir = data_dir() / "critic_cases";
  std::map<std::string, std::string> gold;
  for (const auto& [id, ans] : read_gold(dir / "gold.jsonl")) gold[id] = ans;
  std::map<std::string, json> expected;
  for (const auto& j : read_jsonl(dir / "expected.jsonl")) {
    expected[j.at("id").get<std::string>()] = j;
  }
  std::vector<CriticCase> out;
  for (const auto& j : read_jsonl(dir / "traj.jsonl")) {
    CriticCase c;
    c.id = j.at("id").get<std::string>();
    c.question = j.value("question", "");
    c.response = j.at("response").get<std::string>();
    c.gold = gold.at(c.id);
    c.total = expected.at(c.id).at("total").get<double>();
    c.principle = expected.at(c.id).at("principle").get<std::string>();
    out.push_back(std::move(c));
  }
  return out;
}

inline json gaia_case() { return read_json(data_dir() / "critic_cases" / "gaia.json"); }

// Splits a finished response into generator turns, one per tool call plus
// the tail, dropping the result blocks the engine will insert itself.
inline std::vector<std::string> replay_turns(const std::string& response,
                                             std::map<std::string, std::string>* feedback = nullptr) {
  const ReasoningChain chain = parse_chain(response);
  std::vector<std::string> turns(1);
  std::string last_call;
  for (const auto& s : chain.segments) {
    if (s.tagged && s.kind == TagKind::Result) {
      if (feedback) {
        std::string fb = s.text;
        if (!fb.empty() && fb.front() == '\n') fb.erase(0, 1);
        if (!fb.empty() && fb.back() == '\n') fb.pop_back();
        (*feedback)[last_call] = fb;
      }
      turns.emplace_back();
      continue;
    }
    std::string piece = s.lead;
    if (s.tagged) {
      piece += TagSet::defaults().open(s.kind) + s.text +
               TagSet::defaults().close(s.kind);
    } else {
      piece += s.text;
    }
    turns.back() += piece;
    if (s.tagged && is_tool_call(s.kind)) last_call = s.text;
  }
  if (turns.back().empty()) turns.pop_back();
  return turns;
}

// Answers every request with `prefix + payload`; counts executions.
class EchoTool final : public Tool {
 public:
  explicit EchoTool(std::string prefix = "echo: ") : prefix_(std::move(prefix)) {}
  ToolFeedback execute(const ToolRequest& request) override {
    ++count;
    return {prefix_ + request.payload, false, false, 0};
  }
  std::atomic<int> count{0};

 private:
  std::string prefix_;
};

// Keeps every text the wrapped generator returned.
class RecordingGenerator final : public Generator {
 public:
  explicit RecordingGenerator(Generator& inner) : inner_(inner) {}
  GenerationResult generate(const GenerationRequest& request) override {
    GenerationResult r = inner_.generate(request);
    std::lock_guard guard(mu_);
    emitted += r.text;
    requests.push_back(request);
    return r;
  }
  std::string emitted;
  std::vector<GenerationRequest> requests;

 private:
  Generator& inner_;
  std::mutex mu_;
};

inline std::shared_ptr<ToolRegistry> echo_registry(
    std::shared_ptr<Tool> search = std::make_shared<EchoTool>("hits for "),
    std::shared_ptr<Tool> python = std::make_shared<EchoTool>("out: ")) {
  auto reg = std::make_shared<ToolRegistry>();
  reg->register_tool(TagKind::Search, std::move(search));
  reg->register_tool(TagKind::Python, std::move(python));
  return reg;
}

// Random free text that never contains a tag literal.
inline std::string random_body(std::mt19937_64& rng, std::size_t max_len = 24) {
  static const std::string alphabet =
      "abcdefghijklmnopqrstuvwxyz ABCXYZ0123456789\n\t.,;:!?()[]{}=+-*/\\$'\"<>_";
  std::uniform_int_distribution<std::size_t> len(0, max_len);
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::string s;
  const std::size_t n = len(rng);
  for (std::size_t i = 0; i < n; ++i) {
    char c = alphabet[pick(rng)];
    // "<" followed by letters could spell a literal; pair it with a digit.
    if (c == '<') {
      s += "<1";
      continue;
    }
    s.push_back(c);
  }
  return s;
}

inline std::string random_ws(std::mt19937_64& rng) {
  static const char* options[] = {"", "", "", "\n", " ", "\n\n", "\t \n"};
  return options[std::uniform_int_distribution<int>(0, 6)(rng)];
}

// A chain built from tagged segments, free text and whitespace gaps.
inline std::string random_chain(std::mt19937_64& rng, std::size_t max_segments = 12) {
  const TagSet& tags = TagSet::defaults();
  std::uniform_int_distribution<std::size_t> count(0, max_segments);
  std::uniform_int_distribution<int> kind(0, 5);
  std::string out;
  const std::size_t n = count(rng);
  for (std::size_t i = 0; i < n; ++i) {
    out += random_ws(rng);
    const int k = kind(rng);
    if (k == 5) {
      std::string body = random_body(rng);
      if (!body.empty()) out += body;
      continue;
    }
    const TagKind tk = kAllTagKinds[static_cast<std::size_t>(k)];
    out += tags.open(tk) + random_body(rng) + tags.close(tk);
  }
  out += random_ws(rng);
  return out;
}

struct CliRun {
  int code = 0;
  std::string out;
  std::string err;
};

inline CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "toolstar");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliRun r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

struct GaiaReplay {
  std::shared_ptr<ScriptedGenerator> gen;
  std::shared_ptr<ToolRegistry> reg;
  std::shared_ptr<ScriptedSearchTool> search;
  std::shared_ptr<ScriptedSandbox> sandbox;
  std::string question;
};

inline GaiaReplay gaia_replay() {
  const json g = fixtures::gaia_case();
  std::map<std::string, std::string> feedback;
  GaiaReplay r;
  r.gen = ScriptedGenerator::from_turns(
      fixtures::replay_turns(g.at("response").get<std::string>(), &feedback));
  r.search = std::make_shared<ScriptedSearchTool>();
  r.sandbox = std::make_shared<ScriptedSandbox>();
  for (const auto& [call, fb] : feedback) {
    if (call.find("print") != std::string::npos) {
      r.sandbox->add({call, {fb + "\n", "", true, false, 0}, false});
    } else {
      r.search->set(call, fb);
    }
  }
  r.reg = std::make_shared<ToolRegistry>();
  r.reg->register_tool(TagKind::Search, r.search);
  r.reg->register_tool(TagKind::Python, std::make_shared<CodeTool>(r.sandbox));
  r.question = g.at("question").get<std::string>();
  return r;
}


struct BacktraceFixture {
  std::string text;
  std::size_t segment;
  std::size_t expected;
};

// Texts are assembled piece by piece so the expected rewind point is known
// without searching the result.
inline std::vector<BacktraceFixture> backtrace_fixtures() {
  std::vector<BacktraceFixture> out;
  std::mt19937_64 rng(2024);
  const TagSet& tags = TagSet::defaults();
  for (int f = 0; f < 20; ++f) {
    const int calls = 1 + f % 4;
    const int fail_at = f % calls;
    const bool point_at_result = f % 3 == 1;
    const bool at_start = f == 0 || f == 7;
    std::string text;
    std::size_t seg = 0;
    std::size_t failing_seg = 0;
    std::size_t expected = 0;
    for (int c = 0; c < calls; ++c) {
      const bool first = c == 0;
      if (!(first && at_start)) {
        // Prose, possibly spanning lines, then the newline before the call.
        std::string prose = "step " + std::to_string(c) + " line one";
        if (rng() % 2) prose += "\nline two " + std::to_string(rng() % 100);
        text += tags.open(TagKind::Think) + prose + tags.close(TagKind::Think);
        ++seg;
        // Any non-blank gap text becomes one untagged segment.
        bool gap_text = false;
        if (rng() % 2) {
          text += " trailing words";
          gap_text = true;
        }
        if (rng() % 2 == 0 || c == fail_at) {
          if (c == fail_at) expected = text.size();
          text += "\n";
        }
        if (rng() % 3 == 0) {
          text += "so: ";
          gap_text = true;
        }
        if (gap_text) ++seg;
      }
      const bool py = (f + c) % 2;
      const TagKind k = py ? TagKind::Python : TagKind::Search;
      if (c == fail_at) failing_seg = seg;
      text += tags.open(k) + (py ? "print(" + std::to_string(c) + ")" : "query " + std::to_string(c)) +
              tags.close(k);
      ++seg;
      text += tags.open(TagKind::Result) + "\nfeedback\n" + tags.close(TagKind::Result);
      ++seg;
    }
    text += "\n" + tags.open(TagKind::Answer) + "\\boxed{1}" + tags.close(TagKind::Answer);
    if (at_start && fail_at == 0) expected = 0;
    out.push_back({text, point_at_result ? failing_seg + 1 : failing_seg, expected});
  }
  return out;
}

}  // namespace fixtures
