#include "toolstar/serialize.hpp"

#include <fstream>
#include <sstream>

#include "toolstar/text.hpp"

namespace toolstar {

namespace {

std::string id_string(const json& v) {
  return v.is_string() ? v.get<std::string>() : v.dump();
}

}  // namespace

json trajectory_to_json(const Trajectory& t) {
  json segs = json::array();
  for (const auto& s : t.chain.segments) {
    json j = {{"tag", to_string(s.kind)},
              {"text", s.text},
              {"origin", to_string(s.origin)}};
    if (!s.tagged) j["tagged"] = false;
    if (!s.lead.empty()) j["lead"] = s.lead;
    segs.push_back(std::move(j));
  }
  json calls = json::array();
  for (const auto& c : t.tool_calls) {
    json j = {{"kind", to_string(c.request.kind)},
              {"request", c.request.payload},
              {"feedback", c.feedback.text},
              {"is_error", c.feedback.is_error},
              {"cached", c.feedback.cached}};
    if (c.request.routing) j["routing"] = to_string(*c.request.routing);
    calls.push_back(std::move(j));
  }
  json mask = json::array();
  for (const auto& m : t.mask) mask.push_back({m.begin, m.end});
  json out = {{"id", t.id},
              {"question", t.question},
              {"gold", t.gold},
              {"segments", std::move(segs)},
              {"tool_calls", std::move(calls)},
              {"stop_reason", to_string(t.stop_reason)},
              {"mask", std::move(mask)},
              {"seed", t.seed}};
  if (!t.chain.trailing.empty()) out["trailing"] = t.chain.trailing;
  if (!t.interventions.empty()) {
    json iv = json::array();
    for (const auto& i : t.interventions) {
      iv.push_back({{"kind", i.kind}, {"detail", i.detail}, {"offset", i.offset}});
    }
    out["interventions"] = std::move(iv);
  }
  return out;
}

Trajectory trajectory_from_json(const json& j, const TagSet& tags) {
  Trajectory t;
  try {
    t.id = j.contains("id") ? id_string(j["id"]) : "";
    t.question = j.value("question", "");
    t.gold = j.contains("gold") ? id_string(j["gold"]) : "";
    if (j.contains("response")) {
      // A raw output: recover the engine blocks from result tags.
      const std::string text = j["response"].get<std::string>();
      std::vector<CharSpan> engine;
      try {
        for (const auto& s : parse_chain(text, tags).segments) {
          if (s.tagged && s.kind == TagKind::Result) engine.push_back(s.span);
        }
      } catch (const ParseError&) {
      }
      t.chain = build_chain(text, engine, tags);
    } else {
      for (const auto& sj : j.at("segments")) {
        Segment s;
        const auto kind = tag_kind_from_string(sj.at("tag").get<std::string>());
        if (!kind) throw Error(Errc::Schema, "unknown tag " + sj["tag"].dump());
        s.kind = *kind;
        s.text = sj.at("text").get<std::string>();
        const std::string origin = sj.value("origin", "model");
        s.origin = origin == "engine" ? Origin::EngineInserted
                                      : Origin::ModelGenerated;
        s.tagged = sj.value("tagged", true);
        s.lead = sj.value("lead", "");
        t.chain.segments.push_back(std::move(s));
      }
      t.chain.trailing = j.value("trailing", "");
      reindex_chain(t.chain, tags);
      t.chain.final_answer = chain_answer(t.chain);
    }
    t.chain.query = t.question;
    if (j.contains("tool_calls")) {
      for (const auto& cj : j["tool_calls"]) {
        ToolCallRecord c;
        const auto kind = tag_kind_from_string(cj.at("kind").get<std::string>());
        if (!kind || !is_tool_call(*kind)) {
          throw Error(Errc::Schema, "bad tool kind " + cj["kind"].dump());
        }
        std::optional<SearchRouting> routing;
        if (cj.contains("routing")) {
          routing = cj["routing"] == "web" ? SearchRouting::Web
                                           : SearchRouting::Local;
        }
        c.request = ToolRequest::make(*kind, cj.at("request").get<std::string>(),
                                      routing);
        c.feedback.text = cj.value("feedback", "");
        c.feedback.is_error = cj.value("is_error", false);
        c.feedback.cached = cj.value("cached", false);
        t.tool_calls.push_back(std::move(c));
      }
    } else {
      for (std::size_t i = 0; i + 1 < t.chain.segments.size(); ++i) {
        const auto& s = t.chain.segments[i];
        const auto& n = t.chain.segments[i + 1];
        if (s.tagged && is_tool_call(s.kind) && n.kind == TagKind::Result &&
            n.origin == Origin::EngineInserted) {
          ToolCallRecord c;
          c.request = ToolRequest::make(s.kind, s.text);
          c.feedback.text = text::trim(n.text);
          c.offset = n.span.begin;
          t.tool_calls.push_back(std::move(c));
        }
      }
    }
    if (j.contains("stop_reason")) {
      t.stop_reason = stop_reason_from_string(j["stop_reason"].get<std::string>());
    } else {
      t.stop_reason = t.chain.final_answer ? StopReason::AnswerEmitted
                                           : StopReason::GeneratorEnded;
    }
    t.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("interventions")) {
      for (const auto& ij : j["interventions"]) {
        t.interventions.push_back({ij.value("kind", ""), ij.value("detail", ""),
                                   ij.value("offset", std::size_t{0})});
      }
    }
  } catch (const json::exception& e) {
    throw Error(Errc::Schema, std::string("bad trajectory record: ") + e.what());
  }
  t.mask = feedback_mask(t);
  return t;
}

json reward_to_json(const RewardBreakdown& r) {
  json v = json::array();
  for (const auto& x : r.violations) {
    v.push_back({{"code", to_string(x.code)}, {"detail", x.detail}});
  }
  return {{"format_ok", r.format_ok}, {"accuracy", r.accuracy},
          {"bonus", r.bonus},         {"total", r.total},
          {"principle", r.principle}, {"violations", std::move(v)}};
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot read " + path.string());
  std::vector<json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::is_blank(line)) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw SchemaError(lineno, path.string() + ": " + e.what());
    }
  }
  return out;
}

void write_jsonl(const std::filesystem::path& path,
                 const std::vector<json>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  for (const auto& r : records) out << r.dump() << '\n';
}

json read_json(const std::filesystem::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(Errc::Schema, path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const json& value) {
  write_file(path, value.dump(2) + "\n");
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& data) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out << data;
}

std::vector<std::pair<std::string, std::string>> read_gold(
    const std::filesystem::path& path) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t lineno = 0;
  for (const auto& j : read_jsonl(path)) {
    ++lineno;
    if (!j.contains("id") || !(j.contains("answer") || j.contains("gold"))) {
      throw SchemaError(lineno, "gold record needs \"id\" and \"answer\"");
    }
    const json& a = j.contains("answer") ? j["answer"] : j["gold"];
    out.emplace_back(id_string(j["id"]), id_string(a));
  }
  return out;
}

}  // namespace toolstar
