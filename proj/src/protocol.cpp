#include "toolstar/protocol.hpp"

#include <algorithm>

#include "toolstar/text.hpp"

namespace toolstar {

const char* to_string(Errc code) {
  switch (code) {
    case Errc::Parse: return "ParseError";
    case Errc::NoToolRegistered: return "NoToolRegistered";
    case Errc::EmptyIndex: return "EmptyIndex";
    case Errc::Network: return "NetworkError";
    case Errc::QuotaExceeded: return "QuotaExceeded";
    case Errc::Fetch: return "FetchError";
    case Errc::SandboxUnavailable: return "SandboxUnavailable";
    case Errc::Generator: return "GeneratorError";
    case Errc::JudgeUnavailable: return "JudgeUnavailable";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::MissingDirectVerdict: return "MissingDirectVerdict";
    case Errc::Alignment: return "AlignmentError";
    case Errc::InvalidSegment: return "InvalidSegment";
    case Errc::RefinerUnavailable: return "RefinerUnavailable";
    case Errc::Schema: return "SchemaError";
    case Errc::Config: return "ConfigError";
    case Errc::Trainer: return "TrainerError";
    case Errc::Io: return "IoError";
  }
  return "Error";
}

const char* to_string(TagKind kind) {
  switch (kind) {
    case TagKind::Think: return "think";
    case TagKind::Search: return "search";
    case TagKind::Python: return "python";
    case TagKind::Result: return "result";
    case TagKind::Answer: return "answer";
  }
  return "think";
}

std::optional<TagKind> tag_kind_from_string(std::string_view name) {
  for (TagKind k : kAllTagKinds) {
    if (name == to_string(k)) return k;
  }
  return std::nullopt;
}

const char* to_string(Origin origin) {
  return origin == Origin::EngineInserted ? "engine" : "model";
}

const char* to_string(ViolationCode code) {
  switch (code) {
    case ViolationCode::UnbalancedTag: return "UnbalancedTag";
    case ViolationCode::MissingAnswer: return "MissingAnswer";
    case ViolationCode::MissingBoxed: return "MissingBoxed";
    case ViolationCode::OverMaxLength: return "OverMaxLength";
    case ViolationCode::DanglingToolCall: return "DanglingToolCall";
    case ViolationCode::TagOrderViolation: return "TagOrderViolation";
  }
  return "Unknown";
}

TagSet::TagSet() {
  for (TagKind k : kAllTagKinds) {
    const std::string name = to_string(k);
    literals_[static_cast<std::size_t>(k)] = {"<" + name + ">",
                                              "</" + name + ">"};
  }
}

const TagSet& TagSet::defaults() {
  static const TagSet instance;
  return instance;
}

void TagSet::set(TagKind kind, std::string open, std::string close) {
  if (open.empty() || close.empty() || open == close) {
    throw Error(Errc::Config, std::string("invalid literals for tag ") +
                                  to_string(kind));
  }
  auto candidate = literals_;
  candidate[static_cast<std::size_t>(kind)] = {std::move(open),
                                               std::move(close)};
  std::vector<std::string> all;
  for (const auto& l : candidate) {
    all.push_back(l.open);
    all.push_back(l.close);
  }
  std::sort(all.begin(), all.end());
  if (std::adjacent_find(all.begin(), all.end()) != all.end()) {
    throw Error(Errc::Config, "tag literals must be distinct");
  }
  literals_ = std::move(candidate);
}

bool FormatReport::has(ViolationCode code) const {
  return std::any_of(violations.begin(), violations.end(),
                     [code](const Violation& v) { return v.code == code; });
}

namespace {

struct TagToken {
  TagKind kind;
  bool is_open;
  std::size_t pos;
  std::size_t len;
};

// Left-to-right scan for tag literals; the longest literal wins on overlap.
std::vector<TagToken> tokenize(std::string_view text, const TagSet& tags) {
  struct Literal {
    std::string_view s;
    TagKind kind;
    bool is_open;
  };
  std::vector<Literal> lits;
  for (TagKind k : kAllTagKinds) {
    lits.push_back({tags.open(k), k, true});
    lits.push_back({tags.close(k), k, false});
  }
  std::sort(lits.begin(), lits.end(), [](const Literal& a, const Literal& b) {
    return a.s.size() > b.s.size();
  });
  std::string first_chars;
  for (const auto& l : lits) first_chars.push_back(l.s.front());

  std::vector<TagToken> out;
  std::size_t i = 0;
  while (i < text.size()) {
    i = text.find_first_of(first_chars, i);
    if (i == std::string_view::npos) break;
    bool matched = false;
    for (const auto& l : lits) {
      if (text.compare(i, l.s.size(), l.s) == 0) {
        out.push_back({l.kind, l.is_open, i, l.s.size()});
        i += l.s.size();
        matched = true;
        break;
      }
    }
    if (!matched) ++i;
  }
  return out;
}

std::string tag_name(TagKind k, const TagSet& tags) {
  return tags.open(k) + " and " + tags.close(k);
}

}  // namespace

ReasoningChain parse_chain(std::string_view text, const TagSet& tags) {
  const auto toks = tokenize(text, tags);
  ReasoningChain chain;
  std::string pending_lead;
  std::size_t cursor = 0;

  auto take_gap = [&](std::size_t until) {
    std::string_view gap = text.substr(cursor, until - cursor);
    if (gap.empty()) return;
    if (text::is_blank(gap)) {
      pending_lead += gap;
      return;
    }
    Segment s;
    s.kind = TagKind::Think;
    s.tagged = false;
    s.text = std::string(gap);
    s.span = {cursor, until};
    chain.segments.push_back(std::move(s));
  };

  std::size_t i = 0;
  while (i < toks.size()) {
    const TagToken& t = toks[i];
    if (!t.is_open) {
      throw ParseError(ParseErrc::UnbalancedTag, t.pos,
                       tag_name(t.kind, tags) + " are not matched");
    }
    take_gap(t.pos);
    if (i + 1 >= toks.size()) {
      throw ParseError(ParseErrc::UnbalancedTag, t.pos,
                       tag_name(t.kind, tags) + " are not matched");
    }
    const TagToken& u = toks[i + 1];
    if (u.kind == t.kind && !u.is_open) {
      Segment s;
      s.kind = t.kind;
      s.text = std::string(text.substr(t.pos + t.len, u.pos - t.pos - t.len));
      s.origin = t.kind == TagKind::Result ? Origin::EngineInserted
                                           : Origin::ModelGenerated;
      s.lead = std::move(pending_lead);
      pending_lead.clear();
      s.span = {t.pos, u.pos + u.len};
      chain.segments.push_back(std::move(s));
      cursor = u.pos + u.len;
      i += 2;
      continue;
    }
    if (u.is_open && u.kind != t.kind && i + 2 < toks.size()) {
      const TagToken& v = toks[i + 2];
      const bool crossed = !v.is_open && v.kind == t.kind;
      const bool nested = !v.is_open && v.kind == u.kind &&
                          i + 3 < toks.size() && !toks[i + 3].is_open &&
                          toks[i + 3].kind == t.kind;
      if (crossed || nested) {
        throw ParseError(ParseErrc::Interleaved, u.pos,
                         tag_name(t.kind, tags) + " interleave with " +
                             tag_name(u.kind, tags));
      }
    }
    throw ParseError(ParseErrc::UnbalancedTag, t.pos,
                     tag_name(t.kind, tags) + " are not matched");
  }

  std::string_view tail = text.substr(cursor);
  if (!tail.empty()) {
    if (text::is_blank(tail)) {
      pending_lead += tail;
    } else {
      take_gap(text.size());
    }
  }
  chain.trailing = std::move(pending_lead);
  chain.final_answer = chain_answer(chain);
  return chain;
}

std::string render_chain(const ReasoningChain& chain, const TagSet& tags) {
  std::string out;
  for (const auto& s : chain.segments) {
    out += s.lead;
    if (s.tagged) {
      out += tags.open(s.kind);
      out += s.text;
      out += tags.close(s.kind);
    } else {
      out += s.text;
    }
  }
  out += chain.trailing;
  return out;
}

void reindex_chain(ReasoningChain& chain, const TagSet& tags) {
  std::size_t pos = 0;
  for (auto& s : chain.segments) {
    pos += s.lead.size();
    std::size_t len = s.text.size();
    if (s.tagged) len += tags.open(s.kind).size() + tags.close(s.kind).size();
    s.span = {pos, pos + len};
    pos += len;
  }
}

FormatReport validate_format(std::string_view text, const FormatLimits& limits,
                             const TagSet& tags) {
  FormatReport report;
  auto add = [&](ViolationCode code, std::string detail,
                 std::optional<TagKind> tag = std::nullopt) {
    report.violations.push_back({code, std::move(detail), tag});
  };

  std::optional<ReasoningChain> chain;
  try {
    chain = parse_chain(text, tags);
  } catch (const ParseError& e) {
    // Recover the offending kind from the literal at the error offset.
    std::optional<TagKind> kind;
    for (TagKind k : kAllTagKinds) {
      if (text.compare(e.offset(), tags.open(k).size(), tags.open(k)) == 0 ||
          text.compare(e.offset(), tags.close(k).size(), tags.close(k)) == 0) {
        kind = k;
      }
    }
    add(e.kind() == ParseErrc::UnbalancedTag ? ViolationCode::UnbalancedTag
                                             : ViolationCode::TagOrderViolation,
        e.what(), kind);
  }

  if (text.size() > limits.max_chars) {
    add(ViolationCode::OverMaxLength,
        "length " + std::to_string(text.size()) + " exceeds " +
            std::to_string(limits.max_chars));
  }

  if (chain) {
    const auto& segs = chain->segments;
    std::vector<std::size_t> answers;
    for (std::size_t i = 0; i < segs.size(); ++i) {
      if (segs[i].tagged && segs[i].kind == TagKind::Answer) answers.push_back(i);
    }
    if (answers.empty()) {
      add(ViolationCode::MissingAnswer,
          tag_name(TagKind::Answer, tags) + " are not matched",
          TagKind::Answer);
    } else if (answers.size() > 1) {
      add(ViolationCode::TagOrderViolation, "more than one answer segment",
          TagKind::Answer);
    } else {
      if (answers.front() + 1 != segs.size()) {
        add(ViolationCode::TagOrderViolation,
            "answer segment is not the last segment", TagKind::Answer);
      }
      if (!extract_boxed(segs[answers.front()].text)) {
        add(ViolationCode::MissingBoxed, "answer contains no \\boxed{}",
            TagKind::Answer);
      }
    }
    for (std::size_t i = 0; i < segs.size(); ++i) {
      if (segs[i].tagged && is_tool_call(segs[i].kind)) {
        const bool fed = i + 1 < segs.size() && segs[i + 1].tagged &&
                         segs[i + 1].kind == TagKind::Result;
        if (!fed) {
          add(ViolationCode::DanglingToolCall,
              std::string(to_string(segs[i].kind)) +
                  " call has no result block",
              segs[i].kind);
        }
      }
    }
    for (std::size_t i = 0; i < segs.size(); ++i) {
      if (segs[i].tagged && segs[i].kind == TagKind::Result) {
        const bool after_call =
            i > 0 && segs[i - 1].tagged && is_tool_call(segs[i - 1].kind);
        if (!after_call) {
          add(ViolationCode::TagOrderViolation,
              "result block not preceded by a tool call", TagKind::Result);
        }
      }
    }
  }

  report.ok = report.violations.empty();
  return report;
}

std::optional<std::string> extract_boxed(std::string_view text) {
  static constexpr std::string_view kBoxed = "\\boxed{";
  std::vector<std::size_t> starts;
  for (std::size_t pos = text.find(kBoxed); pos != std::string_view::npos;
       pos = text.find(kBoxed, pos + 1)) {
    starts.push_back(pos);
  }
  for (auto it = starts.rbegin(); it != starts.rend(); ++it) {
    const std::size_t begin = *it + kBoxed.size();
    int depth = 1;
    for (std::size_t i = begin; i < text.size(); ++i) {
      if (text[i] == '{') {
        ++depth;
      } else if (text[i] == '}' && --depth == 0) {
        return std::string(text.substr(begin, i - begin));
      }
    }
  }
  return std::nullopt;
}

std::optional<PendingCall> scan_pending_call(std::string_view partial_text,
                                             const TagSet& tags,
                                             std::size_t from) {
  if (from >= partial_text.size()) return std::nullopt;
  const std::string_view view = partial_text.substr(from);
  const auto toks = tokenize(view, tags);
  for (std::size_t i = 0; i < toks.size(); ++i) {
    const TagToken& t = toks[i];
    if (!t.is_open || !is_tool_call(t.kind)) continue;
    if (i + 1 >= toks.size()) return std::nullopt;
    const TagToken& u = toks[i + 1];
    if (u.is_open || u.kind != t.kind) continue;
    const std::size_t end = u.pos + u.len;
    if (i + 2 < toks.size()) {
      const TagToken& v = toks[i + 2];
      if (v.is_open && v.kind == TagKind::Result &&
          text::is_blank(view.substr(end, v.pos - end))) {
        continue;
      }
    }
    return PendingCall{
        t.kind, text::trim(view.substr(t.pos + t.len, u.pos - t.pos - t.len)),
        from + end, from + t.pos};
  }
  return std::nullopt;
}

std::string repair_tags(std::string_view input, const TagSet& tags) {
  std::string text(input);
  for (int round = 0; round < 8; ++round) {
    const auto toks = tokenize(text, tags);
    std::vector<const TagToken*> drop;
    const TagToken* open = nullptr;
    for (const auto& t : toks) {
      if (t.is_open) {
        if (open) drop.push_back(open);
        open = &t;
      } else if (open && open->kind == t.kind) {
        open = nullptr;
      } else {
        drop.push_back(&t);
      }
    }
    if (open) drop.push_back(open);
    if (drop.empty()) return text;
    std::sort(drop.begin(), drop.end(),
              [](const TagToken* a, const TagToken* b) { return a->pos < b->pos; });
    std::string out;
    std::size_t cursor = 0;
    for (const TagToken* t : drop) {
      out.append(text, cursor, t->pos - cursor);
      cursor = t->pos + t->len;
    }
    out.append(text, cursor, std::string::npos);
    text = std::move(out);
  }
  return text;
}

std::optional<std::string> chain_answer(const ReasoningChain& chain) {
  for (auto it = chain.segments.rbegin(); it != chain.segments.rend(); ++it) {
    if (it->tagged && it->kind == TagKind::Answer) {
      if (auto boxed = extract_boxed(it->text)) return boxed;
      return text::trim(it->text);
    }
  }
  return std::nullopt;
}

}  // namespace toolstar
