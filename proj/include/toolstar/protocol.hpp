#pragma once
// Tagged reasoning protocol: parse, render and validate model outputs that
// interleave reasoning, tool requests, engine feedback and a final answer.

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "toolstar/errors.hpp"

namespace toolstar {

enum class TagKind { Think, Search, Python, Result, Answer };

inline constexpr std::array<TagKind, 5> kAllTagKinds = {
    TagKind::Think, TagKind::Search, TagKind::Python, TagKind::Result,
    TagKind::Answer};

const char* to_string(TagKind kind);
std::optional<TagKind> tag_kind_from_string(std::string_view name);

inline bool is_tool_call(TagKind kind) {
  return kind == TagKind::Search || kind == TagKind::Python;
}

struct TagLiterals {
  std::string open;
  std::string close;

  bool operator==(const TagLiterals&) const = default;
};

// Tag vocabulary. Literals are configuration; the defaults are the
// <think>/<search>/<python>/<result>/<answer> family.
class TagSet {
 public:
  TagSet();

  static const TagSet& defaults();

  const TagLiterals& operator[](TagKind kind) const {
    return literals_[static_cast<std::size_t>(kind)];
  }
  const std::string& open(TagKind kind) const { return (*this)[kind].open; }
  const std::string& close(TagKind kind) const { return (*this)[kind].close; }

  // Throws Error{Config} when a literal is empty or two literals collide.
  void set(TagKind kind, std::string open, std::string close);

  bool operator==(const TagSet&) const = default;

 private:
  std::array<TagLiterals, 5> literals_;
};

enum class Origin { ModelGenerated, EngineInserted };

const char* to_string(Origin origin);

// Half-open character range.
struct CharSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool operator==(const CharSpan&) const = default;
};

struct Segment {
  TagKind kind = TagKind::Think;
  std::string text;
  Origin origin = Origin::ModelGenerated;
  // False for free text found between tag pairs; such text is Think content
  // rendered without literals.
  bool tagged = true;
  // Whitespace preceding the segment in the rendered chain.
  std::string lead;
  // Offsets into the rendered chain, literals included; `lead` excluded.
  CharSpan span;

  bool operator==(const Segment&) const = default;
};

struct ReasoningChain {
  std::string query;
  std::string instruction;
  std::vector<Segment> segments;
  // Whitespace after the last segment.
  std::string trailing;
  std::optional<std::string> final_answer;

  bool operator==(const ReasoningChain&) const = default;
};

enum class ViolationCode {
  UnbalancedTag,
  MissingAnswer,
  MissingBoxed,
  OverMaxLength,
  DanglingToolCall,
  TagOrderViolation,
};

const char* to_string(ViolationCode code);

struct Violation {
  ViolationCode code;
  std::string detail;
  // Kind of the offending tag, when one is identifiable.
  std::optional<TagKind> tag;
};

struct FormatReport {
  bool ok = true;
  std::vector<Violation> violations;

  bool has(ViolationCode code) const;
};

struct FormatLimits {
  std::size_t max_chars = 16384;
};

struct PendingCall {
  TagKind kind;
  std::string request;
  // Offset just past the close literal.
  std::size_t end_offset;
  // Offset of the open literal.
  std::size_t begin_offset = 0;
};

// Throws ParseError on unbalanced or crossed tags.
ReasoningChain parse_chain(std::string_view text,
                           const TagSet& tags = TagSet::defaults());

std::string render_chain(const ReasoningChain& chain,
                         const TagSet& tags = TagSet::defaults());

// Recomputes every segment span from the rendered layout.
void reindex_chain(ReasoningChain& chain,
                   const TagSet& tags = TagSet::defaults());

FormatReport validate_format(std::string_view text, const FormatLimits& limits,
                             const TagSet& tags = TagSet::defaults());

// Content of the last balanced \boxed{...}.
std::optional<std::string> extract_boxed(std::string_view text);

// Earliest complete Search/Python span not already followed by a Result
// block, scanning from `from`.
std::optional<PendingCall> scan_pending_call(
    std::string_view partial_text, const TagSet& tags = TagSet::defaults(),
    std::size_t from = 0);

// Drops unmatched open/close literals until the text parses.
std::string repair_tags(std::string_view text,
                        const TagSet& tags = TagSet::defaults());

// Answer text to score: the boxed content when present, else the trimmed
// Answer segment.
std::optional<std::string> chain_answer(const ReasoningChain& chain);

}  // namespace toolstar
