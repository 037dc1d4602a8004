#include "toolstar/reward.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <regex>

#include "toolstar/text.hpp"

namespace toolstar {

const char* to_string(AccuracyMetric metric) {
  switch (metric) {
    case AccuracyMetric::ExactMatchNormalized: return "em";
    case AccuracyMetric::TokenF1: return "f1";
    case AccuracyMetric::ExternalJudge: return "judge";
  }
  return "em";
}

AccuracyMetric accuracy_metric_from_string(std::string_view s) {
  if (s == "em") return AccuracyMetric::ExactMatchNormalized;
  if (s == "f1") return AccuracyMetric::TokenF1;
  if (s == "judge") return AccuracyMetric::ExternalJudge;
  throw Error(Errc::Config, "unknown accuracy metric: " + std::string(s));
}

const char* const kDefaultJudgeTemplate =
    "Judge whether the model answer is equivalent to the reference answer "
    "for the question.\n\nQuestion: {question}\nReference answer: {gold}\n"
    "Model answer: {pred}\n\nReply with yes or no only.";

LlmJudge::LlmJudge(std::shared_ptr<Generator> llm, std::string prompt_template)
    : llm_(std::move(llm)), template_(std::move(prompt_template)) {}

bool LlmJudge::judge(const std::string& question, const std::string& pred,
                     const std::string& gold) {
  if (!llm_) throw Error(Errc::JudgeUnavailable, "no judge model configured");
  std::string reply;
  try {
    reply = complete_prompt(
        *llm_, text::fill_template(template_, {{"question", question},
                                               {"pred", pred},
                                               {"gold", gold}}));
  } catch (const Error& e) {
    throw Error(Errc::JudgeUnavailable, e.what());
  }
  const std::string v = text::to_lower(text::trim(reply));
  if (text::starts_with(v, "yes")) return true;
  if (text::starts_with(v, "no")) return false;
  throw Error(Errc::JudgeUnavailable, "judge reply is not yes/no: " + reply);
}

namespace {

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (auto pos = s.find(from); pos != std::string::npos;
       pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

std::string strip_latex(std::string s) {
  s = text::trim(s);
  if (auto boxed = extract_boxed(s); boxed && text::starts_with(s, "\\boxed{")) {
    s = *boxed;
  }
  for (std::string_view w : {"\\left", "\\right", "\\!", "\\,", "\\;", "\\:",
                             "^\\circ", "^{\\circ}", "\\%", "\\$", "$", "\\(",
                             "\\)", "\\[", "\\]", "\\displaystyle"}) {
    replace_all(s, w, "");
  }
  replace_all(s, "\\dfrac", "\\frac");
  replace_all(s, "\\tfrac", "\\frac");
  for (std::string_view w : {"\\textbf", "\\text", "\\mathrm", "\\mathbf",
                             "\\mbox"}) {
    replace_all(s, w, "");
  }
  return text::trim(s);
}

std::string drop_punct_and_space(const std::string& s) {
  std::string out;
  for (unsigned char c : s) {
    if (std::isspace(c) || std::ispunct(c)) continue;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

}  // namespace

std::string normalize_answer(const std::string& s) {
  return drop_punct_and_space(strip_latex(s));
}

std::optional<double> parse_number(const std::string& raw) {
  std::string s = strip_latex(raw);
  std::string compact;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (text::is_space(c)) continue;
    // Thousands separators between digits.
    if (c == ',' && i > 0 && i + 1 < s.size() &&
        std::isdigit(static_cast<unsigned char>(s[i - 1])) &&
        std::isdigit(static_cast<unsigned char>(s[i + 1]))) {
      continue;
    }
    compact.push_back(c);
  }
  while (!compact.empty() && compact.back() == '.') compact.pop_back();
  static const std::regex number(R"(^[+-]?(\d+\.?\d*|\.\d+)$)");
  static const std::regex frac(R"(^([+-]?)\\frac\{?([+-]?\d+\.?\d*)\}?\{?([+-]?\d+\.?\d*)\}?$)");
  static const std::regex slash(R"(^([+-]?\d+\.?\d*)/([+-]?\d+\.?\d*)$)");
  std::smatch m;
  try {
    if (std::regex_match(compact, number)) return std::stod(compact);
    if (std::regex_match(compact, m, frac)) {
      const double d = std::stod(m[3].str());
      if (d == 0) return std::nullopt;
      const double v = std::stod(m[2].str()) / d;
      return m[1].str() == "-" ? -v : v;
    }
    if (std::regex_match(compact, m, slash)) {
      const double d = std::stod(m[2].str());
      if (d == 0) return std::nullopt;
      return std::stod(m[1].str()) / d;
    }
  } catch (const std::exception&) {
  }
  return std::nullopt;
}

bool exact_match(const std::string& pred, const std::string& gold) {
  const auto a = parse_number(pred);
  const auto b = parse_number(gold);
  if (a && b) {
    return std::fabs(*a - *b) <= 1e-9 * std::max(1.0, std::fabs(*b));
  }
  const std::string na = normalize_answer(pred);
  return !na.empty() && na == normalize_answer(gold);
}

double token_f1(const std::string& pred, const std::string& gold) {
  auto tokens = [](const std::string& s) {
    std::string cleaned;
    for (unsigned char c : s) {
      if (std::ispunct(c)) continue;
      cleaned.push_back(static_cast<char>(std::tolower(c)));
    }
    return text::split_whitespace(cleaned);
  };
  const auto p = tokens(pred);
  const auto g = tokens(gold);
  if (p.empty() || g.empty()) return 0.0;
  std::map<std::string, int> counts;
  for (const auto& t : g) ++counts[t];
  int common = 0;
  for (const auto& t : p) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  if (common == 0) return 0.0;
  const double precision = static_cast<double>(common) / p.size();
  const double recall = static_cast<double>(common) / g.size();
  return 2.0 * precision * recall / (precision + recall);
}

double accuracy(const std::string& pred, const std::string& gold,
                AccuracyMetric metric, Judge* judge,
                const std::string& question) {
  switch (metric) {
    case AccuracyMetric::ExactMatchNormalized:
      return exact_match(pred, gold) ? 1.0 : 0.0;
    case AccuracyMetric::TokenF1:
      return token_f1(pred, gold);
    case AccuracyMetric::ExternalJudge:
      if (judge == nullptr) {
        throw Error(Errc::JudgeUnavailable, "no judge configured");
      }
      return judge->judge(question, pred, gold) ? 1.0 : 0.0;
  }
  return 0.0;
}

double multi_tool_bonus(const ReasoningChain& chain, const RewardConfig& cfg) {
  bool search = false;
  bool python = false;
  for (const auto& s : chain.segments) {
    if (!s.tagged || s.origin != Origin::ModelGenerated) continue;
    search = search || s.kind == TagKind::Search;
    python = python || s.kind == TagKind::Python;
  }
  return search && python ? cfg.r_m : 0.0;
}

double multi_tool_bonus(const Trajectory& traj, const RewardConfig& cfg) {
  return multi_tool_bonus(traj.chain, cfg);
}

namespace {

std::string format_failure_principle(const FormatReport& report) {
  const std::string head = "The response format is incorrect";
  for (ViolationCode code :
       {ViolationCode::OverMaxLength, ViolationCode::UnbalancedTag,
        ViolationCode::MissingAnswer}) {
    for (const auto& v : report.violations) {
      if (v.code != code) continue;
      switch (code) {
        case ViolationCode::OverMaxLength:
          return head + ", the response over max length.";
        case ViolationCode::MissingAnswer:
          return head + ". " + v.detail + ".";
        default:
          return head + ", " + v.detail + ".";
      }
    }
  }
  return head + ", " + report.violations.front().detail + ".";
}

std::string tool_usage_phrase(const ReasoningChain& chain) {
  bool search = false;
  bool python = false;
  for (const auto& s : chain.segments) {
    if (!s.tagged || s.origin != Origin::ModelGenerated) continue;
    search = search || s.kind == TagKind::Search;
    python = python || s.kind == TagKind::Python;
  }
  if (search && python) return "multiple tool usage";
  if (search || python) return "single tool usage";
  return "no tool usage";
}

RewardBreakdown score_chain(const std::string& text,
                            const ReasoningChain* chain,
                            const std::string& gold, const RewardConfig& cfg,
                            Judge* judge, const std::string& question) {
  RewardBreakdown out;
  const FormatReport report = validate_format(text, cfg.limits, cfg.tags);
  out.violations = report.violations;
  out.format_ok = report.ok;
  if (!report.ok) {
    out.total = -1.0;
    out.principle = format_failure_principle(report);
    return out;
  }
  std::optional<ReasoningChain> parsed;
  if (chain == nullptr) {
    parsed = parse_chain(text, cfg.tags);
    chain = &*parsed;
  }
  const std::string pred = chain_answer(*chain).value_or("");
  out.accuracy = accuracy(pred, gold, cfg.metric, judge, question);
  if (out.accuracy <= 0.0) {
    out.accuracy = 0.0;
    out.total = 0.0;
    out.principle = "The response format is correct. The answer is incorrect.";
    return out;
  }
  out.bonus = multi_tool_bonus(*chain, cfg);
  out.total = std::max(out.accuracy + out.bonus, out.accuracy);
  out.principle = std::string("The response format is correct. The final "
                              "answer is ") +
                  (out.accuracy >= 1.0 ? "correct" : "partially correct") +
                  ". The reasoning chain contains " +
                  tool_usage_phrase(*chain) + ".";
  return out;
}

}  // namespace

RewardBreakdown compute_reward(const Trajectory& traj, const std::string& gold,
                               const RewardConfig& cfg, Judge* judge) {
  return score_chain(traj.text(cfg.tags), &traj.chain, gold, cfg, judge,
                     traj.question);
}

RewardBreakdown score_response(const std::string& response,
                               const std::string& gold,
                               const RewardConfig& cfg, Judge* judge,
                               const std::string& question) {
  return score_chain(response, nullptr, gold, cfg, judge, question);
}

double tool_efficiency(const std::vector<DatasetTally>& per_dataset) {
  if (per_dataset.empty()) {
    throw Error(Errc::EmptyInput, "tool efficiency needs at least one dataset");
  }
  double sum = 0.0;
  for (const auto& d : per_dataset) {
    if (d.total == 0) {
      throw Error(Errc::Config, "dataset with zero tool-using samples");
    }
    sum += static_cast<double>(d.correct) / static_cast<double>(d.total);
  }
  return sum / static_cast<double>(per_dataset.size());
}

}  // namespace toolstar
