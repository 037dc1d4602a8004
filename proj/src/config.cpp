#include "toolstar/config.hpp"

#include <cstdlib>
#include <limits>
#include <sstream>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include "toolstar/errors.hpp"
#include "toolstar/serialize.hpp"

namespace toolstar {

const char* const kLlmKeyEnv = "TOOLSTAR_LLM_API_KEY";
const char* const kSearchKeyEnv = "TOOLSTAR_SEARCH_API_KEY";

void EngineConfig::sync_tags() {
  rollout.tags = tags;
  reward.tags = tags;
  reward.limits.max_chars = rollout.max_chars;
}

SynthesisConfig EngineConfig::synthesis() const {
  SynthesisConfig s;
  s.attempts = synthesis_attempts;
  s.metric = synthesis_metric;
  s.rollout = rollout;
  s.rollout.tags = tags;
  return s;
}

PipelineConfig EngineConfig::pipeline() const {
  PipelineConfig p;
  p.synthesis = synthesis();
  p.hints = hints;
  p.normalization = normalization;
  return p;
}

namespace {

const char* tag_key(TagKind k) { return to_string(k); }

HintMode hint_mode_from_string(std::string_view s) {
  if (s == "verification") return HintMode::LogicalVerification;
  if (s == "reflection") return HintMode::AnswerReflection;
  throw Error(Errc::Config, "unknown hint mode: " + std::string(s));
}

SearchRouting routing_from_string(std::string_view s) {
  if (s == "local") return SearchRouting::Local;
  if (s == "web") return SearchRouting::Web;
  throw Error(Errc::Config, "unknown search routing: " + std::string(s));
}

// Typed readers. A missing key keeps the default.
class Reader {
 public:
  Reader(const toml::table& root, std::string section)
      : section_(std::move(section)) {
    const toml::node* n = root.get(section_);
    if (n != nullptr) {
      table_ = n->as_table();
      if (table_ == nullptr) fail("", "a table");
    }
  }

  template <typename T>
  void uint(const char* key, T& out) {
    const toml::node* n = find(key);
    if (!n) return;
    auto v = n->value<std::int64_t>();
    if (!v || !n->is_integer() || *v < 0) fail(key, "a non-negative integer");
    out = static_cast<T>(*v);
  }
  void integer(const char* key, int& out) {
    const toml::node* n = find(key);
    if (!n) return;
    if (!n->is_integer()) fail(key, "an integer");
    out = static_cast<int>(*n->value<std::int64_t>());
  }
  void real(const char* key, double& out) {
    const toml::node* n = find(key);
    if (!n) return;
    if (!n->is_number()) fail(key, "a number");
    out = *n->value<double>();
  }
  void boolean(const char* key, bool& out) {
    const toml::node* n = find(key);
    if (!n) return;
    if (!n->is_boolean()) fail(key, "a boolean");
    out = *n->value<bool>();
  }
  void string(const char* key, std::string& out) {
    const toml::node* n = find(key);
    if (!n) return;
    if (!n->is_string()) fail(key, "a string");
    out = *n->value<std::string>();
  }
  bool has(const char* key) const { return find(key) != nullptr; }
  std::vector<std::string> strings(const char* key) {
    std::vector<std::string> out;
    const toml::node* n = find(key);
    const toml::array* arr = n ? n->as_array() : nullptr;
    if (!arr) fail(key, "an array of strings");
    for (const auto& e : *arr) {
      if (!e.is_string()) fail(key, "an array of strings");
      out.push_back(*e.value<std::string>());
    }
    return out;
  }
  std::vector<std::vector<std::string>> string_pairs(const char* key) {
    std::vector<std::vector<std::string>> out;
    const toml::node* n = find(key);
    const toml::array* arr = n ? n->as_array() : nullptr;
    if (!arr) fail(key, "an array of string pairs");
    for (const auto& e : *arr) {
      const toml::array* pair = e.as_array();
      if (!pair || pair->size() != 2 || !(*pair)[0].is_string() ||
          !(*pair)[1].is_string()) {
        fail(key, "an array of string pairs");
      }
      out.push_back({*(*pair)[0].value<std::string>(),
                     *(*pair)[1].value<std::string>()});
    }
    return out;
  }

  [[noreturn]] void fail(const std::string& key, const char* what) const {
    throw Error(Errc::Config, "[" + section_ + "]" + (key.empty() ? "" : " " + key) +
                                  " must be " + what);
  }

 private:
  const toml::node* find(const char* key) const {
    return table_ ? table_->get(key) : nullptr;
  }

  std::string section_;
  const toml::table* table_ = nullptr;
};

toml::array to_array(const std::vector<std::string>& v) {
  toml::array a;
  for (const auto& s : v) a.push_back(s);
  return a;
}

std::int64_t as_int(std::uint64_t v) {
  if (v > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
    throw Error(Errc::Config, "value too large for the config file");
  }
  return static_cast<std::int64_t>(v);
}

}  // namespace

EngineConfig config_from_toml(std::string_view toml_text) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "config parse error: " << e.description() << " at line "
        << e.source().begin.line;
    throw Error(Errc::Config, msg.str());
  }
  EngineConfig c;

  Reader tags(root, "tags");
  for (TagKind k : kAllTagKinds) {
    if (!tags.has(tag_key(k))) continue;
    auto lit = tags.strings(tag_key(k));
    if (lit.size() != 2) tags.fail(tag_key(k), "[open, close]");
    c.tags.set(k, lit[0], lit[1]);
  }

  Reader r(root, "rollout");
  auto& ro = c.rollout;
  r.uint("max_tool_calls", ro.max_tool_calls);
  r.uint("max_tokens", ro.max_tokens);
  r.uint("chars_per_token", ro.chars_per_token);
  r.uint("max_chars", ro.max_chars);
  r.uint("group_size", ro.group_size);
  r.real("temperature", ro.temperature);
  r.real("top_p", ro.top_p);
  r.uint("seed", ro.seed);
  r.uint("post_budget_calls", ro.post_budget_calls);
  r.uint("max_turns", ro.max_turns);
  r.string("budget_notice", ro.budget_notice);
  r.uint("parallelism", ro.parallelism);
  r.string("instruction", ro.instruction);
  std::string s;
  if (r.has("cache_scope")) {
    r.string("cache_scope", s);
    ro.cache_scope = cache_scope_from_string(s);
  }
  if (r.has("search_routing")) {
    s.clear();
    r.string("search_routing", s);
    if (s.empty()) {
      ro.search_routing.reset();
    } else {
      ro.search_routing = routing_from_string(s);
    }
  }

  Reader rw(root, "reward");
  rw.real("r_m", c.reward.r_m);
  if (rw.has("metric")) {
    rw.string("metric", s);
    c.reward.metric = accuracy_metric_from_string(s);
  }

  Reader n(root, "normalization");
  n.uint("beta", c.normalization.beta);
  n.boolean("dedup", c.normalization.dedup);
  n.boolean("format_canon", c.normalization.format_canon);
  if (n.has("aliases")) {
    c.normalization.aliases.clear();
    for (auto& p : n.string_pairs("aliases")) {
      c.normalization.aliases.emplace_back(p[0], p[1]);
    }
  }

  Reader h(root, "hints");
  if (h.has("uncertainty_markers")) {
    c.hints.uncertainty_markers = h.strings("uncertainty_markers");
  }
  h.string("verification_hint", c.hints.verification_hint_template);
  h.string("reflection_hint", c.hints.reflection_hint_template);
  h.uint("seed", c.hints.seed);
  if (h.has("modes")) {
    c.hints.modes.clear();
    for (const auto& m : h.strings("modes")) {
      c.hints.modes.push_back(hint_mode_from_string(m));
    }
  }

  Reader sy(root, "synthesis");
  sy.uint("attempts", c.synthesis_attempts);
  if (sy.has("metric")) {
    sy.string("metric", s);
    c.synthesis_metric = accuracy_metric_from_string(s);
  }

  Reader rs(root, "resilience");
  auto& p = c.resilience;
  rs.boolean("debugger", p.debugger);
  rs.boolean("backtracer", p.backtracer);
  rs.boolean("refiner", p.refiner);
  rs.uint("debug_max_retries", p.debug_max_retries);
  rs.uint("backtrace_limit", p.backtrace_limit);
  rs.uint("max_refinements", p.max_refinements);
  rs.string("debugger_template", p.debugger_template);
  rs.string("refiner_template", p.refiner_template);
  rs.string("truncation_notice", p.truncation_notice);

  Reader rl(root, "rl");
  rl.real("clip_eps", c.grpo.clip_eps);
  rl.real("kl_beta", c.grpo.kl_beta);
  rl.real("adv_eps", c.grpo.adv_eps);
  rl.real("dpo_beta", c.dpo_beta);

  Reader sc(root, "schedule");
  sc.uint("cycles", c.schedule.cycles);
  sc.uint("grpo_steps_per_cycle", c.schedule.grpo_steps_per_cycle);
  sc.uint("critic_samples", c.schedule.critic_samples);
  sc.uint("candidates_per_query", c.schedule.candidates_per_query);
  sc.uint("batch_size", c.schedule.batch_size);

  Reader l(root, "llm");
  l.string("url", c.llm.url);
  l.string("model", c.llm.model);
  l.string("api_key", c.llm.api_key);
  std::size_t ms = static_cast<std::size_t>(c.llm.timeout.count());
  l.uint("timeout_ms", ms);
  c.llm.timeout = std::chrono::milliseconds(ms);
  l.integer("max_retries", c.llm.max_retries);
  l.boolean("request_logprobs", c.llm.request_logprobs);

  Reader se(root, "search");
  se.string("web_url", c.search.web_url);
  se.string("api_key", c.search.api_key);
  se.uint("top_k", c.search.options.top_k);
  if (se.has("default_routing")) {
    se.string("default_routing", s);
    c.search.options.default_routing = routing_from_string(s);
  }
  se.uint("browse_top_n", c.search.options.browse_top_n);
  se.uint("browse_truncate_chars", c.search.options.browse.truncate_chars);
  se.string("browse_template", c.search.options.browse.summary_template);
  se.integer("max_retries", c.search.retry.max_retries);
  ms = static_cast<std::size_t>(c.search.retry.timeout.count());
  se.uint("timeout_ms", ms);
  c.search.retry.timeout = std::chrono::milliseconds(ms);

  Reader sb(root, "sandbox");
  if (sb.has("driver")) c.sandbox.driver = sb.strings("driver");
  sb.integer("timeout_s", c.sandbox.limits.timeout_s);
  sb.integer("mem_mb", c.sandbox.limits.mem_mb);

  Reader rg(root, "registry");
  rg.uint("max_feedback_chars", c.registry.max_feedback_chars);
  rg.uint("cache_capacity", c.registry.cache_capacity);
  rg.uint("max_concurrent_code", c.registry.max_concurrent_code);

  Reader pa(root, "paths");
  pa.string("data_dir", c.paths.data_dir);
  pa.string("corpus", c.paths.corpus);
  pa.string("out_dir", c.paths.out_dir);

  c.sync_tags();
  c.rollout.validate();
  return c;
}

EngineConfig load_config(const std::filesystem::path& file) {
  return config_from_toml(read_file(file));
}

std::string config_to_toml(const EngineConfig& c) {
  toml::table root;

  toml::table tags;
  for (TagKind k : kAllTagKinds) {
    tags.insert(tag_key(k), to_array({c.tags.open(k), c.tags.close(k)}));
  }
  root.insert("tags", std::move(tags));

  const auto& ro = c.rollout;
  root.insert(
      "rollout",
      toml::table{{"max_tool_calls", as_int(ro.max_tool_calls)},
                  {"max_tokens", as_int(ro.max_tokens)},
                  {"chars_per_token", as_int(ro.chars_per_token)},
                  {"max_chars", as_int(ro.max_chars)},
                  {"group_size", as_int(ro.group_size)},
                  {"temperature", ro.temperature},
                  {"top_p", ro.top_p},
                  {"seed", as_int(ro.seed)},
                  {"post_budget_calls", as_int(ro.post_budget_calls)},
                  {"max_turns", as_int(ro.max_turns)},
                  {"budget_notice", ro.budget_notice},
                  {"cache_scope", to_string(ro.cache_scope)},
                  {"parallelism", as_int(ro.parallelism)},
                  {"instruction", ro.instruction},
                  {"search_routing", ro.search_routing
                                         ? std::string(to_string(*ro.search_routing))
                                         : std::string()}});

  root.insert("reward", toml::table{{"r_m", c.reward.r_m},
                                    {"metric", to_string(c.reward.metric)}});

  toml::array aliases;
  for (const auto& [from, to] : c.normalization.aliases) {
    aliases.push_back(to_array({from, to}));
  }
  root.insert("normalization",
              toml::table{{"beta", as_int(c.normalization.beta)},
                          {"dedup", c.normalization.dedup},
                          {"format_canon", c.normalization.format_canon},
                          {"aliases", std::move(aliases)}});

  std::vector<std::string> modes;
  for (HintMode m : c.hints.modes) modes.push_back(to_string(m));
  root.insert("hints",
              toml::table{{"uncertainty_markers", to_array(c.hints.uncertainty_markers)},
                          {"verification_hint", c.hints.verification_hint_template},
                          {"reflection_hint", c.hints.reflection_hint_template},
                          {"seed", as_int(c.hints.seed)},
                          {"modes", to_array(modes)}});

  root.insert("synthesis",
              toml::table{{"attempts", as_int(c.synthesis_attempts)},
                          {"metric", to_string(c.synthesis_metric)}});

  const auto& p = c.resilience;
  root.insert("resilience",
              toml::table{{"debugger", p.debugger},
                          {"backtracer", p.backtracer},
                          {"refiner", p.refiner},
                          {"debug_max_retries", as_int(p.debug_max_retries)},
                          {"backtrace_limit", as_int(p.backtrace_limit)},
                          {"max_refinements", as_int(p.max_refinements)},
                          {"debugger_template", p.debugger_template},
                          {"refiner_template", p.refiner_template},
                          {"truncation_notice", p.truncation_notice}});

  root.insert("rl", toml::table{{"clip_eps", c.grpo.clip_eps},
                                {"kl_beta", c.grpo.kl_beta},
                                {"adv_eps", c.grpo.adv_eps},
                                {"dpo_beta", c.dpo_beta}});

  root.insert("schedule",
              toml::table{{"cycles", as_int(c.schedule.cycles)},
                          {"grpo_steps_per_cycle", as_int(c.schedule.grpo_steps_per_cycle)},
                          {"critic_samples", as_int(c.schedule.critic_samples)},
                          {"candidates_per_query", as_int(c.schedule.candidates_per_query)},
                          {"batch_size", as_int(c.schedule.batch_size)}});

  root.insert("llm", toml::table{{"url", c.llm.url},
                                 {"model", c.llm.model},
                                 {"api_key", c.llm.api_key},
                                 {"timeout_ms", static_cast<std::int64_t>(c.llm.timeout.count())},
                                 {"max_retries", c.llm.max_retries},
                                 {"request_logprobs", c.llm.request_logprobs}});

  const auto& so = c.search.options;
  root.insert("search",
              toml::table{{"web_url", c.search.web_url},
                          {"api_key", c.search.api_key},
                          {"top_k", as_int(so.top_k)},
                          {"default_routing", to_string(so.default_routing)},
                          {"browse_top_n", as_int(so.browse_top_n)},
                          {"browse_truncate_chars", as_int(so.browse.truncate_chars)},
                          {"browse_template", so.browse.summary_template},
                          {"max_retries", c.search.retry.max_retries},
                          {"timeout_ms",
                           static_cast<std::int64_t>(c.search.retry.timeout.count())}});

  root.insert("sandbox", toml::table{{"driver", to_array(c.sandbox.driver)},
                                     {"timeout_s", c.sandbox.limits.timeout_s},
                                     {"mem_mb", c.sandbox.limits.mem_mb}});

  root.insert("registry",
              toml::table{{"max_feedback_chars", as_int(c.registry.max_feedback_chars)},
                          {"cache_capacity", as_int(c.registry.cache_capacity)},
                          {"max_concurrent_code", as_int(c.registry.max_concurrent_code)}});

  root.insert("paths", toml::table{{"data_dir", c.paths.data_dir},
                                   {"corpus", c.paths.corpus},
                                   {"out_dir", c.paths.out_dir}});

  std::ostringstream out;
  out << root << "\n";
  return out.str();
}

void apply_env_overrides(EngineConfig& cfg) {
  if (const char* v = std::getenv(kLlmKeyEnv); v && *v) cfg.llm.api_key = v;
  if (const char* v = std::getenv(kSearchKeyEnv); v && *v) cfg.search.api_key = v;
}

bool operator==(const EngineConfig& a, const EngineConfig& b) {
  return config_to_toml(a) == config_to_toml(b);
}

}  // namespace toolstar
