#include "toolstar/evalbench.hpp"

#include <cstdio>
#include <fstream>
#include <future>

#include "toolstar/errors.hpp"
#include "toolstar/text.hpp"

namespace toolstar {

const char* to_string(TaskKind kind) {
  return kind == TaskKind::Computational ? "computational" : "knowledge";
}

TaskKind task_kind_from_string(std::string_view s) {
  if (s == "computational" || s == "math") return TaskKind::Computational;
  if (s == "knowledge" || s == "qa") return TaskKind::KnowledgeIntensive;
  throw Error(Errc::Config, "unknown task kind: " + std::string(s));
}

AccuracyMetric default_metric(TaskKind kind) {
  return kind == TaskKind::Computational ? AccuracyMetric::ExactMatchNormalized
                                         : AccuracyMetric::TokenF1;
}

AccuracyMetric DatasetSpec::effective_metric() const {
  return metric.value_or(default_metric(task_kind));
}

namespace {

std::string field_string(const json& j, const char* key) {
  const json& v = j.at(key);
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number()) return v.dump();
  throw Error(Errc::Schema, std::string("\"") + key + "\" must be a string");
}

}  // namespace

std::vector<EvalExample> load_dataset(const DatasetSpec& spec) {
  std::ifstream in(spec.path);
  if (!in) {
    throw Error(Errc::Io, "cannot open dataset " + spec.path.string());
  }
  std::vector<EvalExample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::is_blank(line)) continue;
    if (spec.limit && out.size() >= *spec.limit) break;
    const std::string where = spec.path.string() + ":" + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(Errc::Schema, where + ": " + e.what());
    }
    for (const char* key : {"id", "question", "answer"}) {
      if (!j.is_object() || !j.contains(key)) {
        throw Error(Errc::Schema,
                    where + ": missing \"" + key + "\" (line " +
                        std::to_string(line_no) + ")");
      }
    }
    try {
      out.push_back({field_string(j, "id"), field_string(j, "question"),
                     field_string(j, "answer")});
    } catch (const Error& e) {
      throw Error(Errc::Schema, where + ": " + e.what());
    }
  }
  return out;
}

namespace {

struct RunOutcome {
  ExampleResult result;
  std::size_t cached = 0;
  std::vector<std::string> interventions;
};

RunOutcome run_example(const EvalExample& ex, AccuracyMetric metric,
                       Generator& generator, ToolRegistry& registry,
                       const EvalOptions& options) {
  RunOutcome out;
  out.result.id = ex.id;
  try {
    const RolloutInput input{ex.id, ex.question, ex.answer, ""};
    const Trajectory traj =
        robust_rollout(input, generator, registry, options.rollout,
                       options.policies, options.models);
    out.result.stop_reason = to_string(traj.stop_reason);
    out.result.tool_calls = traj.tool_calls.size();
    for (const auto& c : traj.tool_calls) out.cached += c.feedback.cached ? 1 : 0;
    for (const auto& i : traj.interventions) out.interventions.push_back(i.kind);
    out.result.prediction = chain_answer(traj.chain).value_or("");
    out.result.score = out.result.prediction.empty()
                           ? 0.0
                           : accuracy(out.result.prediction, ex.answer, metric,
                                      options.judge, ex.question);
  } catch (const std::exception& e) {
    out.result.score = 0.0;
    out.result.error = e.what();
  }
  return out;
}

DatasetReport evaluate_one(const Dataset& ds, Generator& generator,
                           ToolRegistry& registry, const EvalOptions& options) {
  DatasetReport rep;
  rep.name = ds.spec.name;
  const AccuracyMetric metric = ds.spec.effective_metric();
  rep.metric = to_string(metric);
  const std::size_t n = ds.spec.limit
                            ? std::min(*ds.spec.limit, ds.examples.size())
                            : ds.examples.size();
  rep.n = n;
  std::vector<RunOutcome> outcomes(n);
  const std::size_t width = std::max<std::size_t>(1, options.rollout.parallelism);
  for (std::size_t start = 0; start < n; start += width) {
    const std::size_t stop = std::min(n, start + width);
    if (width == 1) {
      outcomes[start] = run_example(ds.examples[start], metric, generator,
                                    registry, options);
      continue;
    }
    std::vector<std::future<RunOutcome>> batch;
    for (std::size_t i = start; i < stop; ++i) {
      batch.push_back(std::async(std::launch::async, [&, i] {
        return run_example(ds.examples[i], metric, generator, registry, options);
      }));
    }
    for (std::size_t i = start; i < stop; ++i) outcomes[i] = batch[i - start].get();
  }

  double sum = 0.0;
  std::size_t calls = 0;
  std::size_t cached = 0;
  for (auto& o : outcomes) {
    sum += o.result.score;
    ++rep.tool_call_histogram[o.result.tool_calls];
    calls += o.result.tool_calls;
    cached += o.cached;
    if (o.result.error) ++rep.failures;
    for (const auto& k : o.interventions) ++rep.intervention_counts[k];
    if (o.result.tool_calls > 0) {
      ++rep.tool_runs;
      if (o.result.score >= options.correct_threshold) ++rep.tool_correct;
    }
    if (options.keep_examples) rep.examples.push_back(std::move(o.result));
  }
  rep.score = n == 0 ? 0.0 : sum / static_cast<double>(n);
  rep.cache_hit_rate = calls == 0 ? 0.0 : static_cast<double>(cached) / calls;
  return rep;
}

}  // namespace

EvalReport evaluate(const std::vector<Dataset>& datasets, Generator& generator,
                    ToolRegistry& registry, const EvalOptions& options) {
  if (datasets.empty()) throw Error(Errc::EmptyInput, "no datasets to evaluate");
  options.rollout.validate();
  EvalReport report;
  std::vector<DatasetTally> tallies;
  double sum = 0.0;
  for (const auto& ds : datasets) {
    report.datasets.push_back(evaluate_one(ds, generator, registry, options));
    const auto& d = report.datasets.back();
    sum += d.score;
    if (d.tool_runs > 0) tallies.push_back({d.tool_correct, d.tool_runs});
  }
  report.mean_score = sum / static_cast<double>(datasets.size());
  if (!tallies.empty()) report.tool_efficiency = tool_efficiency(tallies);
  return report;
}

EvalReport evaluate(const std::vector<DatasetSpec>& specs, Generator& generator,
                    ToolRegistry& registry, const EvalOptions& options) {
  if (specs.empty()) throw Error(Errc::EmptyInput, "no datasets to evaluate");
  std::vector<Dataset> datasets;
  for (const auto& s : specs) datasets.push_back({s, load_dataset(s)});
  return evaluate(datasets, generator, registry, options);
}

json report_to_json(const EvalReport& report) {
  json out;
  out["datasets"] = json::array();
  for (const auto& d : report.datasets) {
    json j;
    j["name"] = d.name;
    j["metric"] = d.metric;
    j["n"] = d.n;
    j["score"] = d.score;
    j["tool_runs"] = d.tool_runs;
    j["tool_correct"] = d.tool_correct;
    j["cache_hit_rate"] = d.cache_hit_rate;
    j["failures"] = d.failures;
    json hist = json::object();
    for (const auto& [k, v] : d.tool_call_histogram) hist[std::to_string(k)] = v;
    j["tool_call_histogram"] = hist;
    j["intervention_counts"] = d.intervention_counts;
    json ex = json::array();
    for (const auto& e : d.examples) {
      json r{{"id", e.id},
             {"prediction", e.prediction},
             {"score", e.score},
             {"tool_calls", e.tool_calls},
             {"stop_reason", e.stop_reason}};
      if (e.error) r["error"] = *e.error;
      ex.push_back(std::move(r));
    }
    j["examples"] = std::move(ex);
    out["datasets"].push_back(std::move(j));
  }
  out["mean_score"] = report.mean_score;
  out["tool_efficiency"] =
      report.tool_efficiency ? json(*report.tool_efficiency) : json(nullptr);
  return out;
}

std::string report_to_table(const EvalReport& report) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-20s %-6s %6s %8s %6s %6s %8s %5s\n",
                "dataset", "metric", "n", "score", "S_i", "T_i^c", "cache", "fail");
  out += buf;
  for (const auto& d : report.datasets) {
    std::snprintf(buf, sizeof buf, "%-20s %-6s %6zu %8.4f %6zu %6zu %8.4f %5zu\n",
                  d.name.substr(0, 20).c_str(), d.metric.c_str(), d.n, d.score,
                  d.tool_runs, d.tool_correct, d.cache_hit_rate, d.failures);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "mean score: %.4f\n", report.mean_score);
  out += buf;
  if (report.tool_efficiency) {
    std::snprintf(buf, sizeof buf, "T_E: %.4f\n", *report.tool_efficiency);
  } else {
    std::snprintf(buf, sizeof buf, "T_E: n/a\n");
  }
  out += buf;
  return out;
}

}  // namespace toolstar
