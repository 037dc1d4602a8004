#pragma once
// JSON and JSONL encodings of trajectories, rewards and dataset records.

#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "toolstar/reward.hpp"
#include "toolstar/rollout.hpp"

namespace toolstar {

using json = nlohmann::json;

// {"id","question","gold","segments":[{"tag","text","origin"}],
//  "tool_calls":[{"kind","request","feedback","is_error","cached"}],
//  "stop_reason","mask":[[s,e],...]} plus optional layout fields.
json trajectory_to_json(const Trajectory& traj);
// Accepts the record above, or a raw model output under "response".
// Throws Error{Schema}.
Trajectory trajectory_from_json(const json& j,
                                const TagSet& tags = TagSet::defaults());

json reward_to_json(const RewardBreakdown& r);

// Throws SchemaError carrying the 1-based line number.
std::vector<json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path,
                 const std::vector<json>& records);
json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const json& value);

// Whole-file helpers.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& data);

// id → gold answer from {"id","answer"} (or "gold") records.
std::vector<std::pair<std::string, std::string>> read_gold(
    const std::filesystem::path& path);

}  // namespace toolstar
