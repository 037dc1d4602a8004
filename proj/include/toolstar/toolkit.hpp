#pragma once
// Tool contract, request normalization, the memory-based request cache and
// the registry that routes requests to tools.

#include <atomic>
#include <cstdint>
#include <functional>
#include <future>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>

#include "toolstar/protocol.hpp"

namespace toolstar {

enum class SearchRouting { Local, Web };

const char* to_string(SearchRouting routing);

// Search payloads are trimmed with whitespace runs folded to one space.
// Python payloads keep their line structure (indentation is significant):
// line endings become \n, trailing spaces per line and surrounding blank
// lines are dropped.
std::string normalize_payload(TagKind kind, std::string_view raw);

struct ToolRequest {
  TagKind kind = TagKind::Search;
  std::string payload;
  std::optional<SearchRouting> routing;

  static ToolRequest make(TagKind kind, std::string_view raw,
                          std::optional<SearchRouting> routing = std::nullopt);

  std::string cache_key() const;
  bool operator==(const ToolRequest&) const = default;
};

struct ToolFeedback {
  std::string text;
  bool is_error = false;
  bool cached = false;
  std::uint64_t latency_ms = 0;
};

class Tool {
 public:
  virtual ~Tool() = default;
  // May throw; the registry converts exceptions into error feedback.
  virtual ToolFeedback execute(const ToolRequest& request) = 0;
};

// LRU cache with single-flight misses: concurrent requests for one key run
// the underlying computation once.
class ToolCache {
 public:
  struct Computed {
    ToolFeedback feedback;
    bool cacheable = true;
  };

  explicit ToolCache(std::size_t capacity = 4096);

  // Returns the feedback and whether it was served from memory.
  std::pair<ToolFeedback, bool> get_or_compute(
      const std::string& key, const std::function<Computed()>& compute);

  std::size_t size() const;
  std::size_t capacity() const { return capacity_; }
  std::uint64_t hits() const { return hits_.load(); }
  std::uint64_t misses() const { return misses_.load(); }
  void clear();

 private:
  using Future = std::shared_future<Computed>;
  struct Entry {
    std::string key;
    Future value;
  };

  std::size_t capacity_;
  mutable std::mutex mu_;
  std::list<Entry> lru_;
  std::unordered_map<std::string, std::list<Entry>::iterator> index_;
  std::atomic<std::uint64_t> hits_{0};
  std::atomic<std::uint64_t> misses_{0};
};

struct RegistryOptions {
  std::size_t max_feedback_chars = 4000;
  std::size_t cache_capacity = 4096;
  // Upper bound on concurrently executing Python requests.
  std::size_t max_concurrent_code = 4;
};

class ToolRegistry {
 public:
  explicit ToolRegistry(RegistryOptions options = {});
  ~ToolRegistry();

  void register_tool(TagKind kind, std::shared_ptr<Tool> tool);
  bool has_tool(TagKind kind) const;

  // Serves `request` through the registry's run-scoped cache.
  ToolFeedback invoke(const ToolRequest& request);
  // Serves `request` through a caller-owned cache (rollout scope).
  ToolFeedback invoke(const ToolRequest& request, ToolCache& cache);

  ToolCache& cache() { return cache_; }
  const RegistryOptions& options() const { return options_; }
  // Number of underlying tool executions (cache misses that ran a tool).
  std::uint64_t executions() const { return executions_.load(); }

 private:
  ToolFeedback execute_uncached(const ToolRequest& request, bool& cacheable);

  RegistryOptions options_;
  std::map<TagKind, std::shared_ptr<Tool>> tools_;
  ToolCache cache_;
  std::atomic<std::uint64_t> executions_{0};
  struct CodeSlots;
  std::unique_ptr<CodeSlots> code_slots_;
};

ToolFeedback invoke(ToolRegistry& registry, const ToolRequest& request);

// Cuts `s` to at most `max_chars` bytes without splitting a UTF-8 sequence.
std::string truncate_utf8(std::string_view s, std::size_t max_chars);

}  // namespace toolstar
