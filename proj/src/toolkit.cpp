#include "toolstar/toolkit.hpp"

#include <chrono>
#include <condition_variable>

#include "toolstar/text.hpp"

namespace toolstar {

const char* to_string(SearchRouting routing) {
  return routing == SearchRouting::Web ? "web" : "local";
}

std::string normalize_payload(TagKind kind, std::string_view raw) {
  if (kind != TagKind::Python) return text::collapse_whitespace(raw);
  std::string joined;
  for (const auto& line : text::split_lines(raw)) {
    std::string_view l = line;
    while (!l.empty() && (text::is_space(l.back()))) l.remove_suffix(1);
    joined += l;
    joined += '\n';
  }
  // Drop leading and trailing blank lines, keep indentation of the first.
  std::size_t b = 0;
  while (b < joined.size() && joined[b] == '\n') ++b;
  std::size_t e = joined.size();
  while (e > b && joined[e - 1] == '\n') --e;
  return joined.substr(b, e - b);
}

ToolRequest ToolRequest::make(TagKind kind, std::string_view raw,
                              std::optional<SearchRouting> routing) {
  return ToolRequest{kind, normalize_payload(kind, raw), routing};
}

std::string ToolRequest::cache_key() const {
  std::string key = to_string(kind);
  key += '\x1f';
  key += routing ? to_string(*routing) : "-";
  key += '\x1f';
  key += payload;
  return key;
}

ToolCache::ToolCache(std::size_t capacity)
    : capacity_(capacity == 0 ? 1 : capacity) {}

std::pair<ToolFeedback, bool> ToolCache::get_or_compute(
    const std::string& key, const std::function<Computed()>& compute) {
  std::unique_lock lock(mu_);
  if (auto it = index_.find(key); it != index_.end()) {
    lru_.splice(lru_.begin(), lru_, it->second);
    Future value = it->second->value;
    lock.unlock();
    hits_.fetch_add(1);
    ToolFeedback fb = value.get().feedback;
    fb.cached = true;
    fb.latency_ms = 0;
    return {std::move(fb), true};
  }

  std::promise<Computed> promise;
  Future value = promise.get_future().share();
  lru_.push_front(Entry{key, value});
  index_[key] = lru_.begin();
  while (lru_.size() > capacity_) {
    index_.erase(lru_.back().key);
    lru_.pop_back();
  }
  lock.unlock();
  misses_.fetch_add(1);

  Computed computed;
  try {
    computed = compute();
  } catch (...) {
    promise.set_exception(std::current_exception());
    std::lock_guard guard(mu_);
    if (auto it = index_.find(key); it != index_.end()) {
      lru_.erase(it->second);
      index_.erase(it);
    }
    throw;
  }
  promise.set_value(computed);
  if (!computed.cacheable) {
    std::lock_guard guard(mu_);
    if (auto it = index_.find(key); it != index_.end()) {
      lru_.erase(it->second);
      index_.erase(it);
    }
  }
  computed.feedback.cached = false;
  return {std::move(computed.feedback), false};
}

std::size_t ToolCache::size() const {
  std::lock_guard guard(mu_);
  return lru_.size();
}

void ToolCache::clear() {
  std::lock_guard guard(mu_);
  lru_.clear();
  index_.clear();
}

struct ToolRegistry::CodeSlots {
  std::mutex mu;
  std::condition_variable cv;
  std::size_t free;

  explicit CodeSlots(std::size_t n) : free(n == 0 ? 1 : n) {}

  void acquire() {
    std::unique_lock lock(mu);
    cv.wait(lock, [this] { return free > 0; });
    --free;
  }
  void release() {
    {
      std::lock_guard guard(mu);
      ++free;
    }
    cv.notify_one();
  }
};

ToolRegistry::ToolRegistry(RegistryOptions options)
    : options_(options),
      cache_(options.cache_capacity),
      code_slots_(std::make_unique<CodeSlots>(options.max_concurrent_code)) {}

ToolRegistry::~ToolRegistry() = default;

void ToolRegistry::register_tool(TagKind kind, std::shared_ptr<Tool> tool) {
  tools_[kind] = std::move(tool);
}

bool ToolRegistry::has_tool(TagKind kind) const {
  return tools_.count(kind) != 0;
}

ToolFeedback ToolRegistry::invoke(const ToolRequest& request) {
  return invoke(request, cache_);
}

ToolFeedback ToolRegistry::invoke(const ToolRequest& request,
                                  ToolCache& cache) {
  if (!has_tool(request.kind)) {
    throw Error(Errc::NoToolRegistered,
                std::string("no tool registered for ") +
                    to_string(request.kind));
  }
  auto [fb, hit] = cache.get_or_compute(request.cache_key(), [&] {
    ToolCache::Computed out;
    out.feedback = execute_uncached(request, out.cacheable);
    return out;
  });
  return fb;
}

ToolFeedback ToolRegistry::execute_uncached(const ToolRequest& request,
                                            bool& cacheable) {
  const auto& tool = tools_.at(request.kind);
  const auto start = std::chrono::steady_clock::now();
  ToolFeedback fb;
  const bool is_code = request.kind == TagKind::Python;
  if (is_code) code_slots_->acquire();
  try {
    fb = tool->execute(request);
  } catch (const std::exception& e) {
    // Transport-style failures are not remembered; a retry may succeed.
    fb.text = e.what();
    fb.is_error = true;
    cacheable = false;
  }
  if (is_code) code_slots_->release();
  executions_.fetch_add(1);
  if (fb.is_error && text::is_blank(fb.text)) fb.text = "tool execution failed";
  fb.text = truncate_utf8(fb.text, options_.max_feedback_chars);
  fb.cached = false;
  fb.latency_ms = static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::milliseconds>(
          std::chrono::steady_clock::now() - start)
          .count());
  return fb;
}

ToolFeedback invoke(ToolRegistry& registry, const ToolRequest& request) {
  return registry.invoke(request);
}

std::string truncate_utf8(std::string_view s, std::size_t max_chars) {
  if (s.size() <= max_chars) return std::string(s);
  std::size_t cut = max_chars;
  while (cut > 0 && (static_cast<unsigned char>(s[cut]) & 0xC0) == 0x80) --cut;
  return std::string(s.substr(0, cut));
}

}  // namespace toolstar
