#pragma once
// Search engine tool: BM25 local index, web search client, browser agent.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "toolstar/generator.hpp"
#include "toolstar/http.hpp"
#include "toolstar/toolkit.hpp"

namespace toolstar {

struct Document {
  std::string id;
  std::string title;
  std::string text;
  std::optional<std::string> url;
};

struct SearchHit {
  std::string doc_id;
  std::string title;
  std::string snippet;
  double score = 0.0;
  std::optional<std::string> url;
};

// Sorts by score descending, doc_id ascending.
void sort_hits(std::vector<SearchHit>& hits);

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
  std::size_t snippet_chars = 400;
};

class Bm25Index {
 public:
  Bm25Index() = default;
  explicit Bm25Index(std::vector<Document> docs, Bm25Params params = {});

  // Throws Error{EmptyIndex} when nothing has been indexed.
  std::vector<SearchHit> search(const std::string& query, std::size_t k) const;

  std::size_t size() const { return docs_.size(); }
  const Bm25Params& params() const { return params_; }

  void save(const std::filesystem::path& file) const;
  static Bm25Index load(const std::filesystem::path& file);

  static std::vector<std::string> tokenize(const std::string& text);

 private:
  struct Posting {
    std::uint32_t doc;
    std::uint32_t tf;
  };
  void build_postings();

  Bm25Params params_;
  std::vector<Document> docs_;
  std::vector<std::uint32_t> doc_len_;
  double avg_len_ = 0.0;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
};

std::vector<SearchHit> local_search(const Bm25Index& index,
                                    const std::string& query, std::size_t k);

// Reads a directory of *.jsonl files (or one file) of {"id","title","text"}.
std::vector<Document> load_corpus(const std::filesystem::path& path);

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{200};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{5000};
  std::chrono::milliseconds timeout{10000};
};

// GET {url}?q=<query>&count=<k> with the key in `Ocp-Apim-Subscription-Key`
// and `Authorization: Bearer`. Accepts a ranked JSON array of
// {"id"?,"title"|"name","snippet","url"} or a Bing-shaped
// {"webPages":{"value":[...]}} body.
class WebSearchClient {
 public:
  WebSearchClient(std::string url, std::string api_key,
                  std::shared_ptr<HttpClient> http, RetryPolicy policy = {});

  // Throws Error{Network} after retries, Error{QuotaExceeded} on 403 or on
  // 429 once retries are exhausted.
  std::vector<SearchHit> search(const std::string& query, std::size_t k);

  int last_retry_count() const { return last_retries_; }

 private:
  std::string url_;
  std::string api_key_;
  std::shared_ptr<HttpClient> http_;
  RetryPolicy policy_;
  int last_retries_ = 0;
};

std::vector<SearchHit> web_search(WebSearchClient& client,
                                  const std::string& query, std::size_t k);

class PageFetcher {
 public:
  virtual ~PageFetcher() = default;
  // Throws Error{Fetch}.
  virtual std::string fetch(const std::string& url) = 0;
};

class HttpPageFetcher final : public PageFetcher {
 public:
  explicit HttpPageFetcher(std::shared_ptr<HttpClient> http,
                           std::chrono::milliseconds timeout =
                               std::chrono::milliseconds(10000));
  std::string fetch(const std::string& url) override;

 private:
  std::shared_ptr<HttpClient> http_;
  std::chrono::milliseconds timeout_;
};

// Rule-based page cleaning: drops script/style/noscript blocks, comments and
// tags, decodes common entities and collapses whitespace.
std::string clean_html(std::string_view html);

struct BrowseOptions {
  std::size_t truncate_chars = 4000;
  std::string summary_template =
      "Extract the information from the web page below that is relevant to "
      "the query, and summarize it concisely.\n\nQuery: {query}\n\nWeb page:\n"
      "{page}\n\nRelevant information:";
};

// Summarizer may be null; summarizer failures fall back to cleaned text.
std::string browse(PageFetcher& fetcher, const std::string& url,
                   const std::string& query, Generator* summarizer,
                   const BrowseOptions& options = {});

struct SearchToolOptions {
  std::size_t top_k = 3;
  SearchRouting default_routing = SearchRouting::Local;
  // Number of web hits visited by the browser agent; 0 disables browsing.
  std::size_t browse_top_n = 0;
  BrowseOptions browse;
};

// Renders hits as "\"title\"\nsnippet" blocks separated by newlines.
std::string format_hits(const std::vector<SearchHit>& hits);

class SearchTool final : public Tool {
 public:
  SearchTool(std::shared_ptr<const Bm25Index> local,
             std::shared_ptr<WebSearchClient> web,
             SearchToolOptions options = {},
             std::shared_ptr<PageFetcher> fetcher = nullptr,
             std::shared_ptr<Generator> summarizer = nullptr);

  ToolFeedback execute(const ToolRequest& request) override;

 private:
  std::shared_ptr<const Bm25Index> local_;
  std::shared_ptr<WebSearchClient> web_;
  SearchToolOptions options_;
  std::shared_ptr<PageFetcher> fetcher_;
  std::shared_ptr<Generator> summarizer_;
};

// Canned search responses keyed by normalized query; unknown queries return
// empty feedback. Counts executions.
class ScriptedSearchTool final : public Tool {
 public:
  explicit ScriptedSearchTool(
      std::unordered_map<std::string, std::string> answers = {});
  ToolFeedback execute(const ToolRequest& request) override;
  void set(const std::string& query, std::string answer);
  std::uint64_t executions() const { return executions_.load(); }

 private:
  std::mutex mu_;
  std::unordered_map<std::string, std::string> answers_;
  std::atomic<std::uint64_t> executions_{0};
};

}  // namespace toolstar
