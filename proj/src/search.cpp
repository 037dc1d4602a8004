#include "toolstar/search.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <regex>
#include <thread>

#include "toolstar/errors.hpp"
#include "toolstar/text.hpp"

namespace toolstar {

using json = nlohmann::json;

void sort_hits(std::vector<SearchHit>& hits) {
  std::stable_sort(hits.begin(), hits.end(),
                   [](const SearchHit& a, const SearchHit& b) {
                     if (a.score != b.score) return a.score > b.score;
                     return a.doc_id < b.doc_id;
                   });
}

std::vector<std::string> Bm25Index::tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Bm25Index::Bm25Index(std::vector<Document> docs, Bm25Params params)
    : params_(params), docs_(std::move(docs)) {
  build_postings();
}

void Bm25Index::build_postings() {
  postings_.clear();
  doc_len_.assign(docs_.size(), 0);
  double total = 0.0;
  for (std::uint32_t d = 0; d < docs_.size(); ++d) {
    std::unordered_map<std::string, std::uint32_t> tf;
    const auto toks = tokenize(docs_[d].title + " " + docs_[d].text);
    for (const auto& t : toks) ++tf[t];
    doc_len_[d] = static_cast<std::uint32_t>(toks.size());
    total += static_cast<double>(toks.size());
    for (auto& [term, n] : tf) postings_[term].push_back({d, n});
  }
  avg_len_ = docs_.empty() ? 0.0 : total / static_cast<double>(docs_.size());
}

std::vector<SearchHit> Bm25Index::search(const std::string& query,
                                         std::size_t k) const {
  if (docs_.empty()) throw Error(Errc::EmptyIndex, "search index is empty");
  auto terms = tokenize(query);
  std::sort(terms.begin(), terms.end());
  terms.erase(std::unique(terms.begin(), terms.end()), terms.end());

  const double n_docs = static_cast<double>(docs_.size());
  std::vector<double> scores(docs_.size(), 0.0);
  std::vector<bool> touched(docs_.size(), false);
  for (const auto& term : terms) {
    auto it = postings_.find(term);
    if (it == postings_.end()) continue;
    const double df = static_cast<double>(it->second.size());
    const double idf = std::log(1.0 + (n_docs - df + 0.5) / (df + 0.5));
    for (const auto& p : it->second) {
      const double tf = p.tf;
      const double norm =
          params_.k1 * (1.0 - params_.b +
                        params_.b * static_cast<double>(doc_len_[p.doc]) /
                            (avg_len_ > 0 ? avg_len_ : 1.0));
      scores[p.doc] += idf * tf * (params_.k1 + 1.0) / (tf + norm);
      touched[p.doc] = true;
    }
  }

  std::vector<SearchHit> hits;
  for (std::size_t d = 0; d < docs_.size(); ++d) {
    if (!touched[d]) continue;
    const auto& doc = docs_[d];
    hits.push_back({doc.id, doc.title,
                    truncate_utf8(doc.text, params_.snippet_chars), scores[d],
                    doc.url});
  }
  sort_hits(hits);
  if (hits.size() > k) hits.resize(k);
  return hits;
}

void Bm25Index::save(const std::filesystem::path& file) const {
  json j;
  j["params"] = {{"k1", params_.k1},
                 {"b", params_.b},
                 {"snippet_chars", params_.snippet_chars}};
  j["docs"] = json::array();
  for (const auto& d : docs_) {
    json doc = {{"id", d.id}, {"title", d.title}, {"text", d.text}};
    if (d.url) doc["url"] = *d.url;
    j["docs"].push_back(std::move(doc));
  }
  j["doc_len"] = doc_len_;
  json post = json::object();
  for (const auto& [term, list] : postings_) {
    json arr = json::array();
    for (const auto& p : list) arr.push_back({p.doc, p.tf});
    post[term] = std::move(arr);
  }
  j["postings"] = std::move(post);
  std::ofstream out(file);
  if (!out) throw Error(Errc::Io, "cannot write index " + file.string());
  out << j.dump();
}

Bm25Index Bm25Index::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(Errc::Io, "cannot read index " + file.string());
  const json j = json::parse(in);
  Bm25Index idx;
  idx.params_.k1 = j.at("params").at("k1").get<double>();
  idx.params_.b = j.at("params").at("b").get<double>();
  idx.params_.snippet_chars =
      j.at("params").at("snippet_chars").get<std::size_t>();
  for (const auto& d : j.at("docs")) {
    Document doc{d.at("id").get<std::string>(), d.value("title", ""),
                 d.value("text", ""), std::nullopt};
    if (d.contains("url")) doc.url = d["url"].get<std::string>();
    idx.docs_.push_back(std::move(doc));
  }
  idx.doc_len_ = j.at("doc_len").get<std::vector<std::uint32_t>>();
  double total = 0.0;
  for (auto n : idx.doc_len_) total += n;
  idx.avg_len_ = idx.docs_.empty() ? 0.0 : total / idx.docs_.size();
  for (const auto& [term, arr] : j.at("postings").items()) {
    auto& list = idx.postings_[term];
    for (const auto& p : arr) {
      list.push_back({p.at(0).get<std::uint32_t>(), p.at(1).get<std::uint32_t>()});
    }
  }
  return idx;
}

std::vector<SearchHit> local_search(const Bm25Index& index,
                                    const std::string& query, std::size_t k) {
  return index.search(query, k);
}

namespace {

void read_corpus_file(const std::filesystem::path& file,
                      std::vector<Document>& out) {
  std::ifstream in(file);
  if (!in) throw Error(Errc::Io, "cannot read corpus " + file.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::is_blank(line)) continue;
    try {
      const json j = json::parse(line);
      Document d{j.at("id").is_string() ? j["id"].get<std::string>()
                                        : j["id"].dump(),
                 j.value("title", ""), j.at("text").get<std::string>(),
                 std::nullopt};
      if (j.contains("url")) d.url = j["url"].get<std::string>();
      out.push_back(std::move(d));
    } catch (const json::exception& e) {
      throw SchemaError(lineno, file.string() + ": " + e.what());
    }
  }
}

}  // namespace

std::vector<Document> load_corpus(const std::filesystem::path& path) {
  std::vector<Document> docs;
  if (std::filesystem::is_directory(path)) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(path)) {
      if (entry.path().extension() == ".jsonl") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) read_corpus_file(f, docs);
  } else {
    read_corpus_file(path, docs);
  }
  return docs;
}

WebSearchClient::WebSearchClient(std::string url, std::string api_key,
                                 std::shared_ptr<HttpClient> http,
                                 RetryPolicy policy)
    : url_(std::move(url)),
      api_key_(std::move(api_key)),
      http_(std::move(http)),
      policy_(policy) {}

namespace {

std::vector<SearchHit> parse_web_hits(const std::string& body) {
  const json j = json::parse(body);
  const json* list = &j;
  if (j.is_object()) {
    if (j.contains("webPages")) {
      list = &j["webPages"].at("value");
    } else if (j.contains("results")) {
      list = &j["results"];
    }
  }
  std::vector<SearchHit> hits;
  double rank = static_cast<double>(list->size());
  std::size_t i = 0;
  for (const auto& item : *list) {
    SearchHit h;
    h.doc_id = item.contains("id") ? (item["id"].is_string()
                                          ? item["id"].get<std::string>()
                                          : item["id"].dump())
                                   : std::to_string(i);
    h.title = item.contains("title") ? item["title"].get<std::string>()
                                     : item.value("name", "");
    h.snippet = item.value("snippet", "");
    if (item.contains("url")) h.url = item["url"].get<std::string>();
    // Endpoint order is the ranking; scores encode it.
    h.score = item.contains("score") ? item["score"].get<double>() : rank;
    rank -= 1.0;
    ++i;
    hits.push_back(std::move(h));
  }
  return hits;
}

}  // namespace

std::vector<SearchHit> WebSearchClient::search(const std::string& query,
                                               std::size_t k) {
  const std::string sep = url_.find('?') == std::string::npos ? "?" : "&";
  const std::string url = url_ + sep + "q=" + url_encode(query) +
                          "&count=" + std::to_string(k);
  HttpHeaders headers;
  if (!api_key_.empty()) {
    headers.emplace("Ocp-Apim-Subscription-Key", api_key_);
    headers.emplace("Authorization", "Bearer " + api_key_);
  }
  last_retries_ = 0;
  auto backoff = policy_.initial_backoff;
  std::string last_error;
  bool last_was_quota = false;
  for (int attempt = 0;; ++attempt) {
    std::optional<HttpResponse> res;
    try {
      res = http_->get(url, headers, policy_.timeout);
    } catch (const Error& e) {
      if (e.code() != Errc::Network) throw;
      last_error = e.what();
      last_was_quota = false;
    }
    if (res) {
      if (res->status == 200) {
        try {
          auto hits = parse_web_hits(res->body);
          if (hits.size() > k) hits.resize(k);
          return hits;
        } catch (const json::exception& e) {
          throw Error(Errc::Network,
                      std::string("malformed search response: ") + e.what());
        }
      }
      if (res->status == 403) {
        throw Error(Errc::QuotaExceeded, "search quota exceeded (403)");
      }
      last_error =
          "search endpoint returned status " + std::to_string(res->status);
      if (res->status != 429 && res->status < 500) {
        throw Error(Errc::Network, last_error);
      }
      last_was_quota = res->status == 429;
    }
    if (attempt >= policy_.max_retries) break;
    ++last_retries_;
    std::this_thread::sleep_for(backoff);
    backoff = std::min(
        policy_.max_backoff,
        std::chrono::milliseconds(static_cast<std::int64_t>(
            static_cast<double>(backoff.count()) * policy_.multiplier)));
  }
  if (last_was_quota) throw Error(Errc::QuotaExceeded, last_error);
  throw Error(Errc::Network, "web search failed after " +
                                 std::to_string(last_retries_) +
                                 " retries: " + last_error);
}

std::vector<SearchHit> web_search(WebSearchClient& client,
                                  const std::string& query, std::size_t k) {
  return client.search(query, k);
}

HttpPageFetcher::HttpPageFetcher(std::shared_ptr<HttpClient> http,
                                 std::chrono::milliseconds timeout)
    : http_(std::move(http)), timeout_(timeout) {}

std::string HttpPageFetcher::fetch(const std::string& url) {
  try {
    const auto res = http_->get(url, {}, timeout_);
    if (res.status < 200 || res.status >= 300) {
      throw Error(Errc::Fetch, "fetch " + url + " returned status " +
                                   std::to_string(res.status));
    }
    return res.body;
  } catch (const Error& e) {
    if (e.code() == Errc::Fetch) throw;
    throw Error(Errc::Fetch, e.what());
  }
}

std::string clean_html(std::string_view html) {
  static const std::regex blocks(
      R"(<(script|style|noscript|head)\b[^>]*>[\s\S]*?</\1\s*>)",
      std::regex::icase);
  static const std::regex comments(R"(<!--[\s\S]*?-->)");
  static const std::regex breaks(R"(<(br|/p|/div|/li|/h[1-6]|/tr)\b[^>]*>)",
                                 std::regex::icase);
  static const std::regex tags(R"(<[^>]*>)");
  std::string s(html);
  s = std::regex_replace(s, comments, " ");
  s = std::regex_replace(s, blocks, " ");
  s = std::regex_replace(s, breaks, "\n");
  s = std::regex_replace(s, tags, " ");
  static const std::pair<const char*, const char*> entities[] = {
      {"&nbsp;", " "}, {"&lt;", "<"},   {"&gt;", ">"},  {"&quot;", "\""},
      {"&#39;", "'"},  {"&apos;", "'"}, {"&amp;", "&"},
  };
  for (const auto& [from, to] : entities) {
    std::string out;
    const std::string_view f = from;
    std::size_t pos = 0;
    for (std::size_t hit = s.find(f); hit != std::string::npos;
         hit = s.find(f, pos)) {
      out.append(s, pos, hit - pos);
      out += to;
      pos = hit + f.size();
    }
    out.append(s, pos, std::string::npos);
    s = std::move(out);
  }
  // Collapse spaces within lines, keep paragraph breaks.
  std::string out;
  for (const auto& line : text::split_lines(s)) {
    auto c = text::collapse_whitespace(line);
    if (c.empty()) continue;
    if (!out.empty()) out.push_back('\n');
    out += c;
  }
  return out;
}

std::string browse(PageFetcher& fetcher, const std::string& url,
                   const std::string& query, Generator* summarizer,
                   const BrowseOptions& options) {
  const std::string cleaned = clean_html(fetcher.fetch(url));
  const std::string fallback = truncate_utf8(cleaned, options.truncate_chars);
  if (summarizer == nullptr) return fallback;
  try {
    const std::string prompt = text::fill_template(
        options.summary_template, {{"query", query}, {"page", fallback}});
    std::string summary = text::trim(complete_prompt(*summarizer, prompt));
    if (summary.empty()) return fallback;
    return summary;
  } catch (const std::exception&) {
    return fallback;
  }
}

std::string format_hits(const std::vector<SearchHit>& hits) {
  std::string out;
  for (const auto& h : hits) {
    if (!out.empty()) out.push_back('\n');
    out += "\"" + h.title + "\"\n" + h.snippet;
  }
  return out;
}

SearchTool::SearchTool(std::shared_ptr<const Bm25Index> local,
                       std::shared_ptr<WebSearchClient> web,
                       SearchToolOptions options,
                       std::shared_ptr<PageFetcher> fetcher,
                       std::shared_ptr<Generator> summarizer)
    : local_(std::move(local)),
      web_(std::move(web)),
      options_(std::move(options)),
      fetcher_(std::move(fetcher)),
      summarizer_(std::move(summarizer)) {}

ToolFeedback SearchTool::execute(const ToolRequest& request) {
  SearchRouting routing = request.routing.value_or(options_.default_routing);
  if (routing == SearchRouting::Web && !web_) routing = SearchRouting::Local;
  if (routing == SearchRouting::Local && !local_) {
    if (!web_) throw Error(Errc::EmptyIndex, "no search backend configured");
    routing = SearchRouting::Web;
  }

  std::vector<SearchHit> hits;
  if (routing == SearchRouting::Local) {
    hits = local_search(*local_, request.payload, options_.top_k);
  } else {
    hits = web_search(*web_, request.payload, options_.top_k);
    if (fetcher_ && options_.browse_top_n > 0) {
      std::size_t visited = 0;
      for (auto& h : hits) {
        if (visited >= options_.browse_top_n || !h.url) continue;
        try {
          h.snippet = browse(*fetcher_, *h.url, request.payload,
                             summarizer_.get(), options_.browse);
        } catch (const Error&) {
          // Keep the snippet when the page cannot be fetched.
        }
        ++visited;
      }
    }
  }
  ToolFeedback fb;
  fb.text = format_hits(hits);
  return fb;
}

ScriptedSearchTool::ScriptedSearchTool(
    std::unordered_map<std::string, std::string> answers) {
  for (auto& [q, a] : answers) {
    answers_[normalize_payload(TagKind::Search, q)] = std::move(a);
  }
}

void ScriptedSearchTool::set(const std::string& query, std::string answer) {
  std::lock_guard guard(mu_);
  answers_[normalize_payload(TagKind::Search, query)] = std::move(answer);
}

ToolFeedback ScriptedSearchTool::execute(const ToolRequest& request) {
  executions_.fetch_add(1);
  std::lock_guard guard(mu_);
  ToolFeedback fb;
  if (auto it = answers_.find(request.payload); it != answers_.end()) {
    fb.text = it->second;
  }
  return fb;
}

}  // namespace toolstar
