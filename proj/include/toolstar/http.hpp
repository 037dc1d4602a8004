#pragma once
// Minimal blocking HTTP client surface used by web search, the page fetcher
// and the chat-completion generator. Backed by cpp-httplib.

#include <chrono>
#include <map>
#include <memory>
#include <string>

namespace toolstar {

struct HttpResponse {
  int status = 0;
  std::string body;
};

using HttpHeaders = std::multimap<std::string, std::string>;

class HttpClient {
 public:
  virtual ~HttpClient() = default;
  // Both throw Error{Network} when no response is received.
  virtual HttpResponse get(const std::string& url, const HttpHeaders& headers,
                           std::chrono::milliseconds timeout) = 0;
  virtual HttpResponse post(const std::string& url, const std::string& body,
                            const std::string& content_type,
                            const HttpHeaders& headers,
                            std::chrono::milliseconds timeout) = 0;
};

std::shared_ptr<HttpClient> make_http_client();

// Splits "scheme://host[:port]/path?query" into origin and path+query.
struct UrlParts {
  std::string origin;
  std::string path;
};
UrlParts split_url(const std::string& url);

std::string url_encode(const std::string& s);

}  // namespace toolstar
