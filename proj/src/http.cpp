#include "toolstar/http.hpp"

#include <httplib.h>

#include <cctype>
#include <cstdio>

#include "toolstar/errors.hpp"

namespace toolstar {

UrlParts split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(Errc::Network, "malformed url: " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

std::string url_encode(const std::string& s) {
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out.push_back(static_cast<char>(c));
    } else {
      char buf[4];
      std::snprintf(buf, sizeof buf, "%%%02X", c);
      out += buf;
    }
  }
  return out;
}

namespace {

class HttplibClient final : public HttpClient {
 public:
  HttpResponse get(const std::string& url, const HttpHeaders& headers,
                   std::chrono::milliseconds timeout) override {
    const auto parts = split_url(url);
    httplib::Client cli(parts.origin);
    configure(cli, timeout);
    httplib::Headers h(headers.begin(), headers.end());
    auto res = cli.Get(parts.path, h);
    return finish(url, res);
  }

  HttpResponse post(const std::string& url, const std::string& body,
                    const std::string& content_type,
                    const HttpHeaders& headers,
                    std::chrono::milliseconds timeout) override {
    const auto parts = split_url(url);
    httplib::Client cli(parts.origin);
    configure(cli, timeout);
    httplib::Headers h(headers.begin(), headers.end());
    auto res = cli.Post(parts.path, h, body, content_type);
    return finish(url, res);
  }

 private:
  static void configure(httplib::Client& cli,
                        std::chrono::milliseconds timeout) {
    const auto sec = timeout.count() / 1000;
    const auto usec = (timeout.count() % 1000) * 1000;
    cli.set_connection_timeout(sec, usec);
    cli.set_read_timeout(sec, usec);
    cli.set_write_timeout(sec, usec);
    cli.set_follow_location(true);
  }

  static HttpResponse finish(const std::string& url, httplib::Result& res) {
    if (!res) {
      throw Error(Errc::Network, "request to " + url + " failed: " +
                                     httplib::to_string(res.error()));
    }
    return {res->status, res->body};
  }
};

}  // namespace

std::shared_ptr<HttpClient> make_http_client() {
  return std::make_shared<HttplibClient>();
}

}  // namespace toolstar
