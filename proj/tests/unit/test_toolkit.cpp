#include <doctest.h>

#include <httplib.h>

#include <chrono>
#include <thread>

#include "helpers.hpp"
#include "toolstar/sandbox.hpp"
#include "toolstar/search.hpp"
#include "toolstar/toolkit.hpp"

using namespace toolstar;
using namespace std::chrono_literals;

namespace {

// Local HTTP server on an ephemeral port, stopped on destruction.
class MockServer {
 public:
  MockServer() {
    port_ = server.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~MockServer() {
    server.stop();
    thread_.join();
  }
  std::string url(const std::string& path) const {
    return "http://127.0.0.1:" + std::to_string(port_) + path;
  }
  httplib::Server server;

 private:
  int port_ = 0;
  std::thread thread_;
};

RetryPolicy fast_policy() {
  RetryPolicy p;
  p.max_retries = 2;
  p.initial_backoff = 1ms;
  p.max_backoff = 5ms;
  p.timeout = 300ms;
  return p;
}

std::vector<std::string> driver_argv() {
  return {"python3", fixtures::fake("fake_driver.py").string()};
}

std::shared_ptr<Generator> first_sentence_summarizer() {
  return std::make_shared<ScriptedGenerator>(
      [](const GenerationRequest& r) -> std::optional<std::string> {
        const auto at = r.query.find("Web page:\n");
        const std::string page = r.query.substr(at + 10);
        return page.substr(0, page.find('.') + 1);
      });
}

}  // namespace

TEST_SUITE("toolkit") {

TEST_CASE("repeated request is served from memory") {
  auto search = std::make_shared<fixtures::EchoTool>();
  auto reg = fixtures::echo_registry(search);
  const auto a = reg->invoke(ToolRequest::make(TagKind::Search, "capital of France"));
  const auto b = reg->invoke(ToolRequest::make(TagKind::Search, "capital of France"));
  CHECK_FALSE(a.cached);
  CHECK(b.cached);
  CHECK(a.text == b.text);
  CHECK(search->count == 1);
  CHECK(reg->executions() == 1);
}

TEST_CASE("whitespace variants share one execution") {
  auto search = std::make_shared<fixtures::EchoTool>();
  auto reg = fixtures::echo_registry(search);
  reg->invoke(ToolRequest::make(TagKind::Search, "a  b"));
  reg->invoke(ToolRequest::make(TagKind::Search, " a b\n"));
  CHECK(search->count == 1);
  CHECK(normalize_payload(TagKind::Python, "\n  x = 1  \r\n  print(x)\n\n") ==
        "  x = 1\n  print(x)");
}

TEST_CASE("search and python keys differ") {
  auto tool = std::make_shared<fixtures::EchoTool>();
  auto reg = fixtures::echo_registry(tool, tool);
  reg->invoke(ToolRequest::make(TagKind::Search, "x"));
  reg->invoke(ToolRequest::make(TagKind::Python, "x"));
  CHECK(tool->count == 2);
}

TEST_CASE("unregistered kind") {
  ToolRegistry reg;
  try {
    reg.invoke(ToolRequest::make(TagKind::Python, "print(1)"));
    FAIL("no throw");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NoToolRegistered);
  }
}

TEST_CASE("throwing tool becomes uncached error feedback") {
  struct Flaky : Tool {
    int n = 0;
    ToolFeedback execute(const ToolRequest&) override {
      if (n++ == 0) throw Error(Errc::Network, "down");
      return {"up", false, false, 0};
    }
  };
  auto flaky = std::make_shared<Flaky>();
  ToolRegistry reg;
  reg.register_tool(TagKind::Search, flaky);
  const auto a = reg.invoke(ToolRequest::make(TagKind::Search, "q"));
  CHECK(a.is_error);
  CHECK(a.text == "down");
  const auto b = reg.invoke(ToolRequest::make(TagKind::Search, "q"));
  CHECK_FALSE(b.is_error);
  CHECK(b.text == "up");
}

TEST_CASE("cache single flight and eviction") {
  ToolCache cache(2);
  std::atomic<int> runs{0};
  auto slow = [&] {
    ++runs;
    std::this_thread::sleep_for(20ms);
    return ToolCache::Computed{{"v", false, false, 0}, true};
  };
  std::vector<std::thread> ts;
  for (int i = 0; i < 8; ++i) ts.emplace_back([&] { cache.get_or_compute("k", slow); });
  for (auto& t : ts) t.join();
  CHECK(runs == 1);
  CHECK(cache.hits() == 7);
  auto quick = [] { return ToolCache::Computed{{"w", false, false, 0}, true}; };
  cache.get_or_compute("a", quick);
  cache.get_or_compute("b", quick);
  CHECK(cache.size() == 2);
  CHECK_FALSE(cache.get_or_compute("k", quick).second);
}

TEST_CASE("feedback is truncated to the configured size") {
  RegistryOptions opts;
  opts.max_feedback_chars = 10;
  ToolRegistry reg(opts);
  reg.register_tool(TagKind::Search, std::make_shared<fixtures::EchoTool>("0123456789abcdef"));
  CHECK(reg.invoke(ToolRequest::make(TagKind::Search, "q")).text == "0123456789");
  CHECK(truncate_utf8("h\xc3\xa9llo", 2) == "h");
}

TEST_CASE("bm25 containment ranking") {
  Bm25Index index({{"A", "Apples", "apples grow on trees in orchards", {}},
                   {"B", "Greenland", "the greenland shark lives very long", {}},
                   {"C", "Rivers", "rivers flow to the sea", {}}});
  auto hits = local_search(index, "greenland shark", 3);
  REQUIRE_FALSE(hits.empty());
  CHECK(hits.front().doc_id == "B");
  CHECK(hits.size() == 1);
  CHECK(local_search(index, "zebra quantum", 3).empty());
  hits = local_search(index, "the apples rivers greenland", 10);
  CHECK(hits.size() == 3);
  for (std::size_t i = 1; i < hits.size(); ++i) {
    CHECK(hits[i - 1].score >= hits[i].score);
  }
  CHECK_THROWS_AS(local_search(Bm25Index{}, "x", 1), Error);
}

TEST_CASE("bm25 save and load") {
  const auto dir = fixtures::scratch_dir("bm25");
  Bm25Index index(load_corpus(fixtures::data_dir() / "toy" / "corpus.jsonl"));
  index.save(dir / "index.json");
  const Bm25Index back = Bm25Index::load(dir / "index.json");
  const auto a = local_search(index, "capital of france", 3);
  const auto b = local_search(back, "capital of france", 3);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].doc_id == b[i].doc_id);
    CHECK(a[i].score == doctest::Approx(b[i].score));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("web search passes ranked results through") {
  MockServer mock;
  std::string seen_key;
  mock.server.Get("/search", [&](const httplib::Request& req, httplib::Response& res) {
    seen_key = req.get_header_value("Ocp-Apim-Subscription-Key");
    CHECK(req.get_param_value("q") == "greenland population");
    res.set_content(
        R"([{"title":"First","snippet":"one","url":"http://a"},{"name":"Second","snippet":"two"}])",
        "application/json");
  });
  WebSearchClient client(mock.url("/search"), "k123", make_http_client(), fast_policy());
  const auto hits = web_search(client, "greenland population", 5);
  REQUIRE(hits.size() == 2);
  CHECK(hits[0].title == "First");
  CHECK(hits[1].title == "Second");
  CHECK(hits[0].url == "http://a");
  CHECK(seen_key == "k123");
  CHECK(client.last_retry_count() == 0);
}

TEST_CASE("web search retries after 429") {
  MockServer mock;
  std::atomic<int> calls{0};
  mock.server.Get("/search", [&](const httplib::Request&, httplib::Response& res) {
    if (calls++ == 0) {
      res.status = 429;
      return;
    }
    res.set_content(R"({"webPages":{"value":[{"name":"T","snippet":"s","url":"u"}]}})",
                    "application/json");
  });
  WebSearchClient client(mock.url("/search"), "", make_http_client(), fast_policy());
  const auto hits = client.search("q", 3);
  CHECK(hits.size() == 1);
  CHECK(client.last_retry_count() == 1);
  CHECK(calls == 2);
}

TEST_CASE("web search times out into a network error") {
  MockServer mock;
  std::atomic<int> calls{0};
  mock.server.Get("/search", [&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    std::this_thread::sleep_for(600ms);
    res.set_content("[]", "application/json");
  });
  RetryPolicy p = fast_policy();
  p.timeout = 100ms;
  p.max_retries = 1;
  WebSearchClient client(mock.url("/search"), "", make_http_client(), p);
  try {
    client.search("q", 3);
    FAIL("no throw");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::Network);
  }
  CHECK(client.last_retry_count() == 1);
}

TEST_CASE("web search quota") {
  MockServer mock;
  mock.server.Get("/search", [](const httplib::Request&, httplib::Response& res) {
    res.status = 403;
  });
  WebSearchClient client(mock.url("/search"), "", make_http_client(), fast_policy());
  try {
    client.search("q", 3);
    FAIL("no throw");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::QuotaExceeded);
  }
}

TEST_CASE("browse summarizes a static page") {
  MockServer mock;
  mock.server.Get("/page", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(
        "<html><head><title>t</title><style>p{}</style></head><body>"
        "<script>var x=1;</script><p>Greenland has 56,000 people. It is large.</p>"
        "</body></html>",
        "text/html");
  });
  HttpPageFetcher fetcher(make_http_client(), 2000ms);
  auto summarizer = first_sentence_summarizer();
  CHECK(browse(fetcher, mock.url("/page"), "population", summarizer.get()) ==
        "Greenland has 56,000 people.");

  BrowseOptions opts;
  opts.truncate_chars = 20;
  const std::string plain = browse(fetcher, mock.url("/page"), "population", nullptr, opts);
  CHECK(plain.size() <= 20);
  CHECK(plain.find("var x") == std::string::npos);
  CHECK(plain.rfind("Greenland", 0) == 0);

  struct Down : Generator {
    GenerationResult generate(const GenerationRequest&) override {
      throw Error(Errc::Generator, "offline");
    }
  } down;
  CHECK(browse(fetcher, mock.url("/page"), "q", &down, opts) == plain);
}

TEST_CASE("browse of an unreachable url") {
  HttpPageFetcher fetcher(make_http_client(), 300ms);
  try {
    browse(fetcher, "http://127.0.0.1:1/nothing", "q", nullptr);
    FAIL("no throw");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::Fetch);
  }
}

TEST_CASE("search tool routes local and web") {
  auto index = std::make_shared<Bm25Index>(
      std::vector<Document>{{"d1", "Paris", "paris is the capital of france", {}}});
  MockServer mock;
  mock.server.Get("/search", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"([{"title":"Web","snippet":"from the web"}])", "application/json");
  });
  auto web = std::make_shared<WebSearchClient>(mock.url("/search"), "",
                                               make_http_client(), fast_policy());
  SearchTool tool(index, web);
  auto fb = tool.execute(ToolRequest::make(TagKind::Search, "capital france"));
  CHECK(fb.text == "\"Paris\"\nparis is the capital of france");
  fb = tool.execute(ToolRequest::make(TagKind::Search, "anything", SearchRouting::Web));
  CHECK(fb.text == "\"Web\"\nfrom the web");
}

TEST_CASE("scripted sandbox") {
  ScriptedSandbox sb({{"population = 55840\nprint(round(population, -3))",
                       {"56000\n", "", true, false, 0}, false},
                      {"1/0", {"", "ZeroDivisionError: division by zero", false, false, 0}, true}});
  auto r = execute_code(sb, "population = 55840\nprint(round(population, -3))\n");
  CHECK(r.stdout_text == "56000\n");
  CHECK(r.exit_ok);
  r = execute_code(sb, "x = 1/0");
  CHECK_FALSE(r.exit_ok);
  CHECK(r.stderr_text.find("division") != std::string::npos);
  r = execute_code(sb, "unknown()");
  CHECK_FALSE(r.exit_ok);
  CHECK(sb.executions() == 3);
}

TEST_CASE("sandbox table file") {
  const auto rules = load_sandbox_table(fixtures::data_dir() / "toy" / "sandbox.json");
  CHECK_FALSE(rules.empty());
  const auto dir = fixtures::scratch_dir("table");
  write_file(dir / "bad.json", R"([{"stdout":"x"}])");
  CHECK_THROWS_AS(load_sandbox_table(dir / "bad.json"), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("exec feedback mapping") {
  ExecLimits limits;
  CHECK(exec_feedback({"56000\n", "", true, false, 0}, limits).text == "56000");
  const auto err = exec_feedback({"", "Traceback\nNameError: x", false, false, 0}, limits);
  CHECK(err.is_error);
  CHECK(err.text == "Traceback\nNameError: x");
  const auto to = exec_feedback({"", "", false, true, 0}, limits);
  CHECK(to.is_error);
  CHECK(to.text.find("Timeout") != std::string::npos);
}

TEST_CASE("driver sandbox client") {
  DriverSandbox sb(driver_argv());
  ExecLimits limits;
  limits.timeout_s = 5;

  auto r = execute_code(sb, "population = 55840; print(round(population, -3))", limits);
  CHECK(r.exit_ok);
  CHECK(r.stdout_text == "56000\n");

  r = execute_code(sb, "1/0", limits);
  CHECK_FALSE(r.exit_ok);
  CHECK(r.stderr_text.find("ZeroDivisionError") != std::string::npos);

  limits.timeout_s = 1;
  const auto start = std::chrono::steady_clock::now();
  r = execute_code(sb, "while True: pass", limits);
  CHECK(r.timed_out);
  CHECK_FALSE(r.exit_ok);
  CHECK(std::chrono::steady_clock::now() - start < 4s);
}

TEST_CASE("driver failures are sandbox unavailable") {
  DriverSandbox sb(driver_argv());
  for (const char* code : {"__crash__", "__garbage__"}) {
    try {
      sb.run(code, {});
      FAIL("no throw");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::SandboxUnavailable);
    }
  }
  DriverSandbox missing({"/nonexistent/driver"});
  CHECK_THROWS_AS(missing.run("print(1)", {}), Error);
}

TEST_CASE("syntax error feedback through the registry") {
  ToolRegistry reg;
  reg.register_tool(TagKind::Python,
                    std::make_shared<CodeTool>(std::make_shared<DriverSandbox>(driver_argv())));
  const auto fb = reg.invoke(ToolRequest::make(TagKind::Python, "print(1"));
  CHECK(fb.is_error);
  CHECK(fb.text.find("SyntaxError") != std::string::npos);
}

}
