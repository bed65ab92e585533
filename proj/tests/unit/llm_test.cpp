#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <thread>

#include "ucm/llm/extract.hpp"
#include "ucm/llm/live.hpp"
#include "ucm/llm/provider.hpp"
#include "ucm/llm/template.hpp"
#include "ucm/plantuml/render.hpp"

using namespace ucm;
using namespace ucm::llm;

namespace {

const std::string kExpertSentence =
    "You are an expert in software engineering with many years of experience in requirements analysis and UML use case "
    "modeling.";

std::string code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return "ok";
}

std::size_t count_of(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
  return n;
}

std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("ucm_llm_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

CompletionRequest sample_request(std::string user = "hello") {
  CompletionRequest r;
  r.messages = {{Role::system, "sys"}, {Role::user, std::move(user)}};
  return r;
}

// A local chat-completions stub bound to an ephemeral port.
class StubServer {
 public:
  explicit StubServer(httplib::Server::Handler handler) {
    server_.Post("/v1/chat/completions", std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

std::string chat_reply(const std::string& content) {
  return nlohmann::json{{"model", "stub"}, {"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}.dump();
}

}  // namespace

// ---------------------------------------------------------------------------
// Templates

TEST(Templates, FourBuiltinsFollowThePatterns) {
  const auto& set = builtin_templates();
  ASSERT_EQ(set.size(), 4u);
  for (const char* id : {"actor_extraction", "usecase_extraction", "model_generation", "description_generation"}) {
    ASSERT_TRUE(set.count(id)) << id;
    const auto& t = set.at(id);
    EXPECT_NE(system_message(t).find(kExpertSentence), std::string::npos) << id;
    EXPECT_GE(t.negative_constraints.size(), 3u) << id;
    EXPECT_FALSE(t.output_schema.empty()) << id;
  }
  EXPECT_NE(set.at("model_generation").knowledge_block.find(plantuml::grammar_reference), std::string::npos);
}

TEST(Templates, PlaceholdersPerTemplate) {
  const auto& set = builtin_templates();
  EXPECT_EQ(placeholders(set.at("actor_extraction")), (std::vector<std::string>{"requirements"}));
  EXPECT_EQ(placeholders(set.at("usecase_extraction")), (std::vector<std::string>{"actors", "requirements"}));
  EXPECT_EQ(placeholders(set.at("model_generation")), (std::vector<std::string>{"system_name", "actors", "use_cases"}));
  EXPECT_EQ(placeholders(set.at("description_generation")),
            (std::vector<std::string>{"usecase_id", "usecase_title", "actors", "requirements"}));
}

TEST(RenderPrompt, NoPlaceholdersIsIdentity) {
  PromptTemplate t{"plain", 1, "role", "", {"no x", "no y", "no z"}, "List the actors.", "Use a json block."};
  auto req = render_prompt(t, {});
  ASSERT_EQ(req.messages.size(), 2u);
  EXPECT_EQ(req.messages[0].role, Role::system);
  EXPECT_EQ(req.messages[1].role, Role::user);
  EXPECT_EQ(req.messages[1].content, t.task_instruction + "\n\n" + t.output_schema);
  EXPECT_EQ(req.messages[0].content, "role\n\nAvoid the following:\n1. no x\n2. no y\n3. no z");
  EXPECT_DOUBLE_EQ(req.temperature, 0.2);
}

TEST(RenderPrompt, RequirementsAppearExactlyOnce) {
  const std::string text = "The clerk <registers> each {{parcel}} on arrival.";
  auto req = render_prompt(builtin_templates().at("actor_extraction"), {{"requirements", text}});
  EXPECT_EQ(count_of(req.messages[1].content, text), 1u);
  EXPECT_EQ(count_of(req.messages[0].content, text), 0u);
}

TEST(RenderPrompt, VariableErrors) {
  const auto& t = builtin_templates().at("actor_extraction");
  try {
    render_prompt(t, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "E-UNBOUND-VAR");
    EXPECT_EQ(e.details().at("variable"), "requirements");
  }
  EXPECT_EQ(code_of([&] { render_prompt(t, {{"requirements", "x"}, {"extra", "y"}}); }), "E-UNKNOWN-VAR");
  RenderOptions lenient;
  lenient.strict = false;
  EXPECT_EQ(code_of([&] { render_prompt(t, {{"requirements", "x"}, {"extra", "y"}}, lenient); }), "ok");
}

TEST(RenderPrompt, MalformedTemplates) {
  PromptTemplate t{"bad", 1, "r", "", {}, "Hello {{name", ""};
  EXPECT_EQ(code_of([&] { render_prompt(t, {}); }), "E-BAD-TEMPLATE");
  t.task_instruction = "Hello {{ name }}";
  EXPECT_EQ(code_of([&] { render_prompt(t, {{"name", "x"}}); }), "E-BAD-TEMPLATE");
  t.task_instruction = "";
  EXPECT_EQ(code_of([&] { render_prompt(t, {}); }), "E-BAD-TEMPLATE");
  EXPECT_EQ(code_of([] { parse_template("{\"id\": 3}", "inline"); }), "E-BAD-TEMPLATE");
}

TEST(RenderPrompt, DeterministicBytes) {
  const auto& t = builtin_templates().at("usecase_extraction");
  std::map<std::string, std::string> vars{{"requirements", "Customers order books."}, {"actors", "- Customer"}};
  auto a = render_prompt(t, vars);
  auto b = render_prompt(t, vars);
  EXPECT_EQ(a, b);
  EXPECT_EQ(nlohmann::json(a).dump(), nlohmann::json(b).dump());
  EXPECT_EQ(request_hash(a), request_hash(b));
}

TEST(Templates, DirectoryOverridesBuiltins) {
  auto dir = fresh_dir("templates");
  auto t = builtin_templates().at("actor_extraction");
  t.version = 2;
  t.task_instruction = "Find actors in {{requirements}}";
  std::ofstream(dir / "actor_extraction.json") << nlohmann::json(t).dump();
  auto set = load_templates(dir);
  EXPECT_EQ(set.at("actor_extraction").version, 2);
  EXPECT_EQ(set.at("model_generation"), builtin_templates().at("model_generation"));
  std::filesystem::remove_all(dir);
}

// ---------------------------------------------------------------------------
// Hashing

TEST(RequestHash, Sha256KnownVector) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(RequestHash, CoversModelTemperatureAndMessagesOnly) {
  auto base = sample_request();
  const auto h = request_hash(base);
  EXPECT_EQ(h.size(), 64u);
  auto r = base;
  r.max_tokens = 17;
  EXPECT_EQ(request_hash(r), h);
  r = base;
  r.temperature = 0.3;
  EXPECT_NE(request_hash(r), h);
  r = base;
  r.model_name = "other";
  EXPECT_NE(request_hash(r), h);
  r = base;
  r.messages[1].content += " ";
  EXPECT_NE(request_hash(r), h);
}

// ---------------------------------------------------------------------------
// Providers

TEST(Providers, RequestValidation) {
  ScriptedProvider p({"x", "y", "z"});
  CompletionRequest r;
  EXPECT_EQ(code_of([&] { complete(p, r); }), "E-BAD-REQUEST");
  r.messages = {{Role::user, "hi"}};
  EXPECT_EQ(code_of([&] { complete(p, r); }), "E-BAD-REQUEST");
  r = sample_request();
  r.max_tokens = 0;
  EXPECT_EQ(code_of([&] { complete(p, r); }), "E-BAD-REQUEST");
}

TEST(Providers, ScriptedReturnsQueueInOrder) {
  ScriptedProvider p({"first", "second"});
  EXPECT_EQ(complete(p, sample_request()).content, "first");
  EXPECT_EQ(complete(p, sample_request("again")).content, "second");
  EXPECT_EQ(code_of([&] { complete(p, sample_request()); }), "E-SCRIPT-EXHAUSTED");
  ASSERT_EQ(p.requests().size(), 3u);
  EXPECT_EQ(p.requests()[1].messages[1].content, "again");
}

TEST(Providers, ReplayHitAndMiss) {
  auto dir = fresh_dir("replay");
  auto req = sample_request();
  const auto hash = request_hash(req);
  std::ofstream(fixture_path(dir, hash)) << nlohmann::json{{"hash", hash}, {"content", "X"}}.dump();
  ReplayProvider p(dir);
  EXPECT_EQ(complete(p, req).content, "X");
  try {
    complete(p, sample_request("unknown"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "E-NO-FIXTURE");
    EXPECT_EQ(e.details().at("hash"), request_hash(sample_request("unknown")));
  }
  std::filesystem::remove_all(dir);
}

TEST(Providers, RecordThenReplayIsByteIdentical) {
  auto dir = fresh_dir("record");
  auto scripted = std::make_shared<ScriptedProvider>(std::vector<std::string>{"alpha\n```json\n[1]\n```", "beta"});
  RecordingProvider rec(scripted, dir);
  auto r1 = complete(rec, sample_request("one"));
  auto r2 = complete(rec, sample_request("two"));
  ReplayProvider replay(dir);
  EXPECT_EQ(complete(replay, sample_request("one")).content, r1.content);
  EXPECT_EQ(complete(replay, sample_request("two")).content, r2.content);
  auto stored = nlohmann::json::parse(std::ifstream(fixture_path(dir, request_hash(sample_request("one")))));
  EXPECT_EQ(stored.at("request").get<CompletionRequest>(), sample_request("one"));
  std::filesystem::remove_all(dir);
}

TEST(Providers, ConcurrentReplayAndScripted) {
  auto dir = fresh_dir("concurrent");
  std::vector<std::string> replies(64, "r");
  auto scripted = std::make_shared<ScriptedProvider>(replies);
  RecordingProvider rec(scripted, dir);
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < 8; ++i) complete(rec, sample_request(std::to_string(t * 8 + i)));
    });
  }
  for (auto& th : threads) th.join();
  EXPECT_EQ(scripted->remaining(), 0u);
  ReplayProvider replay(dir);
  std::atomic<int> ok{0};
  threads.clear();
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < 8; ++i) ok += complete(replay, sample_request(std::to_string(t * 8 + i))).content == "r";
    });
  }
  for (auto& th : threads) th.join();
  EXPECT_EQ(ok.load(), 64);
  std::filesystem::remove_all(dir);
}

// ---------------------------------------------------------------------------
// Live provider against a local stub

TEST(LiveProvider, ParsesChatCompletionReply) {
  std::string auth, model;
  StubServer stub([&](const httplib::Request& req, httplib::Response& res) {
    auth = req.get_header_value("Authorization");
    model = nlohmann::json::parse(req.body).at("model").get<std::string>();
    res.set_content(chat_reply("hello there"), "application/json");
  });
  LiveProvider p({stub.url(), "m-1", "secret"});
  auto r = complete(p, sample_request());
  EXPECT_EQ(r.content, "hello there");
  EXPECT_EQ(auth, "Bearer secret");
  EXPECT_EQ(model, "m-1");
  EXPECT_EQ(r.provider_meta.at("attempts"), 1);
}

TEST(LiveProvider, ServerErrorThriceGivesHttp500AfterThreeAttempts) {
  std::atomic<int> hits{0};
  StubServer stub([&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 500;
  });
  std::vector<long> sleeps;
  LiveProvider p({stub.url()}, [&](std::chrono::milliseconds d) { sleeps.push_back(d.count()); });
  try {
    complete(p, sample_request());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "E-HTTP");
    EXPECT_EQ(e.details().at("status"), 500);
    EXPECT_EQ(e.details().at("attempts"), 3);
  }
  EXPECT_EQ(hits.load(), 3);
  EXPECT_EQ(sleeps, (std::vector<long>{500, 1000}));
}

TEST(LiveProvider, RateLimitIsRetriedClientErrorIsNot) {
  std::atomic<int> hits{0};
  StubServer stub([&](const httplib::Request& req, httplib::Response& res) {
    ++hits;
    auto body = nlohmann::json::parse(req.body);
    if (body.at("messages").at(1).at("content") == "bad") {
      res.status = 400;
    } else if (hits == 1) {
      res.status = 429;
    } else {
      res.set_content(chat_reply("ok"), "application/json");
    }
  });
  LiveProvider p({stub.url()}, [](std::chrono::milliseconds) {});
  EXPECT_EQ(complete(p, sample_request()).content, "ok");
  EXPECT_EQ(hits.load(), 2);
  hits = 10;
  EXPECT_EQ(code_of([&] { complete(p, sample_request("bad")); }), "E-HTTP");
  EXPECT_EQ(hits.load(), 11);
}

TEST(LiveProvider, UnreachableEndpointIsTransportError) {
  // Reserve a port without listening on it, so connects are refused.
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  ASSERT_EQ(::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr), 0);
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  const int port = ntohs(addr.sin_port);
  int sleeps = 0;
  LiveConfig cfg{"http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions"};
  cfg.timeout = std::chrono::seconds(5);
  LiveProvider p(cfg, [&](auto) { ++sleeps; });
  try {
    complete(p, sample_request());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "E-TRANSPORT");
    EXPECT_EQ(e.details().at("attempts"), 3);
  }
  EXPECT_EQ(sleeps, 2);
  ::close(fd);
}

TEST(LiveProvider, SlowServerTimesOut) {
  StubServer stub([&](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(600));
    res.set_content(chat_reply("late"), "application/json");
  });
  LiveConfig cfg{stub.url()};
  cfg.timeout = std::chrono::milliseconds(150);
  LiveProvider p(cfg, [](auto) {});
  EXPECT_EQ(code_of([&] { complete(p, sample_request()); }), "E-TIMEOUT");
}

TEST(LiveProvider, ConfigFromEnvironmentAndUrlSplitting) {
  ::setenv("UCM_LLM_ENDPOINT", "http://example.invalid:8080/api/chat", 1);
  ::setenv("UCM_LLM_MODEL", "env-model", 1);
  ::unsetenv("UCM_LLM_API_KEY");
  LiveConfig flags;
  flags.model = "flag-model";
  auto cfg = live_config_from_env(flags);
  EXPECT_EQ(cfg.endpoint, "http://example.invalid:8080/api/chat");
  EXPECT_EQ(cfg.model, "flag-model");
  EXPECT_TRUE(cfg.api_key.empty());
  auto ep = split_endpoint(cfg.endpoint);
  EXPECT_EQ(ep.origin, "http://example.invalid:8080");
  EXPECT_EQ(ep.path, "/api/chat");
  EXPECT_EQ(split_endpoint("https://host").path, "/v1/chat/completions");
  EXPECT_EQ(code_of([] { split_endpoint("ftp://host/x"); }), "E-CONFIG");
  ::unsetenv("UCM_LLM_ENDPOINT");
  ::unsetenv("UCM_LLM_MODEL");
}

// ---------------------------------------------------------------------------
// Structured block extraction

TEST(Extract, SingleBlockTwoElementList) {
  auto b = extract_structured_block("```json\n[\"Customer\", \"Administrator\"]\n```", BlockFormat::json);
  EXPECT_EQ(b.data, nlohmann::json::parse(R"(["Customer","Administrator"])"));
  EXPECT_EQ(b.info, "json");
}

TEST(Extract, ProseAroundBlockIsIgnored) {
  const std::string reply =
      "Sure! Here are the actors I found in the requirements:\n\n"
      "```json\n"
      "[{\"name\": \"Librarian\", \"kind\": \"human\"}]\n"
      "```\n\n"
      "Let me know if you want me to refine the list. ```json [] ```";
  auto b = extract_structured_block(reply, BlockFormat::json);
  EXPECT_EQ(b.data.size(), 1u);
  EXPECT_EQ(b.data[0].at("name"), "Librarian");
}

TEST(Extract, PlantumlBlockKeepsRawText) {
  auto b = extract_structured_block("Diagram:\n~~~plantuml\n@startuml\nA --> (B)\n@enduml\n~~~\n", BlockFormat::plantuml);
  EXPECT_EQ(b.text, "@startuml\nA --> (B)\n@enduml\n");
  EXPECT_TRUE(b.data.is_null());
}

TEST(Extract, Errors) {
  EXPECT_EQ(code_of([] { extract_structured_block("No block here, sorry.", BlockFormat::json); }), "E-NO-BLOCK");
  EXPECT_EQ(code_of([] { extract_structured_block("", BlockFormat::json); }), "E-NO-BLOCK");
  EXPECT_EQ(code_of([] { extract_structured_block("```json\n[1, 2\n", BlockFormat::json); }), "E-MALFORMED");
  try {
    extract_structured_block("abc\n```json\n[1, 2,, 3]\n```", BlockFormat::json);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "E-MALFORMED");
    // the second comma sits at offset 4 + 8 + 6
    EXPECT_EQ(e.details().at("position"), 18);
  }
}
