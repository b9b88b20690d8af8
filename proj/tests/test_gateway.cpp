#include <doctest.h>

#include <cstdlib>
#include <memory>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "pdr/gateway.hpp"
#include "pdr/http_backend.hpp"
#include "pdr/mock_backend.hpp"
#include "support/fixtures.hpp"

using namespace pdr;

namespace {

template <class Fn>
Errc error_code(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected pdr::Error");
  return Errc::precondition;
}

std::shared_ptr<const MockScript> make_script(
    std::initializer_list<std::pair<StageTag, MockReply>> entries) {
  auto script = std::make_shared<MockScript>();
  for (const auto& [tag, reply] : entries) script->add(tag, reply);
  return script;
}

RetryPolicy no_sleep(int max_retries = 3, std::vector<int>* sleeps = nullptr) {
  RetryPolicy policy;
  policy.max_retries = max_retries;
  policy.backoff_base_ms = 250;
  policy.sleeper = [sleeps](int ms) {
    if (sleeps) sleeps->push_back(ms);
  };
  return policy;
}

ChatRequest request_for(StageTag tag, std::string prompt = "ping") {
  ChatRequest request;
  request.user_prompt = std::move(prompt);
  request.tag = tag;
  return request;
}

}  // namespace

TEST_SUITE("gateway") {

TEST_CASE("mock backend replays per-tag scripts independently") {
  auto script = std::make_shared<MockScript>();
  script->add_text(StageTag::Filter, "f1").add_text(StageTag::Filter, "f2");
  script->add_text(StageTag::Decide, "d1");
  auto backend = std::make_shared<MockChatBackend>(std::move(script));
  LlmGateway gateway(backend, no_sleep());

  CHECK(gateway.complete(request_for(StageTag::Filter)).text == "f1");
  CHECK(gateway.complete(request_for(StageTag::Decide)).text == "d1");
  CHECK(gateway.complete(request_for(StageTag::Filter)).text == "f2");
  // Exhausted scripts repeat their last entry.
  CHECK(gateway.complete(request_for(StageTag::Filter)).text == "f2");
  CHECK(gateway.complete(request_for(StageTag::Decide)).text == "d1");
  CHECK(backend->calls_for(StageTag::Filter) == 3);
  CHECK(backend->calls_for(StageTag::Decide) == 2);
  CHECK(backend->calls_for(StageTag::Generate) == 0);
}

TEST_CASE("mock backend truncates replies to the request budget") {
  auto backend = std::make_shared<MockChatBackend>(
      make_script({{StageTag::Generate, MockReply::ok("abcdefgh")}}));
  LlmGateway gateway(backend, no_sleep());
  ChatRequest request = request_for(StageTag::Generate);
  request.max_output_chars = 5;
  auto response = gateway.complete(request);
  CHECK(response.text == "abcde");
  CHECK(response.truncated);
}

TEST_CASE("mock backend treats a missing tag as fatal") {
  auto backend = std::make_shared<MockChatBackend>(
      make_script({{StageTag::Filter, MockReply::ok("x")}}));
  LlmGateway gateway(backend, no_sleep());
  CHECK(error_code([&] { gateway.complete(request_for(StageTag::Judge)); }) ==
        Errc::backend_unavailable);
  CHECK(backend->calls_for(StageTag::Judge) == 1);  // fatal, no retries
  CHECK(gateway.ledger().tag(StageTag::Judge).failures == 1);
}

TEST_CASE("complete retries transient failures with doubling backoff") {
  auto backend = std::make_shared<MockChatBackend>(
      make_script({{StageTag::Filter, MockReply::http_error(500)},
                   {StageTag::Filter, MockReply::timeout()},
                   {StageTag::Filter, MockReply::ok("recovered")}}));
  std::vector<int> sleeps;
  LlmGateway gateway(backend, no_sleep(3, &sleeps));

  auto response = gateway.complete(request_for(StageTag::Filter));
  CHECK(response.text == "recovered");
  CHECK(response.backend_id == "mock");
  CHECK(sleeps == std::vector<int>{250, 500});
  auto counters = gateway.ledger().tag(StageTag::Filter);
  CHECK(counters.calls == 1);
  CHECK(counters.retries == 2);
  CHECK(counters.failures == 0);
}

TEST_CASE("complete exhausts retries and maps the final status") {
  struct Case {
    MockReply reply;
    Errc expected;
  };
  const Case cases[] = {
      {MockReply::timeout(), Errc::timeout},
      {MockReply::http_error(429), Errc::rate_limited},
      {MockReply::http_error(503), Errc::backend_unavailable},
  };
  for (const Case& c : cases) {
    auto backend =
        std::make_shared<MockChatBackend>(make_script({{StageTag::Decide, c.reply}}));
    LlmGateway gateway(backend, no_sleep(3));
    CHECK(error_code([&] { gateway.complete(request_for(StageTag::Decide)); }) == c.expected);
    CHECK(backend->calls_for(StageTag::Decide) == 4);  // initial attempt + 3 retries
    auto counters = gateway.ledger().tag(StageTag::Decide);
    CHECK(counters.calls == 1);
    CHECK(counters.retries == 3);
    CHECK(counters.failures == 1);
  }
}

TEST_CASE("complete does not retry fatal http statuses") {
  auto backend = std::make_shared<MockChatBackend>(
      make_script({{StageTag::Generate, MockReply::http_error(404)}}));
  LlmGateway gateway(backend, no_sleep(3));
  CHECK(error_code([&] { gateway.complete(request_for(StageTag::Generate)); }) ==
        Errc::backend_unavailable);
  CHECK(backend->calls_for(StageTag::Generate) == 1);
}

TEST_CASE("complete rejects empty prompts") {
  auto backend = std::make_shared<MockChatBackend>(
      make_script({{StageTag::Generate, MockReply::ok("x")}}));
  LlmGateway gateway(backend, no_sleep());
  ChatRequest request;
  CHECK(error_code([&] { gateway.complete(request); }) == Errc::precondition);
}

TEST_CASE("extract_json_object finds the first balanced object") {
  CHECK(extract_json_object(R"({"a":1})") == R"({"a":1})");
  CHECK(extract_json_object("Sure! Here it is: {\"a\": 1} hope that helps") == R"({"a": 1})");
  CHECK(extract_json_object("```json\n{\"a\": 1}\n```") == R"({"a": 1})");
  CHECK(extract_json_object("```\n{\"b\": 2}\n```") == R"({"b": 2})");
  CHECK(extract_json_object(R"(x {"a": {"b": [1, 2]}, "c": "}"} y)") ==
        R"({"a": {"b": [1, 2]}, "c": "}"})");
  CHECK(extract_json_object(R"({"quote": "say \" and {"})") == R"({"quote": "say \" and {"})");
  CHECK(extract_json_object("no object here") == std::nullopt);
  CHECK(extract_json_object("{\"a\": 1") == std::nullopt);
  CHECK(extract_json_object("") == std::nullopt);
}

TEST_CASE("complete_structured validates keys and kinds") {
  const std::vector<KeySpec> keys = {{"sufficient", KeySpec::Kind::Boolean},
                                     {"gap_query", KeySpec::Kind::StringOrNull}};

  SUBCASE("clean reply parses without repair") {
    auto backend = std::make_shared<MockChatBackend>(make_script(
        {{StageTag::Decide, MockReply::ok(R"({"sufficient": true, "gap_query": null})")}}));
    LlmGateway gateway(backend, no_sleep());
    auto value = gateway.complete_structured(request_for(StageTag::Decide), keys);
    CHECK(value["sufficient"] == true);
    CHECK(value["gap_query"].is_null());
    CHECK(gateway.ledger().tag(StageTag::Decide).repairs == 0);
    CHECK(gateway.ledger().tag(StageTag::Decide).calls == 1);
  }
  SUBCASE("prose-wrapped reply still parses") {
    auto backend = std::make_shared<MockChatBackend>(make_script(
        {{StageTag::Decide,
          MockReply::ok("My verdict:\n```json\n{\"sufficient\": false, \"gap_query\": \"more\"}\n```")}}));
    LlmGateway gateway(backend, no_sleep());
    auto value = gateway.complete_structured(request_for(StageTag::Decide), keys);
    CHECK(value["gap_query"] == "more");
  }
  SUBCASE("repair succeeds after one malformed reply") {
    auto inner = std::make_shared<MockChatBackend>(make_script(
        {{StageTag::Decide, MockReply::ok("word salad")},
         {StageTag::Decide, MockReply::ok(R"({"sufficient": true, "gap_query": null})")}}));
    auto recorder = std::make_shared<fixtures::RecordingBackend>(inner);
    LlmGateway gateway(recorder, no_sleep());
    auto value = gateway.complete_structured(request_for(StageTag::Decide, "original ask"), keys);
    CHECK(value["sufficient"] == true);
    auto counters = gateway.ledger().tag(StageTag::Decide);
    CHECK(counters.calls == 2);
    CHECK(counters.repairs == 1);
    auto seen = recorder->requests();
    REQUIRE(seen.size() == 2);
    CHECK(seen[1].user_prompt.find("original ask") == 0);
    CHECK(seen[1].user_prompt.find("previous reply could not be used") != std::string::npos);
  }
  SUBCASE("persistent garbage raises malformed_output") {
    auto backend = std::make_shared<MockChatBackend>(
        make_script({{StageTag::Decide, MockReply::ok("still not json")}}));
    LlmGateway gateway(backend, no_sleep());
    CHECK(error_code([&] { gateway.complete_structured(request_for(StageTag::Decide), keys); }) ==
          Errc::malformed_output);
    CHECK(gateway.ledger().tag(StageTag::Decide).repairs == 1);
  }
  SUBCASE("persistent missing key raises missing_key") {
    auto backend = std::make_shared<MockChatBackend>(
        make_script({{StageTag::Decide, MockReply::ok(R"({"sufficient": true})")}}));
    LlmGateway gateway(backend, no_sleep());
    CHECK(error_code([&] { gateway.complete_structured(request_for(StageTag::Decide), keys); }) ==
          Errc::missing_key);
  }
  SUBCASE("wrong kind raises malformed_output") {
    auto backend = std::make_shared<MockChatBackend>(make_script(
        {{StageTag::Decide, MockReply::ok(R"({"sufficient": "yes", "gap_query": null})")}}));
    LlmGateway gateway(backend, no_sleep());
    CHECK(error_code([&] { gateway.complete_structured(request_for(StageTag::Decide), keys); }) ==
          Errc::malformed_output);
  }
  SUBCASE("expected keys must be provided") {
    auto backend = std::make_shared<MockChatBackend>(
        make_script({{StageTag::Decide, MockReply::ok("{}")}}));
    LlmGateway gateway(backend, no_sleep());
    CHECK(error_code([&] { gateway.complete_structured(request_for(StageTag::Decide), {}); }) ==
          Errc::precondition);
  }
}

TEST_CASE("ledger merge adds counters per tag") {
  CallLedger a;
  a.record_call(StageTag::Filter);
  a.record_retry(StageTag::Filter);
  CallLedger b;
  b.record_call(StageTag::Filter);
  b.record_call(StageTag::Judge);
  b.record_repair(StageTag::Judge);
  a.merge(b);
  CHECK(a.tag(StageTag::Filter).calls == 2);
  CHECK(a.tag(StageTag::Filter).retries == 1);
  CHECK(a.tag(StageTag::Judge).calls == 1);
  CHECK(a.tag(StageTag::Judge).repairs == 1);
  CHECK(a.total_calls() == 3);

  auto snapshot = a.snapshot();
  CHECK(snapshot["filter"]["calls"] == 2);
  CHECK(snapshot["judge"]["repairs"] == 1);
  CHECK(snapshot["generate"]["calls"] == 0);
}

TEST_CASE("separate gateways over one script replay identically") {
  auto script = fixtures::mock_script();
  const StageTag sequence[] = {StageTag::Profile, StageTag::Decompose, StageTag::Filter,
                               StageTag::Decide,  StageTag::Decide,    StageTag::Generate};
  std::vector<std::string> first, second;
  for (auto* out : {&first, &second}) {
    LlmGateway gateway(std::make_shared<MockChatBackend>(script), no_sleep());
    for (StageTag tag : sequence) out->push_back(gateway.complete(request_for(tag)).text);
  }
  CHECK(first == second);
}

TEST_CASE("http backend speaks the chat completion wire format") {
  httplib::Server server;
  nlohmann::json captured_body;
  std::string captured_auth;
  int hits = 0;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    ++hits;
    captured_auth = req.get_header_value("Authorization");
    captured_body = nlohmann::json::parse(req.body);
    if (captured_body["messages"][1]["content"] == "flaky" && hits == 1) {
      res.status = 500;
      return;
    }
    nlohmann::json choice = {{"message", {{"role", "assistant"}, {"content", "pong"}}},
                             {"finish_reason", "stop"}};
    if (captured_body["messages"][1]["content"] == "long") choice["finish_reason"] = "length";
    nlohmann::json reply = {{"choices", nlohmann::json::array({choice})}};
    res.set_content(reply.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread listener([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  ::setenv("PDR_TEST_API_KEY", "sekrit", 1);
  HttpBackendConfig config;
  config.url = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
  config.model = "demo-model";
  config.api_key_env = "PDR_TEST_API_KEY";
  auto backend = std::make_shared<HttpChatBackend>(config);

  SUBCASE("request and response round-trip") {
    LlmGateway gateway(backend, no_sleep());
    ChatRequest request;
    request.system_prompt = "be brief";
    request.user_prompt = "ping";
    request.temperature = 0.25;
    request.max_output_chars = 400;
    request.tag = StageTag::Generate;
    auto response = gateway.complete(request);
    CHECK(response.text == "pong");
    CHECK(response.backend_id == "http:demo-model");
    CHECK_FALSE(response.truncated);

    CHECK(captured_auth == "Bearer sekrit");
    CHECK(captured_body["model"] == "demo-model");
    CHECK(captured_body["temperature"] == doctest::Approx(0.25));
    CHECK(captured_body["max_tokens"] == 100);
    REQUIRE(captured_body["messages"].size() == 2);
    CHECK(captured_body["messages"][0]["role"] == "system");
    CHECK(captured_body["messages"][0]["content"] == "be brief");
    CHECK(captured_body["messages"][1]["role"] == "user");
    CHECK(captured_body["messages"][1]["content"] == "ping");
  }
  SUBCASE("finish_reason length marks truncation") {
    LlmGateway gateway(backend, no_sleep());
    auto response = gateway.complete(request_for(StageTag::Generate, "long"));
    CHECK(response.truncated);
  }
  SUBCASE("5xx is retried until the server recovers") {
    LlmGateway gateway(backend, no_sleep());
    auto response = gateway.complete(request_for(StageTag::Generate, "flaky"));
    CHECK(response.text == "pong");
    CHECK(gateway.ledger().tag(StageTag::Generate).retries == 1);
    CHECK(hits == 2);
  }
  SUBCASE("missing api key is fatal without touching the server") {
    ::unsetenv("PDR_TEST_API_KEY");
    LlmGateway gateway(backend, no_sleep());
    CHECK(error_code([&] { gateway.complete(request_for(StageTag::Generate)); }) ==
          Errc::backend_unavailable);
    CHECK(hits == 0);
    ::setenv("PDR_TEST_API_KEY", "sekrit", 1);
  }

  server.stop();
  listener.join();
}

TEST_CASE("http backend validates its configuration") {
  HttpBackendConfig config;
  config.model = "m";
  CHECK(error_code([&] { HttpChatBackend{config}; }) == Errc::config_error);
  config.url = "https://secure.example/v1";
  CHECK(error_code([&] { HttpChatBackend{config}; }) == Errc::config_error);
  config.url = "127.0.0.1:8000/v1";
  CHECK(error_code([&] { HttpChatBackend{config}; }) == Errc::config_error);
  config.url = "http://127.0.0.1:8000/v1";
  config.model = "";
  CHECK(error_code([&] { HttpChatBackend{config}; }) == Errc::config_error);
}

}  // TEST_SUITE
