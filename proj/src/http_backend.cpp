#include "pdr/http_backend.hpp"

#include <algorithm>
#include <cstdlib>

#include <httplib.h>
#include <json.hpp>

#include "pdr/errors.hpp"

namespace pdr {
namespace {

// Splits "http://host:port/some/path" into ("http://host:port", "/some/path").
std::pair<std::string, std::string> split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    throw Error(Errc::config_error, "backend.url must include a scheme: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

HttpChatBackend::HttpChatBackend(HttpBackendConfig config) : config_(std::move(config)) {
  if (config_.url.empty()) throw Error(Errc::config_error, "backend.url is required");
  if (config_.model.empty()) throw Error(Errc::config_error, "backend.model is required");
  std::tie(scheme_host_, path_) = split_url(config_.url);
  if (scheme_host_.rfind("http://", 0) != 0)
    throw Error(Errc::config_error, "backend.url must use http: " + config_.url);
}

BackendReply HttpChatBackend::attempt(const ChatRequest& request) {
  httplib::Client client(scheme_host_);
  client.set_connection_timeout(0, config_.timeout_ms * 1000);
  client.set_read_timeout(config_.timeout_ms / 1000, (config_.timeout_ms % 1000) * 1000);
  client.set_write_timeout(config_.timeout_ms / 1000, (config_.timeout_ms % 1000) * 1000);

  httplib::Headers headers;
  if (!config_.api_key_env.empty()) {
    const char* key = std::getenv(config_.api_key_env.c_str());
    if (key == nullptr || *key == '\0')
      return {BackendReply::Status::FatalError, {}, false,
              "environment variable " + config_.api_key_env + " is unset"};
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  nlohmann::json body = {
      {"model", config_.model},
      {"messages",
       {{{"role", "system"}, {"content", request.system_prompt}},
        {{"role", "user"}, {"content", request.user_prompt}}}},
      {"temperature", request.temperature},
      {"max_tokens", std::max(1, request.max_output_chars / 4)},
  };

  auto result = client.Post(path_, headers, body.dump(), "application/json");
  if (!result) {
    auto err = result.error();
    bool timed_out = err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
                     err == httplib::Error::Write;
    return {timed_out ? BackendReply::Status::Timeout : BackendReply::Status::TransientError,
            {},
            false,
            httplib::to_string(err)};
  }

  if (result->status == 429)
    return {BackendReply::Status::RateLimited, {}, false, "http 429"};
  if (result->status == 408 || result->status >= 500)
    return {BackendReply::Status::TransientError, {}, false,
            "http " + std::to_string(result->status)};
  if (result->status != 200)
    return {BackendReply::Status::FatalError, {}, false,
            "http " + std::to_string(result->status)};

  try {
    auto parsed = nlohmann::json::parse(result->body);
    const auto& choice = parsed.at("choices").at(0);
    BackendReply reply{BackendReply::Status::Ok,
                       choice.at("message").at("content").get<std::string>(), false, {}};
    if (choice.contains("finish_reason") && choice["finish_reason"].is_string())
      reply.truncated = choice["finish_reason"].get<std::string>() == "length";
    return reply;
  } catch (const nlohmann::json::exception& e) {
    return {BackendReply::Status::TransientError, {}, false,
            "unparseable response body: " + std::string(e.what())};
  }
}

}  // namespace pdr
