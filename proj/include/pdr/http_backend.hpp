#pragma once

#include <string>

#include "pdr/gateway.hpp"

namespace pdr {

struct HttpBackendConfig {
  std::string url;           // full chat-completions endpoint, e.g. http://host:8080/v1/chat/completions
  std::string model;
  std::string api_key_env;   // env var holding the bearer token; empty = no auth header
  int timeout_ms = 30000;
};

/// OpenAI-style chat backend over HTTP. One attempt per call; retry policy
/// lives in the gateway.
class HttpChatBackend : public ChatBackend {
 public:
  explicit HttpChatBackend(HttpBackendConfig config);

  BackendReply attempt(const ChatRequest& request) override;
  std::string id() const override { return "http:" + config_.model; }

 private:
  HttpBackendConfig config_;
  std::string scheme_host_;  // "http://host:port"
  std::string path_;         // "/v1/chat/completions"
};

}  // namespace pdr
