#include "pdr/mock_backend.hpp"

#include <fstream>

#include "pdr/errors.hpp"

namespace pdr {

MockScript& MockScript::add(StageTag tag, MockReply reply) {
  replies[tag].push_back(std::move(reply));
  return *this;
}

MockScript& MockScript::add_text(StageTag tag, std::string text) {
  return add(tag, MockReply::ok(std::move(text)));
}

MockScript MockScript::from_json(const nlohmann::json& spec) {
  if (!spec.is_object()) throw Error(Errc::schema_error, "mock script must be a JSON object");
  MockScript script;
  for (const auto& [key, value] : spec.items()) {
    StageTag tag = parse_stage_tag(key);
    if (!value.is_array())
      throw Error(Errc::schema_error, "mock script entry '" + key + "' must be an array");
    for (const auto& item : value) {
      if (item.is_string()) {
        script.add_text(tag, item.get<std::string>());
      } else if (item.is_object()) {
        if (item.contains("http_error")) {
          script.add(tag, MockReply::http_error(item.at("http_error").get<int>()));
        } else if (item.contains("timeout")) {
          script.add(tag, MockReply::timeout());
        } else if (item.contains("text")) {
          script.add_text(tag, item.at("text").get<std::string>());
        } else {
          throw Error(Errc::schema_error,
                      "mock script entry for '" + key + "' needs text, http_error, or timeout");
        }
      } else {
        throw Error(Errc::schema_error, "mock script entry for '" + key + "' has unsupported type");
      }
    }
  }
  return script;
}

MockScript MockScript::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::config_error, "cannot open mock script: " + path.string());
  nlohmann::json spec;
  try {
    in >> spec;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::schema_error, "mock script parse: " + std::string(e.what()));
  }
  return from_json(spec);
}

nlohmann::ordered_json MockScript::to_json() const {
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  for (const auto& [tag, list] : replies) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& reply : list) {
      switch (reply.kind) {
        case MockReply::Kind::Text:
          arr.push_back(reply.text);
          break;
        case MockReply::Kind::HttpError:
          arr.push_back({{"http_error", reply.status}});
          break;
        case MockReply::Kind::Timeout:
          arr.push_back({{"timeout", true}});
          break;
      }
    }
    out[to_string(tag)] = std::move(arr);
  }
  return out;
}

MockChatBackend::MockChatBackend(std::shared_ptr<const MockScript> script)
    : script_(std::move(script)) {
  if (!script_) throw Error(Errc::precondition, "mock backend needs a script");
}

BackendReply MockChatBackend::attempt(const ChatRequest& request) {
  std::size_t index = 0;
  {
    std::lock_guard<std::mutex> lock(mu_);
    index = next_index_[static_cast<std::size_t>(request.tag)]++;
  }
  auto it = script_->replies.find(request.tag);
  if (it == script_->replies.end() || it->second.empty()) {
    return {BackendReply::Status::FatalError, {}, false,
            "mock script has no replies for tag " + std::string(to_string(request.tag))};
  }
  const auto& list = it->second;
  const MockReply& reply = list[index < list.size() ? index : list.size() - 1];
  switch (reply.kind) {
    case MockReply::Kind::Text: {
      BackendReply out{BackendReply::Status::Ok, reply.text, false, {}};
      if (out.text.size() > static_cast<std::size_t>(request.max_output_chars)) {
        out.text.resize(static_cast<std::size_t>(request.max_output_chars));
        out.truncated = true;
      }
      return out;
    }
    case MockReply::Kind::HttpError: {
      auto status = BackendReply::Status::TransientError;
      if (reply.status == 429) status = BackendReply::Status::RateLimited;
      if (reply.status >= 400 && reply.status < 500 && reply.status != 408 && reply.status != 429)
        status = BackendReply::Status::FatalError;
      return {status, {}, false, "http " + std::to_string(reply.status)};
    }
    case MockReply::Kind::Timeout:
      return {BackendReply::Status::Timeout, {}, false, "timed out"};
  }
  return {BackendReply::Status::FatalError, {}, false, "unreachable"};
}

std::uint64_t MockChatBackend::calls_for(StageTag tag) const {
  std::lock_guard<std::mutex> lock(mu_);
  return next_index_[static_cast<std::size_t>(tag)];
}

}  // namespace pdr
