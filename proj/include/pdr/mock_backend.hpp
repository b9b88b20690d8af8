#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdr/gateway.hpp"

namespace pdr {

/// One canned backend reply: plain text, a transport-level failure, or a timeout.
struct MockReply {
  enum class Kind { Text, HttpError, Timeout };
  Kind kind = Kind::Text;
  std::string text;
  int status = 500;

  static MockReply ok(std::string text) { return {Kind::Text, std::move(text), 0}; }
  static MockReply http_error(int status) { return {Kind::HttpError, {}, status}; }
  static MockReply timeout() { return {Kind::Timeout, {}, 0}; }
};

/// Immutable per-tag reply script. A tag's replies are consumed in order; once
/// exhausted the last entry repeats, so open-ended policies ("never
/// sufficient") script naturally.
struct MockScript {
  std::map<StageTag, std::vector<MockReply>> replies;

  MockScript& add(StageTag tag, MockReply reply);
  MockScript& add_text(StageTag tag, std::string text);

  /// JSON shape: {"<tag>": ["text", {"text": ...}, {"http_error": 503}, {"timeout": true}]}
  static MockScript from_json(const nlohmann::json& spec);
  static MockScript from_file(const std::filesystem::path& path);
  nlohmann::ordered_json to_json() const;
};

/// Deterministic scripted backend: the reply is a pure function of
/// (script, tag, per-tag call index). Keyed by stage tag, not prompt text.
class MockChatBackend : public ChatBackend {
 public:
  explicit MockChatBackend(std::shared_ptr<const MockScript> script);

  BackendReply attempt(const ChatRequest& request) override;
  std::string id() const override { return "mock"; }

  std::uint64_t calls_for(StageTag tag) const;

 private:
  std::shared_ptr<const MockScript> script_;
  mutable std::mutex mu_;
  std::array<std::uint64_t, kStageTagCount> next_index_{};
};

}  // namespace pdr
