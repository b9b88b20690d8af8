#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pdr/errors.hpp"

namespace pdr {

/// Pipeline stage issuing a model call; used for call accounting and for
/// keying scripted mock replies.
enum class StageTag { Profile, Decompose, Filter, Decide, Evolve, Generate, Judge };
inline constexpr std::size_t kStageTagCount = 7;

const char* to_string(StageTag tag);
StageTag parse_stage_tag(std::string_view name);

struct ChatRequest {
  std::string system_prompt;
  std::string user_prompt;
  double temperature = 0.0;  // [0, 2]
  int max_output_chars = 16000;
  StageTag tag = StageTag::Generate;
};

struct ChatResponse {
  std::string text;
  std::string backend_id;
  std::int64_t latency_ms = 0;
  bool truncated = false;  // text may be empty only when this is set
};

struct TagCounters {
  std::uint64_t calls = 0;     // complete() invocations
  std::uint64_t retries = 0;   // extra transport attempts beyond the first
  std::uint64_t failures = 0;  // invocations that surfaced an error
  std::uint64_t repairs = 0;   // structured-output repair re-prompts
};

/// Per-tag call accounting; counters only grow within a run.
class CallLedger {
 public:
  void record_call(StageTag tag);
  void record_retry(StageTag tag);
  void record_failure(StageTag tag);
  void record_repair(StageTag tag);
  void merge(const CallLedger& other);

  TagCounters tag(StageTag tag) const;
  std::uint64_t total_calls() const;
  nlohmann::ordered_json snapshot() const;

 private:
  mutable std::mutex mu_;
  std::array<TagCounters, kStageTagCount> counters_{};
};

/// Outcome of a single transport attempt against a backend.
struct BackendReply {
  enum class Status { Ok, TransientError, Timeout, RateLimited, FatalError };
  Status status = Status::Ok;
  std::string text;
  bool truncated = false;
  std::string error;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual BackendReply attempt(const ChatRequest& request) = 0;
  virtual std::string id() const = 0;
};

struct RetryPolicy {
  int max_retries = 3;       // total attempts = max_retries + 1
  int backoff_base_ms = 250;  // doubled per attempt
  std::function<void(int /*ms*/)> sleeper;  // overridable for tests
};

/// Expected key of a structured model reply.
struct KeySpec {
  enum class Kind { Boolean, Number, String, StringOrNull, Array, Object, Any };
  std::string name;
  Kind kind = Kind::Any;
};

/// Returns the first JSON object embedded in `text`: a ```json fenced block if
/// present, otherwise the first balanced {...} span.
std::optional<std::string> extract_json_object(std::string_view text);

/// Uniform front door to a chat-completion backend: bounded retries with
/// exponential backoff, structured-output validation with one repair
/// re-prompt, and per-tag accounting.
class LlmGateway {
 public:
  explicit LlmGateway(std::shared_ptr<ChatBackend> backend, RetryPolicy retry = {});

  ChatResponse complete(const ChatRequest& request);

  /// complete() plus JSON extraction and key validation. On a malformed or
  /// incomplete reply the request is re-issued once with a repair instruction
  /// appended, then MalformedOutput/MissingKey is raised.
  nlohmann::json complete_structured(const ChatRequest& request,
                                     const std::vector<KeySpec>& expected_keys);

  CallLedger& ledger() { return ledger_; }
  const CallLedger& ledger() const { return ledger_; }
  const std::string& backend_id() const { return backend_id_; }

 private:
  std::shared_ptr<ChatBackend> backend_;
  RetryPolicy retry_;
  CallLedger ledger_;
  std::string backend_id_;
};

}  // namespace pdr
