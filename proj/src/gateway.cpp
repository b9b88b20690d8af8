#include "pdr/gateway.hpp"

#include <chrono>
#include <thread>
#include <variant>

namespace pdr {

using nlohmann::json;

const char* to_string(StageTag tag) {
  switch (tag) {
    case StageTag::Profile: return "profile";
    case StageTag::Decompose: return "decompose";
    case StageTag::Filter: return "filter";
    case StageTag::Decide: return "decide";
    case StageTag::Evolve: return "evolve";
    case StageTag::Generate: return "generate";
    case StageTag::Judge: return "judge";
  }
  return "generate";
}

StageTag parse_stage_tag(std::string_view name) {
  if (name == "profile") return StageTag::Profile;
  if (name == "decompose") return StageTag::Decompose;
  if (name == "filter") return StageTag::Filter;
  if (name == "decide") return StageTag::Decide;
  if (name == "evolve") return StageTag::Evolve;
  if (name == "generate") return StageTag::Generate;
  if (name == "judge") return StageTag::Judge;
  throw Error(Errc::config_error, "unknown stage tag '" + std::string(name) + "'");
}

void CallLedger::record_call(StageTag tag) {
  std::lock_guard lock(mu_);
  ++counters_[static_cast<std::size_t>(tag)].calls;
}

void CallLedger::record_retry(StageTag tag) {
  std::lock_guard lock(mu_);
  ++counters_[static_cast<std::size_t>(tag)].retries;
}

void CallLedger::record_failure(StageTag tag) {
  std::lock_guard lock(mu_);
  ++counters_[static_cast<std::size_t>(tag)].failures;
}

void CallLedger::record_repair(StageTag tag) {
  std::lock_guard lock(mu_);
  ++counters_[static_cast<std::size_t>(tag)].repairs;
}

void CallLedger::merge(const CallLedger& other) {
  std::array<TagCounters, kStageTagCount> theirs;
  {
    std::lock_guard lock(other.mu_);
    theirs = other.counters_;
  }
  std::lock_guard lock(mu_);
  for (std::size_t i = 0; i < kStageTagCount; ++i) {
    counters_[i].calls += theirs[i].calls;
    counters_[i].retries += theirs[i].retries;
    counters_[i].failures += theirs[i].failures;
    counters_[i].repairs += theirs[i].repairs;
  }
}

TagCounters CallLedger::tag(StageTag tag) const {
  std::lock_guard lock(mu_);
  return counters_[static_cast<std::size_t>(tag)];
}

std::uint64_t CallLedger::total_calls() const {
  std::lock_guard lock(mu_);
  std::uint64_t total = 0;
  for (const auto& c : counters_) total += c.calls;
  return total;
}

nlohmann::ordered_json CallLedger::snapshot() const {
  std::lock_guard lock(mu_);
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < kStageTagCount; ++i) {
    const TagCounters& c = counters_[i];
    out[to_string(static_cast<StageTag>(i))] = {{"calls", c.calls},
                                                {"retries", c.retries},
                                                {"failures", c.failures},
                                                {"repairs", c.repairs}};
  }
  return out;
}

std::optional<std::string> extract_json_object(std::string_view text) {
  // Fenced block first.
  for (std::string_view fence : {std::string_view("```json"), std::string_view("```")}) {
    const std::size_t open = text.find(fence);
    if (open == std::string_view::npos) continue;
    const std::size_t body_begin = open + fence.size();
    const std::size_t close = text.find("```", body_begin);
    if (close == std::string_view::npos) continue;
    std::string_view inner = text.substr(body_begin, close - body_begin);
    if (auto found = extract_json_object(inner)) return found;
  }
  // First balanced object, honoring string literals and escapes.
  const std::size_t start = text.find('{');
  if (start == std::string_view::npos) return std::nullopt;
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = start; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return std::string(text.substr(start, i - start + 1));
    }
  }
  return std::nullopt;
}

LlmGateway::LlmGateway(std::shared_ptr<ChatBackend> backend, RetryPolicy retry)
    : backend_(std::move(backend)), retry_(std::move(retry)) {
  if (!backend_) throw Error(Errc::config_error, "gateway requires a backend");
  backend_id_ = backend_->id();
  if (!retry_.sleeper) {
    retry_.sleeper = [](int ms) {
      if (ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(ms));
    };
  }
}

ChatResponse LlmGateway::complete(const ChatRequest& request) {
  if (request.system_prompt.empty() && request.user_prompt.empty()) {
    throw Error(Errc::precondition, "chat request has no prompt content");
  }
  ledger_.record_call(request.tag);
  const auto started = std::chrono::steady_clock::now();

  BackendReply reply;
  int backoff = retry_.backoff_base_ms;
  for (int attempt = 0; attempt <= retry_.max_retries; ++attempt) {
    if (attempt > 0) {
      ledger_.record_retry(request.tag);
      retry_.sleeper(backoff);
      backoff *= 2;
    }
    reply = backend_->attempt(request);
    if (reply.status == BackendReply::Status::Ok ||
        reply.status == BackendReply::Status::FatalError) {
      break;
    }
  }

  if (reply.status != BackendReply::Status::Ok) {
    ledger_.record_failure(request.tag);
    const std::string detail =
        "backend '" + backend_id_ + "' (" + to_string(request.tag) + "): " + reply.error;
    switch (reply.status) {
      case BackendReply::Status::Timeout:
        throw Error(Errc::timeout, detail);
      case BackendReply::Status::RateLimited:
        throw Error(Errc::rate_limited, detail);
      default:
        throw Error(Errc::backend_unavailable, detail);
    }
  }

  ChatResponse response;
  response.text = std::move(reply.text);
  response.backend_id = backend_id_;
  response.truncated = reply.truncated;
  response.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                            std::chrono::steady_clock::now() - started)
                            .count();
  return response;
}

namespace {

bool kind_matches(const json& value, KeySpec::Kind kind) {
  switch (kind) {
    case KeySpec::Kind::Boolean: return value.is_boolean();
    case KeySpec::Kind::Number: return value.is_number();
    case KeySpec::Kind::String: return value.is_string();
    case KeySpec::Kind::StringOrNull: return value.is_string() || value.is_null();
    case KeySpec::Kind::Array: return value.is_array();
    case KeySpec::Kind::Object: return value.is_object();
    case KeySpec::Kind::Any: return true;
  }
  return false;
}

struct ValidationFailure {
  Errc code;
  std::string detail;
};

// Returns the parsed object or a failure description.
std::variant<json, ValidationFailure> try_parse(const std::string& text,
                                                const std::vector<KeySpec>& expected_keys) {
  auto raw = extract_json_object(text);
  if (!raw) {
    return ValidationFailure{Errc::malformed_output, "no JSON object in reply"};
  }
  json value;
  try {
    value = json::parse(*raw);
  } catch (const json::exception& e) {
    return ValidationFailure{Errc::malformed_output, std::string("JSON parse: ") + e.what()};
  }
  for (const KeySpec& key : expected_keys) {
    auto it = value.find(key.name);
    if (it == value.end()) {
      return ValidationFailure{Errc::missing_key, "missing key '" + key.name + "'"};
    }
    if (!kind_matches(*it, key.kind)) {
      return ValidationFailure{Errc::malformed_output,
                               "key '" + key.name + "' has the wrong type"};
    }
  }
  return value;
}

std::string repair_instruction(const std::vector<KeySpec>& expected_keys,
                               const std::string& problem) {
  std::string keys;
  for (const KeySpec& key : expected_keys) {
    if (!keys.empty()) keys += ", ";
    keys += key.name;
  }
  return "\n\nYour previous reply could not be used (" + problem +
         "). Respond again with exactly one JSON object containing the keys: " + keys + ".";
}

}  // namespace

json LlmGateway::complete_structured(const ChatRequest& request,
                                     const std::vector<KeySpec>& expected_keys) {
  if (expected_keys.empty()) {
    throw Error(Errc::precondition, "complete_structured requires expected keys");
  }
  ChatResponse first = complete(request);
  auto parsed = try_parse(first.text, expected_keys);
  if (std::holds_alternative<json>(parsed)) return std::get<json>(std::move(parsed));

  const ValidationFailure failure = std::get<ValidationFailure>(parsed);
  ledger_.record_repair(request.tag);
  ChatRequest repair = request;
  repair.user_prompt += repair_instruction(expected_keys, failure.detail);
  ChatResponse second = complete(repair);
  auto reparsed = try_parse(second.text, expected_keys);
  if (std::holds_alternative<json>(reparsed)) return std::get<json>(std::move(reparsed));

  const ValidationFailure final_failure = std::get<ValidationFailure>(reparsed);
  throw Error(final_failure.code,
              final_failure.detail + " (after one repair attempt, tag " +
                  to_string(request.tag) + ")");
}

}  // namespace pdr
