#pragma once

#include <stdexcept>
#include <string>

namespace pdr {

enum class Errc {
  decode_error,
  empty_document,
  schema_error,
  dangling_ref,
  backend_unavailable,
  timeout,
  rate_limited,
  malformed_output,
  missing_key,
  profile_schema_error,
  empty_corpus,
  empty_plan,
  missing_gap_query,
  empty_generation,
  score_out_of_range,
  embed_backend_error,
  config_error,
  incomplete_run,
  precondition,
};

const char* to_string(Errc code);

/// Error with a machine-readable code; tests match on code(), not message text.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace pdr
