#include "pdr/errors.hpp"

namespace pdr {

const char* to_string(Errc code) {
  switch (code) {
    case Errc::decode_error: return "DecodeError";
    case Errc::empty_document: return "EmptyDocument";
    case Errc::schema_error: return "SchemaError";
    case Errc::dangling_ref: return "DanglingRef";
    case Errc::backend_unavailable: return "BackendUnavailable";
    case Errc::timeout: return "Timeout";
    case Errc::rate_limited: return "RateLimited";
    case Errc::malformed_output: return "MalformedOutput";
    case Errc::missing_key: return "MissingKey";
    case Errc::profile_schema_error: return "ProfileSchemaError";
    case Errc::empty_corpus: return "EmptyCorpus";
    case Errc::empty_plan: return "EmptyPlan";
    case Errc::missing_gap_query: return "MissingGapQuery";
    case Errc::empty_generation: return "EmptyGeneration";
    case Errc::score_out_of_range: return "ScoreOutOfRange";
    case Errc::embed_backend_error: return "EmbedBackendError";
    case Errc::config_error: return "ConfigError";
    case Errc::incomplete_run: return "IncompleteRun";
    case Errc::precondition: return "PreconditionViolated";
  }
  return "UnknownError";
}

}  // namespace pdr
