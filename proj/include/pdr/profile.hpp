#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdr/corpus.hpp"
#include "pdr/gateway.hpp"

namespace pdr {

enum class Depth { Overview, Standard, Expert };

const char* to_string(Depth depth);
Depth parse_depth(const std::string& name);  // unknown values map to Standard

struct ResponsePreferences {
  std::string tone;
  std::string structure;
  Depth depth = Depth::Standard;
  std::vector<std::string> formatting;
};

struct UserProfile {
  int schema_version = 1;
  std::string user_id;
  std::map<std::string, std::string> demographics;
  std::vector<std::string> learning_interests;
  ResponsePreferences response_preferences;
  std::vector<std::string> interaction_tendencies;
  std::vector<std::string> style_exemplars;
  std::vector<std::string> provenance;
};

nlohmann::ordered_json profile_to_json(const UserProfile& profile);
UserProfile profile_from_json(const nlohmann::json& j);

/// Canonical on-disk form: fixed field order, 2-space indent, trailing newline.
std::string profile_to_canonical_string(const UserProfile& profile);
void save_profile(const UserProfile& profile, const std::filesystem::path& path);
UserProfile load_profile(const std::filesystem::path& path);

enum class ProfileViolation {
  DuplicateInterest,
  InterestTooLong,
  TooManyExemplars,
  ExemplarTooLong,
  ExemplarNotGrounded,
  UnknownProvenanceDoc,
};

const char* to_string(ProfileViolation violation);

std::vector<ProfileViolation> validate_profile(const UserProfile& profile,
                                               const CorpusHandle& corpus);

struct ProfileOptions {
  int max_docs = 10;
  int max_chars_per_doc = 4000;
};

/// Picks the documents fed to the extraction prompt: the user's documents in
/// most-recent-first order (dataset order reversed), capped at max_docs.
std::vector<const SourceDocument*> select_profile_docs(const CorpusHandle& corpus,
                                                       const std::string& user_id,
                                                       const ProfileOptions& options);

std::string render_profile_prompt(const std::string& user_id,
                                  const std::vector<const SourceDocument*>& docs,
                                  const ProfileOptions& options);

UserProfile extract_profile(const CorpusHandle& corpus, const std::string& user_id,
                            LlmGateway& gateway, const ProfileOptions& options = {});

}  // namespace pdr
