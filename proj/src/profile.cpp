#include "pdr/profile.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "pdr/errors.hpp"

namespace pdr {
namespace {

constexpr std::size_t kMaxInterestChars = 80;
constexpr std::size_t kMaxExemplars = 3;
constexpr std::size_t kMaxExemplarChars = 500;

std::vector<std::string> string_list(const nlohmann::json& j) {
  std::vector<std::string> out;
  if (!j.is_array()) return out;
  for (const auto& item : j)
    if (item.is_string()) out.push_back(item.get<std::string>());
  return out;
}

}  // namespace

const char* to_string(Depth depth) {
  switch (depth) {
    case Depth::Overview: return "overview";
    case Depth::Standard: return "standard";
    case Depth::Expert: return "expert";
  }
  return "standard";
}

Depth parse_depth(const std::string& name) {
  if (name == "overview") return Depth::Overview;
  if (name == "expert") return Depth::Expert;
  return Depth::Standard;
}

const char* to_string(ProfileViolation violation) {
  switch (violation) {
    case ProfileViolation::DuplicateInterest: return "DuplicateInterest";
    case ProfileViolation::InterestTooLong: return "InterestTooLong";
    case ProfileViolation::TooManyExemplars: return "TooManyExemplars";
    case ProfileViolation::ExemplarTooLong: return "ExemplarTooLong";
    case ProfileViolation::ExemplarNotGrounded: return "ExemplarNotGrounded";
    case ProfileViolation::UnknownProvenanceDoc: return "UnknownProvenanceDoc";
  }
  return "Unknown";
}

nlohmann::ordered_json profile_to_json(const UserProfile& profile) {
  nlohmann::ordered_json j;
  j["schema_version"] = profile.schema_version;
  j["user_id"] = profile.user_id;
  j["demographics"] = nlohmann::ordered_json::object();
  for (const auto& [key, value] : profile.demographics) j["demographics"][key] = value;
  j["learning_interests"] = profile.learning_interests;
  j["response_preferences"] = {
      {"tone", profile.response_preferences.tone},
      {"structure", profile.response_preferences.structure},
      {"depth", to_string(profile.response_preferences.depth)},
      {"formatting", profile.response_preferences.formatting},
  };
  j["interaction_tendencies"] = profile.interaction_tendencies;
  j["style_exemplars"] = profile.style_exemplars;
  j["provenance"] = profile.provenance;
  return j;
}

UserProfile profile_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(Errc::profile_schema_error, "profile must be a JSON object");
  UserProfile profile;
  try {
    profile.schema_version = j.at("schema_version").get<int>();
    if (profile.schema_version != 1)
      throw Error(Errc::profile_schema_error,
                  "unsupported schema_version " + std::to_string(profile.schema_version));
    profile.user_id = j.at("user_id").get<std::string>();
    for (const auto& [key, value] : j.at("demographics").items())
      profile.demographics[key] = value.is_string() ? value.get<std::string>() : value.dump();
    profile.learning_interests = string_list(j.at("learning_interests"));
    const auto& prefs = j.at("response_preferences");
    profile.response_preferences.tone = prefs.value("tone", "");
    profile.response_preferences.structure = prefs.value("structure", "");
    profile.response_preferences.depth = parse_depth(prefs.value("depth", "standard"));
    if (prefs.contains("formatting"))
      profile.response_preferences.formatting = string_list(prefs["formatting"]);
    profile.interaction_tendencies = string_list(j.at("interaction_tendencies"));
    profile.style_exemplars = string_list(j.at("style_exemplars"));
    profile.provenance = string_list(j.at("provenance"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::profile_schema_error, e.what());
  }
  return profile;
}

std::string profile_to_canonical_string(const UserProfile& profile) {
  return profile_to_json(profile).dump(2) + "\n";
}

void save_profile(const UserProfile& profile, const std::filesystem::path& path) {
  std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::config_error, "cannot write profile: " + path.string());
    out << profile_to_canonical_string(profile);
  }
  std::filesystem::rename(tmp, path);
}

UserProfile load_profile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::config_error, "cannot open profile: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::profile_schema_error, e.what());
  }
  return profile_from_json(j);
}

std::vector<ProfileViolation> validate_profile(const UserProfile& profile,
                                               const CorpusHandle& corpus) {
  std::vector<ProfileViolation> out;
  std::set<std::string> seen;
  for (const auto& interest : profile.learning_interests) {
    if (!seen.insert(interest).second) out.push_back(ProfileViolation::DuplicateInterest);
    if (interest.size() > kMaxInterestChars) out.push_back(ProfileViolation::InterestTooLong);
  }
  if (profile.style_exemplars.size() > kMaxExemplars)
    out.push_back(ProfileViolation::TooManyExemplars);

  std::vector<const SourceDocument*> sources;
  for (const auto& doc_id : profile.provenance) {
    if (const auto* doc = corpus.find_document(doc_id)) {
      sources.push_back(doc);
    } else {
      out.push_back(ProfileViolation::UnknownProvenanceDoc);
    }
  }
  for (const auto& exemplar : profile.style_exemplars) {
    if (exemplar.size() > kMaxExemplarChars) out.push_back(ProfileViolation::ExemplarTooLong);
    bool grounded = std::any_of(sources.begin(), sources.end(), [&](const SourceDocument* doc) {
      return doc->body.find(exemplar) != std::string::npos;
    });
    if (!grounded) out.push_back(ProfileViolation::ExemplarNotGrounded);
  }
  return out;
}

std::vector<const SourceDocument*> select_profile_docs(const CorpusHandle& corpus,
                                                       const std::string& user_id,
                                                       const ProfileOptions& options) {
  std::vector<const SourceDocument*> docs;
  for (auto it = corpus.documents.rbegin(); it != corpus.documents.rend(); ++it) {
    auto user = it->metadata.find("user_id");
    if (user == it->metadata.end() || user->second != user_id) continue;
    docs.push_back(&*it);
    if (docs.size() == static_cast<std::size_t>(options.max_docs)) break;
  }
  return docs;
}

std::string render_profile_prompt(const std::string& user_id,
                                  const std::vector<const SourceDocument*>& docs,
                                  const ProfileOptions& options) {
  std::ostringstream prompt;
  prompt << "Study the personal documents of user " << user_id
         << " and produce a JSON profile with exactly these keys:\n"
         << "  demographics: object of string attributes (e.g. role, field)\n"
         << "  learning_interests: array of short strings (<= 80 chars each, no duplicates)\n"
         << "  response_preferences: object {tone, structure, depth (overview|standard|expert), "
            "formatting (array of strings)}\n"
         << "  interaction_tendencies: array of strings\n"
         << "  style_exemplars: array of at most 3 verbatim excerpts copied exactly from the "
            "documents (<= 500 chars each)\n"
         << "Respond with a single JSON object.\n\n";
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto& doc = *docs[i];
    std::string body = doc.body.substr(0, static_cast<std::size_t>(options.max_chars_per_doc));
    prompt << "--- document " << i + 1 << " (" << doc.doc_id << ") ---\n";
    if (!doc.title.empty()) prompt << "title: " << doc.title << "\n";
    prompt << body << "\n\n";
  }
  return prompt.str();
}

UserProfile extract_profile(const CorpusHandle& corpus, const std::string& user_id,
                            LlmGateway& gateway, const ProfileOptions& options) {
  auto docs = select_profile_docs(corpus, user_id, options);
  if (docs.empty())
    throw Error(Errc::empty_corpus, "no private documents for user " + user_id);

  ChatRequest request;
  request.system_prompt =
      "You are a personalization analyst. You read a user's private documents and distill a "
      "structured profile of who they are and how they want material presented.";
  request.user_prompt = render_profile_prompt(user_id, docs, options);
  request.tag = StageTag::Profile;

  std::vector<KeySpec> keys = {
      {"demographics", KeySpec::Kind::Object},
      {"learning_interests", KeySpec::Kind::Array},
      {"response_preferences", KeySpec::Kind::Object},
      {"interaction_tendencies", KeySpec::Kind::Array},
      {"style_exemplars", KeySpec::Kind::Array},
  };
  nlohmann::json parsed;
  try {
    parsed = gateway.complete_structured(request, keys);
  } catch (const Error& e) {
    if (e.code() == Errc::malformed_output || e.code() == Errc::missing_key)
      throw Error(Errc::profile_schema_error, e.what());
    throw;
  }

  UserProfile profile;
  profile.user_id = user_id;
  for (const auto& [key, value] : parsed["demographics"].items())
    profile.demographics[key] = value.is_string() ? value.get<std::string>() : value.dump();

  std::set<std::string> seen;
  for (auto interest : string_list(parsed["learning_interests"])) {
    if (interest.size() > kMaxInterestChars) interest.resize(kMaxInterestChars);
    if (seen.insert(interest).second) profile.learning_interests.push_back(std::move(interest));
  }

  const auto& prefs = parsed["response_preferences"];
  if (prefs.is_object()) {
    profile.response_preferences.tone = prefs.value("tone", "");
    profile.response_preferences.structure = prefs.value("structure", "");
    profile.response_preferences.depth = parse_depth(prefs.value("depth", "standard"));
    if (prefs.contains("formatting"))
      profile.response_preferences.formatting = string_list(prefs["formatting"]);
  }
  profile.interaction_tendencies = string_list(parsed["interaction_tendencies"]);

  for (const auto& doc : docs) profile.provenance.push_back(doc->doc_id);
  for (auto exemplar : string_list(parsed["style_exemplars"])) {
    if (profile.style_exemplars.size() == kMaxExemplars) break;
    if (exemplar.size() > kMaxExemplarChars) exemplar.resize(kMaxExemplarChars);
    bool grounded = std::any_of(docs.begin(), docs.end(), [&](const SourceDocument* doc) {
      return doc->body.find(exemplar) != std::string::npos;
    });
    if (grounded) profile.style_exemplars.push_back(std::move(exemplar));
  }
  return profile;
}

}  // namespace pdr
