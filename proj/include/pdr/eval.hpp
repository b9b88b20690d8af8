#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdr/corpus.hpp"
#include "pdr/gateway.hpp"

namespace pdr {

using TokenSeq = std::vector<std::string>;

/// Lowercase and split on maximal runs of non-alphanumeric characters.
TokenSeq tokenize(const std::string& text);

enum class Metric { Rouge1, RougeL, Meteor };

struct MetricScore {
  Metric metric = Metric::Rouge1;
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;  // for meteor this is the final penalized score
};

MetricScore rouge_n(const TokenSeq& cand, const TokenSeq& ref, int n = 1);
int lcs_length(const TokenSeq& a, const TokenSeq& b);
MetricScore rouge_l(const TokenSeq& cand, const TokenSeq& ref);

/// Strips the first applicable of "ing", "ed", "es", "s" when the remaining
/// stem keeps at least 3 chars.
std::string stem_token(const std::string& token);
MetricScore meteor(const TokenSeq& cand, const TokenSeq& ref);

enum class JudgeDimension {
  Comprehensiveness,
  Readability,
  ContextualPersonalization,
  PresentationPersonalization,
};
inline constexpr JudgeDimension kJudgeDimensions[] = {
    JudgeDimension::Comprehensiveness,
    JudgeDimension::Readability,
    JudgeDimension::ContextualPersonalization,
    JudgeDimension::PresentationPersonalization,
};

const char* to_string(JudgeDimension dimension);
std::string default_rubric(JudgeDimension dimension);

struct JudgeScore {
  JudgeDimension dimension = JudgeDimension::Comprehensiveness;
  double score = 0.0;  // in [1, 10]
  std::string raw_response;
};

JudgeScore judge_pairwise(const std::string& candidate, const std::string& reference,
                          JudgeDimension dimension, const std::string& rubric,
                          LlmGateway& gateway);

struct EvalItem {
  TaskSample sample;
  std::optional<std::string> report_text;   // absent = missing report
  std::optional<std::string> profile_json;  // feeds personalization rubrics
};

struct SampleEval {
  std::string sample_id;
  TaskKind task = TaskKind::ReportGen;
  double r1 = 0.0;
  double rl = 0.0;
  double meteor = 0.0;
  double comp = 0.0;
  double read = 0.0;
  double cp = 0.0;
  double pp = 0.0;
  bool failed = false;
  std::string error;
};

struct TaskAggregate {
  int count = 0;
  double r1 = 0.0;
  double rl = 0.0;
  double meteor = 0.0;
  double comp = 0.0;
  double read = 0.0;
  double cp = 0.0;
  double pp = 0.0;
};

struct EvalSummary {
  std::vector<SampleEval> per_sample;          // input order
  std::map<TaskKind, TaskAggregate> aggregate; // means over non-failed samples
  std::vector<std::string> failures;           // sample ids

  nlohmann::ordered_json to_json() const;
  std::string to_csv() const;
};

EvalSummary evaluate_run(const std::vector<EvalItem>& items, LlmGateway& gateway);

void save_summary(const EvalSummary& summary, const std::filesystem::path& eval_dir);

}  // namespace pdr
