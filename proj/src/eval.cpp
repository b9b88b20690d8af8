#include "pdr/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "pdr/errors.hpp"

namespace pdr {
namespace {

double f1(double precision, double recall) {
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

std::map<std::string, int> ngram_counts(const TokenSeq& tokens, int n) {
  std::map<std::string, int> counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (int j = 1; j < n; ++j) {
      key.push_back('\x1f');
      key += tokens[i + j];
    }
    ++counts[key];
  }
  return counts;
}

std::string fixed6(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", value);
  return buf;
}

}  // namespace

TokenSeq tokenize(const std::string& text) {
  TokenSeq tokens;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

MetricScore rouge_n(const TokenSeq& cand, const TokenSeq& ref, int n) {
  if (n < 1) throw Error(Errc::precondition, "rouge n must be >= 1");
  MetricScore score;
  score.metric = Metric::Rouge1;
  auto cand_counts = ngram_counts(cand, n);
  auto ref_counts = ngram_counts(ref, n);
  long long cand_total = 0;
  long long ref_total = 0;
  for (const auto& [key, count] : cand_counts) cand_total += count;
  for (const auto& [key, count] : ref_counts) ref_total += count;
  if (cand_total == 0 || ref_total == 0) return score;

  long long overlap = 0;
  for (const auto& [key, count] : cand_counts) {
    auto it = ref_counts.find(key);
    if (it != ref_counts.end()) overlap += std::min(count, it->second);
  }
  score.precision = static_cast<double>(overlap) / static_cast<double>(cand_total);
  score.recall = static_cast<double>(overlap) / static_cast<double>(ref_total);
  score.f = f1(score.precision, score.recall);
  return score;
}

int lcs_length(const TokenSeq& a, const TokenSeq& b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<int> prev(b.size() + 1, 0);
  std::vector<int> curr(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      if (a[i - 1] == b[j - 1])
        curr[j] = prev[j - 1] + 1;
      else
        curr[j] = std::max(prev[j], curr[j - 1]);
    }
    std::swap(prev, curr);
  }
  return prev[b.size()];
}

MetricScore rouge_l(const TokenSeq& cand, const TokenSeq& ref) {
  MetricScore score;
  score.metric = Metric::RougeL;
  if (cand.empty() || ref.empty()) return score;
  int lcs = lcs_length(cand, ref);
  score.precision = static_cast<double>(lcs) / static_cast<double>(cand.size());
  score.recall = static_cast<double>(lcs) / static_cast<double>(ref.size());
  score.f = f1(score.precision, score.recall);
  return score;
}

std::string stem_token(const std::string& token) {
  static const char* kSuffixes[] = {"ing", "ed", "es", "s"};
  for (const char* suffix : kSuffixes) {
    std::size_t len = std::strlen(suffix);
    if (token.size() >= len + 3 && token.compare(token.size() - len, len, suffix) == 0)
      return token.substr(0, token.size() - len);
  }
  return token;
}

MetricScore meteor(const TokenSeq& cand, const TokenSeq& ref) {
  MetricScore score;
  score.metric = Metric::Meteor;
  if (cand.empty() || ref.empty()) return score;

  std::vector<int> ref_pos(cand.size(), -1);
  std::vector<bool> ref_used(ref.size(), false);

  // Stage 1: exact matches, leftmost-greedy one-to-one.
  for (std::size_t i = 0; i < cand.size(); ++i)
    for (std::size_t j = 0; j < ref.size(); ++j)
      if (!ref_used[j] && cand[i] == ref[j]) {
        ref_pos[i] = static_cast<int>(j);
        ref_used[j] = true;
        break;
      }

  // Stage 2: stem matches over what remains.
  std::vector<std::string> ref_stems(ref.size());
  for (std::size_t j = 0; j < ref.size(); ++j) ref_stems[j] = stem_token(ref[j]);
  for (std::size_t i = 0; i < cand.size(); ++i) {
    if (ref_pos[i] != -1) continue;
    std::string cand_stem = stem_token(cand[i]);
    for (std::size_t j = 0; j < ref.size(); ++j)
      if (!ref_used[j] && cand_stem == ref_stems[j]) {
        ref_pos[i] = static_cast<int>(j);
        ref_used[j] = true;
        break;
      }
  }

  int m = 0;
  int chunks = 0;
  int prev_cand = -2;
  int prev_ref = -2;
  for (std::size_t i = 0; i < cand.size(); ++i) {
    if (ref_pos[i] == -1) continue;
    ++m;
    if (static_cast<int>(i) != prev_cand + 1 || ref_pos[i] != prev_ref + 1) ++chunks;
    prev_cand = static_cast<int>(i);
    prev_ref = ref_pos[i];
  }
  if (m == 0) return score;

  score.precision = static_cast<double>(m) / static_cast<double>(cand.size());
  score.recall = static_cast<double>(m) / static_cast<double>(ref.size());
  double fmean = 10.0 * score.precision * score.recall /
                 (score.recall + 9.0 * score.precision);
  double frag = static_cast<double>(chunks) / static_cast<double>(m);
  double penalty = 0.5 * frag * frag * frag;
  score.f = fmean * (1.0 - penalty);
  return score;
}

const char* to_string(JudgeDimension dimension) {
  switch (dimension) {
    case JudgeDimension::Comprehensiveness: return "comprehensiveness";
    case JudgeDimension::Readability: return "readability";
    case JudgeDimension::ContextualPersonalization: return "contextual_personalization";
    case JudgeDimension::PresentationPersonalization: return "presentation_personalization";
  }
  return "comprehensiveness";
}

std::string default_rubric(JudgeDimension dimension) {
  switch (dimension) {
    case JudgeDimension::Comprehensiveness:
      return "Rate how completely and accurately the candidate covers the material in the gold "
             "reference: claims should be correct, checkable, and no major point missing.";
    case JudgeDimension::Readability:
      return "Rate clarity and flow: sentence construction, word choice, and organization "
             "appropriate for the intended reader.";
    case JudgeDimension::ContextualPersonalization:
      return "Rate how well the content serves this specific user: every part should connect "
             "to the user's stated interests and information needs.";
    case JudgeDimension::PresentationPersonalization:
      return "Rate how well tone, structure, and formatting follow the user's preferences, "
             "ready to use without reworking.";
  }
  return "";
}

JudgeScore judge_pairwise(const std::string& candidate, const std::string& reference,
                          JudgeDimension dimension, const std::string& rubric,
                          LlmGateway& gateway) {
  if (candidate.empty() || reference.empty())
    throw Error(Errc::precondition, "judge needs non-empty candidate and reference");

  ChatRequest request;
  request.system_prompt =
      "You are a strict evaluator. Score the candidate document against the gold reference on "
      "one dimension. Respond with JSON {\"score\": number 1-10, \"justification\": string}.";
  request.temperature = 0.0;
  request.tag = StageTag::Judge;

  std::ostringstream user;
  user << "Dimension: " << to_string(dimension) << "\n"
       << "Rubric: " << rubric << "\n\n"
       << "--- gold reference ---\n"
       << reference << "\n\n"
       << "--- candidate ---\n"
       << candidate << "\n";
  request.user_prompt = user.str();

  std::vector<KeySpec> keys = {{"score", KeySpec::Kind::Number},
                               {"justification", KeySpec::Kind::String}};
  auto parsed = gateway.complete_structured(request, keys);
  double value = parsed["score"].get<double>();
  if (value < 1.0 || value > 10.0) {
    gateway.ledger().record_repair(StageTag::Judge);
    request.user_prompt +=
        "\nYour previous score " + std::to_string(value) +
        " is outside the scale. Score strictly within 1 to 10.";
    parsed = gateway.complete_structured(request, keys);
    value = parsed["score"].get<double>();
    if (value < 1.0 || value > 10.0)
      throw Error(Errc::score_out_of_range,
                  std::string(to_string(dimension)) + " score " + std::to_string(value));
  }

  JudgeScore score;
  score.dimension = dimension;
  score.score = value;
  score.raw_response = parsed.dump();
  return score;
}

EvalSummary evaluate_run(const std::vector<EvalItem>& items, LlmGateway& gateway) {
  EvalSummary summary;
  for (const auto& item : items) {
    SampleEval row;
    row.sample_id = item.sample.sample_id;
    row.task = item.sample.task;

    if (!item.report_text || item.report_text->empty()) {
      row.failed = true;
      row.error = "missing report";
      summary.per_sample.push_back(std::move(row));
      summary.failures.push_back(item.sample.sample_id);
      continue;
    }

    auto cand = tokenize(*item.report_text);
    auto ref = tokenize(item.sample.reference_text);
    row.r1 = rouge_n(cand, ref, 1).f;
    row.rl = rouge_l(cand, ref).f;
    row.meteor = meteor(cand, ref).f;

    try {
      double* slots[] = {&row.comp, &row.read, &row.cp, &row.pp};
      for (std::size_t d = 0; d < 4; ++d) {
        JudgeDimension dimension = kJudgeDimensions[d];
        std::string rubric = default_rubric(dimension);
        bool personalization = dimension == JudgeDimension::ContextualPersonalization ||
                               dimension == JudgeDimension::PresentationPersonalization;
        if (personalization && item.profile_json)
          rubric += "\nUser profile:\n" + *item.profile_json;
        *slots[d] =
            judge_pairwise(*item.report_text, item.sample.reference_text, dimension, rubric,
                           gateway)
                .score;
      }
    } catch (const Error& e) {
      row.failed = true;
      row.error = e.what();
      summary.failures.push_back(item.sample.sample_id);
    }
    summary.per_sample.push_back(std::move(row));
  }

  std::map<TaskKind, std::vector<const SampleEval*>> by_task;
  for (const auto& row : summary.per_sample)
    if (!row.failed) by_task[row.task].push_back(&row);
  for (const auto& [task, rows] : by_task) {
    TaskAggregate agg;
    agg.count = static_cast<int>(rows.size());
    for (const auto* row : rows) {
      agg.r1 += row->r1;
      agg.rl += row->rl;
      agg.meteor += row->meteor;
      agg.comp += row->comp;
      agg.read += row->read;
      agg.cp += row->cp;
      agg.pp += row->pp;
    }
    double n = static_cast<double>(agg.count);
    agg.r1 /= n;
    agg.rl /= n;
    agg.meteor /= n;
    agg.comp /= n;
    agg.read /= n;
    agg.cp /= n;
    agg.pp /= n;
    summary.aggregate[task] = agg;
  }
  return summary;
}

nlohmann::ordered_json EvalSummary::to_json() const {
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["per_sample"] = nlohmann::ordered_json::array();
  for (const auto& row : per_sample) {
    nlohmann::ordered_json r;
    r["sample_id"] = row.sample_id;
    r["task"] = to_string(row.task);
    r["r1"] = row.r1;
    r["rl"] = row.rl;
    r["meteor"] = row.meteor;
    r["comp"] = row.comp;
    r["read"] = row.read;
    r["cp"] = row.cp;
    r["pp"] = row.pp;
    r["failed"] = row.failed;
    r["error"] = row.error;
    j["per_sample"].push_back(std::move(r));
  }
  j["aggregate"] = nlohmann::ordered_json::object();
  for (const auto& [task, agg] : aggregate) {
    j["aggregate"][to_string(task)] = {{"count", agg.count}, {"r1", agg.r1},
                                       {"rl", agg.rl},       {"meteor", agg.meteor},
                                       {"comp", agg.comp},   {"read", agg.read},
                                       {"cp", agg.cp},       {"pp", agg.pp}};
  }
  j["failures"] = failures;
  return j;
}

std::string EvalSummary::to_csv() const {
  std::ostringstream out;
  out << "task,sample_id,r1,rl,meteor,comp,read,cp,pp,failed\n";
  for (const auto& row : per_sample) {
    out << to_string(row.task) << "," << row.sample_id << ",";
    if (row.failed) {
      out << ",,,,,,,true\n";
    } else {
      out << fixed6(row.r1) << "," << fixed6(row.rl) << "," << fixed6(row.meteor) << ","
          << fixed6(row.comp) << "," << fixed6(row.read) << "," << fixed6(row.cp) << ","
          << fixed6(row.pp) << ",false\n";
    }
  }
  return out.str();
}

void save_summary(const EvalSummary& summary, const std::filesystem::path& eval_dir) {
  std::filesystem::create_directories(eval_dir);
  auto write_atomic = [&](const std::filesystem::path& path, const std::string& content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw Error(Errc::config_error, "cannot write " + path.string());
      out << content;
    }
    std::filesystem::rename(tmp, path);
  };
  write_atomic(eval_dir / "summary.json", summary.to_json().dump(2) + "\n");
  write_atomic(eval_dir / "summary.csv", summary.to_csv());
}

}  // namespace pdr
