#include "pdr/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

namespace pdr {

using nlohmann::json;

const char* to_string(Origin origin) {
  return origin == Origin::Private ? "private" : "public";
}

const char* to_string(DocFormat format) {
  switch (format) {
    case DocFormat::PlainText: return "plain_text";
    case DocFormat::Markdown: return "markdown";
    case DocFormat::Csv: return "csv";
    case DocFormat::PdfText: return "pdf_text";
  }
  return "plain_text";
}

const char* to_string(TaskKind task) {
  switch (task) {
    case TaskKind::AbstractGen: return "abstract_gen";
    case TaskKind::TopicWriting: return "topic_writing";
    case TaskKind::ReportGen: return "report_gen";
    case TaskKind::SpeechScript: return "speech_script";
  }
  return "report_gen";
}

DocFormat parse_doc_format(std::string_view name) {
  if (name == "plain_text") return DocFormat::PlainText;
  if (name == "markdown") return DocFormat::Markdown;
  if (name == "csv") return DocFormat::Csv;
  if (name == "pdf_text") return DocFormat::PdfText;
  throw Error(Errc::schema_error, "unknown document format '" + std::string(name) + "'");
}

TaskKind parse_task_kind(std::string_view name) {
  if (name == "abstract_gen") return TaskKind::AbstractGen;
  if (name == "topic_writing") return TaskKind::TopicWriting;
  if (name == "report_gen") return TaskKind::ReportGen;
  if (name == "speech_script") return TaskKind::SpeechScript;
  throw Error(Errc::schema_error, "unknown task '" + std::string(name) + "'");
}

const SourceDocument* CorpusHandle::find_document(std::string_view doc_id) const {
  for (const auto& doc : documents) {
    if (doc.doc_id == doc_id) return &doc;
  }
  return nullptr;
}

const Chunk* CorpusHandle::find_chunk(std::string_view chunk_id) const {
  for (const auto& chunk : chunks) {
    if (chunk.chunk_id == chunk_id) return &chunk;
  }
  return nullptr;
}

bool is_valid_utf8(std::string_view bytes) {
  std::size_t i = 0;
  const std::size_t n = bytes.size();
  while (i < n) {
    const unsigned char b0 = static_cast<unsigned char>(bytes[i]);
    if (b0 < 0x80) {
      ++i;
      continue;
    }
    int len;
    unsigned int cp;
    if ((b0 & 0xE0) == 0xC0) {
      len = 2;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4;
      cp = b0 & 0x07;
    } else {
      return false;
    }
    if (i + len > n) return false;
    for (int k = 1; k < len; ++k) {
      const unsigned char bk = static_cast<unsigned char>(bytes[i + k]);
      if ((bk & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (bk & 0x3F);
    }
    // Reject overlong encodings, surrogates and out-of-range code points.
    if (len == 2 && cp < 0x80) return false;
    if (len == 3 && cp < 0x800) return false;
    if (len == 4 && cp < 0x10000) return false;
    if (cp >= 0xD800 && cp <= 0xDFFF) return false;
    if (cp > 0x10FFFF) return false;
    i += len;
  }
  return true;
}

std::string normalize_whitespace(std::string_view text) {
  // Pass 1: line endings.
  std::string lf;
  lf.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\r') {
      if (i + 1 < text.size() && text[i + 1] == '\n') continue;
      lf.push_back('\n');
    } else {
      lf.push_back(text[i]);
    }
  }

  // Pass 2: collapse space/tab runs to one space, 3+ newline runs to two.
  std::string out;
  out.reserve(lf.size());
  std::size_t i = 0;
  while (i < lf.size()) {
    const char c = lf[i];
    if (c == ' ' || c == '\t') {
      while (i < lf.size() && (lf[i] == ' ' || lf[i] == '\t')) ++i;
      out.push_back(' ');
    } else if (c == '\n') {
      std::size_t run = 0;
      while (i < lf.size() && lf[i] == '\n') {
        ++run;
        ++i;
      }
      out.append(std::min<std::size_t>(run, 2), '\n');
    } else {
      out.push_back(c);
      ++i;
    }
  }

  // Trim.
  const auto is_ws = [](char c) { return c == ' ' || c == '\n' || c == '\t'; };
  std::size_t begin = 0;
  std::size_t end = out.size();
  while (begin < end && is_ws(out[begin])) ++begin;
  while (end > begin && is_ws(out[end - 1])) --end;
  return out.substr(begin, end - begin);
}

namespace {

void annotate_csv(SourceDocument& doc) {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::istringstream lines(doc.body);
  std::string line;
  bool first = true;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    ++rows;
    if (first) {
      cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
      first = false;
    }
  }
  doc.metadata["rows"] = std::to_string(rows);
  doc.metadata["cols"] = std::to_string(cols);
}

}  // namespace

SourceDocument parse_document(std::string_view raw, DocFormat format, std::string doc_id,
                              Origin origin) {
  if (!is_valid_utf8(raw)) {
    throw Error(Errc::decode_error, "document '" + doc_id + "' is not valid UTF-8");
  }
  SourceDocument doc;
  doc.doc_id = std::move(doc_id);
  doc.origin = origin;
  doc.format = format;
  doc.body = normalize_whitespace(raw);
  if (doc.body.empty()) {
    throw Error(Errc::empty_document, "document '" + doc.doc_id + "' has no content");
  }
  if (format == DocFormat::Csv) annotate_csv(doc);
  return doc;
}

std::string make_chunk_id(std::string_view doc_id, int seq) {
  return std::string(doc_id) + "#" + std::to_string(seq);
}

namespace {

bool is_sentence_boundary(char c) {
  return c == '.' || c == '!' || c == '?' || c == '\n';
}

// Cut position for the window [start, hard_end) of `body`.  Prefers the last
// sentence boundary in the final 20% of the window, then the last boundary
// anywhere in the window, then the hard cut.
std::size_t pick_cut(const std::string& body, std::size_t start, std::size_t hard_end,
                     std::size_t target_chars) {
  const std::size_t tail_begin =
      start + (target_chars - std::min(target_chars, target_chars / 5));
  std::size_t best = std::string::npos;
  std::size_t best_in_tail = std::string::npos;
  for (std::size_t i = start; i < hard_end; ++i) {
    if (is_sentence_boundary(body[i])) {
      best = i;
      if (i >= tail_begin) best_in_tail = i;
    }
  }
  if (best_in_tail != std::string::npos) return best_in_tail + 1;
  if (best != std::string::npos) return best + 1;
  return hard_end;
}

}  // namespace

std::vector<Chunk> chunk_document(const SourceDocument& doc, std::size_t target_chars,
                                  std::size_t overlap_chars) {
  if (target_chars == 0 || overlap_chars >= target_chars) {
    throw Error(Errc::precondition, "overlap_chars must be smaller than target_chars");
  }
  std::vector<Chunk> chunks;
  const std::string& body = doc.body;
  std::size_t pos = 0;
  int seq = 0;
  while (pos < body.size()) {
    std::size_t end;
    if (body.size() - pos <= target_chars) {
      end = body.size();
    } else {
      end = pick_cut(body, pos, pos + target_chars, target_chars);
    }
    Chunk chunk;
    chunk.chunk_id = make_chunk_id(doc.doc_id, seq);
    chunk.doc_id = doc.doc_id;
    chunk.seq = seq;
    chunk.span_start = pos;
    chunk.span_end = end;
    chunk.text = body.substr(pos, end - pos);
    chunks.push_back(std::move(chunk));
    ++seq;
    if (end == body.size()) break;
    std::size_t next = end > overlap_chars ? end - overlap_chars : 0;
    if (next <= pos) next = end;  // overlap would swallow a short chunk; keep moving
    pos = next;
  }
  return chunks;
}

namespace {

[[noreturn]] void schema_fail(std::size_t line_no, const std::string& detail) {
  throw Error(Errc::schema_error, "line " + std::to_string(line_no) + ": " + detail);
}

const json& require_field(const json& obj, const char* key, json::value_t kind,
                          std::size_t line_no) {
  auto it = obj.find(key);
  if (it == obj.end()) schema_fail(line_no, std::string("missing field '") + key + "'");
  const bool ok =
      it->type() == kind || (kind == json::value_t::string && it->is_string());
  if (!ok) schema_fail(line_no, std::string("field '") + key + "' has the wrong type");
  return *it;
}

void append_document(CorpusHandle& corpus, SourceDocument doc, const ChunkParams& chunking,
                     std::size_t line_no) {
  if (const SourceDocument* existing = corpus.find_document(doc.doc_id)) {
    if (existing->body != doc.body) {
      schema_fail(line_no, "doc_id '" + doc.doc_id + "' redefined with different content");
    }
    return;  // identical re-declaration is idempotent
  }
  auto chunks = chunk_document(doc, chunking.target_chars, chunking.overlap_chars);
  corpus.documents.push_back(std::move(doc));
  corpus.chunks.insert(corpus.chunks.end(), chunks.begin(), chunks.end());
}

}  // namespace

DatasetLoadResult load_dataset(const std::filesystem::path& path,
                               std::optional<TaskKind> task_filter,
                               const ChunkParams& chunking) {
  std::ifstream in(path);
  if (!in) {
    throw Error(Errc::config_error, "cannot open dataset file " + path.string());
  }
  DatasetLoadResult result;
  result.private_corpus.corpus_id = path.stem().string();
  result.private_corpus.kind = Origin::Private;

  std::unordered_set<std::string> seen_sample_ids;
  std::vector<std::pair<std::string, std::size_t>> pending_refs;  // doc_id, line

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;

    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      schema_fail(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object()) schema_fail(line_no, "expected a JSON object");

    TaskSample sample;
    sample.sample_id = require_field(obj, "sample_id", json::value_t::string, line_no);
    if (!seen_sample_ids.insert(sample.sample_id).second) {
      schema_fail(line_no, "duplicate sample_id '" + sample.sample_id + "'");
    }
    const std::string task_name =
        require_field(obj, "task", json::value_t::string, line_no);
    try {
      sample.task = parse_task_kind(task_name);
    } catch (const Error&) {
      schema_fail(line_no, "unknown task '" + task_name + "'");
    }
    sample.user_id = require_field(obj, "user_id", json::value_t::string, line_no);
    sample.query = require_field(obj, "query", json::value_t::string, line_no);
    sample.reference_text =
        require_field(obj, "reference_text", json::value_t::string, line_no);
    if (sample.reference_text.empty()) {
      schema_fail(line_no, "reference_text must be non-empty");
    }
    if (sample.task == TaskKind::AbstractGen && sample.reference_text.size() < 2000) {
      result.warnings.push_back("sample '" + sample.sample_id +
                                "': abstract reference shorter than 2000 chars");
    }

    const json& files = require_field(obj, "personal_files", json::value_t::array, line_no);
    for (const json& entry : files) {
      if (!entry.is_object()) schema_fail(line_no, "personal_files entry is not an object");
      const std::string doc_id =
          require_field(entry, "doc_id", json::value_t::string, line_no);
      sample.personal_file_refs.push_back(doc_id);
      if (!entry.contains("text")) {
        pending_refs.emplace_back(doc_id, line_no);  // reference-only entry
        continue;
      }
      const std::string text = require_field(entry, "text", json::value_t::string, line_no);
      DocFormat format = DocFormat::PlainText;
      if (entry.contains("format")) {
        try {
          format = parse_doc_format(entry["format"].get<std::string>());
        } catch (const Error&) {
          schema_fail(line_no, "unknown format in personal_files entry");
        }
      }
      SourceDocument doc;
      try {
        doc = parse_document(text, format, doc_id, Origin::Private);
      } catch (const Error& e) {
        schema_fail(line_no, e.what());
      }
      if (entry.contains("title") && entry["title"].is_string()) {
        doc.title = entry["title"].get<std::string>();
      }
      doc.metadata["user_id"] = sample.user_id;
      append_document(result.private_corpus, std::move(doc), chunking, line_no);
    }

    if (!task_filter || sample.task == *task_filter) {
      result.samples.push_back(std::move(sample));
    }
  }

  for (const auto& [doc_id, ref_line] : pending_refs) {
    if (!result.private_corpus.find_document(doc_id)) {
      throw Error(Errc::dangling_ref, "line " + std::to_string(ref_line) +
                                          ": personal file '" + doc_id +
                                          "' is never materialized");
    }
  }
  return result;
}

CorpusHandle load_public_corpus(const std::filesystem::path& path,
                                const ChunkParams& chunking) {
  std::ifstream in(path);
  if (!in) {
    throw Error(Errc::config_error, "cannot open public corpus file " + path.string());
  }
  CorpusHandle corpus;
  corpus.corpus_id = path.stem().string();
  corpus.kind = Origin::Public;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      schema_fail(line_no, std::string("invalid JSON: ") + e.what());
    }
    const std::string doc_id = require_field(obj, "doc_id", json::value_t::string, line_no);
    const std::string text = require_field(obj, "text", json::value_t::string, line_no);
    SourceDocument doc;
    try {
      doc = parse_document(text, DocFormat::PlainText, doc_id, Origin::Public);
    } catch (const Error& e) {
      schema_fail(line_no, e.what());
    }
    if (obj.contains("title") && obj["title"].is_string()) {
      doc.title = obj["title"].get<std::string>();
    }
    append_document(corpus, std::move(doc), chunking, line_no);
  }
  return corpus;
}

}  // namespace pdr
