#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pdr/errors.hpp"

namespace pdr {

enum class Origin { Private, Public };
enum class DocFormat { PlainText, Markdown, Csv, PdfText };
enum class TaskKind { AbstractGen, TopicWriting, ReportGen, SpeechScript };

const char* to_string(Origin origin);
const char* to_string(DocFormat format);
const char* to_string(TaskKind task);
DocFormat parse_doc_format(std::string_view name);
TaskKind parse_task_kind(std::string_view name);

/// A normalized user or public artifact. `body` is whitespace-normalized UTF-8.
struct SourceDocument {
  std::string doc_id;
  Origin origin = Origin::Private;
  DocFormat format = DocFormat::PlainText;
  std::string title;
  std::string body;
  std::map<std::string, std::string> metadata;
};

/// A contiguous passage of a document; the unit of embedding, retrieval and citation.
/// `text` always equals body[span_start, span_end) of the parent document.
struct Chunk {
  std::string chunk_id;
  std::string doc_id;
  int seq = 0;
  std::string text;
  std::size_t span_start = 0;
  std::size_t span_end = 0;
};

struct CorpusHandle {
  std::string corpus_id;
  Origin kind = Origin::Private;
  std::vector<SourceDocument> documents;
  std::vector<Chunk> chunks;

  const SourceDocument* find_document(std::string_view doc_id) const;
  const Chunk* find_chunk(std::string_view chunk_id) const;
};

/// One benchmark sample: a concise prompt plus the user's ground-truth text.
struct TaskSample {
  std::string sample_id;
  TaskKind task = TaskKind::ReportGen;
  std::string user_id;
  std::string query;
  std::vector<std::string> personal_file_refs;
  std::string reference_text;
};

struct ChunkParams {
  std::size_t target_chars = 1200;
  std::size_t overlap_chars = 200;
};

bool is_valid_utf8(std::string_view bytes);

/// Collapses runs of spaces/tabs to one space, runs of 3+ newlines to two,
/// normalizes CRLF/CR to LF and trims the ends.
std::string normalize_whitespace(std::string_view text);

/// Decodes and normalizes a raw text payload. pdf_text inputs are pre-extracted
/// text streams; raw PDF binaries are not accepted.
SourceDocument parse_document(std::string_view raw, DocFormat format, std::string doc_id,
                              Origin origin);

/// Splits a document body into overlapping windows, preferring to cut just
/// after a sentence boundary (".", "!", "?", newline). A stretch shorter than
/// target_chars yields a single chunk. Requires overlap_chars < target_chars.
std::vector<Chunk> chunk_document(const SourceDocument& doc, std::size_t target_chars,
                                  std::size_t overlap_chars);

std::string make_chunk_id(std::string_view doc_id, int seq);

struct DatasetLoadResult {
  std::vector<TaskSample> samples;
  CorpusHandle private_corpus;
  std::vector<std::string> warnings;
};

/// Loads the JSONL dataset: one sample per line, personal files materialized as
/// private documents.  A personal_files entry with only {"doc_id"} references a
/// document materialized elsewhere in the file; an unresolved reference raises
/// DanglingRef.  `task_filter`, when set, restricts the returned samples.
DatasetLoadResult load_dataset(const std::filesystem::path& path,
                               std::optional<TaskKind> task_filter = std::nullopt,
                               const ChunkParams& chunking = {});

/// Loads a public passage corpus: one {"doc_id","title","text"} object per line.
CorpusHandle load_public_corpus(const std::filesystem::path& path,
                                const ChunkParams& chunking = {});

}  // namespace pdr
