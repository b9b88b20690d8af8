#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "pdr/corpus.hpp"
#include "pdr/embedder.hpp"

namespace pdr {

struct ScoredChunk {
  Chunk chunk;
  double score = 0.0;
  Origin origin = Origin::Private;
};

/// Exact brute-force cosine index over a chunked corpus. Immutable once
/// built; searches are safe from any thread.
class VectorIndex {
 public:
  VectorIndex(VectorIndex&& other) noexcept
      : entries_(std::move(other.entries_)),
        embedder_(std::move(other.embedder_)),
        origin_(other.origin_),
        search_count_(other.search_count_.load()) {}

  static VectorIndex build(const CorpusHandle& corpus, std::shared_ptr<const Embedder> embedder);

  /// Rebuild from a cache file written by save_cache, skipping re-embedding.
  /// The cache must match the corpus (same chunk ids, same dim) or building
  /// falls back to embedding from scratch.
  static VectorIndex build_cached(const CorpusHandle& corpus,
                                  std::shared_ptr<const Embedder> embedder,
                                  const std::filesystem::path& cache_path);

  std::vector<ScoredChunk> search(const std::string& query, int k) const;

  std::size_t size() const { return entries_.size(); }
  Origin origin() const { return origin_; }
  std::uint64_t search_count() const { return search_count_.load(); }

  void save_cache(const std::filesystem::path& path) const;

 private:
  struct Entry {
    Chunk chunk;
    std::vector<float> vec;
  };

  VectorIndex() = default;

  std::vector<Entry> entries_;
  std::shared_ptr<const Embedder> embedder_;
  Origin origin_ = Origin::Private;
  mutable std::atomic<std::uint64_t> search_count_{0};
};

}  // namespace pdr
